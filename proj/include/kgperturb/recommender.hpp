#pragma once
// Graph-convolutional recommender: items aggregate their KG neighbourhood with
// user-specific relation attention, then score by inner product with the user.
//
// repr(v) = item[v] + agg(v, L), where agg(x, l) is the attention-weighted sum
// over x's neighbours n of entity[n] + agg(n, l - 1), and agg(x, 0) = 0.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kgperturb/kg.hpp"
#include "kgperturb/nn.hpp"
#include "kgperturb/world.hpp"

namespace kgp {

struct RecTrainConfig {
    std::size_t dim = 16;
    std::size_t hops = 1;
    std::size_t epochs = 100;
    double learning_rate = 0.01;
    double l2 = 1e-4;
    std::size_t batch_size = 32;
    // Fraction of training interactions kept (cold-start simulation).
    double train_fraction = 1.0;
    double init_scale = 0.1;
    std::uint64_t seed = 0;
};

struct RecModel {
    std::size_t hops = 1;
    nn::ParamBlock user;      // M x d
    nn::ParamBlock item;      // |E| x d, ID embeddings (only item rows are used)
    nn::ParamBlock entity;    // |E| x d, KG-side embeddings
    nn::ParamBlock relation;  // |R| x d
    bool frozen = false;

    RecModel() = default;
    RecModel(std::size_t users, std::size_t entities, std::size_t relations, std::size_t dim,
             std::size_t hops);

    std::size_t dim() const { return user.cols; }
    nn::ParamList params() { return {&user, &item, &entity, &relation}; }
};

enum class NoisyMode { None, ZeroGraphEmb, RandomGraphEmb, RandomKgEmb, RandomNeighborhood };

std::string_view to_string(NoisyMode m);
NoisyMode parse_noisy_mode(std::string_view s);

// Attention weights of item `v`'s neighbour edges for user `u` (softmax over
// <u, r>). Neighbour order follows out_edges then in_edges.
std::vector<double> neighbor_weights(const RecModel& model, const KnowledgeGraph& kg,
                                     std::uint32_t user, EntityId item);

// sigmoid(<u, repr(v)>) on the given KG.
double rec_score(const RecModel& model, const KnowledgeGraph& kg, std::uint32_t user, EntityId item);

// Mean logistic loss (+ l2/2 * squared norm of touched rows); accumulates the
// gradient when requested.
double rec_loss(RecModel& model, const KnowledgeGraph& kg, std::span<const Interaction> batch,
                double l2, bool accumulate_grad);

// Initial parameters (what training starts from).
RecModel init_recommender(const KnowledgeGraph& kg, const Interactions& in, const RecTrainConfig& cfg);
// Throws Error on an empty train split or items outside the KG.
RecModel train_recommender(const KnowledgeGraph& kg, const Interactions& in, const RecTrainConfig& cfg);

// Rank-statistic AUC with ties counted half. Throws Error without both classes.
double auc(std::span<const double> scores, std::span<const int> labels);

// AUC on a split, recomputing aggregation against `kg`. Throws Error on a
// vocabulary size mismatch.
double eval_auc(const RecModel& model, const KnowledgeGraph& kg, const Interactions& in, Split split);

double noisy_baseline_auc(const RecModel& model, const KnowledgeGraph& kg, const Interactions& in,
                          Split split, NoisyMode mode, std::uint64_t seed);

std::string rec_to_text(RecModel& model);
RecModel rec_from_text(std::string_view text);
void save_recommender(RecModel& model, const std::filesystem::path& path);
RecModel load_recommender(const std::filesystem::path& path);

}  // namespace kgp
