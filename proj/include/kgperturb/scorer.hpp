#pragma once
// Edge plausibility scorer: diagonal bilinear form squashed by a logistic,
// trained for link prediction with uniformly corrupted negatives.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kgperturb/kg.hpp"
#include "kgperturb/nn.hpp"

namespace kgp {

struct ScorerParams {
    nn::ParamBlock entity;    // |E| x d
    nn::ParamBlock relation;  // |R| x d

    ScorerParams() = default;
    ScorerParams(std::size_t num_entities, std::size_t num_relations, std::size_t dim);

    std::size_t dim() const { return entity.cols; }
    std::size_t num_entities() const { return entity.rows; }
    std::size_t num_relations() const { return relation.rows; }

    std::span<const double> entity_embedding(EntityId e) const;
    std::span<const double> relation_embedding(RelationId r) const;

    nn::ParamList params() { return {&entity, &relation}; }

    // Bitwise comparison of values.
    bool operator==(const ScorerParams& other) const {
        return entity.value == other.entity.value && relation.value == other.relation.value &&
               entity.cols == other.entity.cols;
    }
};

struct ScorerTrainConfig {
    std::size_t dim = 16;
    std::size_t epochs = 300;
    double learning_rate = 0.05;
    std::size_t negatives = 2;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
};

// Raw bilinear value sum_i h_i r_i t_i.
double bilinear(const ScorerParams& s, EntityId h, RelationId r, EntityId t);

// sigmoid(sum_i h_i r_i t_i). Throws LookupError on out-of-range ids.
double score_triple(const ScorerParams& s, EntityId h, RelationId r, EntityId t);
inline double score_triple(const ScorerParams& s, const Triple& t) {
    return score_triple(s, t.head, t.relation, t.tail);
}

struct LabeledTriple {
    Triple triple;
    double label = 1.0;  // 1 for observed, 0 for corrupted
};

// Mean logistic loss over `batch`. When `accumulate_grad` is set the gradient
// of that mean is added into the parameter blocks.
double scorer_loss(ScorerParams& s, std::span<const LabeledTriple> batch, bool accumulate_grad);

// Corrupts head or tail (equal odds) uniformly over E, resampling collisions
// with observed triples.
Triple corrupt_triple(const KnowledgeGraph& kg, const Triple& t, nn::Rng& rng);

// Throws Error when the graph has no triples or the config is degenerate.
ScorerParams train_scorer(const KnowledgeGraph& kg, const ScorerTrainConfig& cfg);

// Seeded initial parameters (what train_scorer starts from).
ScorerParams init_scorer(const KnowledgeGraph& kg, std::size_t dim, std::uint64_t seed);

// Lowest-scoring relation for (h, ., t); ties broken by lowest relation id.
RelationId argmin_relation(const ScorerParams& s, EntityId h, EntityId t);

// Up to K candidate ids with the lowest scores, ascending; ties by id.
// Throws Error("no legal subaction") on an empty candidate list.
std::vector<std::uint32_t> k_lowest(std::span<const std::uint32_t> ids,
                                    std::span<const double> scores, std::size_t k);

// Relation candidates scored as (h, r, t) for fixed h and t.
std::vector<RelationId> k_lowest_relations(const ScorerParams& s, EntityId h, EntityId t,
                                           std::span<const RelationId> candidates, std::size_t k);
// Tail candidates scored as (h, r, e) for fixed h and r.
std::vector<EntityId> k_lowest_tails(const ScorerParams& s, EntityId h, RelationId r,
                                     std::span<const EntityId> candidates, std::size_t k);

void save_scorer(const ScorerParams& s, const std::filesystem::path& path);
ScorerParams load_scorer(const std::filesystem::path& path);
std::string scorer_to_text(const ScorerParams& s);
ScorerParams scorer_from_text(std::string_view text);

}  // namespace kgp
