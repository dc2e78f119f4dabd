#pragma once
// Environments and training loops for the hierarchical DQN: the KG
// perturbation environment (RL-RR / RL-ER) and a 10-state chain MDP used as
// a sanity check with a known optimum.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgperturb/kg.hpp"
#include "kgperturb/rl.hpp"
#include "kgperturb/scorer.hpp"

namespace kgp::rl {

struct RlTrainConfig {
    std::size_t episodes = 12;
    // 0 means ceil(scale * |T|).
    std::size_t steps_per_episode = 0;
    double scale = 1.0;
    std::size_t reward_period = 20;
    std::size_t top_k = 8;
    double gamma = 0.95;
    double eps_start = 1.0;
    double eps_end = 0.05;
    std::size_t eps_decay_steps = 2000;
    double learning_rate = 1e-3;
    std::size_t target_sync = 100;
    // Updates between reshuffled re-encodings of the episode history.
    std::size_t shuffle_recompute = 1;
    std::size_t hidden = 32;
    std::size_t head = 32;
    std::size_t replay_capacity = 4096;
    std::size_t batch_size = 32;
    double reward_target = 1.0;
    RewardMode reward_mode = RewardMode::AucDelta;
    // RL-ER: draw a2 from the head's 1-hop neighbours instead of non-neighbours.
    bool er_neighbor_variant = false;
    // Restrict a0/a1 to edges not yet touched in the episode while any remain.
    bool untouched_only = true;
    int max_retries = 16;
    std::uint64_t seed = 0;

    void validate() const;
};

// Supplies the task statistic (dev AUC or mean KL) of a KG.
struct Evaluator {
    RewardMode mode = RewardMode::AucDelta;
    std::function<double(const KnowledgeGraph&)> statistic;
};

class KgEnvironment {
public:
    KgEnvironment(const KnowledgeGraph& original, const ScorerParams& scorer, Variant variant,
                  const RlTrainConfig& cfg);

    void reset();
    const KnowledgeGraph& kg() const { return kg_; }
    Variant variant() const { return variant_; }
    std::size_t embedding_width() const { return scorer_->dim(); }
    PolicyDims policy_dims() const;

    Vec a0_embedding(EntityId e) const;
    Vec a1_embedding(const Triple& t) const;
    Vec a2_embedding(std::uint32_t a2) const;
    Vec action_embedding(const SubactionTriple& a) const;

    // Heads with at least one eligible outgoing edge.
    std::vector<EntityId> sampleable_heads() const;
    // Eligible outgoing edges of a0 in triple order.
    std::vector<Triple> a1_candidates(EntityId a0) const;
    // Legal substitutes for a1 before the top-K restriction, ascending id.
    std::vector<std::uint32_t> a2_legal(const Triple& a1) const;
    // The K lowest-scoring legal substitutes, ascending score.
    std::vector<std::uint32_t> a2_restricted(const Triple& a1) const;

    // Throws Error when there are no edges to draw from.
    EntityId draw_head(nn::Rng& rng) const;

    Edit edit_for(const SubactionTriple& a) const;
    // Applies the action and returns its edit.
    Edit apply(const SubactionTriple& a);

private:
    bool eligible(const Triple& t) const;

    const KnowledgeGraph* original_;
    const ScorerParams* scorer_;
    Variant variant_;
    RlTrainConfig cfg_;
    KnowledgeGraph kg_;
    std::set<Triple> untouched_;
};

struct Selection {
    SubactionTriple action;
    std::vector<std::uint32_t> a2_candidates;  // restricted set
};

// a1 epsilon-greedy by Q1 over a0's candidate edges, a2 epsilon-greedy by Q2
// over the top-K restricted set. On an empty a2 set the head is redrawn up to
// max_retries times; then Error("no legal subaction ...") is thrown.
Selection select_action(const DqnPolicy& policy, const KgEnvironment& env, std::span<const double> s,
                        EntityId a0, double eps, nn::Rng& rng, int max_retries);

struct RewardRow {
    std::size_t step = 0;
    double raw = 0.0;
    double scaled = 0.0;
    double statistic = 0.0;
};

std::string reward_csv(const std::vector<RewardRow>& rows);

struct TrainResult {
    DqnPolicy policy;
    KnowledgeGraph kg;
    PerturbationRecord record;
    std::vector<RewardRow> rewards;
    std::vector<BellmanLoss> losses;  // one per update
};

// Trains on episodes from the original KG, then round-trips the policy through
// its textual checkpoint and runs one greedy episode to produce the returned
// KG and record.
TrainResult train_policy(const KnowledgeGraph& kg, const Evaluator& evaluator, const ScorerParams& scorer,
                         Variant variant, const RlTrainConfig& cfg);

// Greedy (epsilon = 0) episode with insertion-order state encoding.
std::pair<KnowledgeGraph, PerturbationRecord> run_greedy(const DqnPolicy& policy, const KnowledgeGraph& kg,
                                                         const ScorerParams& scorer, const RlTrainConfig& cfg);

// ---------------------------------------------------------------------------
// Chain MDP: states 0..n-1, a1 in {left, right}, a2 in {1, 2} cells. Leaving
// the chain ends the episode with an exit reward; a 2-cell move costs extra.

struct ChainMdp {
    std::size_t states = 10;
    double left_exit = 1.0;
    double right_exit = 1.5;
    double step_cost_1 = 0.0;
    double step_cost_2 = 0.4;

    struct Outcome {
        std::optional<std::size_t> next;  // nullopt when the episode ends
        double reward = 0.0;
    };
    Outcome step(std::size_t s, std::size_t a1, std::size_t a2) const;
};

struct ChainConfig {
    std::size_t episodes = 600;
    std::size_t max_steps = 20;
    double gamma = 0.9;
    double eps_start = 1.0;
    double eps_end = 0.05;
    std::size_t eps_decay_steps = 3000;
    double learning_rate = 3e-3;
    std::size_t target_sync = 50;
    std::size_t hidden = 16;
    std::size_t head = 16;
    std::size_t batch_size = 32;
    std::size_t replay_capacity = 4096;
    std::uint64_t seed = 0;
};

struct ChainAction {
    std::size_t a1 = 0;
    std::size_t a2 = 0;
    bool operator==(const ChainAction&) const = default;
};

// Optimal flat action per state by value iteration with discount gamma^2,
// which is what the two chained Bellman equations imply.
std::vector<ChainAction> chain_value_iteration(const ChainMdp& mdp, double gamma);

struct ChainResult {
    DqnPolicy policy;
    std::vector<ChainAction> greedy;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Transitions over every (state, a1, a2), used to measure the Bellman loss.
std::vector<Transition> chain_transitions(const ChainMdp& mdp, std::size_t hidden);
double mean_bellman_loss(DqnPolicy& online, const DqnPolicy& target, const std::vector<Transition>& ts,
                         double gamma);

ChainResult train_chain(const ChainMdp& mdp, const ChainConfig& cfg);

}  // namespace kgp::rl
