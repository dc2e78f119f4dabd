#pragma once
// Heuristic KG perturbations (relation swap, relation replacement, edge
// rewiring, edge deletion) and the scale driver that applies a fraction of
// |T| edge touches and records every edit for replay.

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgperturb/kg.hpp"
#include "kgperturb/nn.hpp"
#include "kgperturb/scorer.hpp"

namespace kgp {

enum class HeuristicKind { RelationSwap, RelationReplace, EdgeRewire, EdgeDelete };

PerturbMethod to_method(HeuristicKind kind);
// Throws Error for RL methods.
HeuristicKind to_heuristic(PerturbMethod method);

struct PerturbOptions {
    // Draws per step before a dead-end step is skipped.
    int max_retries = 16;
    // Edge rewiring: count only head-position incidence when building the
    // candidate set (default counts either endpoint).
    bool head_only_incidence = false;
};

struct StepResult {
    KnowledgeGraph kg;
    Edit edit;
};

// Draws edge targets, optionally without replacement within one run.
class TargetSampler {
public:
    TargetSampler() = default;
    TargetSampler(const KnowledgeGraph& kg, bool without_replacement);

    // Uniform over the untouched pool while it is non-empty, otherwise over
    // all triples of `current`. Throws Error if `current` is empty.
    Triple draw(const KnowledgeGraph& current, nn::Rng& rng) const;
    void mark_touched(const Triple& t);
    std::size_t pool_size() const { return pool_.size(); }

private:
    bool without_replacement_ = false;
    std::vector<Triple> pool_;
    std::unordered_map<Triple, std::size_t, TripleHash> where_;
};

// Candidate tails for rewiring `t`: entities incident to some edge with
// t.relation, minus the head and its 1-hop neighbours. Sorted by id.
std::vector<EntityId> rewire_candidates(const KnowledgeGraph& kg, const Triple& t,
                                        const PerturbOptions& options = {});

// Throws Error when |T| < 2.
StepResult relation_swap(const KnowledgeGraph& kg, nn::Rng& rng, const PerturbOptions& options = {});
// nullopt when every retry hit an already-present replacement triple.
std::optional<StepResult> relation_replace(const KnowledgeGraph& kg, const ScorerParams& scorer,
                                           nn::Rng& rng, const PerturbOptions& options = {});
// nullopt when every retry hit an empty candidate set.
std::optional<StepResult> edge_rewire(const KnowledgeGraph& kg, nn::Rng& rng,
                                      const PerturbOptions& options = {});
// Throws Error on an empty graph.
StepResult edge_delete(const KnowledgeGraph& kg, nn::Rng& rng);

// Number of edge touches for a scale: ceil(scale * |T|).
std::size_t touch_budget(double scale, std::size_t num_triples);

// Applies ceil(scale * |T|) edge touches (a swap touches two edges) sampling
// target edges without replacement. `scorer` is required for RelationReplace.
std::pair<KnowledgeGraph, PerturbationRecord> perturb_scale(const KnowledgeGraph& kg,
                                                            HeuristicKind method, double scale,
                                                            const ScorerParams* scorer,
                                                            std::uint64_t seed,
                                                            const PerturbOptions& options = {});

}  // namespace kgp
