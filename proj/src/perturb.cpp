#include "kgperturb/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "kgperturb/log.hpp"

namespace kgp {

PerturbMethod to_method(HeuristicKind kind) {
    switch (kind) {
        case HeuristicKind::RelationSwap: return PerturbMethod::RS;
        case HeuristicKind::RelationReplace: return PerturbMethod::RR;
        case HeuristicKind::EdgeRewire: return PerturbMethod::ER;
        case HeuristicKind::EdgeDelete: return PerturbMethod::ED;
    }
    return PerturbMethod::RS;
}

HeuristicKind to_heuristic(PerturbMethod method) {
    switch (method) {
        case PerturbMethod::RS: return HeuristicKind::RelationSwap;
        case PerturbMethod::RR: return HeuristicKind::RelationReplace;
        case PerturbMethod::ER: return HeuristicKind::EdgeRewire;
        case PerturbMethod::ED: return HeuristicKind::EdgeDelete;
        default: break;
    }
    throw Error("not a heuristic method: " + std::string(to_string(method)));
}

// ---------------------------------------------------------------------------
// TargetSampler

TargetSampler::TargetSampler(const KnowledgeGraph& kg, bool without_replacement)
    : without_replacement_(without_replacement) {
    if (!without_replacement_) return;
    pool_ = kg.triples();
    for (std::size_t i = 0; i < pool_.size(); ++i) where_[pool_[i]] = i;
}

Triple TargetSampler::draw(const KnowledgeGraph& current, nn::Rng& rng) const {
    if (!pool_.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
        return pool_[pick(rng)];
    }
    if (current.empty()) throw Error("cannot draw a target edge from an empty graph");
    std::uniform_int_distribution<std::size_t> pick(0, current.num_triples() - 1);
    return current.triples()[pick(rng)];
}

void TargetSampler::mark_touched(const Triple& t) {
    auto it = where_.find(t);
    if (it == where_.end()) return;
    const std::size_t idx = it->second;
    where_.erase(it);
    if (idx + 1 != pool_.size()) {
        pool_[idx] = pool_.back();
        where_[pool_[idx]] = idx;
    }
    pool_.pop_back();
}

// ---------------------------------------------------------------------------
// Step implementations shared by the public single-step API and the driver.

namespace {

std::optional<Edit> propose_swap(const KnowledgeGraph& kg, const TargetSampler& sampler,
                                 nn::Rng& rng, const PerturbOptions& options) {
    if (kg.num_triples() < 2) throw Error("relation swap requires at least 2 triples");
    for (int attempt = 0; attempt < options.max_retries; ++attempt) {
        Triple a = sampler.draw(kg, rng);
        Triple b;
        if (sampler.pool_size() >= 2) {
            do b = sampler.draw(kg, rng);
            while (b == a);
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, kg.num_triples() - 1);
            do b = kg.triples()[pick(rng)];
            while (b == a);
        }
        Triple a2{a.head, b.relation, a.tail};
        Triple b2{b.head, a.relation, b.tail};
        // A swapped triple may collide with a third, untouched triple.
        auto collides = [&](const Triple& t) { return t != a && t != b && kg.contains(t); };
        if (a2 == b2 || collides(a2) || collides(b2)) continue;
        return Edit{{a, b}, {a2, b2}};
    }
    return std::nullopt;
}

std::optional<Edit> propose_replace(const KnowledgeGraph& kg, const ScorerParams& scorer,
                                    const TargetSampler& sampler, nn::Rng& rng,
                                    const PerturbOptions& options) {
    if (kg.empty()) throw Error("relation replacement requires at least 1 triple");
    for (int attempt = 0; attempt < options.max_retries; ++attempt) {
        Triple t = sampler.draw(kg, rng);
        RelationId r2 = argmin_relation(scorer, t.head, t.tail);
        Triple next{t.head, r2, t.tail};
        if (r2 != t.relation && kg.contains(next)) continue;
        return Edit{{t}, {next}};
    }
    return std::nullopt;
}

std::optional<Edit> propose_rewire(const KnowledgeGraph& kg, const TargetSampler& sampler,
                                   nn::Rng& rng, const PerturbOptions& options) {
    if (kg.empty()) throw Error("edge rewiring requires at least 1 triple");
    for (int attempt = 0; attempt < options.max_retries; ++attempt) {
        Triple t = sampler.draw(kg, rng);
        auto candidates = rewire_candidates(kg, t, options);
        if (candidates.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        Triple next{t.head, t.relation, candidates[pick(rng)]};
        return Edit{{t}, {next}};
    }
    return std::nullopt;
}

Edit propose_delete(const KnowledgeGraph& kg, const TargetSampler& sampler, nn::Rng& rng) {
    if (kg.empty()) throw Error("edge deletion on an empty graph");
    return Edit{{sampler.draw(kg, rng)}, {}};
}

}  // namespace

std::vector<EntityId> rewire_candidates(const KnowledgeGraph& kg, const Triple& t,
                                        const PerturbOptions& options) {
    std::set<EntityId> with_relation;
    for (const auto& x : kg.triples()) {
        if (x.relation != t.relation) continue;
        with_relation.insert(x.head);
        if (!options.head_only_incidence) with_relation.insert(x.tail);
    }
    const auto& neighbors = kg.incident(t.head);
    std::vector<EntityId> out;
    for (auto e : with_relation)
        if (e != t.head && !neighbors.contains(e)) out.push_back(e);
    return out;
}

StepResult relation_swap(const KnowledgeGraph& kg, nn::Rng& rng, const PerturbOptions& options) {
    TargetSampler sampler(kg, false);
    auto edit = propose_swap(kg, sampler, rng, options);
    if (!edit) throw Error("relation swap: every retry collided with an existing triple");
    return {apply_edits(kg, edit->removed, edit->added), *edit};
}

std::optional<StepResult> relation_replace(const KnowledgeGraph& kg, const ScorerParams& scorer,
                                           nn::Rng& rng, const PerturbOptions& options) {
    TargetSampler sampler(kg, false);
    auto edit = propose_replace(kg, scorer, sampler, rng, options);
    if (!edit) {
        log::notice("relation replacement skipped: replacement triples already present");
        return std::nullopt;
    }
    return StepResult{apply_edits(kg, edit->removed, edit->added), *edit};
}

std::optional<StepResult> edge_rewire(const KnowledgeGraph& kg, nn::Rng& rng,
                                      const PerturbOptions& options) {
    TargetSampler sampler(kg, false);
    auto edit = propose_rewire(kg, sampler, rng, options);
    if (!edit) {
        log::notice("edge rewiring skipped: no candidate tails after retries");
        return std::nullopt;
    }
    return StepResult{apply_edits(kg, edit->removed, edit->added), *edit};
}

StepResult edge_delete(const KnowledgeGraph& kg, nn::Rng& rng) {
    TargetSampler sampler(kg, false);
    Edit edit = propose_delete(kg, sampler, rng);
    return {apply_edits(kg, edit.removed, edit.added), edit};
}

std::size_t touch_budget(double scale, std::size_t num_triples) {
    if (!(scale >= 0.0 && scale <= 1.0)) throw Error("perturbation scale must lie in [0, 1]");
    // The epsilon keeps products like 0.3 * 10 from rounding up to 4.
    return static_cast<std::size_t>(std::ceil(scale * static_cast<double>(num_triples) - 1e-9));
}

std::pair<KnowledgeGraph, PerturbationRecord> perturb_scale(const KnowledgeGraph& kg,
                                                            HeuristicKind method, double scale,
                                                            const ScorerParams* scorer,
                                                            std::uint64_t seed,
                                                            const PerturbOptions& options) {
    PerturbationRecord record;
    record.method = to_method(method);
    record.seed = seed;
    record.scale = scale;
    const std::size_t touches = touch_budget(scale, kg.num_triples());
    if (method == HeuristicKind::RelationReplace && !scorer)
        throw Error("relation replacement requires a trained scorer");

    const std::size_t steps = method == HeuristicKind::RelationSwap ? (touches + 1) / 2 : touches;
    nn::Rng rng(seed);
    TargetSampler sampler(kg, true);
    KnowledgeGraph current = kg;
    for (std::size_t step = 0; step < steps; ++step) {
        std::optional<Edit> edit;
        switch (method) {
            case HeuristicKind::RelationSwap: edit = propose_swap(current, sampler, rng, options); break;
            case HeuristicKind::RelationReplace:
                edit = propose_replace(current, *scorer, sampler, rng, options);
                break;
            case HeuristicKind::EdgeRewire: edit = propose_rewire(current, sampler, rng, options); break;
            case HeuristicKind::EdgeDelete: edit = propose_delete(current, sampler, rng); break;
        }
        if (!edit) {
            ++record.skipped;
            continue;
        }
        current = apply_edits(std::move(current), edit->removed, edit->added);
        for (const auto& t : edit->removed) sampler.mark_touched(t);
        record.edits.push_back(std::move(*edit));
    }
    if (record.skipped > 0)
        log::notice(std::string(to_string(record.method)) + ": skipped " +
                    std::to_string(record.skipped) + " dead-end steps");
    return {std::move(current), std::move(record)};
}

}  // namespace kgp
