#include "kgperturb/rl_env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgperturb/format.hpp"
#include "kgperturb/log.hpp"
#include "kgperturb/perturb.hpp"

namespace kgp::rl {

void RlTrainConfig::validate() const {
    if (reward_period < 1) throw Error("rl: reward period T must be >= 1");
    if (top_k < 1) throw Error("rl: top-K must be >= 1");
    if (gamma < 0.0 || gamma > 1.0) throw Error("rl: gamma must lie in [0, 1]");
    for (double e : {eps_start, eps_end})
        if (e < 0.0 || e > 1.0) throw Error("rl: epsilon must lie in [0, 1]");
    if (episodes < 1) throw Error("rl: episodes must be >= 1");
    if (batch_size < 1 || replay_capacity < 1) throw Error("rl: batch size and replay capacity must be >= 1");
    if (scale < 0.0 || scale > 1.0) throw Error("rl: scale must lie in [0, 1]");
    if (hidden < 1 || head < 1) throw Error("rl: network widths must be >= 1");
}

// ---------------------------------------------------------------------------
// KgEnvironment

KgEnvironment::KgEnvironment(const KnowledgeGraph& original, const ScorerParams& scorer, Variant variant,
                             const RlTrainConfig& cfg)
    : original_(&original), scorer_(&scorer), variant_(variant), cfg_(cfg) {
    if (scorer.num_entities() != original.num_entities() || scorer.num_relations() != original.num_relations())
        throw Error("scorer and KG vocabularies differ");
    reset();
}

void KgEnvironment::reset() {
    kg_ = *original_;
    untouched_.clear();
    if (cfg_.untouched_only) untouched_.insert(kg_.triples().begin(), kg_.triples().end());
}

PolicyDims KgEnvironment::policy_dims() const {
    const std::size_t d = scorer_->dim();
    PolicyDims dims;
    dims.a0 = d;
    dims.a1 = 2 * d;
    dims.a2 = d;
    dims.state_input = 4 * d;
    dims.hidden = cfg_.hidden;
    dims.head = cfg_.head;
    return dims;
}

Vec KgEnvironment::a0_embedding(EntityId e) const {
    auto v = scorer_->entity_embedding(e);
    return {v.begin(), v.end()};
}

Vec KgEnvironment::a1_embedding(const Triple& t) const {
    return nn::concat(scorer_->relation_embedding(t.relation), scorer_->entity_embedding(t.tail));
}

Vec KgEnvironment::a2_embedding(std::uint32_t a2) const {
    auto v = variant_ == Variant::RR ? scorer_->relation_embedding(RelationId{a2})
                                     : scorer_->entity_embedding(EntityId{a2});
    return {v.begin(), v.end()};
}

Vec KgEnvironment::action_embedding(const SubactionTriple& a) const {
    Vec x = a0_embedding(a.a0);
    Vec x1 = a1_embedding(a.a1);
    Vec x2 = a2_embedding(a.a2);
    x.insert(x.end(), x1.begin(), x1.end());
    x.insert(x.end(), x2.begin(), x2.end());
    return x;
}

bool KgEnvironment::eligible(const Triple& t) const {
    return untouched_.empty() || untouched_.contains(t);
}

std::vector<EntityId> KgEnvironment::sampleable_heads() const {
    std::set<EntityId> heads;
    for (const auto& t : kg_.triples())
        if (eligible(t)) heads.insert(t.head);
    return {heads.begin(), heads.end()};
}

std::vector<Triple> KgEnvironment::a1_candidates(EntityId a0) const {
    std::vector<Triple> out;
    for (const auto& n : kg_.out_edges(a0)) {
        Triple t{a0, n.relation, n.entity};
        if (eligible(t)) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> KgEnvironment::a2_legal(const Triple& a1) const {
    std::vector<std::uint32_t> out;
    if (variant_ == Variant::RR) {
        for (std::uint32_t r = 0; r < kg_.num_relations(); ++r) {
            if (r == a1.relation.value) continue;
            if (kg_.contains(Triple{a1.head, RelationId{r}, a1.tail})) continue;
            out.push_back(r);
        }
        return out;
    }
    if (cfg_.er_neighbor_variant) {
        for (auto e : kg_.incident(a1.head)) {
            if (e == a1.tail) continue;
            if (kg_.contains(Triple{a1.head, a1.relation, e})) continue;
            out.push_back(e.value);
        }
        return out;
    }
    for (auto e : rewire_candidates(kg_, a1)) out.push_back(e.value);
    return out;
}

std::vector<std::uint32_t> KgEnvironment::a2_restricted(const Triple& a1) const {
    auto legal = a2_legal(a1);
    if (legal.empty()) return {};
    std::vector<std::uint32_t> out;
    if (variant_ == Variant::RR) {
        std::vector<RelationId> rels;
        for (auto r : legal) rels.push_back(RelationId{r});
        for (auto r : k_lowest_relations(*scorer_, a1.head, a1.tail, rels, cfg_.top_k)) out.push_back(r.value);
    } else {
        std::vector<EntityId> ents;
        for (auto e : legal) ents.push_back(EntityId{e});
        for (auto e : k_lowest_tails(*scorer_, a1.head, a1.relation, ents, cfg_.top_k)) out.push_back(e.value);
    }
    return out;
}

EntityId KgEnvironment::draw_head(nn::Rng& rng) const {
    auto heads = sampleable_heads();
    if (heads.empty()) throw Error("no entity with an outgoing edge to perturb");
    std::uniform_int_distribution<std::size_t> pick(0, heads.size() - 1);
    return heads[pick(rng)];
}

Edit KgEnvironment::edit_for(const SubactionTriple& a) const {
    Triple next = a.a1;
    if (variant_ == Variant::RR) next.relation = RelationId{a.a2};
    else next.tail = EntityId{a.a2};
    return Edit{{a.a1}, {next}};
}

Edit KgEnvironment::apply(const SubactionTriple& a) {
    Edit e = edit_for(a);
    kg_ = apply_edits(std::move(kg_), e.removed, e.added);
    for (const auto& t : e.removed) untouched_.erase(t);
    return e;
}

Selection select_action(const DqnPolicy& policy, const KgEnvironment& env, std::span<const double> s,
                        EntityId a0, double eps, nn::Rng& rng, int max_retries) {
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        if (attempt > 0) a0 = env.draw_head(rng);
        auto edges = env.a1_candidates(a0);
        if (edges.empty()) continue;
        const Vec a0e = env.a0_embedding(a0);
        std::vector<Vec> a1e;
        for (const auto& t : edges) a1e.push_back(env.a1_embedding(t));
        const std::size_t i1 = epsilon_greedy(q1_scores(policy, s, a0e, a1e), eps, rng);
        auto restricted = env.a2_restricted(edges[i1]);
        if (restricted.empty()) continue;
        std::sort(restricted.begin(), restricted.end());
        std::vector<Vec> a2e;
        for (auto c : restricted) a2e.push_back(env.a2_embedding(c));
        const std::size_t i2 = epsilon_greedy(q2_scores(policy, s, a0e, a1e[i1], a2e), eps, rng);
        return Selection{SubactionTriple{a0, edges[i1], restricted[i2]}, restricted};
    }
    throw Error("no legal subaction after " + std::to_string(max_retries) + " retries");
}

std::string reward_csv(const std::vector<RewardRow>& rows) {
    std::string out = "step,raw_reward,scaled_reward,task_statistic\n";
    for (const auto& r : rows)
        out += std::to_string(r.step) + "," + fixed9(r.raw) + "," + fixed9(r.scaled) + "," + fixed9(r.statistic) +
               "\n";
    return out;
}

namespace {

std::size_t episode_steps(const KnowledgeGraph& kg, const RlTrainConfig& cfg) {
    return cfg.steps_per_episode > 0 ? cfg.steps_per_episode : touch_budget(cfg.scale, kg.num_triples());
}

// Full LSTM state denoted by a StateRef.
nn::LstmState full_state(const DqnPolicy& p, const StateRef& ref) {
    if (!ref.encoded) return {ref.direct, Vec(ref.direct.size(), 0.0)};
    return p.encoder.forward(ref.input, ref.h_prev, ref.c_prev);
}

StateRef zero_state(std::size_t hidden) {
    StateRef r;
    r.direct.assign(hidden, 0.0);
    return r;
}

// Re-encodes the history in a fresh random order, keeping the final step
// explicit so gradients can reach the encoder.
StateRef reshuffled_state(const DqnPolicy& p, const std::vector<Vec>& history, nn::Rng& rng) {
    if (history.empty()) return zero_state(p.dims().hidden);
    std::vector<std::size_t> order(history.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t last = order.back();
    order.pop_back();
    auto st = encode_history(p, history, &order);
    StateRef r;
    r.encoded = true;
    r.h_prev = st.h;
    r.c_prev = st.c;
    r.input = history[last];
    return r;
}

}  // namespace

std::pair<KnowledgeGraph, PerturbationRecord> run_greedy(const DqnPolicy& policy, const KnowledgeGraph& kg,
                                                         const ScorerParams& scorer, const RlTrainConfig& cfg) {
    KgEnvironment env(kg, scorer, policy.variant(), cfg);
    PerturbationRecord record;
    record.method = to_method(policy.variant());
    record.seed = cfg.seed;
    record.scale = cfg.scale;
    nn::Rng rng(cfg.seed ^ 0x6a09e667f3bcc909ULL);
    const std::size_t steps = episode_steps(kg, cfg);
    nn::LstmState st{Vec(policy.dims().hidden, 0.0), Vec(policy.dims().hidden, 0.0)};
    for (std::size_t t = 0; t < steps; ++t) {
        try {
            auto sel = select_action(policy, env, st.h, env.draw_head(rng), 0.0, rng, cfg.max_retries);
            record.edits.push_back(env.apply(sel.action));
            st = policy.encoder.forward(env.action_embedding(sel.action), st.h, st.c);
        } catch (const Error& e) {
            ++record.skipped;
        }
    }
    if (record.skipped > 0)
        log::notice(std::string(to_string(policy.variant())) + ": skipped " + std::to_string(record.skipped) +
                    " steps without a legal action");
    return {env.kg(), std::move(record)};
}

TrainResult train_policy(const KnowledgeGraph& kg, const Evaluator& evaluator, const ScorerParams& scorer,
                         Variant variant, const RlTrainConfig& cfg) {
    cfg.validate();
    if (kg.empty()) throw Error("rl: cannot perturb a graph with zero triples");
    if (!evaluator.statistic) throw Error("rl: evaluator has no statistic");
    KgEnvironment env(kg, scorer, variant, cfg);
    const PolicyDims dims = env.policy_dims();
    nn::Rng rng(cfg.seed);
    TrainResult result;
    DqnPolicy policy(variant, dims);
    policy.init(rng);
    DqnPolicy target = policy;
    ReplayBuffer buffer(cfg.replay_capacity);
    RewardTracker tracker;
    tracker.scale_target = cfg.reward_target;
    const double baseline = evaluator.statistic(kg);
    const nn::AdamConfig adam{.learning_rate = cfg.learning_rate};
    const std::size_t steps = episode_steps(kg, cfg);
    std::size_t global_step = 0, updates = 0;

    for (std::size_t episode = 0; episode < cfg.episodes; ++episode) {
        env.reset();
        tracker.previous = baseline;
        std::vector<Vec> history;
        StateRef cur = zero_state(dims.hidden);
        EntityId a0 = env.draw_head(rng);
        for (std::size_t t = 1; t <= steps; ++t) {
            const Vec s = resolve_state(policy, cur);
            const double eps = epsilon_at(global_step, cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps);
            std::optional<Selection> sel;
            try {
                sel = select_action(policy, env, s, a0, eps, rng, cfg.max_retries);
            } catch (const Error&) {
                log::notice("rl: step skipped, no legal subaction");
            }
            ++global_step;
            if (!sel) {
                a0 = env.draw_head(rng);
                continue;
            }
            env.apply(sel->action);
            auto ev = compute_reward(tracker, evaluator.statistic, evaluator.mode, env.kg(), global_step,
                                     cfg.reward_period);
            if (ev) result.rewards.push_back({global_step, ev->raw, ev->scaled, ev->statistic});

            Transition tr;
            tr.state = cur;
            tr.a0 = env.a0_embedding(sel->action.a0);
            tr.a1 = env.a1_embedding(sel->action.a1);
            tr.a2 = env.a2_embedding(sel->action.a2);
            for (auto c : sel->a2_candidates) tr.a2_candidates.push_back(env.a2_embedding(c));
            tr.reward = ev ? ev->scaled : 0.0;
            tr.terminal = t == steps;
            const Vec x = env.action_embedding(sel->action);
            history.push_back(x);
            const nn::LstmState full = full_state(policy, cur);
            StateRef next;
            next.encoded = true;
            next.h_prev = full.h;
            next.c_prev = full.c;
            next.input = x;
            tr.next_state = next;
            if (!tr.terminal) {
                a0 = env.draw_head(rng);
                tr.next_a0 = env.a0_embedding(a0);
                for (const auto& e : env.a1_candidates(a0)) tr.next_a1_candidates.push_back(env.a1_embedding(e));
            }
            buffer.push(std::move(tr));
            cur = next;

            if (buffer.size() >= cfg.batch_size) {
                auto batch = buffer.sample(cfg.batch_size, rng);
                result.losses.push_back(bellman_update(policy, target, batch, adam, cfg.gamma));
                ++updates;
                if (updates % cfg.target_sync == 0) sync_target(policy, target);
                if (cfg.shuffle_recompute > 0 && updates % cfg.shuffle_recompute == 0)
                    cur = reshuffled_state(policy, history, rng);
            }
        }
    }

    // Greedy episode from the round-tripped checkpoint parameters.
    result.policy = policy_from_text(policy_to_text(policy));
    auto [perturbed, record] = run_greedy(result.policy, kg, scorer, cfg);
    result.kg = std::move(perturbed);
    result.record = std::move(record);
    return result;
}

// ---------------------------------------------------------------------------
// Chain MDP

ChainMdp::Outcome ChainMdp::step(std::size_t s, std::size_t a1, std::size_t a2) const {
    if (s >= states || a1 > 1 || a2 > 1) throw Error("chain: action or state out of range");
    const auto size = static_cast<long long>(a2 + 1);
    const long long next = static_cast<long long>(s) + (a1 == 1 ? size : -size);
    Outcome o;
    o.reward = -(a2 == 0 ? step_cost_1 : step_cost_2);
    if (next < 0) {
        o.reward += left_exit;
    } else if (next >= static_cast<long long>(states)) {
        o.reward += right_exit;
    } else {
        o.next = static_cast<std::size_t>(next);
    }
    return o;
}

std::vector<ChainAction> chain_value_iteration(const ChainMdp& mdp, double gamma) {
    const double g2 = gamma * gamma;
    std::vector<double> v(mdp.states, 0.0);
    auto q = [&](std::size_t s, std::size_t a1, std::size_t a2) {
        auto o = mdp.step(s, a1, a2);
        return o.reward + (o.next ? g2 * v[*o.next] : 0.0);
    };
    for (int iter = 0; iter < 10000; ++iter) {
        double delta = 0.0;
        std::vector<double> nv(mdp.states);
        for (std::size_t s = 0; s < mdp.states; ++s) {
            double best = -1e300;
            for (std::size_t a1 = 0; a1 < 2; ++a1)
                for (std::size_t a2 = 0; a2 < 2; ++a2) best = std::max(best, q(s, a1, a2));
            nv[s] = best;
            delta = std::max(delta, std::abs(nv[s] - v[s]));
        }
        v = nv;
        if (delta < 1e-13) break;
    }
    std::vector<ChainAction> out;
    for (std::size_t s = 0; s < mdp.states; ++s) {
        ChainAction best;
        double best_q = -1e300;
        for (std::size_t a1 = 0; a1 < 2; ++a1)
            for (std::size_t a2 = 0; a2 < 2; ++a2)
                if (q(s, a1, a2) > best_q) {
                    best_q = q(s, a1, a2);
                    best = {a1, a2};
                }
        out.push_back(best);
    }
    return out;
}

namespace {

Vec one_hot(std::size_t i, std::size_t width) {
    Vec v(width, 0.0);
    v[i] = 1.0;
    return v;
}

Transition chain_transition(const ChainMdp& mdp, std::size_t hidden, std::size_t s, std::size_t a1,
                            std::size_t a2) {
    Transition t;
    t.state.direct = one_hot(s, hidden);
    t.a0 = one_hot(s, mdp.states);
    t.a1 = one_hot(a1, 2);
    t.a2 = one_hot(a2, 2);
    t.a2_candidates = {one_hot(0, 2), one_hot(1, 2)};
    auto o = mdp.step(s, a1, a2);
    t.reward = o.reward;
    t.terminal = !o.next;
    if (o.next) {
        t.next_state.direct = one_hot(*o.next, hidden);
        t.next_a0 = one_hot(*o.next, mdp.states);
        t.next_a1_candidates = {one_hot(0, 2), one_hot(1, 2)};
    }
    return t;
}

ChainAction chain_greedy(const DqnPolicy& p, const ChainMdp& mdp, std::size_t s) {
    const Vec st = one_hot(s, p.dims().hidden);
    const Vec a0 = one_hot(s, mdp.states);
    const std::vector<Vec> two = {one_hot(0, 2), one_hot(1, 2)};
    auto q1 = q1_scores(p, st, a0, two);
    const std::size_t a1 = q1[1] > q1[0] ? 1 : 0;
    auto q2 = q2_scores(p, st, a0, two[a1], two);
    return {a1, q2[1] > q2[0] ? std::size_t{1} : std::size_t{0}};
}

}  // namespace

std::vector<Transition> chain_transitions(const ChainMdp& mdp, std::size_t hidden) {
    std::vector<Transition> out;
    for (std::size_t s = 0; s < mdp.states; ++s)
        for (std::size_t a1 = 0; a1 < 2; ++a1)
            for (std::size_t a2 = 0; a2 < 2; ++a2) out.push_back(chain_transition(mdp, hidden, s, a1, a2));
    return out;
}

double mean_bellman_loss(DqnPolicy& online, const DqnPolicy& target, const std::vector<Transition>& ts,
                         double gamma) {
    double total = 0.0;
    for (const auto& t : ts) {
        auto l = bellman_loss(online, t, bellman_targets(target, t, gamma), false);
        total += l.q1 + l.q2;
    }
    return ts.empty() ? 0.0 : total / static_cast<double>(ts.size());
}

ChainResult train_chain(const ChainMdp& mdp, const ChainConfig& cfg) {
    if (cfg.hidden < mdp.states) throw Error("chain: hidden width must cover the one-hot state");
    PolicyDims dims{mdp.states, 2, 2, 0, cfg.hidden, cfg.head};
    nn::Rng rng(cfg.seed);
    ChainResult result;
    DqnPolicy policy(Variant::RR, dims);
    policy.init(rng);
    DqnPolicy target = policy;
    const auto all = chain_transitions(mdp, cfg.hidden);
    result.initial_loss = mean_bellman_loss(policy, target, all, cfg.gamma);

    ReplayBuffer buffer(cfg.replay_capacity);
    const nn::AdamConfig adam{.learning_rate = cfg.learning_rate};
    std::uniform_int_distribution<std::size_t> start(0, mdp.states - 1);
    std::size_t global_step = 0, updates = 0;
    for (std::size_t episode = 0; episode < cfg.episodes; ++episode) {
        std::size_t s = start(rng);
        for (std::size_t t = 0; t < cfg.max_steps; ++t) {
            const double eps = epsilon_at(global_step++, cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps);
            const Vec st = one_hot(s, cfg.hidden);
            const Vec a0 = one_hot(s, mdp.states);
            const std::vector<Vec> two = {one_hot(0, 2), one_hot(1, 2)};
            const std::size_t a1 = epsilon_greedy(q1_scores(policy, st, a0, two), eps, rng);
            const std::size_t a2 = epsilon_greedy(q2_scores(policy, st, a0, two[a1], two), eps, rng);
            buffer.push(chain_transition(mdp, cfg.hidden, s, a1, a2));
            if (buffer.size() >= cfg.batch_size) {
                auto batch = buffer.sample(cfg.batch_size, rng);
                bellman_update(policy, target, batch, adam, cfg.gamma);
                if (++updates % cfg.target_sync == 0) sync_target(policy, target);
            }
            auto o = mdp.step(s, a1, a2);
            if (!o.next) break;
            s = *o.next;
        }
    }
    sync_target(policy, target);
    result.final_loss = mean_bellman_loss(policy, target, all, cfg.gamma);
    for (std::size_t s = 0; s < mdp.states; ++s) result.greedy.push_back(chain_greedy(policy, mdp, s));
    result.policy = std::move(policy);
    return result;
}

}  // namespace kgp::rl
