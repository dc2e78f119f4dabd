#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "fixtures.hpp"
#include "kgperturb/metrics.hpp"
#include "kgperturb/rl.hpp"
#include "kgperturb/rl_env.hpp"
#include "oracles.hpp"

using namespace kgp;
using namespace kgp::rl;

namespace {

void zero(const nn::ParamList& params) {
    for (auto* p : params) p->fill(0.0);
}

void identity_layer(nn::Linear& l) {
    l.weight.fill(0.0);
    l.bias.fill(0.0);
    for (std::size_t i = 0; i < std::min(l.weight.rows, l.weight.cols); ++i) l.weight.at(i, i) = 1.0;
}

// Sets `q` so that its state feature is exactly `feature` (non-negative) for
// any state and conditioning input, and its action head is the identity.
void probe(QNet& q, const Vec& feature) {
    zero(q.params());
    const std::size_t H = q.cell.spec().hidden;
    for (std::size_t i = 0; i < H; ++i) q.cell.bias.value[3 * H + i] = 1.0;  // candidate gate
    const double h = 0.5 * std::tanh(0.5 * std::tanh(1.0));
    for (auto& l : q.action_head.layers()) identity_layer(l);
    for (auto& l : q.state_head.layers()) identity_layer(l);
    auto& first = q.state_head.layers().front();
    for (std::size_t i = 0; i < feature.size(); ++i) first.weight.at(i, i) = feature[i] / h;
}

double chi2_critical_01(std::size_t df) {
    // Wilson-Hilferty approximation of the 0.99 quantile.
    const double k = static_cast<double>(df);
    const double z = 2.326347874;
    const double a = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
    return k * a * a * a;
}

double chi2(const std::map<std::uint64_t, std::size_t>& counts, std::size_t cells, std::size_t n) {
    const double expected = static_cast<double>(n) / static_cast<double>(cells);
    double s = 0.0;
    for (const auto& [k, c] : counts) s += (c - expected) * (c - expected) / expected;
    s += static_cast<double>(cells - counts.size()) * expected;
    return s;
}

struct Setup {
    KnowledgeGraph kg;
    ScorerParams scorer;
};

Setup rr_setup(std::uint64_t seed = 0) {
    auto kg = kgp::testing::random_kg(20, 6, 60, seed);
    ScorerTrainConfig cfg;
    cfg.dim = 4;
    cfg.epochs = 30;
    cfg.seed = seed;
    auto s = train_scorer(kg, cfg);
    return {std::move(kg), std::move(s)};
}

}  // namespace

// ---------------------------------------------------------------------------
// State encoding and Q heads

TEST(StateEmbed, EmptyHistoryIsZero) {
    DqnPolicy p(Variant::RR, {2, 4, 2, 8, 5, 3});
    nn::Rng rng(0);
    p.init(rng);
    auto st = encode_history(p, {});
    EXPECT_EQ(st.h, Vec(5, 0.0));
}

TEST(StateEmbed, ZeroEncoderGivesZeroState) {
    DqnPolicy p(Variant::RR, {2, 4, 2, 3, 4, 3});
    zero(p.encoder.params());
    std::vector<Vec> hist{{1, 2, 3}, {-1, 0, 4}, {0.5, 0.5, 0.5}};
    EXPECT_EQ(encode_history(p, hist).h, Vec(4, 0.0));
}

TEST(StateEmbed, UntrainedEncoderIsOrderSensitive) {
    DqnPolicy p(Variant::RR, {2, 4, 2, 3, 6, 3});
    nn::Rng rng(5);
    p.init(rng);
    std::vector<Vec> hist{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    std::vector<std::size_t> reversed{2, 1, 0};
    EXPECT_NE(encode_history(p, hist).h, encode_history(p, hist, &reversed).h);
}

TEST(QHeads, IdentityHeadsInnerProduct) {
    QNet q("q", 2, 2, 2, 2);
    probe(q, {3, 1});
    std::vector<Vec> cand{{1, 2}};
    auto v = q.scores(Vec{0.4, -0.7}, Vec{1, 1}, cand);
    EXPECT_NEAR(v[0], 5.0, 1e-12);
}

TEST(QHeads, ZeroActionHeadScoresZero) {
    QNet q("q", 2, 3, 4, 3);
    nn::Rng rng(1);
    q.init(rng);
    zero(q.action_head.params());
    std::vector<Vec> cand{{1, 2, 3}, {-4, 5, 6}};
    EXPECT_EQ(q.scores(Vec{0.1, 0.2, 0.3, 0.4}, Vec{1, -1}, cand), (std::vector<double>{0, 0}));
}

TEST(QHeads, LinearInCandidateScale) {
    QNet q("q", 2, 3, 4, 3);
    nn::Rng rng(2);
    q.init(rng);
    Vec x{0.3, 0.7, 1.1};
    Vec x2{0.6, 1.4, 2.2};
    std::vector<Vec> cand{x, x2};
    auto v = q.scores(Vec{0.1, 0.2, 0.3, 0.4}, Vec{1, -1}, cand);
    EXPECT_EQ(v[1], 2.0 * v[0]);
}

TEST(QHeads, Q2IdentityExample) {
    DqnPolicy p(Variant::RR, {2, 2, 2, 0, 2, 2});
    probe(p.q2, {1, 0});
    std::vector<Vec> cand{{0, 1}, {1, 0}};
    auto v = q2_scores(p, Vec{0, 0}, Vec{1, 2}, Vec{3, 4}, cand);
    EXPECT_NEAR(v[0], 0.0, 1e-12);
    EXPECT_NEAR(v[1], 1.0, 1e-12);
}

TEST(QHeads, ZeroCellAndBiasesGiveZeroScores) {
    DqnPolicy p(Variant::RR, {2, 2, 2, 0, 2, 2});
    probe(p.q2, {1, 1});
    zero(p.q2.cell.params());
    std::vector<Vec> cand{{0, 1}, {1, 0}, {5, 5}};
    EXPECT_EQ(q2_scores(p, Vec{0.3, 0.1}, Vec{1, 2}, Vec{3, 4}, cand), (std::vector<double>{0, 0, 0}));
}

TEST(QHeads, EmptyCandidatesThrow) {
    DqnPolicy p(Variant::RR, {2, 2, 2, 0, 2, 2});
    EXPECT_THROW(q1_scores(p, Vec{0, 0}, Vec{1, 2}, {}), Error);
}

// ---------------------------------------------------------------------------
// Exploration

TEST(EpsilonGreedy, GreedyPicksArgmaxLowestOnTies) {
    nn::Rng rng(0);
    EXPECT_EQ(epsilon_greedy(std::vector<double>{0.1, 0.7, 0.3}, 0.0, rng), 1u);
    EXPECT_EQ(epsilon_greedy(std::vector<double>{2.0, 1.0, 2.0}, 0.0, rng), 0u);
}

TEST(EpsilonGreedy, FullExplorationIsUniform) {
    nn::Rng rng(9);
    std::map<std::uint64_t, std::size_t> counts;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) ++counts[epsilon_greedy(std::vector<double>{5, 1, 0, 3, 2}, 1.0, rng)];
    EXPECT_LT(chi2(counts, 5, n), chi2_critical_01(4));
}

TEST(EpsilonGreedy, LinearSchedule) {
    EXPECT_DOUBLE_EQ(epsilon_at(0, 1.0, 0.1, 10), 1.0);
    EXPECT_DOUBLE_EQ(epsilon_at(5, 1.0, 0.1, 10), 0.55);
    EXPECT_DOUBLE_EQ(epsilon_at(10, 1.0, 0.1, 10), 0.1);
    EXPECT_DOUBLE_EQ(epsilon_at(50, 1.0, 0.1, 10), 0.1);
}

TEST(SelectAction, FullExplorationUniformOverLegalSets) {
    auto [kg, scorer] = rr_setup(1);
    RlTrainConfig cfg;
    cfg.top_k = 3;
    KgEnvironment env(kg, scorer, Variant::RR, cfg);
    DqnPolicy p(Variant::RR, env.policy_dims());
    nn::Rng init(0);
    p.init(init);
    // Fix a head with several edges and check a1 and a2 frequencies.
    EntityId a0{0};
    for (auto h : env.sampleable_heads())
        if (env.a1_candidates(h).size() > env.a1_candidates(a0).size()) a0 = h;
    const auto edges = env.a1_candidates(a0);
    ASSERT_GE(edges.size(), 2u);
    nn::Rng rng(3);
    const Vec s(cfg.hidden, 0.0);
    std::map<std::uint64_t, std::size_t> a1_counts;
    std::map<std::uint64_t, std::size_t> a2_counts;
    const std::size_t n = 10000;
    std::size_t a2_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto sel = select_action(p, env, s, a0, 1.0, rng, 0);
        ASSERT_EQ(sel.action.a0, a0);
        const auto idx = static_cast<std::uint64_t>(std::find(edges.begin(), edges.end(), sel.action.a1) - edges.begin());
        ++a1_counts[idx];
        if (sel.action.a1 == edges.front()) {
            ++a2_counts[sel.action.a2];
            ++a2_n;
        }
    }
    EXPECT_LT(chi2(a1_counts, edges.size(), n), chi2_critical_01(edges.size() - 1));
    const auto restricted = env.a2_restricted(edges.front());
    ASSERT_GE(restricted.size(), 2u);
    EXPECT_LT(chi2(a2_counts, restricted.size(), a2_n), chi2_critical_01(restricted.size() - 1));
}

TEST(SelectAction, HeadDrawIsUniform) {
    auto [kg, scorer] = rr_setup(2);
    KgEnvironment env(kg, scorer, Variant::RR, {});
    const auto heads = env.sampleable_heads();
    nn::Rng rng(4);
    std::map<std::uint64_t, std::size_t> counts;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) ++counts[env.draw_head(rng).value];
    EXPECT_LT(chi2(counts, heads.size(), n), chi2_critical_01(heads.size() - 1));
}

TEST(SelectAction, TopOneForcesLowestScore) {
    auto [kg, scorer] = rr_setup(3);
    RlTrainConfig cfg;
    cfg.top_k = 1;
    KgEnvironment env(kg, scorer, Variant::RR, cfg);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        DqnPolicy p(Variant::RR, env.policy_dims());
        nn::Rng rng(seed);
        p.init(rng);
        auto a0 = env.draw_head(rng);
        auto sel = select_action(p, env, Vec(cfg.hidden, 0.0), a0, 0.0, rng, 16);
        ASSERT_EQ(sel.a2_candidates.size(), 1u);
        std::vector<RelationId> legal;
        for (auto r : env.a2_legal(sel.action.a1)) legal.push_back(RelationId{r});
        EXPECT_EQ(sel.action.a2, k_lowest_relations(scorer, sel.action.a1.head, sel.action.a1.tail, legal, 1)[0].value);
    }
}

TEST(SelectAction, GreedyFollowsHandSetQ) {
    auto [kg, scorer] = rr_setup(4);
    RlTrainConfig cfg;
    cfg.top_k = 8;
    KgEnvironment env(kg, scorer, Variant::RR, cfg);
    DqnPolicy p(Variant::RR, env.policy_dims());
    nn::Rng rng(0);
    p.init(rng);
    // Zero action heads make every Q equal, so greedy picks the first edge and lowest id.
    zero(p.q1.action_head.params());
    zero(p.q2.action_head.params());
    auto a0 = env.sampleable_heads().front();
    auto sel = select_action(p, env, Vec(cfg.hidden, 0.0), a0, 0.0, rng, 0);
    EXPECT_EQ(sel.action.a1, env.a1_candidates(a0).front());
    auto restricted = env.a2_restricted(sel.action.a1);
    EXPECT_EQ(sel.action.a2, *std::min_element(restricted.begin(), restricted.end()));
}

TEST(SelectAction, ErCandidatesAreNonNeighbours) {
    auto [kg, scorer] = rr_setup(5);
    KgEnvironment env(kg, scorer, Variant::ER, {});
    for (auto h : env.sampleable_heads())
        for (const auto& t : env.a1_candidates(h)) {
            EXPECT_EQ(t.head, h);
            auto nb = oracle::one_hop(kg, h);
            for (auto e : env.a2_legal(t)) {
                EXPECT_FALSE(nb.contains(e));
                EXPECT_NE(e, h.value);
            }
        }
}

TEST(SelectAction, ErNeighbourVariantUsesNeighbours) {
    auto [kg, scorer] = rr_setup(5);
    RlTrainConfig cfg;
    cfg.er_neighbor_variant = true;
    KgEnvironment env(kg, scorer, Variant::ER, cfg);
    for (auto h : env.sampleable_heads())
        for (const auto& t : env.a1_candidates(h))
            for (auto e : env.a2_legal(t)) EXPECT_TRUE(oracle::one_hop(kg, h).contains(e));
}

// ---------------------------------------------------------------------------
// Rewards

TEST(Reward, KlDecreaseScaled) {
    RewardTracker tr;
    tr.running_mean_abs = 0.3;
    tr.events = 1;
    tr.previous = 0.9;
    auto ev = compute_reward(tr, [](const KnowledgeGraph&) { return 0.6; }, RewardMode::KlDecrease,
                             kgp::testing::tiny6(), 20, 20);
    ASSERT_TRUE(ev.has_value());
    EXPECT_NEAR(ev->raw, 0.3, 1e-15);
    EXPECT_NEAR(ev->scaled, 1.0, 1e-12);
    EXPECT_EQ(tr.previous, 0.6);
}

TEST(Reward, OffScheduleLeavesTrackerUntouched) {
    RewardTracker tr;
    tr.running_mean_abs = 0.3;
    tr.events = 2;
    tr.previous = 0.9;
    int calls = 0;
    auto ev = compute_reward(tr, [&](const KnowledgeGraph&) { return ++calls, 0.1; }, RewardMode::KlDecrease,
                             kgp::testing::tiny6(), 7, 20);
    EXPECT_FALSE(ev.has_value());
    EXPECT_EQ(calls, 0);
    EXPECT_EQ(tr.running_mean_abs, 0.3);
    EXPECT_EQ(tr.events, 2u);
    EXPECT_EQ(tr.previous, 0.9);
}

TEST(Reward, PerfectPredictionsGiveZero) {
    EXPECT_EQ(raw_reward(RewardMode::KlDecrease, 0.0, 0.0), 0.0);
    EXPECT_NEAR(raw_reward(RewardMode::AucDelta, 0.7, 0.75), 0.05, 1e-12);
    EXPECT_EQ(raw_reward(RewardMode::AucAbsolute, 0.7, 0.75), 0.75);
}

TEST(Reward, FloorPreventsBlowup) {
    RewardTracker tr;
    EXPECT_EQ(scale_reward(tr, 0.0), 0.0);
    EXPECT_EQ(tr.events, 1u);
    EXPECT_TRUE(std::isfinite(scale_reward(tr, 1e-9)));
}

// ---------------------------------------------------------------------------
// Bellman

TEST(Bellman, HandSetQ1Error) {
    DqnPolicy online(Variant::RR, {2, 2, 2, 0, 2, 2});
    DqnPolicy target = online;
    probe(target.q2, {2, 0});
    zero(online.q1.action_head.params());
    Transition t;
    t.state.direct = {0, 0};
    t.a0 = {1, 1};
    t.a1 = {1, 0};
    t.a2 = {1, 0};
    t.a2_candidates = {{1, 0}, {0, 1}};
    t.terminal = true;
    auto y = bellman_targets(target, t, 0.5);
    EXPECT_NEAR(y.y1, 1.0, 1e-12);
    auto loss = bellman_loss(online, t, y, false);
    EXPECT_NEAR(loss.q1, 1.0, 1e-12);
}

TEST(Bellman, ZeroDiscountZeroRewardTargetsZero) {
    DqnPolicy p(Variant::RR, {2, 4, 2, 8, 3, 3});
    nn::Rng rng(1);
    p.init(rng);
    Transition t;
    t.state.direct = {0.1, 0.2, 0.3};
    t.a0 = {1, 1};
    t.a1 = {1, 0, 2, 2};
    t.a2 = {1, 0};
    t.a2_candidates = {{1, 0}, {0, 1}};
    t.reward = 0.0;
    t.next_state.direct = {0.5, 0.5, 0.5};
    t.next_a0 = {0, 1};
    t.next_a1_candidates = {{1, 1, 1, 1}};
    auto y = bellman_targets(p, t, 0.0);
    EXPECT_EQ(y.y1, 0.0);
    EXPECT_EQ(y.y2, 0.0);
}

TEST(Bellman, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const bool encoded = seed % 2 == 0;
        DqnPolicy p(Variant::ER, {2, 4, 2, encoded ? 8u : 0u, 3, 3});
        nn::Rng rng(seed);
        p.init(rng);
        std::normal_distribution<double> n(0.0, 1.0);
        auto vec = [&](std::size_t w) {
            Vec v(w);
            for (auto& x : v) x = n(rng);
            return v;
        };
        Transition t;
        if (encoded) {
            t.state.encoded = true;
            t.state.input = vec(8);
            t.state.h_prev = vec(3);
            t.state.c_prev = vec(3);
        } else {
            t.state.direct = vec(3);
        }
        t.a0 = vec(2);
        t.a1 = vec(4);
        t.a2 = vec(2);
        t.a2_candidates = {t.a2, vec(2)};
        t.reward = n(rng);
        t.next_state.direct = vec(3);
        t.next_a0 = vec(2);
        t.next_a1_candidates = {vec(4), vec(4)};
        DqnPolicy target = p;
        auto y = bellman_targets(target, t, 0.9);
        auto params = p.params();
        nn::zero_grads(params);
        bellman_loss(p, t, y, true);
        auto res = nn::finite_diff_check(
            [&] {
                auto l = bellman_loss(p, t, y, false);
                return l.q1 + l.q2;
            },
            params, rng);
        EXPECT_TRUE(res.pass) << "seed " << seed << " err " << res.worst_relative_error;
    }
}

TEST(Bellman, SyncCopiesOnlineIntoTarget) {
    DqnPolicy online(Variant::RR, {2, 4, 2, 8, 3, 3});
    DqnPolicy target(Variant::RR, {2, 4, 2, 8, 3, 3});
    nn::Rng rng(2);
    online.init(rng);
    target.init(rng);
    sync_target(online, target);
    EXPECT_EQ(policy_to_text(online), policy_to_text(target));
}

TEST(Replay, RingBufferAndSampling) {
    ReplayBuffer buf(3);
    for (int i = 0; i < 5; ++i) {
        Transition t;
        t.reward = i;
        buf.push(t);
    }
    EXPECT_EQ(buf.size(), 3u);
    nn::Rng rng(0);
    std::set<double> seen;
    for (const auto* t : buf.sample(200, rng)) seen.insert(t->reward);
    EXPECT_EQ(seen, (std::set<double>{2, 3, 4}));
}

TEST(PolicyCheckpoint, RoundTripAndHeader) {
    DqnPolicy p(Variant::ER, {4, 8, 4, 16, 5, 6});
    nn::Rng rng(3);
    p.init(rng);
    const auto text = policy_to_text(p);
    EXPECT_TRUE(text.starts_with("kgperturb-dqn v1 variant=RL-ER\n"));
    auto back = policy_from_text(text);
    EXPECT_EQ(back.variant(), Variant::ER);
    EXPECT_EQ(back.dims(), p.dims());
    EXPECT_EQ(policy_to_text(back), text);
    EXPECT_THROW(policy_from_text("kgperturb-dqn v2\n"), Error);
}

// ---------------------------------------------------------------------------
// Training on a KG

namespace {

// Evaluator independent of the graph, so the test exercises the loop only.
Evaluator constant_evaluator() {
    return {RewardMode::AucDelta, [](const KnowledgeGraph& g) { return static_cast<double>(g.num_triples() % 7) / 7.0; }};
}

RlTrainConfig smoke_config() {
    RlTrainConfig cfg;
    cfg.episodes = 2;
    cfg.scale = 0.5;
    cfg.reward_period = 5;
    cfg.hidden = 8;
    cfg.head = 8;
    cfg.batch_size = 8;
    cfg.target_sync = 10;
    return cfg;
}

}  // namespace

TEST(TrainPolicy, RlRrKeepsStructure) {
    auto [kg, scorer] = rr_setup(6);
    auto res = train_policy(kg, constant_evaluator(), scorer, Variant::RR, smoke_config());
    EXPECT_EQ(oracle::head_tail(res.kg), oracle::head_tail(kg));
    EXPECT_EQ(replay(kg, res.record), res.kg);
    for (const auto& l : res.losses) {
        EXPECT_TRUE(std::isfinite(l.q1));
        EXPECT_TRUE(std::isfinite(l.q2));
    }
    EXPECT_EQ(res.rewards.size(), 2 * touch_budget(0.5, kg.num_triples()) / 5);
}

TEST(TrainPolicy, RlErKeepsHistogramAndLegality) {
    auto [kg, scorer] = rr_setup(7);
    auto res = train_policy(kg, constant_evaluator(), scorer, Variant::ER, smoke_config());
    EXPECT_EQ(oracle::histogram(res.kg), oracle::histogram(kg));
    KnowledgeGraph cur = kg;
    for (const auto& e : res.record.edits) {
        EXPECT_FALSE(oracle::one_hop(cur, e.removed[0].head).contains(e.added[0].tail.value));
        cur = apply_edits(cur, e.removed, e.added);
    }
    EXPECT_EQ(cur, res.kg);
}

TEST(TrainPolicy, DeterministicAndCheckpointReproducesGreedyRun) {
    auto [kg, scorer] = rr_setup(8);
    auto cfg = smoke_config();
    auto a = train_policy(kg, constant_evaluator(), scorer, Variant::RR, cfg);
    auto b = train_policy(kg, constant_evaluator(), scorer, Variant::RR, cfg);
    EXPECT_EQ(policy_to_text(a.policy), policy_to_text(b.policy));
    EXPECT_EQ(to_tsv(a.kg), to_tsv(b.kg));
    auto reloaded = policy_from_text(policy_to_text(a.policy));
    auto [kg2, rec2] = run_greedy(reloaded, kg, scorer, cfg);
    EXPECT_EQ(to_tsv(kg2), to_tsv(a.kg));
}

TEST(TrainPolicy, FullExplorationMatchesTopKRandomHeuristic) {
    // An epsilon = 1 episode against an independent re-implementation of
    // "uniform head, uniform untouched edge, uniform among the K lowest legal relations".
    auto [kg, scorer] = rr_setup(9);
    RlTrainConfig cfg;
    cfg.top_k = 2;
    const std::size_t steps = kg.num_triples();
    auto policy_run = [&](std::uint64_t seed) {
        KgEnvironment env(kg, scorer, Variant::RR, cfg);
        DqnPolicy p(Variant::RR, env.policy_dims());
        nn::Rng rng(seed);
        p.init(rng);
        for (std::size_t i = 0; i < steps; ++i) {
            try {
                auto sel = select_action(p, env, Vec(cfg.hidden, 0.0), env.draw_head(rng), 1.0, rng, 16);
                env.apply(sel.action);
            } catch (const Error&) {
            }
        }
        return ats(scorer, env.kg());
    };
    auto heuristic_run = [&](std::uint64_t seed) {
        nn::Rng rng(seed + 1000);
        KnowledgeGraph cur = kg;
        std::set<Triple> untouched(kg.triples().begin(), kg.triples().end());
        for (std::size_t i = 0; i < steps; ++i) {
            std::map<EntityId, std::vector<Triple>> by_head;
            for (const auto& t : cur.triples())
                if (untouched.empty() || untouched.contains(t)) by_head[t.head].push_back(t);
            std::vector<EntityId> heads;
            for (const auto& [h, _] : by_head) heads.push_back(h);
            for (int attempt = 0; attempt < 17; ++attempt) {
                auto h = heads[std::uniform_int_distribution<std::size_t>(0, heads.size() - 1)(rng)];
                const auto& edges = by_head[h];
                auto t = edges[std::uniform_int_distribution<std::size_t>(0, edges.size() - 1)(rng)];
                std::vector<std::pair<double, std::uint32_t>> legal;
                for (std::uint32_t r = 0; r < cur.num_relations(); ++r) {
                    Triple c{t.head, RelationId{r}, t.tail};
                    if (r != t.relation.value && !cur.contains(c)) legal.push_back({score_triple(scorer, c), r});
                }
                if (legal.empty()) continue;
                std::sort(legal.begin(), legal.end());
                legal.resize(std::min<std::size_t>(legal.size(), cfg.top_k));
                auto r = legal[std::uniform_int_distribution<std::size_t>(0, legal.size() - 1)(rng)].second;
                cur = apply_edits(cur, {t}, {Triple{t.head, RelationId{r}, t.tail}});
                untouched.erase(t);
                break;
            }
        }
        return ats(scorer, cur);
    };
    auto stats = [](const std::vector<double>& v) {
        double m = 0.0, s = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        for (double x : v) s += (x - m) * (x - m);
        return std::pair{m, std::sqrt(s / static_cast<double>(v.size() - 1))};
    };
    std::vector<double> a, b;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        a.push_back(policy_run(seed));
        b.push_back(heuristic_run(seed));
    }
    auto [ma, sa] = stats(a);
    auto [mb, sb] = stats(b);
    // Welch-style bound at roughly the 99.9% level for 5 + 5 samples.
    const double se = std::sqrt((sa * sa + sb * sb) / 5.0);
    EXPECT_LE(std::abs(ma - mb), 5.0 * se + 1e-3) << ma << " vs " << mb;
}

// ---------------------------------------------------------------------------
// Chain MDP

TEST(Chain, StepSemantics) {
    ChainMdp mdp;
    auto o = mdp.step(0, 0, 0);
    EXPECT_FALSE(o.next.has_value());
    EXPECT_EQ(o.reward, 1.0);
    o = mdp.step(9, 1, 0);
    EXPECT_FALSE(o.next.has_value());
    EXPECT_EQ(o.reward, 1.5);
    o = mdp.step(4, 1, 1);
    EXPECT_EQ(o.next, 6u);
    EXPECT_EQ(o.reward, -0.4);
    o = mdp.step(4, 0, 0);
    EXPECT_EQ(o.next, 3u);
    EXPECT_EQ(o.reward, 0.0);
}

TEST(Chain, ValueIterationOptimum) {
    ChainMdp mdp;
    auto best = chain_value_iteration(mdp, 0.9);
    ASSERT_EQ(best.size(), 10u);
    for (const auto& a : best) EXPECT_EQ(a.a2, 0u);
    // Near the left end exiting left wins; further right the larger exit wins.
    EXPECT_EQ(best.front().a1, 0u);
    EXPECT_EQ(best.back().a1, 1u);
}
