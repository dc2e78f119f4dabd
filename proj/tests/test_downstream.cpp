#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "kgperturb/perturb.hpp"
#include "kgperturb/qa.hpp"
#include "kgperturb/recommender.hpp"
#include "kgperturb/world.hpp"
#include "oracles.hpp"

using namespace kgp;

namespace {

const SyntheticWorld& default_world() {
    static const SyntheticWorld w = generate_synthetic_world({});
    return w;
}

const RecModel& default_rec() {
    static const RecModel m = train_recommender(default_world().kg, default_world().interactions, {});
    return m;
}

const QaModel& default_qa() {
    static const QaModel m = [] {
        const auto& w = default_world();
        return train_qa(w.kg, qa_split(w.tasks, Split::Train), {});
    }();
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// World

TEST(World, DefaultSpecCounts) {
    const auto& w = default_world();
    EXPECT_EQ(w.kg.num_entities(), 100u);
    EXPECT_EQ(w.kg.num_relations(), 4u);
    EXPECT_EQ(w.kg.num_triples(), 400u);
    EXPECT_EQ(w.interactions.num_users, 50u);
    EXPECT_EQ(w.interactions.rows.size(), 500u);
    std::set<EntityId> items;
    for (const auto& r : w.interactions.rows) items.insert(r.item);
    EXPECT_LE(items.size(), 60u);
    EXPECT_EQ(w.tasks.size(), 100u);
    for (const auto& t : w.tasks) {
        EXPECT_EQ(t.answers.size(), 4u);
        EXPECT_LT(t.correct, 4u);
    }
}

TEST(World, SameSeedSameSerialization) {
    WorldSpec spec;
    spec.seed = 12;
    auto a = generate_synthetic_world(spec);
    auto b = generate_synthetic_world(spec);
    EXPECT_EQ(to_tsv(a.kg), to_tsv(b.kg));
    EXPECT_EQ(interactions_to_csv(a.interactions), interactions_to_csv(b.interactions));
    EXPECT_EQ(qa_tasks_to_text(a.tasks), qa_tasks_to_text(b.tasks));
}

TEST(World, DegenerateSizesThrow) {
    WorldSpec spec;
    spec.num_choices = 1;
    EXPECT_THROW(generate_synthetic_world(spec), Error);
    spec = {};
    spec.num_items = 3;
    EXPECT_THROW(generate_synthetic_world(spec), Error);
}

TEST(World, FileFormatsRoundTrip) {
    const auto& w = default_world();
    EXPECT_EQ(interactions_from_csv(interactions_to_csv(w.interactions)), w.interactions);
    EXPECT_EQ(qa_tasks_from_text(qa_tasks_to_text(w.tasks)), w.tasks);
    EXPECT_TRUE(interactions_to_csv(w.interactions).starts_with("user,item,label,split\n"));
    EXPECT_THROW(interactions_from_csv("user,item,label,split\n0,1,2,train\n"), Error);
    EXPECT_THROW(qa_tasks_from_text("1|2|3|7\n"), Error);
}

TEST(World, SplitsAreDisjointAndCovering) {
    const auto& w = default_world();
    const auto n = w.interactions.of(Split::Train).size() + w.interactions.of(Split::Dev).size() +
                   w.interactions.of(Split::Test).size();
    EXPECT_EQ(n, w.interactions.rows.size());
    EXPECT_EQ(qa_split(w.tasks, Split::Train).size() + qa_split(w.tasks, Split::Dev).size() +
                  qa_split(w.tasks, Split::Test).size(),
              w.tasks.size());
}

// ---------------------------------------------------------------------------
// Recommender

TEST(Auc, Examples) {
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1, 0}), 0.5);
    EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
}

TEST(Auc, MatchesPairwiseOracleAndMonotoneInvariance) {
    nn::Rng rng(3);
    std::uniform_int_distribution<int> coarse(0, 9);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < 40; ++i) {
            s.push_back(coarse(rng) / 10.0);
            y.push_back(coin(rng) ? 1 : 0);
        }
        y[0] = 1;
        y[1] = 0;
        const double a = auc(s, y);
        EXPECT_NEAR(a, oracle::pairwise_auc(s, y), 1e-12);
        std::vector<double> t;
        for (double v : s) t.push_back(std::exp(3.0 * v) - 7.0);
        EXPECT_DOUBLE_EQ(auc(t, y), a);
    }
}

TEST(Recommender, SingleNeighbourGetsFullWeight) {
    auto kg = parse_triples("i0\tr0\te1\ni2\tr1\te1\ni2\tr0\te3\n");
    Interactions in;
    in.num_users = 2;
    in.rows = {{0, kg.entity("i0"), 1, Split::Train}, {1, kg.entity("i2"), 0, Split::Train}};
    auto m = init_recommender(kg, in, {});
    for (std::uint32_t u = 0; u < 2; ++u) {
        auto w = neighbor_weights(m, kg, u, kg.entity("i0"));
        ASSERT_EQ(w.size(), 1u);
        EXPECT_DOUBLE_EQ(w[0], 1.0);
    }
    auto w2 = neighbor_weights(m, kg, 0, kg.entity("i2"));
    EXPECT_EQ(w2.size(), 2u);
    EXPECT_NEAR(w2[0] + w2[1], 1.0, 1e-12);
}

TEST(Recommender, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto kg = kgp::testing::random_kg(8, 3, 14, seed);
        Interactions in;
        in.num_users = 3;
        nn::Rng rng(seed);
        std::uniform_int_distribution<std::uint32_t> item(0, 7), user(0, 2), label(0, 1);
        for (int i = 0; i < 6; ++i) in.rows.push_back({user(rng), EntityId{item(rng)}, static_cast<int>(label(rng)), Split::Train});
        RecTrainConfig cfg;
        cfg.dim = 3;
        cfg.hops = 1 + seed % 2;
        cfg.init_scale = 0.8;
        cfg.seed = seed;
        auto m = init_recommender(kg, in, cfg);
        auto params = m.params();
        nn::zero_grads(params);
        rec_loss(m, kg, in.rows, 0.01, true);
        auto res = nn::finite_diff_check([&] { return rec_loss(m, kg, in.rows, 0.01, false); }, params, rng);
        EXPECT_TRUE(res.pass) << "seed " << seed << " err " << res.worst_relative_error;
    }
}

TEST(Recommender, DefaultWorldBeatsNoKgBaseline) {
    const auto& w = default_world();
    RecTrainConfig flat;
    flat.hops = 0;
    auto nokg = train_recommender(w.kg, w.interactions, flat);
    const double with = eval_auc(default_rec(), w.kg, w.interactions, Split::Dev);
    const double without = eval_auc(nokg, w.kg, w.interactions, Split::Dev);
    EXPECT_GE(with, 0.75);
    EXPECT_GE(with, without + 0.05);
}

TEST(Recommender, FrozenEvaluationIsDeterministic) {
    const auto& w = default_world();
    EXPECT_EQ(eval_auc(default_rec(), w.kg, w.interactions, Split::Dev),
              eval_auc(default_rec(), w.kg, w.interactions, Split::Dev));
    auto again = train_recommender(w.kg, w.interactions, {});
    EXPECT_EQ(again.user.value, default_rec().user.value);
}

TEST(Recommender, ZeroHopsIgnoresAnyPerturbation) {
    const auto& w = default_world();
    RecTrainConfig flat;
    flat.hops = 0;
    flat.epochs = 10;
    auto m = train_recommender(w.kg, w.interactions, flat);
    const double base = eval_auc(m, w.kg, w.interactions, Split::Test);
    for (auto kind : {HeuristicKind::RelationSwap, HeuristicKind::EdgeRewire, HeuristicKind::EdgeDelete}) {
        auto [p, rec] = perturb_scale(w.kg, kind, 1.0, nullptr, 3);
        EXPECT_EQ(eval_auc(m, p, w.interactions, Split::Test), base);
    }
}

TEST(Recommender, VocabularyMismatchThrows) {
    const auto& w = default_world();
    auto other = kgp::testing::tiny6();
    EXPECT_THROW(eval_auc(default_rec(), other, w.interactions, Split::Test), Error);
}

TEST(Recommender, RandomNeighbourhoodHurts) {
    const auto& w = default_world();
    const double intact = eval_auc(default_rec(), w.kg, w.interactions, Split::Test);
    const double noisy =
        noisy_baseline_auc(default_rec(), w.kg, w.interactions, Split::Test, NoisyMode::RandomNeighborhood, 1);
    EXPECT_LE(noisy, intact - 0.05);
    EXPECT_EQ(noisy_baseline_auc(default_rec(), w.kg, w.interactions, Split::Test, NoisyMode::ZeroGraphEmb, 0),
              noisy_baseline_auc(default_rec(), w.kg, w.interactions, Split::Test, NoisyMode::ZeroGraphEmb, 0));
}

TEST(Recommender, NoGenreSignalIsChance) {
    // Dev AUC is dominated by the handful of cold items, so use a wide item
    // catalogue and average over seeds.
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        WorldSpec spec;
        spec.genre_signal = 0.0;
        spec.num_entities = 500;
        spec.num_triples = 2000;
        spec.num_items = 400;
        spec.num_users = 100;
        spec.num_interactions = 4000;
        spec.seed = seed;
        auto w = generate_synthetic_world(spec);
        RecTrainConfig cfg;
        cfg.seed = seed;
        auto m = train_recommender(w.kg, w.interactions, cfg);
        sum += eval_auc(m, w.kg, w.interactions, Split::Dev);
    }
    EXPECT_NEAR(sum / 5.0, 0.5, 0.05);
}

TEST(Recommender, CheckpointRoundTrip) {
    auto m = default_rec();
    const auto text = rec_to_text(m);
    auto back = rec_from_text(text);
    EXPECT_EQ(rec_to_text(back), text);
    EXPECT_TRUE(text.starts_with("kgperturb-rec v1 "));
}

TEST(NoisyMode, Names) {
    for (auto m : {NoisyMode::ZeroGraphEmb, NoisyMode::RandomGraphEmb, NoisyMode::RandomKgEmb,
                   NoisyMode::RandomNeighborhood})
        EXPECT_EQ(parse_noisy_mode(to_string(m)), m);
    EXPECT_THROW(parse_noisy_mode("bogus"), Error);
}

// ---------------------------------------------------------------------------
// QA

TEST(QaPaths, Tiny6Enumeration) {
    auto kg = kgp::testing::tiny6();
    std::vector<EntityId> q{kg.entity("A")}, a{kg.entity("E")};
    auto paths = enumerate_paths(kg, q, a);
    ASSERT_EQ(paths.size(), 1u);
    EXPECT_EQ(paths[0].first, kg.relation("r2"));
    EXPECT_EQ(paths[0].second, kg.relation("r2"));
    std::vector<EntityId> b{kg.entity("B")};
    // Direct edge A-B plus A-C-B.
    EXPECT_EQ(enumerate_paths(kg, q, b).size(), 2u);
    std::vector<EntityId> f{kg.entity("F")};
    EXPECT_TRUE(enumerate_paths(kg, q, f).empty());
}

TEST(QaPaths, EmptyPathSetEmbedsToZero) {
    QaModel m(2, 3, 4);
    nn::Rng rng(0);
    m.relation.init_uniform(1.0, rng);
    m.path_mlp.init(rng);
    m.classifier.init(rng);
    auto g = graph_embedding(m, {});
    EXPECT_EQ(g, nn::Vec(4, 0.0));
}

TEST(Qa, GradientMatchesFiniteDifferences) {
    const auto& w = default_world();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        QaTrainConfig cfg;
        cfg.dim = 3;
        cfg.hidden = 4;
        cfg.seed = seed;
        auto m = init_qa(w.kg, cfg);
        const auto& task = w.tasks[seed];
        auto paths = extract_paths(w.kg, task);
        auto params = m.params();
        // Zero biases put empty-path answers exactly on a rectifier kink.
        nn::Rng jitter(100 + seed);
        for (auto* b : params)
            if (b->name.ends_with(".bias")) b->init_uniform(0.5, jitter);
        nn::zero_grads(params);
        qa_task_loss(m, paths, task.correct, true);
        nn::Rng rng(seed);
        auto res = nn::finite_diff_check([&] { return qa_task_loss(m, paths, task.correct, false); }, params, rng);
        EXPECT_TRUE(res.pass) << "seed " << seed << " err " << res.worst_relative_error;
    }
}

TEST(Qa, UntrainedModelIsNearChance) {
    const auto& w = default_world();
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        QaTrainConfig cfg;
        cfg.seed = seed;
        total += eval_qa(init_qa(w.kg, cfg), w.kg, w.tasks).accuracy;
    }
    EXPECT_NEAR(total / 5.0, 0.25, 0.1);
}

TEST(Qa, TrainedModelBeatsChance) {
    const auto& w = default_world();
    const double acc = eval_qa(default_qa(), w.kg, qa_split(w.tasks, Split::Test)).accuracy;
    EXPECT_GE(acc, 0.7);
    EXPECT_GE(acc, 0.25 + 0.3);
}

TEST(Qa, DistributionsAreProbabilityVectors) {
    const auto& w = default_world();
    auto ev = eval_qa(default_qa(), w.kg, w.tasks);
    for (std::size_t i = 0; i < ev.distributions.size(); ++i) {
        double s = 0.0;
        for (double p : ev.distributions[i]) {
            EXPECT_GE(p, 0.0);
            s += p;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
        EXPECT_TRUE(std::isfinite(dirac_kl(ev.distributions[i], w.tasks[i].correct)));
    }
}

TEST(Qa, EmptyGraphGivesUniformDistributions) {
    const auto& w = default_world();
    auto empty = KnowledgeGraph::empty_like(w.kg);
    auto ev = eval_qa(default_qa(), empty, w.tasks);
    for (const auto& d : ev.distributions)
        for (double p : d) EXPECT_NEAR(p, 0.25, 1e-12);
    // Every argmax tie goes to candidate 0.
    std::size_t zero_correct = 0;
    for (const auto& t : w.tasks) zero_correct += t.correct == 0;
    EXPECT_DOUBLE_EQ(ev.accuracy, static_cast<double>(zero_correct) / static_cast<double>(w.tasks.size()));
}

TEST(Qa, FrozenEvaluationIsDeterministic) {
    const auto& w = default_world();
    auto a = eval_qa(default_qa(), w.kg, w.tasks);
    auto b = eval_qa(default_qa(), w.kg, w.tasks);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.distributions, b.distributions);
}

TEST(Qa, DiracKl) {
    EXPECT_DOUBLE_EQ(dirac_kl(std::vector<double>{0.0, 1.0}, 1), 0.0);
    EXPECT_NEAR(dirac_kl(std::vector<double>{0.5, 0.5}, 0), std::log(2.0), 1e-15);
    EXPECT_NEAR(dirac_kl(std::vector<double>{1.0, 0.0}, 1), -std::log(1e-12), 1e-9);
}

TEST(Qa, ZeroGraphEmbIsNearChance) {
    const auto& w = default_world();
    auto ev = noisy_baseline_qa(default_qa(), w.kg, w.tasks, NoisyMode::ZeroGraphEmb, 0);
    EXPECT_NEAR(ev.accuracy, 0.25, 0.1);
    EXPECT_THROW(noisy_baseline_qa(default_qa(), w.kg, w.tasks, NoisyMode::RandomNeighborhood, 0), Error);
}

TEST(Qa, CheckpointRoundTrip) {
    auto m = default_qa();
    const auto text = qa_to_text(m);
    auto back = qa_from_text(text);
    EXPECT_EQ(qa_to_text(back), text);
}
