#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "kgperturb/scorer.hpp"

using namespace kgp;
using kgp::testing::random_kg;
using kgp::testing::tiny6;

namespace {

// Two entities, `relations` relations, d = 2, every row set by hand.
ScorerParams hand_scorer(std::vector<std::vector<double>> entities, std::vector<std::vector<double>> relations) {
    ScorerParams s(entities.size(), relations.size(), entities.front().size());
    for (std::size_t i = 0; i < entities.size(); ++i)
        std::copy(entities[i].begin(), entities[i].end(), s.entity.row(i).begin());
    for (std::size_t i = 0; i < relations.size(); ++i)
        std::copy(relations[i].begin(), relations[i].end(), s.relation.row(i).begin());
    return s;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(ScoreTriple, HandSetValues) {
    auto s = hand_scorer({{1, 0}, {1, 0}, {1, 1}, {-1, -1}}, {{2, 1}, {0, 0}, {1, 1}});
    EXPECT_NEAR(score_triple(s, EntityId{0}, RelationId{0}, EntityId{1}), 0.880797, 1e-6);
    EXPECT_DOUBLE_EQ(score_triple(s, EntityId{0}, RelationId{1}, EntityId{1}), 0.5);
    EXPECT_NEAR(score_triple(s, EntityId{2}, RelationId{2}, EntityId{3}), 0.119203, 1e-6);
}

TEST(ScoreTriple, OutOfRangeThrows) {
    ScorerParams s(2, 1, 2);
    EXPECT_THROW(score_triple(s, EntityId{2}, RelationId{0}, EntityId{0}), LookupError);
    EXPECT_THROW(score_triple(s, EntityId{0}, RelationId{1}, EntityId{0}), LookupError);
}

TEST(ScoreTriple, StrictlyInsideUnitInterval) {
    auto kg = random_kg(10, 3, 20, 1);
    auto s = init_scorer(kg, 4, 3);
    for (const auto& t : kg.triples()) {
        double v = score_triple(s, t);
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(ScoreTriple, SymmetricUnderEndpointSwap) {
    auto s = hand_scorer({{0.3, -1.2, 0.7}, {2.0, 0.1, -0.4}}, {{0.5, 1.5, -2.0}});
    EXPECT_DOUBLE_EQ(score_triple(s, EntityId{0}, RelationId{0}, EntityId{1}),
                     score_triple(s, EntityId{1}, RelationId{0}, EntityId{0}));
}

TEST(TrainScorer, Tiny6SeparatesTrueFromCorrupted) {
    auto kg = tiny6();
    ScorerTrainConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 200;
    cfg.seed = 7;
    auto s = train_scorer(kg, cfg);
    double pos = 0.0;
    for (const auto& t : kg.triples()) pos += score_triple(s, t);
    pos /= static_cast<double>(kg.num_triples());
    nn::Rng rng(11);
    double neg = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto& t = kg.triples()[static_cast<std::size_t>(i) % kg.num_triples()];
        neg += score_triple(s, corrupt_triple(kg, t, rng));
    }
    neg /= 100.0;
    EXPECT_GE(pos - neg, 0.2);
}

TEST(TrainScorer, ZeroLearningRateKeepsInitialization) {
    auto kg = tiny6();
    ScorerTrainConfig cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 0.0;
    cfg.seed = 4;
    EXPECT_EQ(train_scorer(kg, cfg), init_scorer(kg, cfg.dim, cfg.seed));
}

TEST(TrainScorer, Deterministic) {
    auto kg = random_kg(15, 3, 30, 2);
    ScorerTrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 9;
    EXPECT_EQ(train_scorer(kg, cfg), train_scorer(kg, cfg));
}

TEST(TrainScorer, EmptyGraphThrows) {
    auto kg = KnowledgeGraph::empty_like(tiny6());
    EXPECT_THROW(train_scorer(kg, {}), Error);
}

TEST(ScorerGradient, MatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto kg = random_kg(6, 2, 5, seed);
        auto s = init_scorer(kg, 1 + seed % 4, seed);
        nn::Rng rng(seed);
        std::vector<LabeledTriple> batch;
        for (const auto& t : kg.triples()) {
            batch.push_back({t, 1.0});
            batch.push_back({corrupt_triple(kg, t, rng), 0.0});
        }
        // Larger weights so the logistic is away from its linear regime.
        for (auto& v : s.entity.value) v *= 3.0;
        auto params = s.params();
        nn::zero_grads(params);
        scorer_loss(s, batch, true);
        auto res = nn::finite_diff_check([&] { return scorer_loss(s, batch, false); }, params, rng);
        EXPECT_TRUE(res.pass) << "seed " << seed << " err " << res.worst_relative_error;
    }
}

TEST(ArgminRelation, PicksLowestScore) {
    // score(h, r0, t) = sigma(0.9-ish), score(h, r1, t) lower.
    auto s = hand_scorer({{1, 1}, {1, 1}}, {{2.2, 0.0}, {-1.4, 0.0}});
    EXPECT_EQ(argmin_relation(s, EntityId{0}, EntityId{1}), RelationId{1});
    EXPECT_NEAR(score_triple(s, EntityId{0}, RelationId{0}, EntityId{1}), logistic(2.2), 1e-12);
}

TEST(ArgminRelation, TieGoesToLowestId) {
    auto s = hand_scorer({{1, 2}, {3, 1}}, {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
    EXPECT_EQ(argmin_relation(s, EntityId{0}, EntityId{1}), RelationId{0});
}

TEST(ArgminRelation, SingleRelation) {
    auto s = hand_scorer({{1, 2}, {3, 1}}, {{-4, 9}});
    EXPECT_EQ(argmin_relation(s, EntityId{1}, EntityId{0}), RelationId{0});
}

TEST(ArgminRelation, NoRelationScoresLower) {
    auto kg = random_kg(8, 5, 10, 3);
    auto s = init_scorer(kg, 3, 5);
    for (std::uint32_t h = 0; h < 8; ++h)
        for (std::uint32_t t = 0; t < 8; ++t) {
            auto best = argmin_relation(s, EntityId{h}, EntityId{t});
            for (std::uint32_t r = 0; r < 5; ++r)
                EXPECT_LE(score_triple(s, EntityId{h}, best, EntityId{t}),
                          score_triple(s, EntityId{h}, RelationId{r}, EntityId{t}));
        }
}

TEST(KLowest, Examples) {
    std::vector<std::uint32_t> ids{1, 2, 3};
    std::vector<double> scores{0.9, 0.2, 0.5};
    EXPECT_EQ(k_lowest(ids, scores, 2), (std::vector<std::uint32_t>{2, 3}));
    EXPECT_EQ(k_lowest(ids, scores, 10), (std::vector<std::uint32_t>{2, 3, 1}));
    std::vector<double> equal{0.4, 0.4, 0.4};
    std::vector<std::uint32_t> shuffled{7, 3, 5};
    EXPECT_EQ(k_lowest(shuffled, equal, 2), (std::vector<std::uint32_t>{3, 5}));
}

TEST(KLowest, EmptyCandidatesThrow) {
    try {
        k_lowest({}, {}, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("no legal subaction"), std::string::npos);
    }
}

TEST(ScorerCheckpoint, TextRoundTripIsStable) {
    auto kg = random_kg(10, 3, 20, 8);
    ScorerTrainConfig cfg;
    cfg.epochs = 5;
    auto s = train_scorer(kg, cfg);
    const auto text = scorer_to_text(s);
    EXPECT_TRUE(text.starts_with("kgperturb-scorer v1 d=16"));
    EXPECT_EQ(scorer_to_text(scorer_from_text(text)), text);
    EXPECT_THROW(scorer_from_text("garbage\n"), ParseError);
}
