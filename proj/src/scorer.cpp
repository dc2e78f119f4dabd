#include "kgperturb/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kgperturb/format.hpp"

namespace kgp {

ScorerParams::ScorerParams(std::size_t num_entities, std::size_t num_relations, std::size_t dim)
    : entity("scorer.entity", num_entities, dim), relation("scorer.relation", num_relations, dim) {}

std::span<const double> ScorerParams::entity_embedding(EntityId e) const {
    if (e.value >= entity.rows) throw LookupError("scorer: entity id out of range");
    return entity.row(e.value);
}

std::span<const double> ScorerParams::relation_embedding(RelationId r) const {
    if (r.value >= relation.rows) throw LookupError("scorer: relation id out of range");
    return relation.row(r.value);
}

double bilinear(const ScorerParams& s, EntityId h, RelationId r, EntityId t) {
    auto hv = s.entity_embedding(h);
    auto rv = s.relation_embedding(r);
    auto tv = s.entity_embedding(t);
    double x = 0.0;
    for (std::size_t i = 0; i < hv.size(); ++i) x += hv[i] * rv[i] * tv[i];
    return x;
}

double score_triple(const ScorerParams& s, EntityId h, RelationId r, EntityId t) {
    return nn::sigmoid(bilinear(s, h, r, t));
}

double scorer_loss(ScorerParams& s, std::span<const LabeledTriple> batch, bool accumulate_grad) {
    if (batch.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const std::size_t d = s.dim();
    double loss = 0.0;
    for (const auto& item : batch) {
        const auto& t = item.triple;
        const double x = bilinear(s, t.head, t.relation, t.tail);
        // -[y log sigma(x) + (1-y) log(1 - sigma(x))], written stably.
        loss += std::max(x, 0.0) - x * item.label + std::log1p(std::exp(-std::abs(x)));
        if (!accumulate_grad) continue;
        const double g = (nn::sigmoid(x) - item.label) * inv_n;
        auto hv = s.entity.row(t.head.value);
        auto rv = s.relation.row(t.relation.value);
        auto tv = s.entity.row(t.tail.value);
        auto gh = s.entity.grad_row(t.head.value);
        auto gr = s.relation.grad_row(t.relation.value);
        auto gt = s.entity.grad_row(t.tail.value);
        for (std::size_t i = 0; i < d; ++i) {
            gh[i] += g * rv[i] * tv[i];
            gr[i] += g * hv[i] * tv[i];
            gt[i] += g * hv[i] * rv[i];
        }
    }
    return loss * inv_n;
}

Triple corrupt_triple(const KnowledgeGraph& kg, const Triple& t, nn::Rng& rng) {
    std::uniform_int_distribution<std::uint32_t> ent(0, static_cast<std::uint32_t>(kg.num_entities() - 1));
    std::bernoulli_distribution coin(0.5);
    // Bounded resampling; on a saturated graph the last draw is returned as is.
    Triple c = t;
    for (int attempt = 0; attempt < 64; ++attempt) {
        c = t;
        if (coin(rng)) c.head = EntityId{ent(rng)};
        else c.tail = EntityId{ent(rng)};
        if (!kg.contains(c)) return c;
    }
    return c;
}

ScorerParams init_scorer(const KnowledgeGraph& kg, std::size_t dim, std::uint64_t seed) {
    if (dim == 0) throw Error("scorer dimension must be >= 1");
    ScorerParams s(kg.num_entities(), kg.num_relations(), dim);
    nn::Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    s.entity.init_uniform(bound, rng);
    s.relation.init_uniform(bound, rng);
    return s;
}

ScorerParams train_scorer(const KnowledgeGraph& kg, const ScorerTrainConfig& cfg) {
    if (kg.empty()) throw Error("cannot train scorer on a graph with zero triples");
    if (cfg.epochs == 0 || cfg.negatives == 0 || cfg.batch_size == 0)
        throw Error("scorer config requires epochs, negatives and batch size >= 1");
    ScorerParams s = init_scorer(kg, cfg.dim, cfg.seed);
    nn::Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    nn::AdamConfig adam{.learning_rate = cfg.learning_rate};
    auto params = s.params();

    std::vector<std::size_t> order(kg.num_triples());
    std::iota(order.begin(), order.end(), 0);
    std::vector<LabeledTriple> batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t k = start; k < end; ++k) {
                const Triple& t = kg.triples()[order[k]];
                batch.push_back({t, 1.0});
                for (std::size_t n = 0; n < cfg.negatives; ++n)
                    batch.push_back({corrupt_triple(kg, t, rng), 0.0});
            }
            nn::zero_grads(params);
            scorer_loss(s, batch, true);
            nn::adam_step(params, adam);
        }
    }
    nn::zero_grads(params);
    return s;
}

RelationId argmin_relation(const ScorerParams& s, EntityId h, EntityId t) {
    if (s.num_relations() == 0) throw Error("argmin_relation: empty relation vocabulary");
    RelationId best{0};
    double best_score = score_triple(s, h, best, t);
    for (std::uint32_t r = 1; r < s.num_relations(); ++r) {
        double v = score_triple(s, h, RelationId{r}, t);
        if (v < best_score) {
            best_score = v;
            best = RelationId{r};
        }
    }
    return best;
}

std::vector<std::uint32_t> k_lowest(std::span<const std::uint32_t> ids,
                                    std::span<const double> scores, std::size_t k) {
    if (ids.empty()) throw Error("no legal subaction: empty candidate list");
    if (ids.size() != scores.size()) throw Error("k_lowest: ids/scores length mismatch");
    if (k == 0) throw Error("k_lowest: K must be >= 1");
    std::vector<std::size_t> idx(ids.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto less = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return ids[a] < ids[b];
    };
    const std::size_t take = std::min(k, ids.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), less);
    std::vector<std::uint32_t> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(ids[idx[i]]);
    return out;
}

std::vector<RelationId> k_lowest_relations(const ScorerParams& s, EntityId h, EntityId t,
                                           std::span<const RelationId> candidates, std::size_t k) {
    std::vector<std::uint32_t> ids;
    std::vector<double> scores;
    for (auto r : candidates) {
        ids.push_back(r.value);
        scores.push_back(score_triple(s, h, r, t));
    }
    std::vector<RelationId> out;
    for (auto id : k_lowest(ids, scores, k)) out.push_back(RelationId{id});
    return out;
}

std::vector<EntityId> k_lowest_tails(const ScorerParams& s, EntityId h, RelationId r,
                                     std::span<const EntityId> candidates, std::size_t k) {
    std::vector<std::uint32_t> ids;
    std::vector<double> scores;
    for (auto e : candidates) {
        ids.push_back(e.value);
        scores.push_back(score_triple(s, h, r, e));
    }
    std::vector<EntityId> out;
    for (auto id : k_lowest(ids, scores, k)) out.push_back(EntityId{id});
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint

std::string scorer_to_text(const ScorerParams& s) {
    std::string out = "kgperturb-scorer v1 d=" + std::to_string(s.dim()) +
                      " entities=" + std::to_string(s.num_entities()) +
                      " relations=" + std::to_string(s.num_relations()) + "\n";
    for (std::size_t r = 0; r < s.num_entities(); ++r) out += join_fixed9(s.entity.row(r), '\t') + "\n";
    for (std::size_t r = 0; r < s.num_relations(); ++r)
        out += join_fixed9(s.relation.row(r), '\t') + "\n";
    return out;
}

ScorerParams scorer_from_text(std::string_view text) {
    auto lines = split(text, '\n');
    if (lines.empty() || !lines[0].starts_with("kgperturb-scorer v1 "))
        throw ParseError("scorer checkpoint: missing header", 1);
    long long d = -1, ne = -1, nr = -1;
    for (auto field : split(lines[0].substr(20), ' ')) {
        auto eq = field.find('=');
        if (eq == std::string_view::npos) throw ParseError("scorer checkpoint: bad header", 1);
        auto key = field.substr(0, eq);
        auto val = parse_int(field.substr(eq + 1), key);
        if (key == "d") d = val;
        else if (key == "entities") ne = val;
        else if (key == "relations") nr = val;
        else throw ParseError("scorer checkpoint: unknown header key", 1);
    }
    if (d <= 0 || ne < 0 || nr < 0) throw ParseError("scorer checkpoint: incomplete header", 1);
    ScorerParams s(static_cast<std::size_t>(ne), static_cast<std::size_t>(nr), static_cast<std::size_t>(d));
    auto read_row = [&](std::size_t line_index, std::span<double> row) {
        if (line_index >= lines.size()) throw ParseError("scorer checkpoint: truncated", line_index + 1);
        auto fields = split(lines[line_index], '\t');
        if (fields.size() != row.size())
            throw ParseError("scorer checkpoint: row width mismatch", line_index + 1);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = parse_double(fields[i], "embedding");
    };
    std::size_t line = 1;
    for (std::size_t r = 0; r < s.num_entities(); ++r) read_row(line++, s.entity.row(r));
    for (std::size_t r = 0; r < s.num_relations(); ++r) read_row(line++, s.relation.row(r));
    return s;
}

void save_scorer(const ScorerParams& s, const std::filesystem::path& path) {
    write_file(path, scorer_to_text(s));
}

ScorerParams load_scorer(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("scorer checkpoint not found: " + path.string());
    return scorer_from_text(read_file(path));
}

}  // namespace kgp
