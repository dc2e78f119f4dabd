#include "kgperturb/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "kgperturb/format.hpp"

namespace kgp {

RecModel::RecModel(std::size_t users, std::size_t entities, std::size_t relations, std::size_t dim,
                   std::size_t hops_)
    : hops(hops_),
      user("rec.user", users, dim),
      item("rec.item", entities, dim),
      entity("rec.entity", entities, dim),
      relation("rec.relation", relations, dim) {}

std::string_view to_string(NoisyMode m) {
    switch (m) {
        case NoisyMode::None: return "none";
        case NoisyMode::ZeroGraphEmb: return "zero-graph-emb";
        case NoisyMode::RandomGraphEmb: return "random-graph-emb";
        case NoisyMode::RandomKgEmb: return "random-kg-emb";
        case NoisyMode::RandomNeighborhood: return "random-neighborhood";
    }
    return "none";
}

NoisyMode parse_noisy_mode(std::string_view s) {
    for (auto m : {NoisyMode::None, NoisyMode::ZeroGraphEmb, NoisyMode::RandomGraphEmb,
                   NoisyMode::RandomKgEmb, NoisyMode::RandomNeighborhood})
        if (to_string(m) == s) return m;
    throw Error("unknown noisy baseline mode '" + std::string(s) + "'");
}

namespace {

using nn::Vec;

// Neighbour lists of the undirected view, optionally replaced.
class Neighborhood {
public:
    explicit Neighborhood(const KnowledgeGraph& kg) : kg_(&kg) {}

    void randomize(nn::Rng& rng) {
        lists_.assign(kg_->num_entities(), {});
        std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(kg_->num_entities() - 1));
        for (std::uint32_t e = 0; e < kg_->num_entities(); ++e) {
            for (const auto& n : natural(EntityId{e})) lists_[e].push_back({n.relation, EntityId{any(rng)}});
        }
        replaced_ = true;
    }

    std::vector<Neighbor> of(EntityId e) const {
        if (replaced_) return lists_[e.value];
        return natural(e);
    }

private:
    std::vector<Neighbor> natural(EntityId e) const {
        std::vector<Neighbor> out = kg_->out_edges(e);
        const auto& in = kg_->in_edges(e);
        out.insert(out.end(), in.begin(), in.end());
        return out;
    }

    const KnowledgeGraph* kg_;
    bool replaced_ = false;
    std::vector<std::vector<Neighbor>> lists_;
};

struct Forward {
    const RecModel& m;
    const Neighborhood& nbhd;
    std::span<const double> u;

    Vec weights(const std::vector<Neighbor>& nbrs) const {
        Vec logits;
        logits.reserve(nbrs.size());
        for (const auto& n : nbrs) logits.push_back(nn::dot(u, m.relation.row(n.relation.value)));
        return nn::softmax(logits);
    }

    // Neighbour aggregate of `v` with `level` hops remaining.
    Vec agg(EntityId v, std::size_t level) const {
        Vec out(m.dim(), 0.0);
        if (level == 0) return out;
        auto nbrs = nbhd.of(v);
        if (nbrs.empty()) return out;
        Vec w = weights(nbrs);
        for (std::size_t j = 0; j < nbrs.size(); ++j) {
            Vec rn = entity_repr(nbrs[j].entity, level - 1);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[j] * rn[i];
        }
        return out;
    }

    Vec entity_repr(EntityId n, std::size_t level) const {
        Vec out = agg(n, level);
        auto e = m.entity.row(n.value);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += e[i];
        return out;
    }

    Vec item_repr(EntityId v) const {
        Vec out = agg(v, m.hops);
        auto e = m.item.row(v.value);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += e[i];
        return out;
    }
};

// Accumulates d(loss)/d(params) given g = d(loss)/d(agg(v, level)).
void backward_agg(RecModel& m, const Neighborhood& nbhd, std::uint32_t user, EntityId v, std::size_t level,
                  const Vec& g) {
    if (level == 0) return;
    auto nbrs = nbhd.of(v);
    if (nbrs.empty()) return;
    Forward fwd{m, nbhd, m.user.row(user)};
    Vec w = fwd.weights(nbrs);
    Vec proj(nbrs.size());
    double mean_proj = 0.0;
    for (std::size_t j = 0; j < nbrs.size(); ++j) {
        proj[j] = nn::dot(g, fwd.entity_repr(nbrs[j].entity, level - 1));
        mean_proj += w[j] * proj[j];
    }
    auto u = m.user.row(user);
    auto gu = m.user.grad_row(user);
    for (std::size_t j = 0; j < nbrs.size(); ++j) {
        const double da = w[j] * (proj[j] - mean_proj);
        auto r = m.relation.row(nbrs[j].relation.value);
        auto gr = m.relation.grad_row(nbrs[j].relation.value);
        for (std::size_t i = 0; i < u.size(); ++i) {
            gu[i] += da * r[i];
            gr[i] += da * u[i];
        }
        Vec gn(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) gn[i] = w[j] * g[i];
        auto ge = m.entity.grad_row(nbrs[j].entity.value);
        for (std::size_t i = 0; i < g.size(); ++i) ge[i] += gn[i];
        backward_agg(m, nbhd, user, nbrs[j].entity, level - 1, gn);
    }
}

void check_compatible(const RecModel& m, const KnowledgeGraph& kg) {
    if (m.entity.rows != kg.num_entities() || m.relation.rows != kg.num_relations())
        throw Error("recommender and KG vocabularies differ");
}

void check_item(const RecModel& m, const Interaction& x) {
    if (x.item.value >= m.entity.rows)
        throw Error("item " + std::to_string(x.item.value) + " is not a KG entity");
    if (x.user >= m.user.rows) throw Error("user " + std::to_string(x.user) + " out of range");
}

}  // namespace

std::vector<double> neighbor_weights(const RecModel& model, const KnowledgeGraph& kg,
                                     std::uint32_t user, EntityId item) {
    Neighborhood nbhd(kg);
    Forward fwd{model, nbhd, model.user.row(user)};
    return fwd.weights(nbhd.of(item));
}

double rec_score(const RecModel& model, const KnowledgeGraph& kg, std::uint32_t user, EntityId item) {
    Neighborhood nbhd(kg);
    Forward fwd{model, nbhd, model.user.row(user)};
    return nn::sigmoid(nn::dot(fwd.u, fwd.item_repr(item)));
}

double rec_loss(RecModel& model, const KnowledgeGraph& kg, std::span<const Interaction> batch,
                double l2, bool accumulate_grad) {
    if (batch.empty()) return 0.0;
    Neighborhood nbhd(kg);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& x : batch) {
        check_item(model, x);
        Forward fwd{model, nbhd, model.user.row(x.user)};
        Vec rep = fwd.item_repr(x.item);
        const double z = nn::dot(fwd.u, rep);
        const double y = x.label;
        loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        auto u = model.user.row(x.user);
        auto ev = model.item.row(x.item.value);
        loss += 0.5 * l2 * (nn::dot(u, u) + nn::dot(ev, ev));
        if (!accumulate_grad) continue;
        const double dz = (nn::sigmoid(z) - y) * inv_n;
        auto gu = model.user.grad_row(x.user);
        for (std::size_t i = 0; i < u.size(); ++i) gu[i] += dz * rep[i] + l2 * inv_n * u[i];
        Vec g(u.begin(), u.end());
        for (auto& gi : g) gi *= dz;
        auto gi_row = model.item.grad_row(x.item.value);
        for (std::size_t i = 0; i < ev.size(); ++i) gi_row[i] += g[i] + l2 * inv_n * ev[i];
        backward_agg(model, nbhd, x.user, x.item, model.hops, g);
    }
    return loss * inv_n;
}

RecModel init_recommender(const KnowledgeGraph& kg, const Interactions& in, const RecTrainConfig& cfg) {
    if (cfg.dim == 0) throw Error("recommender dimension must be >= 1");
    RecModel m(in.num_users, kg.num_entities(), kg.num_relations(), cfg.dim, cfg.hops);
    nn::Rng rng(cfg.seed);
    m.user.init_uniform(cfg.init_scale, rng);
    m.item.init_uniform(cfg.init_scale, rng);
    m.entity.init_uniform(cfg.init_scale, rng);
    m.relation.init_uniform(cfg.init_scale, rng);
    return m;
}

RecModel train_recommender(const KnowledgeGraph& kg, const Interactions& in, const RecTrainConfig& cfg) {
    auto train = in.of(Split::Train);
    if (train.empty()) throw Error("recommender: empty train split");
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction > 1.0)
        throw Error("recommender: train_fraction must lie in (0, 1]");
    RecModel m = init_recommender(kg, in, cfg);
    for (const auto& x : train) check_item(m, x);
    nn::Rng rng(cfg.seed ^ 0xa5a5a5a5a5a5a5a5ULL);
    std::shuffle(train.begin(), train.end(), rng);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.train_fraction * static_cast<double>(train.size()) - 1e-9)));
    train.resize(keep);

    nn::AdamConfig adam{.learning_rate = cfg.learning_rate};
    auto params = m.params();
    const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), rng);
        for (std::size_t s = 0; s < train.size(); s += bs) {
            std::span<const Interaction> batch(train.data() + s, std::min(bs, train.size() - s));
            nn::zero_grads(params);
            rec_loss(m, kg, batch, cfg.l2, true);
            nn::adam_step(params, adam);
        }
    }
    nn::zero_grads(params);
    m.frozen = true;
    return m;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error("auc: length mismatch");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Mann-Whitney U with average ranks for ties.
    double pos_rank_sum = 0.0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == 1) pos_rank_sum += avg_rank;
        i = j;
    }
    for (int l : labels) (l == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw Error("auc needs both positive and negative examples");
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (pos_rank_sum - p * (p + 1) / 2.0) / (p * n);
}

namespace {

double auc_with(const RecModel& model, const KnowledgeGraph& kg, const Interactions& in, Split split,
                NoisyMode mode, std::uint64_t seed) {
    check_compatible(model, kg);
    auto rows = in.of(split);
    nn::Rng rng(seed);
    Neighborhood nbhd(kg);
    const RecModel* used = &model;
    RecModel noisy;
    if (mode == NoisyMode::RandomNeighborhood) nbhd.randomize(rng);
    if (mode == NoisyMode::RandomKgEmb) {
        noisy = model;
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& x : noisy.entity.value) x = normal(rng);
        for (auto& x : noisy.relation.value) x = normal(rng);
        used = &noisy;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& x : rows) {
        check_item(*used, x);
        Forward fwd{*used, nbhd, used->user.row(x.user)};
        Vec rep;
        if (mode == NoisyMode::ZeroGraphEmb || mode == NoisyMode::RandomGraphEmb) {
            auto ev = used->item.row(x.item.value);
            rep.assign(ev.begin(), ev.end());
            if (mode == NoisyMode::RandomGraphEmb && used->hops > 0)
                for (auto& r : rep) r += normal(rng);
        } else {
            rep = fwd.item_repr(x.item);
        }
        scores.push_back(nn::sigmoid(nn::dot(fwd.u, rep)));
        labels.push_back(x.label);
    }
    return auc(scores, labels);
}

}  // namespace

double eval_auc(const RecModel& model, const KnowledgeGraph& kg, const Interactions& in, Split split) {
    return auc_with(model, kg, in, split, NoisyMode::None, 0);
}

double noisy_baseline_auc(const RecModel& model, const KnowledgeGraph& kg, const Interactions& in,
                          Split split, NoisyMode mode, std::uint64_t seed) {
    return auc_with(model, kg, in, split, mode, seed);
}

std::string rec_to_text(RecModel& model) {
    std::ostringstream out;
    out << "kgperturb-rec v1 d=" << model.dim() << " hops=" << model.hops
        << " users=" << model.user.rows << " entities=" << model.entity.rows
        << " relations=" << model.relation.rows << "\n";
    nn::write_params(out, model.params());
    return out.str();
}

RecModel rec_from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header;
    std::getline(in, header);
    std::size_t d = 0, hops = 0, users = 0, entities = 0, relations = 0;
    if (std::sscanf(header.c_str(), "kgperturb-rec v1 d=%zu hops=%zu users=%zu entities=%zu relations=%zu",
                    &d, &hops, &users, &entities, &relations) != 5)
        throw ParseError("recommender checkpoint: bad header", 1);
    RecModel m(users, entities, relations, d, hops);
    nn::read_params(in, m.params());
    m.frozen = true;
    return m;
}

void save_recommender(RecModel& model, const std::filesystem::path& path) {
    write_file(path, rec_to_text(model));
}

RecModel load_recommender(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("recommender checkpoint not found: " + path.string());
    return rec_from_text(read_file(path));
}

}  // namespace kgp
