#include "kgperturb/qa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "kgperturb/format.hpp"

namespace kgp {

using nn::Vec;

std::vector<RelationPath> enumerate_paths(const KnowledgeGraph& kg, std::span<const EntityId> question,
                                          std::span<const EntityId> answer) {
    std::vector<RelationPath> out;
    auto is_answer = [&](EntityId e) { return std::find(answer.begin(), answer.end(), e) != answer.end(); };
    auto for_each_edge = [&](EntityId e, auto&& fn) {
        for (const auto& n : kg.out_edges(e)) fn(n);
        for (const auto& n : kg.in_edges(e)) fn(n);
    };
    for (auto q : question) {
        kg.check_entity(q);
        for_each_edge(q, [&](const Neighbor& first) {
            const EntityId m = first.entity;
            if (m == q) return;
            if (is_answer(m)) out.push_back({first.relation, std::nullopt});
            for_each_edge(m, [&](const Neighbor& second) {
                const EntityId a = second.entity;
                if (a == q || a == m) return;
                if (is_answer(a)) out.push_back({first.relation, second.relation});
            });
        });
    }
    return out;
}

QaModel::QaModel(std::size_t relations, std::size_t dim, std::size_t hidden)
    : relation("qa.relation", relations, dim),
      path_mlp("qa.path", nn::MlpSpec{{2 * dim, hidden, hidden}}),
      classifier("qa.cls", nn::MlpSpec{{hidden, hidden, 1}}) {}

nn::ParamList QaModel::params() {
    nn::ParamList out{&relation};
    for (auto* p : path_mlp.params()) out.push_back(p);
    for (auto* p : classifier.params()) out.push_back(p);
    return out;
}

TaskPaths extract_paths(const KnowledgeGraph& kg, const QaTask& task) {
    TaskPaths tp;
    for (const auto& a : task.answers) tp.per_answer.push_back(enumerate_paths(kg, task.question, a));
    return tp;
}

namespace {

Vec path_feature(const QaModel& m, const RelationPath& p) {
    const std::size_t d = m.dim();
    Vec f(2 * d, 0.0);
    auto r1 = m.relation.row(p.first.value);
    std::copy(r1.begin(), r1.end(), f.begin());
    if (p.second) {
        auto r2 = m.relation.row(p.second->value);
        std::copy(r2.begin(), r2.end(), f.begin() + static_cast<std::ptrdiff_t>(d));
    }
    return f;
}

void check_paths(const QaModel& m, std::span<const RelationPath> paths) {
    for (const auto& p : paths)
        if (p.first.value >= m.relation.rows || (p.second && p.second->value >= m.relation.rows))
            throw Error("QA model and KG relation vocabularies differ");
}

struct PooledTape {
    std::vector<Vec> features;
    std::vector<nn::Mlp::Tape> tapes;
};

Vec pooled(const QaModel& m, std::span<const RelationPath> paths, PooledTape* tape) {
    Vec g(m.hidden(), 0.0);
    if (paths.empty()) return g;
    check_paths(m, paths);
    const double inv = 1.0 / static_cast<double>(paths.size());
    for (const auto& p : paths) {
        Vec f = path_feature(m, p);
        nn::Mlp::Tape t;
        Vec h = m.path_mlp.forward(f, tape ? &t : nullptr);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += h[i] * inv;
        if (tape) {
            tape->features.push_back(std::move(f));
            tape->tapes.push_back(std::move(t));
        }
    }
    return g;
}

Vec distribution_from_embeddings(const QaModel& m, const std::vector<Vec>& embs) {
    Vec logits;
    for (const auto& g : embs) logits.push_back(m.classifier.forward(g)[0]);
    return nn::softmax(logits);
}

}  // namespace

Vec graph_embedding(const QaModel& m, std::span<const RelationPath> paths) {
    return pooled(m, paths, nullptr);
}

double qa_task_loss(QaModel& m, const TaskPaths& paths, std::size_t correct, bool accumulate_grad) {
    const std::size_t k = paths.per_answer.size();
    if (correct >= k) throw Error("qa: correct index out of range");
    std::vector<PooledTape> ptapes(k);
    std::vector<nn::Mlp::Tape> ctapes(k);
    std::vector<Vec> embs(k);
    Vec logits(k);
    for (std::size_t i = 0; i < k; ++i) {
        embs[i] = pooled(m, paths.per_answer[i], &ptapes[i]);
        logits[i] = m.classifier.forward(embs[i], &ctapes[i])[0];
    }
    Vec p = nn::softmax(logits);
    const double loss = -std::log(std::max(p[correct], 1e-300));
    if (!accumulate_grad) return loss;
    const std::size_t d = m.dim();
    for (std::size_t i = 0; i < k; ++i) {
        const double dz = p[i] - (i == correct ? 1.0 : 0.0);
        Vec dg = m.classifier.backward(ctapes[i], Vec{dz});
        const auto& ps = paths.per_answer[i];
        if (ps.empty()) continue;
        const double inv = 1.0 / static_cast<double>(ps.size());
        for (auto& x : dg) x *= inv;
        for (std::size_t j = 0; j < ps.size(); ++j) {
            Vec df = m.path_mlp.backward(ptapes[i].tapes[j], dg);
            auto g1 = m.relation.grad_row(ps[j].first.value);
            for (std::size_t c = 0; c < d; ++c) g1[c] += df[c];
            if (ps[j].second) {
                auto g2 = m.relation.grad_row(ps[j].second->value);
                for (std::size_t c = 0; c < d; ++c) g2[c] += df[d + c];
            }
        }
    }
    return loss;
}

QaModel init_qa(const KnowledgeGraph& kg, const QaTrainConfig& cfg) {
    if (cfg.dim == 0 || cfg.hidden == 0) throw Error("QA widths must be >= 1");
    QaModel m(kg.num_relations(), cfg.dim, cfg.hidden);
    nn::Rng rng(cfg.seed);
    m.relation.init_uniform(1.0, rng);
    m.path_mlp.init(rng);
    m.classifier.init(rng);
    return m;
}

QaModel train_qa(const KnowledgeGraph& kg, const std::vector<QaTask>& tasks, const QaTrainConfig& cfg) {
    if (tasks.empty()) throw Error("QA training needs at least one task");
    QaModel m = init_qa(kg, cfg);
    std::vector<TaskPaths> paths;
    for (const auto& t : tasks) paths.push_back(extract_paths(kg, t));
    nn::Rng rng(cfg.seed ^ 0x5bd1e995ULL);
    std::vector<std::size_t> order(tasks.size());
    std::iota(order.begin(), order.end(), 0);
    nn::AdamConfig adam{.learning_rate = cfg.learning_rate};
    auto params = m.params();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (auto i : order) {
            nn::zero_grads(params);
            qa_task_loss(m, paths[i], tasks[i].correct, true);
            nn::adam_step(params, adam);
        }
    }
    nn::zero_grads(params);
    m.frozen = true;
    return m;
}

double dirac_kl(std::span<const double> p, std::size_t correct) {
    return -std::log(std::max(p[correct], 1e-12));
}

namespace {

QaEval eval_with(const QaModel& model, const KnowledgeGraph& kg, const std::vector<QaTask>& tasks,
                 NoisyMode mode, std::uint64_t seed) {
    if (mode == NoisyMode::RandomNeighborhood)
        throw Error("random-neighborhood baseline is defined for the recommender only");
    nn::Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const QaModel* used = &model;
    QaModel noisy;
    if (mode == NoisyMode::RandomKgEmb) {
        noisy = model;
        for (auto& x : noisy.relation.value) x = normal(rng);
        used = &noisy;
    }
    QaEval ev;
    std::size_t hits = 0;
    for (const auto& t : tasks) {
        std::vector<Vec> embs;
        for (const auto& a : t.answers) {
            if (mode == NoisyMode::ZeroGraphEmb) {
                embs.emplace_back(used->hidden(), 0.0);
            } else if (mode == NoisyMode::RandomGraphEmb) {
                Vec g(used->hidden());
                for (auto& x : g) x = normal(rng);
                embs.push_back(std::move(g));
            } else {
                auto paths = enumerate_paths(kg, t.question, a);
                embs.push_back(pooled(*used, paths, nullptr));
            }
        }
        Vec p = distribution_from_embeddings(*used, embs);
        const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        if (best == t.correct) ++hits;
        ev.mean_kl += dirac_kl(p, t.correct);
        ev.distributions.push_back(std::move(p));
    }
    if (!tasks.empty()) {
        ev.accuracy = static_cast<double>(hits) / static_cast<double>(tasks.size());
        ev.mean_kl /= static_cast<double>(tasks.size());
    }
    return ev;
}

}  // namespace

QaEval eval_qa(const QaModel& m, const KnowledgeGraph& kg, const std::vector<QaTask>& tasks) {
    return eval_with(m, kg, tasks, NoisyMode::None, 0);
}

QaEval noisy_baseline_qa(const QaModel& m, const KnowledgeGraph& kg, const std::vector<QaTask>& tasks,
                         NoisyMode mode, std::uint64_t seed) {
    return eval_with(m, kg, tasks, mode, seed);
}

std::string qa_to_text(QaModel& m) {
    std::ostringstream out;
    out << "kgperturb-qa v1 relations=" << m.relation.rows << " d=" << m.dim() << " hidden=" << m.hidden()
        << "\n";
    nn::write_params(out, m.params());
    return out.str();
}

QaModel qa_from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header;
    std::getline(in, header);
    std::size_t relations = 0, d = 0, hidden = 0;
    if (std::sscanf(header.c_str(), "kgperturb-qa v1 relations=%zu d=%zu hidden=%zu", &relations, &d,
                    &hidden) != 3)
        throw ParseError("QA checkpoint: bad header", 1);
    QaModel m(relations, d, hidden);
    nn::read_params(in, m.params());
    m.frozen = true;
    return m;
}

void save_qa(QaModel& m, const std::filesystem::path& path) { write_file(path, qa_to_text(m)); }

QaModel load_qa(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("QA checkpoint not found: " + path.string());
    return qa_from_text(read_file(path));
}

}  // namespace kgp
