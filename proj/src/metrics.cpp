#include "kgperturb/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "kgperturb/format.hpp"

namespace kgp {

namespace {

// Sorted, deduplicated neighbour lists of the undirected simple projection.
std::vector<std::vector<std::uint32_t>> simple_adjacency(const KnowledgeGraph& kg,
                                                         const RelationId* only) {
    std::vector<std::vector<std::uint32_t>> adj(kg.num_entities());
    for (const auto& t : kg.triples()) {
        if (only && t.relation != *only) continue;
        if (t.head == t.tail) continue;
        adj[t.head.value].push_back(t.tail.value);
        adj[t.tail.value].push_back(t.head.value);
    }
    for (auto& list : adj) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return adj;
}

std::vector<double> clustering_of(const std::vector<std::vector<std::uint32_t>>& adj) {
    std::vector<double> out(adj.size(), 0.0);
    for (std::size_t v = 0; v < adj.size(); ++v) {
        const auto& nb = adj[v];
        const std::size_t deg = nb.size();
        if (deg < 2) continue;
        std::size_t links = 0;
        for (std::size_t i = 0; i < deg; ++i) {
            const auto& ni = adj[nb[i]];
            for (std::size_t j = i + 1; j < deg; ++j)
                if (std::binary_search(ni.begin(), ni.end(), nb[j])) ++links;
        }
        out[v] = 2.0 * static_cast<double>(links) / static_cast<double>(deg * (deg - 1));
    }
    return out;
}

void check_pair(const KnowledgeGraph& a, const KnowledgeGraph& b, double smoothing) {
    if (!a.same_vocabulary(b)) throw Error("metric requires graphs over the same vocabulary");
    if (!(smoothing > 0.0)) throw Error("smoothing constant b must be positive");
}

double l2_distance(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
}

}  // namespace

double ats(const ScorerParams& scorer, const KnowledgeGraph& kg) {
    if (kg.empty()) throw Error("ATS is undefined for a graph with zero triples");
    double sum = 0.0;
    for (const auto& t : kg.triples()) sum += score_triple(scorer, t);
    return sum / static_cast<double>(kg.num_triples());
}

ClusteringVector local_clustering(const KnowledgeGraph& kg) {
    return {clustering_of(simple_adjacency(kg, nullptr))};
}

DegreeVector undirected_degree(const KnowledgeGraph& kg) {
    auto adj = simple_adjacency(kg, nullptr);
    DegreeVector d{std::vector<double>(adj.size())};
    for (std::size_t v = 0; v < adj.size(); ++v) d.values[v] = static_cast<double>(adj[v].size());
    return d;
}

ClusteringVector average_clustering(const KnowledgeGraph& kg) {
    ClusteringVector c{std::vector<double>(kg.num_entities(), 0.0)};
    if (kg.num_relations() == 0) return c;
    for (std::uint32_t r = 0; r < kg.num_relations(); ++r) {
        RelationId rel{r};
        auto cr = clustering_of(simple_adjacency(kg, &rel));
        for (std::size_t v = 0; v < cr.size(); ++v) c.values[v] += cr[v];
    }
    for (auto& x : c.values) x /= static_cast<double>(kg.num_relations());
    return c;
}

DegreeVector average_degree(const KnowledgeGraph& kg) {
    DegreeVector d{std::vector<double>(kg.num_entities(), 0.0)};
    if (kg.num_relations() == 0) return d;
    for (std::uint32_t r = 0; r < kg.num_relations(); ++r) {
        RelationId rel{r};
        auto adj = simple_adjacency(kg, &rel);
        for (std::size_t v = 0; v < adj.size(); ++v) d.values[v] += static_cast<double>(adj[v].size());
    }
    for (auto& x : d.values) x /= static_cast<double>(kg.num_relations());
    return d;
}

double sc2d(const KnowledgeGraph& original, const KnowledgeGraph& perturbed, double b) {
    check_pair(original, perturbed, b);
    return 1.0 / (l2_distance(average_clustering(original).values,
                              average_clustering(perturbed).values) + b);
}

double sd2(const KnowledgeGraph& original, const KnowledgeGraph& perturbed, double b) {
    check_pair(original, perturbed, b);
    return 1.0 / (l2_distance(average_degree(original).values, average_degree(perturbed).values) + b);
}

MetricReport compute_metrics(const ScorerParams& scorer, const KnowledgeGraph& original,
                             const KnowledgeGraph& perturbed, double b) {
    MetricReport m;
    m.ats = ats(scorer, perturbed);
    m.sc2d = sc2d(original, perturbed, b);
    m.sd2 = sd2(original, perturbed, b);
    m.b = b;
    return m;
}

std::string metrics_csv_header() { return "ats,sc2d,sd2,b"; }

std::string metrics_csv_row(const MetricReport& r) {
    return fixed9(r.ats) + "," + fixed9(r.sc2d) + "," + fixed9(r.sd2) + "," + fixed9(r.b);
}

std::string metrics_csv(const MetricReport& r) {
    return metrics_csv_header() + "\n" + metrics_csv_row(r) + "\n";
}

}  // namespace kgp
