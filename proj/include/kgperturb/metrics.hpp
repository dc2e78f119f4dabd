#pragma once
// Distances between an original and a perturbed KG.

#include <string>
#include <vector>

#include "kgperturb/kg.hpp"
#include "kgperturb/scorer.hpp"

namespace kgp {

struct MetricReport {
    double ats = 0.0;
    double sc2d = 0.0;
    double sd2 = 0.0;
    double b = 1.0;
};

struct ClusteringVector {
    std::vector<double> values;
};

struct DegreeVector {
    std::vector<double> values;
};

// Mean plausibility over the triples of `kg`. Throws Error on an empty graph.
double ats(const ScorerParams& scorer, const KnowledgeGraph& kg);

// Local clustering coefficient of every entity on the undirected simple
// projection (self-loops and parallel edges collapse).
ClusteringVector local_clustering(const KnowledgeGraph& kg);
// Undirected simple-projection degree of every entity.
DegreeVector undirected_degree(const KnowledgeGraph& kg);

// Both averaged over relation-restricted subgraphs.
ClusteringVector average_clustering(const KnowledgeGraph& kg);
DegreeVector average_degree(const KnowledgeGraph& kg);

// 1 / (||c_o - c_p|| + b). Throws Error on vocabulary mismatch or b <= 0.
double sc2d(const KnowledgeGraph& original, const KnowledgeGraph& perturbed, double b = 1.0);
// 1 / (||d_o - d_p|| + b).
double sd2(const KnowledgeGraph& original, const KnowledgeGraph& perturbed, double b = 1.0);

MetricReport compute_metrics(const ScorerParams& scorer, const KnowledgeGraph& original,
                             const KnowledgeGraph& perturbed, double b = 1.0);

// "ats,sc2d,sd2,b" header and a 9-digit row.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricReport& report);
std::string metrics_csv(const MetricReport& report);

}  // namespace kgp
