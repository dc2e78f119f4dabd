#pragma once
// Path-pooling multiple-choice QA scorer. Each (question, answer) pair is
// represented by the relation paths of length <= 2 linking them in the
// current KG; path encodings are mean-pooled and classified into a logit.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgperturb/kg.hpp"
#include "kgperturb/nn.hpp"
#include "kgperturb/recommender.hpp"
#include "kgperturb/world.hpp"

namespace kgp {

struct RelationPath {
    RelationId first;
    std::optional<RelationId> second;
    auto operator<=>(const RelationPath&) const = default;
};

// Undirected paths q - a and q - m - a with q in `question`, a in `answer`,
// m distinct from both endpoints. One entry per edge sequence.
std::vector<RelationPath> enumerate_paths(const KnowledgeGraph& kg, std::span<const EntityId> question,
                                          std::span<const EntityId> answer);

struct QaTrainConfig {
    std::size_t dim = 8;
    std::size_t hidden = 16;
    std::size_t epochs = 60;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
};

struct QaModel {
    nn::ParamBlock relation;  // |R| x d
    nn::Mlp path_mlp;         // 2d -> hidden -> hidden
    nn::Mlp classifier;       // hidden -> hidden -> 1
    bool frozen = false;

    QaModel() = default;
    QaModel(std::size_t relations, std::size_t dim, std::size_t hidden);

    std::size_t dim() const { return relation.cols; }
    std::size_t hidden() const { return classifier.in_width(); }
    nn::ParamList params();
};

// Path sets of every candidate of a task, extracted from one KG.
struct TaskPaths {
    std::vector<std::vector<RelationPath>> per_answer;
};
TaskPaths extract_paths(const KnowledgeGraph& kg, const QaTask& task);

// Mean-pooled graph embedding; the zero vector for an empty path set.
nn::Vec graph_embedding(const QaModel& m, std::span<const RelationPath> paths);

// Cross-entropy of the k-way softmax for one task; accumulates the gradient.
double qa_task_loss(QaModel& m, const TaskPaths& paths, std::size_t correct, bool accumulate_grad);

QaModel init_qa(const KnowledgeGraph& kg, const QaTrainConfig& cfg);
// Throws Error on an empty task list.
QaModel train_qa(const KnowledgeGraph& kg, const std::vector<QaTask>& tasks, const QaTrainConfig& cfg);

struct QaEval {
    double accuracy = 0.0;
    double mean_kl = 0.0;  // mean of -log p[correct], clamped at 1e-12
    std::vector<nn::Vec> distributions;
};

// Ties in the argmax go to the lowest candidate index.
QaEval eval_qa(const QaModel& m, const KnowledgeGraph& kg, const std::vector<QaTask>& tasks);

// random-neighborhood is not defined for QA and throws Error.
QaEval noisy_baseline_qa(const QaModel& m, const KnowledgeGraph& kg, const std::vector<QaTask>& tasks,
                         NoisyMode mode, std::uint64_t seed);

// KL(dirac at correct || p) = -log p[correct].
double dirac_kl(std::span<const double> p, std::size_t correct);

std::string qa_to_text(QaModel& m);
QaModel qa_from_text(std::string_view text);
void save_qa(QaModel& m, const std::filesystem::path& path);
QaModel load_qa(const std::filesystem::path& path);

}  // namespace kgp
