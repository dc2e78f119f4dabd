#pragma once
// Synthetic desk-scale world: a genre-structured KG, user-item interactions
// and multiple-choice QA tasks, plus their file formats.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kgperturb/kg.hpp"

namespace kgp {

enum class Split { Train, Dev, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct Interaction {
    std::uint32_t user = 0;
    EntityId item;
    int label = 0;
    Split split = Split::Train;
    bool operator==(const Interaction&) const = default;
};

struct Interactions {
    std::size_t num_users = 0;
    std::vector<Interaction> rows;

    std::vector<Interaction> of(Split s) const;
    bool operator==(const Interactions&) const = default;
};

// Header "user,item,label,split"; items are entity ids.
std::string interactions_to_csv(const Interactions& in);
Interactions interactions_from_csv(std::string_view text);
void save_interactions(const Interactions& in, const std::filesystem::path& path);
Interactions load_interactions(const std::filesystem::path& path);

struct QaTask {
    std::vector<EntityId> question;
    std::vector<std::vector<EntityId>> answers;
    std::size_t correct = 0;
    bool operator==(const QaTask&) const = default;
};

// One task per line: "q|a0|a1|...|correct" with comma-separated entity ids.
std::string qa_tasks_to_text(const std::vector<QaTask>& tasks);
std::vector<QaTask> qa_tasks_from_text(std::string_view text);
void save_qa_tasks(const std::vector<QaTask>& tasks, const std::filesystem::path& path);
std::vector<QaTask> load_qa_tasks(const std::filesystem::path& path);

// Index-based 60/20/20 train/dev/test partition of a task list.
std::vector<QaTask> qa_split(const std::vector<QaTask>& tasks, Split s);

struct WorldSpec {
    std::size_t num_entities = 100;
    std::size_t num_relations = 4;
    std::size_t num_triples = 400;
    std::size_t num_users = 50;
    std::size_t num_items = 60;
    std::size_t num_interactions = 500;
    std::size_t num_qa_tasks = 100;
    std::size_t num_choices = 4;
    // Probability that an edge links two same-genre entities through the
    // genre's relation; the rest are uniform noise edges.
    double genre_signal = 0.9;
    // Items whose interactions are held out entirely into dev/test.
    double cold_item_fraction = 0.3;
    std::uint64_t seed = 0;
};

struct SyntheticWorld {
    KnowledgeGraph kg;
    Interactions interactions;
    std::vector<QaTask> tasks;
    std::vector<std::uint32_t> genre;  // per entity
};

// Throws Error on degenerate sizes (k < 2, N < k, N > |E|, too many triples).
SyntheticWorld generate_synthetic_world(const WorldSpec& spec);

}  // namespace kgp
