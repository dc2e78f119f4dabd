#pragma once
// Knowledge-graph data model.
//
// A KnowledgeGraph is an immutable snapshot: a closed entity/relation
// vocabulary shared between snapshots, a triple sequence with set semantics
// and three adjacency indices (out, in, undirected) derived from it.
// Perturbations never mutate a snapshot; apply_edits returns a new one.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgp {

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class EditError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Identifiers

struct EntityId {
    std::uint32_t value = 0;
    auto operator<=>(const EntityId&) const = default;
};

struct RelationId {
    std::uint32_t value = 0;
    auto operator<=>(const RelationId&) const = default;
};

struct Triple {
    EntityId head;
    RelationId relation;
    EntityId tail;
    auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
    std::size_t operator()(const Triple& t) const noexcept {
        std::uint64_t k = (std::uint64_t{t.head.value} << 40) ^
                          (std::uint64_t{t.relation.value} << 20) ^ t.tail.value;
        k ^= k >> 33;
        k *= 0xff51afd7ed558ccdULL;
        k ^= k >> 33;
        return static_cast<std::size_t>(k);
    }
};

// Bidirectional label <-> dense id map. Ids are assigned in insertion order.
class Vocabulary {
public:
    std::uint32_t get_or_add(std::string_view label);
    // Throws LookupError for unknown labels.
    std::uint32_t id(std::string_view label) const;
    bool contains(std::string_view label) const;
    const std::string& label(std::uint32_t id) const;
    std::size_t size() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }

    bool operator==(const Vocabulary& other) const { return labels_ == other.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

struct Neighbor {
    RelationId relation;
    EntityId entity;
    auto operator<=>(const Neighbor&) const = default;
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    // Throws EditError on duplicates and LookupError on ids outside the vocabularies.
    KnowledgeGraph(std::shared_ptr<const Vocabulary> entities,
                   std::shared_ptr<const Vocabulary> relations,
                   std::vector<Triple> triples);

    // Vocabulary-only graph (no triples).
    static KnowledgeGraph empty_like(const KnowledgeGraph& kg);

    std::size_t num_entities() const { return entities_ ? entities_->size() : 0; }
    std::size_t num_relations() const { return relations_ ? relations_->size() : 0; }
    std::size_t num_triples() const { return triples_.size(); }
    bool empty() const { return triples_.empty(); }

    const std::vector<Triple>& triples() const { return triples_; }
    bool contains(const Triple& t) const { return present_.contains(t); }

    const Vocabulary& entities() const { return *entities_; }
    const Vocabulary& relations() const { return *relations_; }
    const std::shared_ptr<const Vocabulary>& entity_vocab() const { return entities_; }
    const std::shared_ptr<const Vocabulary>& relation_vocab() const { return relations_; }

    EntityId entity(std::string_view label) const { return EntityId{entities_->id(label)}; }
    RelationId relation(std::string_view label) const { return RelationId{relations_->id(label)}; }
    Triple triple(std::string_view h, std::string_view r, std::string_view t) const {
        return Triple{entity(h), relation(r), entity(t)};
    }

    // (relation, tail) pairs of edges leaving `e`, in triple-sequence order.
    const std::vector<Neighbor>& out_edges(EntityId e) const;
    // (relation, head) pairs of edges entering `e`.
    const std::vector<Neighbor>& in_edges(EntityId e) const;
    // Distinct entities sharing at least one edge with `e` (either direction), excluding `e`.
    const std::set<EntityId>& incident(EntityId e) const;

    void check_entity(EntityId e) const;
    void check_relation(RelationId r) const;

    bool same_vocabulary(const KnowledgeGraph& other) const;

    // Rebuilds all indices from the triple sequence and compares.
    bool verify_indices() const;

    // Equality by vocabulary and triple set; sequence order is ignored.
    bool operator==(const KnowledgeGraph& other) const;

private:
    friend KnowledgeGraph apply_edits(KnowledgeGraph&&, const std::vector<Triple>&,
                                      const std::vector<Triple>&);
    void rebuild_indices();

    std::shared_ptr<const Vocabulary> entities_;
    std::shared_ptr<const Vocabulary> relations_;
    std::vector<Triple> triples_;
    std::unordered_set<Triple, TripleHash> present_;
    std::vector<std::vector<Neighbor>> out_;
    std::vector<std::vector<Neighbor>> in_;
    std::vector<std::set<EntityId>> undirected_;
};

// ---------------------------------------------------------------------------
// Perturbation records

enum class PerturbMethod { RS, RR, ER, ED, RL_RR, RL_ER };

std::string_view to_string(PerturbMethod m);
// Accepts the short names above ("RS", "RL-RR", ...). Throws Error otherwise.
PerturbMethod parse_method(std::string_view name);

struct Edit {
    std::vector<Triple> removed;
    std::vector<Triple> added;
};

struct PerturbationRecord {
    PerturbMethod method = PerturbMethod::RS;
    std::vector<Edit> edits;
    std::uint64_t seed = 0;
    double scale = 0.0;
    std::size_t skipped = 0;
};

// ---------------------------------------------------------------------------
// Operations

struct LoadStats {
    std::size_t duplicates_dropped = 0;
};

// Tab-separated head/relation/tail lines; '#' lines and blank lines ignored.
KnowledgeGraph load_triples(const std::filesystem::path& path, LoadStats* stats = nullptr);
KnowledgeGraph parse_triples(std::string_view text, LoadStats* stats = nullptr);

// Canonical TSV: vocabulary declaration comments ("#@entity<TAB>label",
// "#@relation<TAB>label") in id order, then triples sorted by
// (head id, relation id, tail id), trailing newline. The loader honours the
// declarations, so isolated entities and empty graphs survive a round trip.
std::string to_tsv(const KnowledgeGraph& kg);
void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& path);

std::set<EntityId> n_hop_neighbors(const KnowledgeGraph& kg, EntityId e, int hops);

KnowledgeGraph relation_subgraph(const KnowledgeGraph& kg, RelationId r);

std::map<RelationId, std::size_t> relation_histogram(const KnowledgeGraph& kg);

// Removals are applied first, then additions. Throws EditError when a removed
// triple is absent or an added triple is already present.
KnowledgeGraph apply_edits(const KnowledgeGraph& kg, const std::vector<Triple>& removed,
                           const std::vector<Triple>& added);
// Same, reusing the storage of `kg`.
KnowledgeGraph apply_edits(KnowledgeGraph&& kg, const std::vector<Triple>& removed,
                           const std::vector<Triple>& added);

KnowledgeGraph replay(const KnowledgeGraph& original, const PerturbationRecord& record);

// Edit log text format (header + one '-'/'+' line per touched triple).
std::string to_edit_log(const KnowledgeGraph& kg, const PerturbationRecord& record);
void save_edit_log(const KnowledgeGraph& kg, const PerturbationRecord& record,
                   const std::filesystem::path& path);
PerturbationRecord parse_edit_log(std::string_view text, const KnowledgeGraph& kg);

// Multiset of unordered {head, tail} pairs, relation labels dropped.
std::multiset<std::pair<EntityId, EntityId>> unlabeled_adjacency(const KnowledgeGraph& kg);

// Multiset of directed (head, tail) pairs.
std::multiset<std::pair<EntityId, EntityId>> head_tail_pairs(const KnowledgeGraph& kg);

std::string format_triple(const KnowledgeGraph& kg, const Triple& t);

}  // namespace kgp
