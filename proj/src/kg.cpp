#include "kgperturb/kg.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "kgperturb/format.hpp"

namespace kgp {

// ---------------------------------------------------------------------------
// Vocabulary

std::uint32_t Vocabulary::get_or_add(std::string_view label) {
    std::string key(label);
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(labels_.size());
    labels_.push_back(key);
    index_.emplace(std::move(key), id);
    return id;
}

std::uint32_t Vocabulary::id(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) throw LookupError("unknown label: " + std::string(label));
    return it->second;
}

bool Vocabulary::contains(std::string_view label) const {
    return index_.contains(std::string(label));
}

const std::string& Vocabulary::label(std::uint32_t id) const {
    if (id >= labels_.size()) throw LookupError("id out of range: " + std::to_string(id));
    return labels_[id];
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

KnowledgeGraph::KnowledgeGraph(std::shared_ptr<const Vocabulary> entities,
                               std::shared_ptr<const Vocabulary> relations,
                               std::vector<Triple> triples)
    : entities_(std::move(entities)), relations_(std::move(relations)),
      triples_(std::move(triples)) {
    if (!entities_ || !relations_) throw Error("knowledge graph requires vocabularies");
    present_.reserve(triples_.size() * 2);
    for (const auto& t : triples_) {
        check_entity(t.head);
        check_entity(t.tail);
        check_relation(t.relation);
        if (!present_.insert(t).second)
            throw EditError("duplicate triple " + format_triple(*this, t));
    }
    rebuild_indices();
}

KnowledgeGraph KnowledgeGraph::empty_like(const KnowledgeGraph& kg) {
    return KnowledgeGraph(kg.entities_, kg.relations_, {});
}

void KnowledgeGraph::rebuild_indices() {
    const std::size_t n = num_entities();
    out_.assign(n, {});
    in_.assign(n, {});
    undirected_.assign(n, {});
    for (const auto& t : triples_) {
        out_[t.head.value].push_back({t.relation, t.tail});
        in_[t.tail.value].push_back({t.relation, t.head});
        if (t.head != t.tail) {
            undirected_[t.head.value].insert(t.tail);
            undirected_[t.tail.value].insert(t.head);
        }
    }
}

void KnowledgeGraph::check_entity(EntityId e) const {
    if (e.value >= num_entities())
        throw LookupError("entity id out of range: " + std::to_string(e.value));
}

void KnowledgeGraph::check_relation(RelationId r) const {
    if (r.value >= num_relations())
        throw LookupError("relation id out of range: " + std::to_string(r.value));
}

const std::vector<Neighbor>& KnowledgeGraph::out_edges(EntityId e) const {
    check_entity(e);
    return out_[e.value];
}

const std::vector<Neighbor>& KnowledgeGraph::in_edges(EntityId e) const {
    check_entity(e);
    return in_[e.value];
}

const std::set<EntityId>& KnowledgeGraph::incident(EntityId e) const {
    check_entity(e);
    return undirected_[e.value];
}

bool KnowledgeGraph::same_vocabulary(const KnowledgeGraph& other) const {
    if (!entities_ || !other.entities_) return entities_ == other.entities_;
    return (entities_ == other.entities_ || *entities_ == *other.entities_) &&
           (relations_ == other.relations_ || *relations_ == *other.relations_);
}

bool KnowledgeGraph::verify_indices() const {
    KnowledgeGraph fresh;
    fresh.entities_ = entities_;
    fresh.relations_ = relations_;
    fresh.triples_ = triples_;
    fresh.rebuild_indices();
    if (present_.size() != triples_.size()) return false;
    for (const auto& t : triples_)
        if (!present_.contains(t)) return false;
    auto sorted = [](std::vector<Neighbor> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    for (std::size_t e = 0; e < num_entities(); ++e) {
        if (sorted(out_[e]) != sorted(fresh.out_[e])) return false;
        if (sorted(in_[e]) != sorted(fresh.in_[e])) return false;
        if (undirected_[e] != fresh.undirected_[e]) return false;
    }
    return true;
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& other) const {
    if (!same_vocabulary(other)) return false;
    if (triples_.size() != other.triples_.size()) return false;
    for (const auto& t : triples_)
        if (!other.present_.contains(t)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Methods

std::string_view to_string(PerturbMethod m) {
    switch (m) {
        case PerturbMethod::RS: return "RS";
        case PerturbMethod::RR: return "RR";
        case PerturbMethod::ER: return "ER";
        case PerturbMethod::ED: return "ED";
        case PerturbMethod::RL_RR: return "RL-RR";
        case PerturbMethod::RL_ER: return "RL-ER";
    }
    return "?";
}

PerturbMethod parse_method(std::string_view name) {
    for (auto m : {PerturbMethod::RS, PerturbMethod::RR, PerturbMethod::ER, PerturbMethod::ED,
                   PerturbMethod::RL_RR, PerturbMethod::RL_ER})
        if (to_string(m) == name) return m;
    throw Error("unknown perturbation method: " + std::string(name));
}

// ---------------------------------------------------------------------------
// TSV I/O

namespace {

constexpr std::string_view kEntityDecl = "#@entity\t";
constexpr std::string_view kRelationDecl = "#@relation\t";

}  // namespace

KnowledgeGraph parse_triples(std::string_view text, LoadStats* stats) {
    auto entities = std::make_shared<Vocabulary>();
    auto relations = std::make_shared<Vocabulary>();
    std::vector<Triple> triples;
    std::unordered_set<Triple, TripleHash> seen;
    std::size_t duplicates = 0;
    bool any_content = false;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (line.starts_with(kEntityDecl)) {
            entities->get_or_add(line.substr(kEntityDecl.size()));
            any_content = true;
            continue;
        }
        if (line.starts_with(kRelationDecl)) {
            relations->get_or_add(line.substr(kRelationDecl.size()));
            any_content = true;
            continue;
        }
        if (line.front() == '#') continue;

        auto fields = split(line, '\t');
        if (fields.size() != 3)
            throw ParseError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        for (auto f : fields)
            if (f.empty())
                throw ParseError("line " + std::to_string(line_no) + ": empty field", line_no);
        Triple t{EntityId{entities->get_or_add(fields[0])}, RelationId{relations->get_or_add(fields[1])},
                 EntityId{entities->get_or_add(fields[2])}};
        any_content = true;
        if (!seen.insert(t).second) {
            ++duplicates;
            continue;
        }
        triples.push_back(t);
    }
    if (!any_content) throw ParseError("no triples found (empty input)", 0);
    if (stats) stats->duplicates_dropped = duplicates;
    return KnowledgeGraph(std::move(entities), std::move(relations), std::move(triples));
}

KnowledgeGraph load_triples(const std::filesystem::path& path, LoadStats* stats) {
    if (!std::filesystem::exists(path)) throw Error("triples file not found: " + path.string());
    return parse_triples(read_file(path), stats);
}

std::string to_tsv(const KnowledgeGraph& kg) {
    std::string out;
    for (const auto& label : kg.entities().labels()) {
        out += kEntityDecl;
        out += label;
        out += '\n';
    }
    for (const auto& label : kg.relations().labels()) {
        out += kRelationDecl;
        out += label;
        out += '\n';
    }
    std::vector<Triple> sorted = kg.triples();
    std::sort(sorted.begin(), sorted.end());
    for (const auto& t : sorted) {
        out += kg.entities().label(t.head.value);
        out += '\t';
        out += kg.relations().label(t.relation.value);
        out += '\t';
        out += kg.entities().label(t.tail.value);
        out += '\n';
    }
    return out;
}

void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& path) {
    write_file(path, to_tsv(kg));
}

// ---------------------------------------------------------------------------
// Queries

std::set<EntityId> n_hop_neighbors(const KnowledgeGraph& kg, EntityId e, int hops) {
    kg.check_entity(e);
    if (hops < 1) throw Error("n_hop_neighbors requires hops >= 1");
    std::set<EntityId> visited{e};
    std::vector<EntityId> frontier{e};
    for (int h = 0; h < hops && !frontier.empty(); ++h) {
        std::vector<EntityId> next;
        for (auto v : frontier)
            for (auto n : kg.incident(v))
                if (visited.insert(n).second) next.push_back(n);
        frontier = std::move(next);
    }
    visited.erase(e);
    return visited;
}

KnowledgeGraph relation_subgraph(const KnowledgeGraph& kg, RelationId r) {
    kg.check_relation(r);
    std::vector<Triple> kept;
    for (const auto& t : kg.triples())
        if (t.relation == r) kept.push_back(t);
    return KnowledgeGraph(kg.entity_vocab(), kg.relation_vocab(), std::move(kept));
}

std::map<RelationId, std::size_t> relation_histogram(const KnowledgeGraph& kg) {
    std::map<RelationId, std::size_t> hist;
    for (const auto& t : kg.triples()) ++hist[t.relation];
    return hist;
}

// ---------------------------------------------------------------------------
// Edits

KnowledgeGraph apply_edits(const KnowledgeGraph& kg, const std::vector<Triple>& removed,
                           const std::vector<Triple>& added) {
    return apply_edits(KnowledgeGraph(kg), removed, added);
}

KnowledgeGraph apply_edits(KnowledgeGraph&& kg, const std::vector<Triple>& removed,
                           const std::vector<Triple>& added) {
    KnowledgeGraph next = std::move(kg);
    if (removed.empty() && added.empty()) return next;

    // All checks run before any mutation.
    std::unordered_set<Triple, TripleHash> to_remove;
    for (const auto& t : removed) {
        if (!next.present_.contains(t) || to_remove.contains(t))
            throw EditError("cannot remove absent triple " + format_triple(next, t));
        to_remove.insert(t);
    }
    std::unordered_set<Triple, TripleHash> to_add;
    for (const auto& t : added) {
        next.check_entity(t.head);
        next.check_entity(t.tail);
        next.check_relation(t.relation);
        if ((next.present_.contains(t) && !to_remove.contains(t)) || to_add.contains(t))
            throw EditError("cannot add duplicate triple " + format_triple(next, t));
        to_add.insert(t);
    }
    for (const auto& t : removed) next.present_.erase(t);
    for (const auto& t : added) next.present_.insert(t);

    if (!to_remove.empty()) {
        std::erase_if(next.triples_, [&](const Triple& t) { return to_remove.contains(t); });
        for (const auto& t : removed) {
            auto& outs = next.out_[t.head.value];
            outs.erase(std::find(outs.begin(), outs.end(), Neighbor{t.relation, t.tail}));
            auto& ins = next.in_[t.tail.value];
            ins.erase(std::find(ins.begin(), ins.end(), Neighbor{t.relation, t.head}));
        }
    }
    for (const auto& t : added) {
        next.triples_.push_back(t);
        next.out_[t.head.value].push_back({t.relation, t.tail});
        next.in_[t.tail.value].push_back({t.relation, t.head});
    }

    // Undirected incidence is recomputed only for endpoints of touched triples.
    std::set<EntityId> touched;
    for (const auto* list : {&removed, &added})
        for (const auto& t : *list) {
            touched.insert(t.head);
            touched.insert(t.tail);
        }
    for (auto e : touched) {
        auto& inc = next.undirected_[e.value];
        inc.clear();
        for (const auto& n : next.out_[e.value])
            if (n.entity != e) inc.insert(n.entity);
        for (const auto& n : next.in_[e.value])
            if (n.entity != e) inc.insert(n.entity);
    }
    return next;
}

KnowledgeGraph replay(const KnowledgeGraph& original, const PerturbationRecord& record) {
    KnowledgeGraph kg = original;
    for (const auto& edit : record.edits) kg = apply_edits(std::move(kg), edit.removed, edit.added);
    return kg;
}

// ---------------------------------------------------------------------------
// Edit log

std::string to_edit_log(const KnowledgeGraph& kg, const PerturbationRecord& record) {
    std::string out = "kgperturb-edits v1 method=" + std::string(to_string(record.method)) +
                      " seed=" + std::to_string(record.seed) + " scale=" + fixed9(record.scale) + "\n";
    out += "# edits=" + std::to_string(record.edits.size()) +
           " skipped=" + std::to_string(record.skipped) + "\n";
    auto line = [&](char sign, const Triple& t) {
        out += sign;
        out += '\t';
        out += kg.entities().label(t.head.value);
        out += '\t';
        out += kg.relations().label(t.relation.value);
        out += '\t';
        out += kg.entities().label(t.tail.value);
        out += '\n';
    };
    for (const auto& e : record.edits) {
        for (const auto& t : e.removed) line('-', t);
        for (const auto& t : e.added) line('+', t);
    }
    return out;
}

void save_edit_log(const KnowledgeGraph& kg, const PerturbationRecord& record,
                   const std::filesystem::path& path) {
    write_file(path, to_edit_log(kg, record));
}

PerturbationRecord parse_edit_log(std::string_view text, const KnowledgeGraph& kg) {
    PerturbationRecord rec;
    auto lines = split(text, '\n');
    if (lines.empty() || !lines[0].starts_with("kgperturb-edits v1 "))
        throw ParseError("missing edit log header", 1);
    for (auto field : split(lines[0].substr(19), ' ')) {
        auto eq = field.find('=');
        if (eq == std::string_view::npos) throw ParseError("bad header field", 1);
        auto key = field.substr(0, eq);
        auto value = field.substr(eq + 1);
        if (key == "method") rec.method = parse_method(value);
        else if (key == "seed") rec.seed = static_cast<std::uint64_t>(parse_int(value, "seed"));
        else if (key == "scale") rec.scale = parse_double(value, "scale");
        else throw ParseError("unknown header key " + std::string(key), 1);
    }
    // A '-' line following a '+' line starts a new edit; deletion logs carry
    // one removal per edit.
    Edit current;
    char last = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto line = lines[i];
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            auto pos = line.find("skipped=");
            if (pos != std::string_view::npos)
                rec.skipped = static_cast<std::size_t>(parse_int(line.substr(pos + 8), "skipped"));
            continue;
        }
        auto f = split(line, '\t');
        if (f.size() != 4 || (f[0] != "-" && f[0] != "+"))
            throw ParseError("line " + std::to_string(i + 1) + ": malformed edit line", i + 1);
        Triple t = kg.triple(f[1], f[2], f[3]);
        char sign = f[0][0];
        if (sign == '-' && (last == '+' || (last == '-' && rec.method == PerturbMethod::ED))) {
            rec.edits.push_back(std::move(current));
            current = {};
        }
        (sign == '-' ? current.removed : current.added).push_back(t);
        last = sign;
    }
    if (!current.removed.empty() || !current.added.empty()) rec.edits.push_back(std::move(current));
    return rec;
}

// ---------------------------------------------------------------------------
// Structural projections

std::multiset<std::pair<EntityId, EntityId>> unlabeled_adjacency(const KnowledgeGraph& kg) {
    std::multiset<std::pair<EntityId, EntityId>> out;
    for (const auto& t : kg.triples()) out.insert(std::minmax(t.head, t.tail));
    return out;
}

std::multiset<std::pair<EntityId, EntityId>> head_tail_pairs(const KnowledgeGraph& kg) {
    std::multiset<std::pair<EntityId, EntityId>> out;
    for (const auto& t : kg.triples()) out.insert({t.head, t.tail});
    return out;
}

std::string format_triple(const KnowledgeGraph& kg, const Triple& t) {
    auto name = [](const Vocabulary* v, std::uint32_t id) {
        if (v && id < v->size()) return v->label(id);
        return "#" + std::to_string(id);
    };
    return "(" + name(kg.entity_vocab().get(), t.head.value) + ", " +
           name(kg.relation_vocab().get(), t.relation.value) + ", " +
           name(kg.entity_vocab().get(), t.tail.value) + ")";
}

}  // namespace kgp
