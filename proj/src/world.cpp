#include "kgperturb/world.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "kgperturb/format.hpp"

namespace kgp {

std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Dev: return "dev";
        case Split::Test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "dev") return Split::Dev;
    if (s == "test") return Split::Test;
    throw Error("unknown split '" + std::string(s) + "'");
}

std::vector<Interaction> Interactions::of(Split s) const {
    std::vector<Interaction> out;
    for (const auto& r : rows)
        if (r.split == s) out.push_back(r);
    return out;
}

std::string interactions_to_csv(const Interactions& in) {
    std::string out = "user,item,label,split\n";
    for (const auto& r : in.rows)
        out += std::to_string(r.user) + "," + std::to_string(r.item.value) + "," +
               std::to_string(r.label) + "," + std::string(to_string(r.split)) + "\n";
    return out;
}

Interactions interactions_from_csv(std::string_view text) {
    Interactions in;
    auto lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]) != "user,item,label,split")
        throw ParseError("interactions: expected header user,item,label,split", 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto line = trim(lines[i]);
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 4) throw ParseError("interactions: expected 4 fields", i + 1);
        Interaction r;
        r.user = static_cast<std::uint32_t>(parse_int(f[0], "user"));
        r.item = EntityId{static_cast<std::uint32_t>(parse_int(f[1], "item"))};
        r.label = static_cast<int>(parse_int(f[2], "label"));
        if (r.label != 0 && r.label != 1) throw ParseError("interactions: label must be 0 or 1", i + 1);
        r.split = parse_split(trim(f[3]));
        in.num_users = std::max<std::size_t>(in.num_users, r.user + 1);
        in.rows.push_back(r);
    }
    return in;
}

void save_interactions(const Interactions& in, const std::filesystem::path& path) {
    write_file(path, interactions_to_csv(in));
}

Interactions load_interactions(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("interactions file not found: " + path.string());
    return interactions_from_csv(read_file(path));
}

std::string qa_tasks_to_text(const std::vector<QaTask>& tasks) {
    auto ids = [](const std::vector<EntityId>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(v[i].value);
        }
        return s;
    };
    std::string out;
    for (const auto& t : tasks) {
        out += ids(t.question);
        for (const auto& a : t.answers) out += "|" + ids(a);
        out += "|" + std::to_string(t.correct) + "\n";
    }
    return out;
}

std::vector<QaTask> qa_tasks_from_text(std::string_view text) {
    std::vector<QaTask> tasks;
    auto lines = split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto line = trim(lines[i]);
        if (line.empty()) continue;
        auto fields = split(line, '|');
        if (fields.size() < 4) throw ParseError("qa tasks: need question, >= 2 answers and index", i + 1);
        auto parse_set = [&](std::string_view f) {
            std::vector<EntityId> v;
            for (auto x : split(f, ','))
                v.push_back(EntityId{static_cast<std::uint32_t>(parse_int(x, "entity id"))});
            return v;
        };
        QaTask t;
        t.question = parse_set(fields[0]);
        for (std::size_t k = 1; k + 1 < fields.size(); ++k) t.answers.push_back(parse_set(fields[k]));
        long long c = parse_int(fields.back(), "correct index");
        if (c < 0 || static_cast<std::size_t>(c) >= t.answers.size())
            throw ParseError("qa tasks: correct index out of range", i + 1);
        t.correct = static_cast<std::size_t>(c);
        tasks.push_back(std::move(t));
    }
    return tasks;
}

void save_qa_tasks(const std::vector<QaTask>& tasks, const std::filesystem::path& path) {
    write_file(path, qa_tasks_to_text(tasks));
}

std::vector<QaTask> load_qa_tasks(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("qa tasks file not found: " + path.string());
    return qa_tasks_from_text(read_file(path));
}

std::vector<QaTask> qa_split(const std::vector<QaTask>& tasks, Split s) {
    const std::size_t n = tasks.size();
    const std::size_t train_end = n * 6 / 10;
    const std::size_t dev_end = n * 8 / 10;
    std::size_t lo = 0, hi = train_end;
    if (s == Split::Dev) lo = train_end, hi = dev_end;
    if (s == Split::Test) lo = dev_end, hi = n;
    return {tasks.begin() + static_cast<std::ptrdiff_t>(lo), tasks.begin() + static_cast<std::ptrdiff_t>(hi)};
}

// ---------------------------------------------------------------------------
// Generator

namespace {

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
}

std::set<EntityId> within_two_hops(const KnowledgeGraph& kg, EntityId q, const RelationId* only) {
    std::set<EntityId> first, out;
    auto visit = [&](EntityId e, auto&& fn) {
        for (const auto& n : kg.out_edges(e))
            if (!only || n.relation == *only) fn(n.entity);
        for (const auto& n : kg.in_edges(e))
            if (!only || n.relation == *only) fn(n.entity);
    };
    visit(q, [&](EntityId m) {
        if (m != q) first.insert(m);
    });
    out = first;
    for (auto m : first)
        visit(m, [&](EntityId a) {
            if (a != q) out.insert(a);
        });
    return out;
}

}  // namespace

SyntheticWorld generate_synthetic_world(const WorldSpec& spec) {
    const std::size_t ne = spec.num_entities, nr = spec.num_relations, k = spec.num_choices;
    if (ne < 2 || nr < 1 || spec.num_triples < 1 || spec.num_users < 1 || spec.num_items < 1)
        throw Error("world sizes must be positive");
    if (k < 2) throw Error("QA tasks need at least 2 answer choices");
    if (spec.num_items < k) throw Error("number of items must be at least the number of choices");
    if (spec.num_items > ne) throw Error("items must be a subset of the entities");
    if (spec.num_triples > ne * (ne - 1) * nr / 2) throw Error("too many triples for the vocabulary");
    if (spec.genre_signal < 0.0 || spec.genre_signal > 1.0) throw Error("genre_signal must lie in [0, 1]");

    std::mt19937_64 rng(spec.seed);
    SyntheticWorld w;

    auto ent_vocab = std::make_shared<Vocabulary>();
    auto rel_vocab = std::make_shared<Vocabulary>();
    for (std::size_t i = 0; i < ne; ++i) ent_vocab->get_or_add("e" + std::to_string(i));
    for (std::size_t r = 0; r < nr; ++r) rel_vocab->get_or_add("r" + std::to_string(r));

    // Balanced genres over a random permutation of entities; genre g uses relation g.
    const std::size_t genres = nr;
    std::vector<std::uint32_t> perm(ne);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    w.genre.assign(ne, 0);
    for (std::size_t i = 0; i < ne; ++i) w.genre[perm[i]] = static_cast<std::uint32_t>(i % genres);
    std::vector<std::vector<std::uint32_t>> members(genres);
    for (std::uint32_t e = 0; e < ne; ++e) members[w.genre[e]].push_back(e);

    std::vector<Triple> triples;
    std::unordered_set<Triple, TripleHash> seen;
    std::bernoulli_distribution signal(spec.genre_signal);
    std::uniform_int_distribution<std::uint32_t> any_ent(0, static_cast<std::uint32_t>(ne - 1));
    std::uniform_int_distribution<std::uint32_t> any_rel(0, static_cast<std::uint32_t>(nr - 1));
    std::size_t attempts = 0;
    while (triples.size() < spec.num_triples) {
        if (++attempts > 1000 * spec.num_triples) throw Error("could not place the requested number of triples");
        Triple t;
        t.head = EntityId{any_ent(rng)};
        if (signal(rng) && members[w.genre[t.head.value]].size() > 1) {
            t.relation = RelationId{w.genre[t.head.value]};
            t.tail = EntityId{pick(members[w.genre[t.head.value]], rng)};
        } else {
            t.relation = RelationId{any_rel(rng)};
            t.tail = EntityId{any_ent(rng)};
        }
        if (t.head == t.tail || seen.contains(t)) continue;
        seen.insert(t);
        triples.push_back(t);
    }
    w.kg = KnowledgeGraph(ent_vocab, rel_vocab, std::move(triples));

    // Interactions: items are entities [0, N). Users like one genre.
    const std::size_t ni = spec.num_items;
    if (spec.num_interactions > spec.num_users * ni) throw Error("too many interactions requested");
    std::vector<std::vector<std::uint32_t>> liked(genres), other(genres);
    for (std::uint32_t v = 0; v < ni; ++v)
        for (std::size_t g = 0; g < genres; ++g) (w.genre[v] == g ? liked[g] : other[g]).push_back(v);
    std::vector<std::uint32_t> item_order(ni);
    std::iota(item_order.begin(), item_order.end(), 0u);
    std::shuffle(item_order.begin(), item_order.end(), rng);
    const auto cold_count = static_cast<std::size_t>(spec.cold_item_fraction * static_cast<double>(ni) + 0.5);
    std::vector<bool> cold(ni, false);
    for (std::size_t i = 0; i < cold_count && i < ni; ++i) cold[item_order[i]] = true;

    std::uniform_int_distribution<std::uint32_t> any_user(0, static_cast<std::uint32_t>(spec.num_users - 1));
    std::uniform_int_distribution<std::uint32_t> any_genre(0, static_cast<std::uint32_t>(genres - 1));
    std::vector<std::uint32_t> preference(spec.num_users);
    for (auto& p : preference) p = any_genre(rng);
    std::bernoulli_distribution coin(0.5);
    std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
    w.interactions.num_users = spec.num_users;
    attempts = 0;
    while (w.interactions.rows.size() < spec.num_interactions) {
        if (++attempts > 1000 * spec.num_interactions) throw Error("could not place the requested interactions");
        std::uint32_t u = any_user(rng);
        const bool positive = coin(rng);
        const auto& pool = positive ? liked[preference[u]] : other[preference[u]];
        if (pool.empty()) continue;
        std::uint32_t v = pick(pool, rng);
        if (!pairs.insert({u, v}).second) continue;
        Split s = Split::Train;
        if (cold[v]) s = coin(rng) ? Split::Dev : Split::Test;
        w.interactions.rows.push_back({u, EntityId{v}, positive ? 1 : 0, s});
    }

    // QA: the correct answer shares the question's genre and is reachable by
    // at most two edges of the genre relation; distractors come from other
    // genres, preferring entities reachable within two hops.
    std::vector<std::uint32_t> qa_candidates;
    std::vector<std::set<EntityId>> genre_reach(ne);
    for (std::uint32_t q = 0; q < ne; ++q) {
        RelationId r{w.genre[q]};
        for (auto a : within_two_hops(w.kg, EntityId{q}, &r))
            if (w.genre[a.value] == w.genre[q]) genre_reach[q].insert(a);
        if (!genre_reach[q].empty()) qa_candidates.push_back(q);
    }
    if (qa_candidates.empty() && spec.num_qa_tasks > 0) throw Error("no entity admits a QA task");
    std::uniform_int_distribution<std::size_t> any_index(0, k - 1);
    for (std::size_t n = 0; n < spec.num_qa_tasks; ++n) {
        const std::uint32_t q = pick(qa_candidates, rng);
        std::vector<EntityId> reach(genre_reach[q].begin(), genre_reach[q].end());
        const EntityId correct = pick(reach, rng);
        std::vector<EntityId> near_pool, far_pool;
        auto near = within_two_hops(w.kg, EntityId{q}, nullptr);
        for (std::uint32_t e = 0; e < ne; ++e) {
            if (w.genre[e] == w.genre[q] || e == q) continue;
            (near.contains(EntityId{e}) ? near_pool : far_pool).push_back(EntityId{e});
        }
        std::shuffle(near_pool.begin(), near_pool.end(), rng);
        std::shuffle(far_pool.begin(), far_pool.end(), rng);
        near_pool.insert(near_pool.end(), far_pool.begin(), far_pool.end());
        if (near_pool.size() < k - 1) throw Error("not enough distractor entities");
        QaTask t;
        t.question = {EntityId{q}};
        t.correct = any_index(rng);
        std::size_t next = 0;
        for (std::size_t i = 0; i < k; ++i)
            t.answers.push_back({i == t.correct ? correct : near_pool[next++]});
        w.tasks.push_back(std::move(t));
    }
    return w;
}

}  // namespace kgp
