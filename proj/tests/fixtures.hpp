#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgperturb/kg.hpp"
#include "kgperturb/nn.hpp"

namespace kgp::testing {

// Triangle A,B,C under r1 and the path A-D-E-F under r2.
inline constexpr const char* kTiny6 =
    "A\tr1\tB\n"
    "B\tr1\tC\n"
    "C\tr1\tA\n"
    "A\tr2\tD\n"
    "D\tr2\tE\n"
    "E\tr2\tF\n";

inline KnowledgeGraph tiny6() { return parse_triples(kTiny6); }

inline std::shared_ptr<Vocabulary> numbered_vocab(const std::string& prefix, std::size_t n) {
    auto v = std::make_shared<Vocabulary>();
    for (std::size_t i = 0; i < n; ++i) v->get_or_add(prefix + std::to_string(i));
    return v;
}

// Uniform random KG without duplicate triples; self-loops allowed when asked.
inline KnowledgeGraph random_kg(std::size_t entities, std::size_t relations, std::size_t triples,
                                std::uint64_t seed, bool self_loops = false) {
    nn::Rng rng(seed);
    std::uniform_int_distribution<std::uint32_t> ent(0, static_cast<std::uint32_t>(entities - 1));
    std::uniform_int_distribution<std::uint32_t> rel(0, static_cast<std::uint32_t>(relations - 1));
    std::set<Triple> seen;
    std::vector<Triple> out;
    for (std::size_t attempt = 0; out.size() < triples && attempt < triples * 50; ++attempt) {
        Triple t{EntityId{ent(rng)}, RelationId{rel(rng)}, EntityId{ent(rng)}};
        if (!self_loops && t.head == t.tail) continue;
        if (seen.insert(t).second) out.push_back(t);
    }
    return KnowledgeGraph(numbered_vocab("e", entities), numbered_vocab("r", relations), std::move(out));
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("kgperturb_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace kgp::testing
