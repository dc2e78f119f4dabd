#pragma once
// Command-line orchestration. Every command reads a JSON run config, applies
// --seed / --out overrides, writes the resolved config next to its outputs
// and produces byte-deterministic artifacts.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kgperturb/perturb.hpp"
#include "kgperturb/qa.hpp"
#include "kgperturb/recommender.hpp"
#include "kgperturb/rl_env.hpp"
#include "kgperturb/scorer.hpp"
#include "kgperturb/world.hpp"

namespace kgp::cli {

enum class Task { Recommender, Qa };

struct Inputs {
    std::string triples;
    std::string interactions;
    std::string qa_tasks;
    std::string scorer;
    std::string recommender;
    std::string recommender_nokg;
    std::string qa_model;
    std::string policy;
    std::string runs;  // report: directory of run subdirectories
};

struct PerturbSettings {
    std::string method = "RR";
    double scale = 1.0;
    double b = 1.0;
    PerturbOptions options;
};

struct CurveSettings {
    std::vector<std::string> methods = {"RR"};
    std::vector<double> scales = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::uint64_t> seeds = {0};
};

struct RlSettings {
    std::string variant = "RL-RR";
    bool eval_only = false;
    rl::RlTrainConfig train;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out = "out";
    Task task = Task::Recommender;
    Inputs inputs;
    WorldSpec world;
    ScorerTrainConfig scorer;
    RecTrainConfig recommender;
    QaTrainConfig qa;
    PerturbSettings perturb;
    CurveSettings curve;
    RlSettings rl;
};

// Throws Error on unknown keys or ill-typed values. Seeds of the sub-configs
// follow the global seed.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string resolved_config_json(const RunConfig& cfg);
void apply_seed(RunConfig& cfg, std::uint64_t seed);

void cmd_generate_world(const RunConfig& cfg);
void cmd_train_scorer(const RunConfig& cfg);
void cmd_train_downstream(const RunConfig& cfg);
void cmd_perturb(const RunConfig& cfg);
void cmd_curve(const RunConfig& cfg);
void cmd_rl_train(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

struct CurvePoint {
    std::string method;
    std::uint64_t seed = 0;
    double scale = 0.0;
    double ats = 0.0;
    double sc2d = 0.0;
    double sd2 = 0.0;
    double downstream = 0.0;
};

std::string curve_csv_header();
std::string curve_csv_row(const CurvePoint& p);
std::vector<CurvePoint> parse_curve_csv(std::string_view text);
// One <g class="series" data-method=...> group per method.
std::string curve_svg(const std::vector<CurvePoint>& points);

// Entry point shared by the executable and tests; returns the exit status.
int run(int argc, char** argv);

}  // namespace kgp::cli
