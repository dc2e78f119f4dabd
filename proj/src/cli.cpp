#include "kgperturb/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kgperturb/format.hpp"
#include "kgperturb/log.hpp"
#include "kgperturb/metrics.hpp"

namespace kgp::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw Error("config: '" + where + "' must be an object");
    for (const auto& [key, _] : obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw Error("config: unknown key '" + (where.empty() ? "" : where + ".") + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(std::string("config: bad value for '") + key + "'");
    }
}

std::string_view task_name(Task t) { return t == Task::Qa ? "qa" : "recommender"; }

Task parse_task(std::string_view s) {
    if (s == "recommender") return Task::Recommender;
    if (s == "qa") return Task::Qa;
    throw Error("config: task must be 'recommender' or 'qa'");
}

}  // namespace

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.world.seed = seed;
    cfg.scorer.seed = seed;
    cfg.recommender.seed = seed;
    cfg.qa.seed = seed;
    cfg.rl.train.seed = seed;
}

RunConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("config: malformed JSON: ") + e.what());
    }
    RunConfig cfg;
    check_keys(j, "", {"seed", "out", "task", "inputs", "world", "scorer", "recommender", "qa", "perturb", "curve",
                       "rl"});
    read(j, "seed", cfg.seed);
    read(j, "out", cfg.out);
    if (j.contains("task")) cfg.task = parse_task(j.at("task").get<std::string>());

    if (j.contains("inputs")) {
        const auto& o = j.at("inputs");
        check_keys(o, "inputs", {"triples", "interactions", "qa_tasks", "scorer", "recommender", "recommender_nokg",
                                 "qa_model", "policy", "runs"});
        auto& in = cfg.inputs;
        read(o, "triples", in.triples);
        read(o, "interactions", in.interactions);
        read(o, "qa_tasks", in.qa_tasks);
        read(o, "scorer", in.scorer);
        read(o, "recommender", in.recommender);
        read(o, "recommender_nokg", in.recommender_nokg);
        read(o, "qa_model", in.qa_model);
        read(o, "policy", in.policy);
        read(o, "runs", in.runs);
    }
    if (j.contains("world")) {
        const auto& o = j.at("world");
        check_keys(o, "world", {"num_entities", "num_relations", "num_triples", "num_users", "num_items",
                                "num_interactions", "num_qa_tasks", "num_choices", "genre_signal",
                                "cold_item_fraction"});
        auto& w = cfg.world;
        read(o, "num_entities", w.num_entities);
        read(o, "num_relations", w.num_relations);
        read(o, "num_triples", w.num_triples);
        read(o, "num_users", w.num_users);
        read(o, "num_items", w.num_items);
        read(o, "num_interactions", w.num_interactions);
        read(o, "num_qa_tasks", w.num_qa_tasks);
        read(o, "num_choices", w.num_choices);
        read(o, "genre_signal", w.genre_signal);
        read(o, "cold_item_fraction", w.cold_item_fraction);
    }
    if (j.contains("scorer")) {
        const auto& o = j.at("scorer");
        check_keys(o, "scorer", {"dim", "epochs", "learning_rate", "negatives", "batch_size"});
        read(o, "dim", cfg.scorer.dim);
        read(o, "epochs", cfg.scorer.epochs);
        read(o, "learning_rate", cfg.scorer.learning_rate);
        read(o, "negatives", cfg.scorer.negatives);
        read(o, "batch_size", cfg.scorer.batch_size);
    }
    if (j.contains("recommender")) {
        const auto& o = j.at("recommender");
        check_keys(o, "recommender", {"dim", "hops", "epochs", "learning_rate", "l2", "batch_size",
                                      "train_fraction", "init_scale"});
        auto& r = cfg.recommender;
        read(o, "dim", r.dim);
        read(o, "hops", r.hops);
        read(o, "epochs", r.epochs);
        read(o, "learning_rate", r.learning_rate);
        read(o, "l2", r.l2);
        read(o, "batch_size", r.batch_size);
        read(o, "train_fraction", r.train_fraction);
        read(o, "init_scale", r.init_scale);
    }
    if (j.contains("qa")) {
        const auto& o = j.at("qa");
        check_keys(o, "qa", {"dim", "hidden", "epochs", "learning_rate"});
        read(o, "dim", cfg.qa.dim);
        read(o, "hidden", cfg.qa.hidden);
        read(o, "epochs", cfg.qa.epochs);
        read(o, "learning_rate", cfg.qa.learning_rate);
    }
    if (j.contains("perturb")) {
        const auto& o = j.at("perturb");
        check_keys(o, "perturb", {"method", "scale", "b", "max_retries", "head_only_incidence"});
        auto& p = cfg.perturb;
        read(o, "method", p.method);
        read(o, "scale", p.scale);
        read(o, "b", p.b);
        read(o, "max_retries", p.options.max_retries);
        read(o, "head_only_incidence", p.options.head_only_incidence);
        parse_method(p.method);
    }
    if (j.contains("curve")) {
        const auto& o = j.at("curve");
        check_keys(o, "curve", {"methods", "scales", "seeds"});
        read(o, "methods", cfg.curve.methods);
        read(o, "scales", cfg.curve.scales);
        read(o, "seeds", cfg.curve.seeds);
        for (const auto& m : cfg.curve.methods) parse_method(m);
    }
    if (j.contains("rl")) {
        const auto& o = j.at("rl");
        check_keys(o, "rl", {"variant", "eval_only", "episodes", "steps_per_episode", "scale", "reward_period",
                             "top_k", "gamma", "eps_start", "eps_end", "eps_decay_steps", "learning_rate",
                             "target_sync", "shuffle_recompute", "hidden", "head", "replay_capacity", "batch_size",
                             "reward_target", "reward_mode", "er_neighbor_variant", "untouched_only",
                             "max_retries"});
        auto& r = cfg.rl;
        auto& t = r.train;
        read(o, "variant", r.variant);
        rl::parse_variant(r.variant);
        read(o, "eval_only", r.eval_only);
        read(o, "episodes", t.episodes);
        read(o, "steps_per_episode", t.steps_per_episode);
        read(o, "scale", t.scale);
        read(o, "reward_period", t.reward_period);
        read(o, "top_k", t.top_k);
        read(o, "gamma", t.gamma);
        read(o, "eps_start", t.eps_start);
        read(o, "eps_end", t.eps_end);
        read(o, "eps_decay_steps", t.eps_decay_steps);
        read(o, "learning_rate", t.learning_rate);
        read(o, "target_sync", t.target_sync);
        read(o, "shuffle_recompute", t.shuffle_recompute);
        read(o, "hidden", t.hidden);
        read(o, "head", t.head);
        read(o, "replay_capacity", t.replay_capacity);
        read(o, "batch_size", t.batch_size);
        read(o, "reward_target", t.reward_target);
        if (o.contains("reward_mode")) t.reward_mode = rl::parse_reward_mode(o.at("reward_mode").get<std::string>());
        read(o, "er_neighbor_variant", t.er_neighbor_variant);
        read(o, "untouched_only", t.untouched_only);
        read(o, "max_retries", t.max_retries);
    }
    apply_seed(cfg, cfg.seed);
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw Error("config file not found: " + path.string());
    return parse_config(read_file(path));
}

std::string resolved_config_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["task"] = std::string(task_name(c.task));
    j["inputs"] = {{"triples", c.inputs.triples},
                   {"interactions", c.inputs.interactions},
                   {"qa_tasks", c.inputs.qa_tasks},
                   {"scorer", c.inputs.scorer},
                   {"recommender", c.inputs.recommender},
                   {"recommender_nokg", c.inputs.recommender_nokg},
                   {"qa_model", c.inputs.qa_model},
                   {"policy", c.inputs.policy},
                   {"runs", c.inputs.runs}};
    const auto& w = c.world;
    j["world"] = {{"num_entities", w.num_entities},         {"num_relations", w.num_relations},
                  {"num_triples", w.num_triples},           {"num_users", w.num_users},
                  {"num_items", w.num_items},               {"num_interactions", w.num_interactions},
                  {"num_qa_tasks", w.num_qa_tasks},         {"num_choices", w.num_choices},
                  {"genre_signal", w.genre_signal},         {"cold_item_fraction", w.cold_item_fraction}};
    j["scorer"] = {{"dim", c.scorer.dim},
                   {"epochs", c.scorer.epochs},
                   {"learning_rate", c.scorer.learning_rate},
                   {"negatives", c.scorer.negatives},
                   {"batch_size", c.scorer.batch_size}};
    const auto& r = c.recommender;
    j["recommender"] = {{"dim", r.dim},
                        {"hops", r.hops},
                        {"epochs", r.epochs},
                        {"learning_rate", r.learning_rate},
                        {"l2", r.l2},
                        {"batch_size", r.batch_size},
                        {"train_fraction", r.train_fraction},
                        {"init_scale", r.init_scale}};
    j["qa"] = {{"dim", c.qa.dim}, {"hidden", c.qa.hidden}, {"epochs", c.qa.epochs}, {"learning_rate", c.qa.learning_rate}};
    j["perturb"] = {{"method", c.perturb.method},
                    {"scale", c.perturb.scale},
                    {"b", c.perturb.b},
                    {"max_retries", c.perturb.options.max_retries},
                    {"head_only_incidence", c.perturb.options.head_only_incidence}};
    j["curve"] = {{"methods", c.curve.methods}, {"scales", c.curve.scales}, {"seeds", c.curve.seeds}};
    const auto& t = c.rl.train;
    j["rl"] = {{"variant", c.rl.variant},
               {"eval_only", c.rl.eval_only},
               {"episodes", t.episodes},
               {"steps_per_episode", t.steps_per_episode},
               {"scale", t.scale},
               {"reward_period", t.reward_period},
               {"top_k", t.top_k},
               {"gamma", t.gamma},
               {"eps_start", t.eps_start},
               {"eps_end", t.eps_end},
               {"eps_decay_steps", t.eps_decay_steps},
               {"learning_rate", t.learning_rate},
               {"target_sync", t.target_sync},
               {"shuffle_recompute", t.shuffle_recompute},
               {"hidden", t.hidden},
               {"head", t.head},
               {"replay_capacity", t.replay_capacity},
               {"batch_size", t.batch_size},
               {"reward_target", t.reward_target},
               {"reward_mode", std::string(rl::to_string(t.reward_mode))},
               {"er_neighbor_variant", t.er_neighbor_variant},
               {"untouched_only", t.untouched_only},
               {"max_retries", t.max_retries}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

const std::string& require(const std::string& path, const char* what) {
    if (path.empty()) throw Error(std::string("missing input: no ") + what + " path configured");
    if (!fs::exists(path)) throw Error(std::string("missing input: ") + what + " file not found: " + path);
    return path;
}

fs::path out_dir(const RunConfig& cfg) { return fs::path(cfg.out); }

void write_resolved(const RunConfig& cfg) { write_file(out_dir(cfg) / "resolved_config.json", resolved_config_json(cfg)); }

KnowledgeGraph load_kg(const RunConfig& cfg) {
    LoadStats stats;
    auto kg = load_triples(require(cfg.inputs.triples, "triples"), &stats);
    if (stats.duplicates_dropped > 0)
        log::warn("dropped " + std::to_string(stats.duplicates_dropped) + " duplicate triples");
    return kg;
}

std::optional<ScorerParams> maybe_scorer(const RunConfig& cfg) {
    if (cfg.inputs.scorer.empty()) return std::nullopt;
    return load_scorer(require(cfg.inputs.scorer, "scorer checkpoint"));
}

// Frozen downstream evaluator for the configured task.
struct Downstream {
    Task task = Task::Recommender;
    std::optional<RecModel> rec;
    std::optional<RecModel> rec_nokg;
    std::optional<QaModel> qa;
    Interactions interactions;
    std::vector<QaTask> tasks;

    static std::optional<Downstream> load(const RunConfig& cfg, bool required) {
        Downstream d;
        d.task = cfg.task;
        if (cfg.task == Task::Recommender) {
            if (cfg.inputs.recommender.empty() && !required) return std::nullopt;
            d.rec = load_recommender(require(cfg.inputs.recommender, "recommender checkpoint"));
            d.interactions = load_interactions(require(cfg.inputs.interactions, "interactions"));
            if (!cfg.inputs.recommender_nokg.empty())
                d.rec_nokg = load_recommender(require(cfg.inputs.recommender_nokg, "recommender_nokg checkpoint"));
        } else {
            if (cfg.inputs.qa_model.empty() && !required) return std::nullopt;
            d.qa = load_qa(require(cfg.inputs.qa_model, "QA checkpoint"));
            d.tasks = load_qa_tasks(require(cfg.inputs.qa_tasks, "QA tasks"));
        }
        return d;
    }

    std::string metric() const { return task == Task::Recommender ? "test_auc" : "test_accuracy"; }

    double score(const KnowledgeGraph& kg) const {
        if (task == Task::Recommender) return eval_auc(*rec, kg, interactions, Split::Test);
        return eval_qa(*qa, kg, qa_split(tasks, Split::Test)).accuracy;
    }

    // The model evaluated without graph-side information.
    double score_without_kg(const KnowledgeGraph& kg) const {
        if (task == Task::Recommender) {
            if (rec_nokg) return eval_auc(*rec_nokg, kg, interactions, Split::Test);
            return noisy_baseline_auc(*rec, kg, interactions, Split::Test, NoisyMode::ZeroGraphEmb, 0);
        }
        return noisy_baseline_qa(*qa, kg, qa_split(tasks, Split::Test), NoisyMode::ZeroGraphEmb, 0).accuracy;
    }

    // Reward statistic on the dev split.
    rl::Evaluator evaluator(rl::RewardMode rec_mode) const {
        if (task == Task::Recommender)
            return {rec_mode, [this](const KnowledgeGraph& g) { return eval_auc(*rec, g, interactions, Split::Dev); }};
        auto dev = std::make_shared<std::vector<QaTask>>(qa_split(tasks, Split::Dev));
        return {rl::RewardMode::KlDecrease, [this, dev](const KnowledgeGraph& g) { return eval_qa(*qa, g, *dev).mean_kl; }};
    }
};

std::string downstream_csv(Task task, const std::string& metric, double value) {
    return "task,metric,value\n" + std::string(task_name(task)) + "," + metric + "," + fixed9(value) + "\n";
}

std::string metrics_csv_maybe(const std::optional<ScorerParams>& scorer, const KnowledgeGraph& original,
                              const KnowledgeGraph& perturbed, double b) {
    const std::string ats_cell = scorer && !perturbed.empty() ? fixed9(ats(*scorer, perturbed)) : "NA";
    return metrics_csv_header() + "\n" + ats_cell + "," + fixed9(sc2d(original, perturbed, b)) + "," +
           fixed9(sd2(original, perturbed, b)) + "," + fixed9(b) + "\n";
}

bool is_rl(PerturbMethod m) { return m == PerturbMethod::RL_RR || m == PerturbMethod::RL_ER; }

rl::Variant variant_of(PerturbMethod m) { return m == PerturbMethod::RL_RR ? rl::Variant::RR : rl::Variant::ER; }

// Perturbation for one (method, scale, seed). RL methods train a policy
// unless `policy` is given.
std::pair<KnowledgeGraph, PerturbationRecord> perturb_once(const RunConfig& cfg, const KnowledgeGraph& kg,
                                                           PerturbMethod method, double scale,
                                                           std::uint64_t seed,
                                                           const std::optional<ScorerParams>& scorer,
                                                           const std::optional<Downstream>& down,
                                                           const rl::DqnPolicy* policy) {
    if (!is_rl(method))
        return perturb_scale(kg, to_heuristic(method), scale, scorer ? &*scorer : nullptr, seed,
                             cfg.perturb.options);
    if (!scorer) throw Error("RL perturbation requires a scorer checkpoint");
    rl::RlTrainConfig rc = cfg.rl.train;
    rc.scale = scale;
    rc.seed = seed;
    if (policy) return rl::run_greedy(*policy, kg, *scorer, rc);
    if (!down) throw Error("RL training requires a frozen downstream model");
    auto res = rl::train_policy(kg, down->evaluator(rc.reward_mode), *scorer, variant_of(method), rc);
    return {std::move(res.kg), std::move(res.record)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

void cmd_generate_world(const RunConfig& cfg) {
    auto w = generate_synthetic_world(cfg.world);
    const auto dir = out_dir(cfg);
    save_triples(w.kg, dir / "kg.tsv");
    save_interactions(w.interactions, dir / "interactions.csv");
    save_qa_tasks(w.tasks, dir / "qa_tasks.txt");
    write_resolved(cfg);
}

void cmd_train_scorer(const RunConfig& cfg) {
    auto kg = load_kg(cfg);
    auto s = train_scorer(kg, cfg.scorer);
    save_scorer(s, out_dir(cfg) / "scorer.ckpt");
    write_file(out_dir(cfg) / "scorer_ats.csv", "ats\n" + fixed9(ats(s, kg)) + "\n");
    write_resolved(cfg);
}

void cmd_train_downstream(const RunConfig& cfg) {
    auto kg = load_kg(cfg);
    const auto dir = out_dir(cfg);
    std::string csv = "task,metric,value\n";
    bool trained = false;
    if (!cfg.inputs.interactions.empty()) {
        auto in = load_interactions(require(cfg.inputs.interactions, "interactions"));
        auto rec = train_recommender(kg, in, cfg.recommender);
        RecTrainConfig flat = cfg.recommender;
        flat.hops = 0;
        auto nokg = train_recommender(kg, in, flat);
        save_recommender(rec, dir / "recommender.ckpt");
        save_recommender(nokg, dir / "recommender_nokg.ckpt");
        csv += "recommender,dev_auc," + fixed9(eval_auc(rec, kg, in, Split::Dev)) + "\n";
        csv += "recommender,test_auc," + fixed9(eval_auc(rec, kg, in, Split::Test)) + "\n";
        csv += "recommender_nokg,test_auc," + fixed9(eval_auc(nokg, kg, in, Split::Test)) + "\n";
        trained = true;
    }
    if (!cfg.inputs.qa_tasks.empty()) {
        auto tasks = load_qa_tasks(require(cfg.inputs.qa_tasks, "QA tasks"));
        auto qa = train_qa(kg, qa_split(tasks, Split::Train), cfg.qa);
        save_qa(qa, dir / "qa.ckpt");
        csv += "qa,dev_accuracy," + fixed9(eval_qa(qa, kg, qa_split(tasks, Split::Dev)).accuracy) + "\n";
        csv += "qa,test_accuracy," + fixed9(eval_qa(qa, kg, qa_split(tasks, Split::Test)).accuracy) + "\n";
        trained = true;
    }
    if (!trained) throw Error("missing input: configure interactions and/or qa_tasks");
    write_file(dir / "downstream.csv", csv);
    write_resolved(cfg);
}

void cmd_perturb(const RunConfig& cfg) {
    auto kg = load_kg(cfg);
    const PerturbMethod method = parse_method(cfg.perturb.method);
    auto scorer = maybe_scorer(cfg);
    auto down = Downstream::load(cfg, false);
    std::optional<rl::DqnPolicy> policy;
    if (is_rl(method)) {
        policy = rl::policy_from_text(read_file(require(cfg.inputs.policy, "policy checkpoint")));
        if (rl::to_method(policy->variant()) != method) throw Error("policy variant does not match the method");
    }
    auto [perturbed, record] =
        perturb_once(cfg, kg, method, cfg.perturb.scale, cfg.seed, scorer, down, policy ? &*policy : nullptr);
    const auto dir = out_dir(cfg);
    save_triples(perturbed, dir / "perturbed.tsv");
    save_edit_log(kg, record, dir / "edits.log");
    write_file(dir / "metrics.csv", metrics_csv_maybe(scorer, kg, perturbed, cfg.perturb.b));
    if (down) write_file(dir / "downstream.csv", downstream_csv(cfg.task, down->metric(), down->score(perturbed)));
    write_resolved(cfg);
}

std::string curve_csv_header() { return "method,seed,scale,ats,sc2d,sd2,downstream"; }

std::string curve_csv_row(const CurvePoint& p) {
    return p.method + "," + std::to_string(p.seed) + "," + fixed9(p.scale) + "," + fixed9(p.ats) + "," +
           fixed9(p.sc2d) + "," + fixed9(p.sd2) + "," + fixed9(p.downstream);
}

std::vector<CurvePoint> parse_curve_csv(std::string_view text) {
    std::vector<CurvePoint> out;
    auto lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]) != curve_csv_header()) throw ParseError("curve CSV: bad header", 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto line = trim(lines[i]);
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 7) throw ParseError("curve CSV: expected 7 fields", i + 1);
        CurvePoint p;
        p.method = std::string(f[0]);
        p.seed = static_cast<std::uint64_t>(parse_int(f[1], "seed"));
        p.scale = parse_double(f[2], "scale");
        p.ats = parse_double(f[3], "ats");
        p.sc2d = parse_double(f[4], "sc2d");
        p.sd2 = parse_double(f[5], "sd2");
        p.downstream = parse_double(f[6], "downstream");
        out.push_back(p);
    }
    return out;
}

std::string curve_svg(const std::vector<CurvePoint>& points) {
    constexpr double W = 640, H = 400, L = 60, R = 150, T = 30, B = 50;
    std::vector<std::string> methods;
    std::map<std::string, std::map<double, std::pair<double, int>>> series;
    double lo = 1e300, hi = -1e300;
    for (const auto& p : points) {
        if (std::find(methods.begin(), methods.end(), p.method) == methods.end()) methods.push_back(p.method);
        auto& cell = series[p.method][p.scale];
        cell.first += p.downstream;
        cell.second += 1;
    }
    for (auto& [m, s] : series)
        for (auto& [x, cell] : s) {
            const double y = cell.first / cell.second;
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    if (points.empty()) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-9) lo -= 0.05, hi += 0.05;
    auto px = [&](double x) { return L + x * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - lo) / (hi - lo) * (H - T - B); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    char buf[128];
    std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L,
                  H - B, W - R, H - B);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, T,
                  L, H - B);
    svg += buf;
    for (int k = 0; k <= 4; ++k) {
        const double x = k / 4.0, y = lo + (hi - lo) * k / 4.0;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%.2f</text>\n",
                      px(x), H - B + 16, x);
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.3f</text>\n",
                      L - 6, py(y) + 4, y);
        svg += buf;
    }
    svg += "<text x=\"" + std::to_string(static_cast<int>(L + (W - L - R) / 2)) +
           "\" y=\"390\" font-size=\"12\" text-anchor=\"middle\">perturbation scale</text>\n";
    svg += "<text x=\"14\" y=\"200\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 200)\">downstream score</text>\n";
    for (std::size_t i = 0; i < methods.size(); ++i) {
        const auto& m = methods[i];
        const char* color = palette[i % (sizeof palette / sizeof *palette)];
        svg += "<g class=\"series\" data-method=\"" + m + "\" stroke=\"" + color + "\" fill=\"" + color + "\">\n";
        std::string pts;
        for (const auto& [x, cell] : series[m]) {
            std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(x), py(cell.first / cell.second));
            pts += buf;
        }
        if (!pts.empty()) pts.pop_back();
        svg += "<polyline fill=\"none\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        for (const auto& [x, cell] : series[m]) {
            std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\"/>\n", px(x), py(cell.first / cell.second));
            svg += buf;
        }
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" stroke=\"none\">%s</text>\n",
                      W - R + 12, T + 16.0 * static_cast<double>(i + 1), m.c_str());
        svg += buf;
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

void cmd_curve(const RunConfig& cfg) {
    auto kg = load_kg(cfg);
    auto scorer = maybe_scorer(cfg);
    if (!scorer) throw Error("missing input: curve requires a scorer checkpoint");
    auto down = Downstream::load(cfg, true);
    const auto dir = out_dir(cfg);
    const fs::path csv_path = dir / "curve.csv";

    std::vector<CurvePoint> points;
    if (fs::exists(csv_path)) points = parse_curve_csv(read_file(csv_path));
    auto done = [&](const std::string& m, std::uint64_t seed, double scale) {
        return std::any_of(points.begin(), points.end(), [&](const CurvePoint& p) {
            return p.method == m && p.seed == seed && fixed9(p.scale) == fixed9(scale);
        });
    };
    fs::create_directories(dir);
    if (!fs::exists(csv_path)) write_file(csv_path, curve_csv_header() + "\n");
    std::ofstream csv(csv_path, std::ios::app | std::ios::binary);
    for (const auto& name : cfg.curve.methods) {
        const PerturbMethod method = parse_method(name);
        for (auto seed : cfg.curve.seeds) {
            for (double scale : cfg.curve.scales) {
                if (done(name, seed, scale)) continue;
                auto [perturbed, record] = perturb_once(cfg, kg, method, scale, seed, scorer, down, nullptr);
                CurvePoint p;
                p.method = name;
                p.seed = seed;
                p.scale = scale;
                p.ats = perturbed.empty() ? 0.0 : ats(*scorer, perturbed);
                p.sc2d = sc2d(kg, perturbed, cfg.perturb.b);
                p.sd2 = sd2(kg, perturbed, cfg.perturb.b);
                p.downstream = down->score(perturbed);
                csv << curve_csv_row(p) << '\n';
                csv.flush();
                points.push_back(p);
                log::info("curve point " + name + " seed=" + std::to_string(seed) + " scale=" + fixed9(scale));
            }
        }
    }
    csv.close();
    write_file(dir / "curve.svg", curve_svg(points));
    write_resolved(cfg);
}

void cmd_rl_train(const RunConfig& cfg) {
    auto kg = load_kg(cfg);
    auto scorer = maybe_scorer(cfg);
    if (!scorer) throw Error("missing input: rl_train requires a scorer checkpoint");
    auto down = Downstream::load(cfg, true);
    const rl::Variant variant = rl::parse_variant(cfg.rl.variant);
    const auto dir = out_dir(cfg);
    KnowledgeGraph perturbed;
    PerturbationRecord record;
    if (cfg.rl.eval_only) {
        auto policy = rl::policy_from_text(read_file(require(cfg.inputs.policy, "policy checkpoint")));
        if (policy.variant() != variant) throw Error("policy variant does not match the configured variant");
        std::tie(perturbed, record) = rl::run_greedy(policy, kg, *scorer, cfg.rl.train);
    } else {
        auto res = rl::train_policy(kg, down->evaluator(cfg.rl.train.reward_mode), *scorer, variant, cfg.rl.train);
        write_file(dir / "policy.ckpt", rl::policy_to_text(res.policy));
        write_file(dir / "rewards.csv", rl::reward_csv(res.rewards));
        std::string losses = "update,q1_loss,q2_loss\n";
        for (std::size_t i = 0; i < res.losses.size(); ++i)
            losses += std::to_string(i + 1) + "," + fixed9(res.losses[i].q1) + "," + fixed9(res.losses[i].q2) + "\n";
        write_file(dir / "losses.csv", losses);
        perturbed = std::move(res.kg);
        record = std::move(res.record);
    }
    save_triples(perturbed, dir / "perturbed.tsv");
    save_edit_log(kg, record, dir / "edits.log");
    write_file(dir / "metrics.csv", metrics_csv_maybe(scorer, kg, perturbed, cfg.perturb.b));
    write_file(dir / "downstream.csv", downstream_csv(cfg.task, down->metric(), down->score(perturbed)));
    write_resolved(cfg);
}

// ---------------------------------------------------------------------------
// Report

namespace {

struct RunRow {
    double downstream = 0.0;
    std::optional<double> ats;
    double sc2d = 0.0, sd2 = 0.0;
};

std::optional<double> cell(std::string_view s) {
    s = trim(s);
    if (s == "NA") return std::nullopt;
    return parse_double(s, "metric");
}

std::string fmt(const std::optional<double>& v) { return v ? fixed9(*v) : "NA"; }

}  // namespace

void cmd_report(const RunConfig& cfg) {
    const fs::path runs = cfg.inputs.runs.empty() ? fs::path(cfg.out) : fs::path(cfg.inputs.runs);
    if (!fs::is_directory(runs)) throw Error("report: run directory not found: " + runs.string());
    std::map<std::string, std::vector<RunRow>> by_method;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(runs))
        if (entry.is_directory() && fs::exists(entry.path() / "edits.log") && fs::exists(entry.path() / "metrics.csv"))
            dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw Error("report: no completed runs under " + runs.string());
    for (const auto& d : dirs) {
        const std::string log_text = read_file(d / "edits.log");
        const std::string metrics_text = read_file(d / "metrics.csv");
        auto header = split(log_text, '\n')[0];
        auto pos = header.find("method=");
        if (pos == std::string_view::npos) throw Error("report: bad edit log in " + d.string());
        auto method = header.substr(pos + 7, header.find(' ', pos) - pos - 7);
        auto mlines = split(metrics_text, '\n');
        if (mlines.size() < 2) throw Error("report: bad metrics.csv in " + d.string());
        auto f = split(mlines[1], ',');
        if (f.size() != 4) throw Error("report: bad metrics.csv in " + d.string());
        RunRow row;
        row.ats = cell(f[0]);
        row.sc2d = parse_double(f[1], "sc2d");
        row.sd2 = parse_double(f[2], "sd2");
        if (fs::exists(d / "downstream.csv")) {
            const std::string down_text = read_file(d / "downstream.csv");
            auto dl = split(down_text, '\n');
            if (dl.size() >= 2) row.downstream = parse_double(split(dl[1], ',').back(), "downstream");
        }
        by_method[std::string(method)].push_back(row);
    }

    struct Line {
        std::string method;
        std::optional<double> downstream, ats, sc2d, sd2;
    };
    std::vector<Line> lines;
    if (!cfg.inputs.triples.empty()) {
        auto kg = load_kg(cfg);
        auto scorer = maybe_scorer(cfg);
        auto down = Downstream::load(cfg, false);
        Line nokg{"w/o KG", std::nullopt, std::nullopt, std::nullopt, std::nullopt};
        Line withkg{"w/ KG", std::nullopt, std::nullopt, 1.0 / cfg.perturb.b, 1.0 / cfg.perturb.b};
        if (down) {
            nokg.downstream = down->score_without_kg(kg);
            withkg.downstream = down->score(kg);
        }
        if (scorer) withkg.ats = ats(*scorer, kg);
        lines.push_back(nokg);
        lines.push_back(withkg);
    }
    for (auto m : {"RS", "RR", "ER", "ED", "RL-RR", "RL-ER"}) {
        auto it = by_method.find(m);
        if (it == by_method.end()) continue;
        const auto& rows = it->second;
        const double n = static_cast<double>(rows.size());
        Line l{m, 0.0, 0.0, 0.0, 0.0};
        bool ats_ok = true;
        for (const auto& r : rows) {
            *l.downstream += r.downstream / n;
            *l.sc2d += r.sc2d / n;
            *l.sd2 += r.sd2 / n;
            if (r.ats) *l.ats += *r.ats / n;
            else ats_ok = false;
        }
        if (!ats_ok) l.ats.reset();
        lines.push_back(l);
    }

    std::string csv = "method,downstream,ats,sc2d,sd2\n";
    std::string text;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %12s %12s %12s %12s\n", "method", "downstream", "ats", "sc2d", "sd2");
    text += buf;
    for (const auto& l : lines) {
        csv += l.method + "," + fmt(l.downstream) + "," + fmt(l.ats) + "," + fmt(l.sc2d) + "," + fmt(l.sd2) + "\n";
        auto t = [](const std::optional<double>& v) {
            char b[32];
            if (v) std::snprintf(b, sizeof b, "%.4f", *v);
            else std::snprintf(b, sizeof b, "-");
            return std::string(b);
        };
        std::snprintf(buf, sizeof buf, "%-8s %12s %12s %12s %12s\n", l.method.c_str(), t(l.downstream).c_str(),
                      t(l.ats).c_str(), t(l.sc2d).c_str(), t(l.sd2).c_str());
        text += buf;
    }
    write_file(out_dir(cfg) / "report.csv", csv);
    write_file(out_dir(cfg) / "report.txt", text);
    write_resolved(cfg);
}

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, char** argv) {
    CLI::App app{"Knowledge-graph perturbation toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool verbose = false;

    struct Command {
        const char* name;
        const char* help;
        void (*fn)(const RunConfig&);
    };
    const Command commands[] = {
        {"generate_world", "Write a synthetic KG, interactions and QA tasks", cmd_generate_world},
        {"train_scorer", "Train the edge plausibility scorer", cmd_train_scorer},
        {"train_downstream", "Train the frozen recommender and/or QA model", cmd_train_downstream},
        {"perturb", "Perturb the KG and report distances", cmd_perturb},
        {"curve", "Sweep methods x scales x seeds", cmd_curve},
        {"rl_train", "Train a perturbation policy", cmd_rl_train},
        {"report", "Consolidate completed runs into a table", cmd_report},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "JSON run config");
        sub->add_option("--seed", seed, "Global seed (overrides the config)");
        sub->add_option("--out", out, "Output directory (overrides the config)");
        sub->add_flag("-v,--verbose", verbose, "Log progress to stderr");
        subs.emplace_back(sub, &c);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        if (verbose) log::set_level(log::Level::Info);
        RunConfig cfg = config_path.empty() ? parse_config("{}") : load_config(config_path);
        if (seed) apply_seed(cfg, *seed);
        if (out) cfg.out = *out;
        for (const auto& [sub, cmd] : subs)
            if (sub->parsed()) cmd->fn(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace kgp::cli
