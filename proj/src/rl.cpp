#include "kgperturb/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "kgperturb/format.hpp"

namespace kgp::rl {

PerturbMethod to_method(Variant v) { return v == Variant::RR ? PerturbMethod::RL_RR : PerturbMethod::RL_ER; }

std::string_view to_string(Variant v) { return v == Variant::RR ? "RL-RR" : "RL-ER"; }

Variant parse_variant(std::string_view s) {
    if (s == "RL-RR") return Variant::RR;
    if (s == "RL-ER") return Variant::ER;
    throw Error("unknown policy variant '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// QNet

QNet::QNet(const std::string& name, std::size_t cond_width, std::size_t action_width, std::size_t hidden,
           std::size_t head)
    : cell(name + ".cell", nn::LstmCellSpec{cond_width, hidden}),
      action_head(name + ".action", nn::MlpSpec{{action_width, head, head}}),
      state_head(name + ".state", nn::MlpSpec{{hidden, head, head}}) {}

void QNet::init(nn::Rng& rng) {
    cell.init(rng);
    action_head.init(rng);
    state_head.init(rng);
}

Vec QNet::state_feature(std::span<const double> s, std::span<const double> cond, Tape* tape) const {
    const Vec zero_c(cell.spec().hidden, 0.0);
    auto st = cell.forward(cond, s, zero_c, tape ? &tape->cell : nullptr);
    Vec out = state_head.forward(st.h, tape ? &tape->state_tape : nullptr);
    if (tape) tape->state_out = out;
    return out;
}

Vec QNet::action_feature(std::span<const double> a, Tape* tape) const {
    Vec out = action_head.forward(a, tape ? &tape->action_tape : nullptr);
    if (tape) tape->action_out = out;
    return out;
}

std::vector<double> QNet::scores(std::span<const double> s, std::span<const double> cond,
                                 std::span<const Vec> candidates) const {
    if (candidates.empty()) throw Error("no legal subaction: empty candidate list");
    Vec sf = state_feature(s, cond);
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& a : candidates) out.push_back(nn::dot(sf, action_feature(a)));
    return out;
}

double QNet::forward(std::span<const double> s, std::span<const double> cond, std::span<const double> a,
                     Tape& tape) const {
    state_feature(s, cond, &tape);
    action_feature(a, &tape);
    return nn::dot(tape.state_out, tape.action_out);
}

Vec QNet::backward(const Tape& tape, double dq) {
    Vec d_action(tape.state_out.size()), d_state(tape.action_out.size());
    for (std::size_t i = 0; i < d_action.size(); ++i) {
        d_action[i] = dq * tape.state_out[i];
        d_state[i] = dq * tape.action_out[i];
    }
    action_head.backward(tape.action_tape, d_action);
    Vec dh = state_head.backward(tape.state_tape, d_state);
    const Vec zero(dh.size(), 0.0);
    return cell.backward(tape.cell, dh, zero).dh_prev;
}

nn::ParamList QNet::params() {
    nn::ParamList out = cell.params();
    for (auto* p : action_head.params()) out.push_back(p);
    for (auto* p : state_head.params()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// DqnPolicy

DqnPolicy::DqnPolicy(Variant variant, PolicyDims dims)
    : q1("q1", dims.a0, dims.a1, dims.hidden, dims.head),
      q2("q2", dims.a1 + dims.a0, dims.a2, dims.hidden, dims.head),
      variant_(variant),
      dims_(dims) {
    if (dims.a0 == 0 || dims.a1 == 0 || dims.a2 == 0 || dims.hidden == 0 || dims.head == 0)
        throw Error("policy widths must be >= 1");
    if (dims.state_input > 0) encoder = nn::LstmCell("state", nn::LstmCellSpec{dims.state_input, dims.hidden});
}

void DqnPolicy::init(nn::Rng& rng) {
    if (dims_.state_input > 0) encoder.init(rng);
    q1.init(rng);
    q2.init(rng);
}

nn::ParamList DqnPolicy::params() {
    nn::ParamList out;
    if (dims_.state_input > 0) out = encoder.params();
    for (auto* p : q1.params()) out.push_back(p);
    for (auto* p : q2.params()) out.push_back(p);
    return out;
}

nn::LstmState encode_history(const DqnPolicy& policy, std::span<const Vec> inputs,
                             const std::vector<std::size_t>* order) {
    const std::size_t h = policy.dims().hidden;
    nn::LstmState st{Vec(h, 0.0), Vec(h, 0.0)};
    if (policy.dims().state_input == 0) {
        if (!inputs.empty()) throw Error("policy has no state encoder");
        return st;
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto& x = inputs[order ? (*order)[k] : k];
        st = policy.encoder.forward(x, st.h, st.c);
    }
    return st;
}

std::vector<double> q1_scores(const DqnPolicy& p, std::span<const double> s, std::span<const double> a0,
                              std::span<const Vec> candidates) {
    return p.q1.scores(s, a0, candidates);
}

std::vector<double> q2_scores(const DqnPolicy& p, std::span<const double> s, std::span<const double> a0,
                              std::span<const double> a1, std::span<const Vec> candidates) {
    return p.q2.scores(s, nn::concat(a1, a0), candidates);
}

std::size_t epsilon_greedy(std::span<const double> q, double eps, nn::Rng& rng) {
    if (q.empty()) throw Error("no legal subaction: empty candidate list");
    if (eps > 0.0) {
        std::bernoulli_distribution explore(std::min(eps, 1.0));
        if (explore(rng)) {
            std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
            return pick(rng);
        }
    }
    return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

double epsilon_at(std::size_t step, double start, double end, std::size_t decay_steps) {
    if (decay_steps == 0 || step >= decay_steps) return end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
}

// ---------------------------------------------------------------------------
// Rewards

std::string_view to_string(RewardMode m) {
    switch (m) {
        case RewardMode::KlDecrease: return "kl-decrease";
        case RewardMode::AucDelta: return "auc-delta";
        case RewardMode::AucAbsolute: return "auc-absolute";
    }
    return "kl-decrease";
}

RewardMode parse_reward_mode(std::string_view s) {
    for (auto m : {RewardMode::KlDecrease, RewardMode::AucDelta, RewardMode::AucAbsolute})
        if (to_string(m) == s) return m;
    throw Error("unknown reward mode '" + std::string(s) + "'");
}

double raw_reward(RewardMode mode, double previous, double current) {
    switch (mode) {
        case RewardMode::KlDecrease: return previous - current;
        case RewardMode::AucDelta: return current - previous;
        case RewardMode::AucAbsolute: return current;
    }
    return 0.0;
}

double scale_reward(RewardTracker& tracker, double raw) {
    ++tracker.events;
    tracker.running_mean_abs += (std::abs(raw) - tracker.running_mean_abs) / static_cast<double>(tracker.events);
    return raw * tracker.scale_target / std::max(tracker.running_mean_abs, tracker.floor);
}

std::optional<RewardEvent> compute_reward(RewardTracker& tracker,
                                          const std::function<double(const KnowledgeGraph&)>& statistic,
                                          RewardMode mode, const KnowledgeGraph& kg, std::size_t step,
                                          std::size_t period) {
    if (period == 0) throw Error("reward period must be >= 1");
    if (step == 0 || step % period != 0) return std::nullopt;
    RewardEvent ev;
    ev.statistic = statistic(kg);
    ev.raw = raw_reward(mode, tracker.previous, ev.statistic);
    ev.scaled = scale_reward(tracker, ev.raw);
    tracker.previous = ev.statistic;
    return ev;
}

// ---------------------------------------------------------------------------
// Bellman

Vec resolve_state(const DqnPolicy& p, const StateRef& ref, nn::LstmCell::Tape* tape) {
    if (!ref.encoded) return ref.direct;
    return p.encoder.forward(ref.input, ref.h_prev, ref.c_prev, tape).h;
}

BellmanTargets bellman_targets(const DqnPolicy& target, const Transition& t, double gamma) {
    BellmanTargets y;
    const Vec s = resolve_state(target, t.state);
    auto q2 = q2_scores(target, s, t.a0, t.a1, t.a2_candidates);
    y.y1 = gamma * *std::max_element(q2.begin(), q2.end());
    y.y2 = t.reward;
    if (!t.terminal && !t.next_a1_candidates.empty()) {
        const Vec s_next = resolve_state(target, t.next_state);
        auto q1 = q1_scores(target, s_next, t.next_a0, t.next_a1_candidates);
        y.y2 += gamma * *std::max_element(q1.begin(), q1.end());
    }
    return y;
}

BellmanLoss bellman_loss(DqnPolicy& online, const Transition& t, const BellmanTargets& y,
                         bool accumulate_grad, double weight) {
    nn::LstmCell::Tape enc_tape;
    const Vec s = resolve_state(online, t.state, &enc_tape);
    QNet::Tape t1, t2;
    const double q1 = online.q1.forward(s, t.a0, t.a1, t1);
    const double q2 = online.q2.forward(s, nn::concat(t.a1, t.a0), t.a2, t2);
    BellmanLoss loss{(q1 - y.y1) * (q1 - y.y1), (q2 - y.y2) * (q2 - y.y2)};
    if (!accumulate_grad) return loss;
    Vec ds = online.q1.backward(t1, 2.0 * weight * (q1 - y.y1));
    Vec ds2 = online.q2.backward(t2, 2.0 * weight * (q2 - y.y2));
    for (std::size_t i = 0; i < ds.size(); ++i) ds[i] += ds2[i];
    if (t.state.encoded) {
        const Vec zero(ds.size(), 0.0);
        online.encoder.backward(enc_tape, ds, zero);
    }
    return loss;
}

BellmanLoss bellman_update(DqnPolicy& online, const DqnPolicy& target,
                           std::span<const Transition* const> batch, const nn::AdamConfig& adam,
                           double gamma) {
    BellmanLoss total;
    if (batch.empty()) return total;
    auto params = online.params();
    nn::zero_grads(params);
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const auto* t : batch) {
        auto y = bellman_targets(target, *t, gamma);
        auto l = bellman_loss(online, *t, y, true, w);
        total.q1 += l.q1 * w;
        total.q2 += l.q2 * w;
    }
    if (!std::isfinite(total.q1) || !std::isfinite(total.q2))
        throw nn::UpdateError("non-finite Bellman loss");
    nn::adam_step(params, adam);
    return total;
}

void sync_target(DqnPolicy& online, DqnPolicy& target) { nn::copy_values(online.params(), target.params()); }

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error("replay capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, nn::Rng& rng) const {
    if (items_.empty()) throw Error("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[pick(rng)]);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint

std::string policy_to_text(DqnPolicy& p) {
    std::ostringstream out;
    const auto& d = p.dims();
    out << "kgperturb-dqn v1 variant=" << to_string(p.variant()) << "\n";
    out << "dims a0=" << d.a0 << " a1=" << d.a1 << " a2=" << d.a2 << " state_input=" << d.state_input
        << " hidden=" << d.hidden << " head=" << d.head << "\n";
    nn::write_params(out, p.params());
    return out.str();
}

DqnPolicy policy_from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header, dims_line;
    std::getline(in, header);
    const std::string prefix = "kgperturb-dqn v1 variant=";
    if (!header.starts_with(prefix)) throw ParseError("policy checkpoint: bad header", 1);
    const Variant variant = parse_variant(header.substr(prefix.size()));
    std::getline(in, dims_line);
    PolicyDims d;
    if (std::sscanf(dims_line.c_str(), "dims a0=%zu a1=%zu a2=%zu state_input=%zu hidden=%zu head=%zu", &d.a0,
                    &d.a1, &d.a2, &d.state_input, &d.hidden, &d.head) != 6)
        throw ParseError("policy checkpoint: bad dims line", 2);
    DqnPolicy p(variant, d);
    nn::read_params(in, p.params());
    return p;
}

}  // namespace kgp::rl
