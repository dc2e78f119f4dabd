#pragma once
// Hierarchical DQN over factored perturbation actions.
//
// An action is (a0, a1, a2): a head entity, one of its edges, and a
// substitute (relation or tail). Q1 ranks a1 given (s, a0) and Q2 ranks a2
// given (s, a0, a1); both are inner products of an action-head MLP and a
// state-head MLP applied to an LSTM cell that conditions s on the earlier
// subactions. The state s comes from a separate LSTM over action embeddings.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgperturb/kg.hpp"
#include "kgperturb/nn.hpp"

namespace kgp::rl {

using nn::Vec;

enum class Variant { RR, ER };

PerturbMethod to_method(Variant v);
std::string_view to_string(Variant v);  // "RL-RR" / "RL-ER"
Variant parse_variant(std::string_view s);

struct SubactionTriple {
    EntityId a0;
    Triple a1;
    std::uint32_t a2 = 0;  // RelationId value (RL-RR) or EntityId value (RL-ER)
    bool operator==(const SubactionTriple&) const = default;
};

struct PolicyDims {
    std::size_t a0 = 0;
    std::size_t a1 = 0;
    std::size_t a2 = 0;
    // Width of the state LSTM input; 0 means states are supplied directly.
    std::size_t state_input = 0;
    std::size_t hidden = 32;
    std::size_t head = 32;
    bool operator==(const PolicyDims&) const = default;
};

// Q(a | s, cond) = <action_head(a), state_head(cell(cond, h=s, c=0).h)>.
class QNet {
public:
    struct Tape {
        nn::LstmCell::Tape cell;
        nn::Mlp::Tape state_tape;
        Vec state_out;
        nn::Mlp::Tape action_tape;
        Vec action_out;
    };

    QNet() = default;
    QNet(const std::string& name, std::size_t cond_width, std::size_t action_width, std::size_t hidden,
         std::size_t head);

    void init(nn::Rng& rng);

    // State-side feature vector; reused across candidates.
    Vec state_feature(std::span<const double> s, std::span<const double> cond, Tape* tape = nullptr) const;
    Vec action_feature(std::span<const double> a, Tape* tape = nullptr) const;
    std::vector<double> scores(std::span<const double> s, std::span<const double> cond,
                               std::span<const Vec> candidates) const;
    // Q for one candidate with a full tape.
    double forward(std::span<const double> s, std::span<const double> cond, std::span<const double> a,
                   Tape& tape) const;
    // Accumulates parameter gradients for dL/dQ; returns dL/ds.
    Vec backward(const Tape& tape, double dq);

    nn::ParamList params();

    nn::LstmCell cell;
    nn::Mlp action_head;
    nn::Mlp state_head;
};

class DqnPolicy {
public:
    DqnPolicy() = default;
    DqnPolicy(Variant variant, PolicyDims dims);

    void init(nn::Rng& rng);

    Variant variant() const { return variant_; }
    const PolicyDims& dims() const { return dims_; }

    // Declaration order: encoder (if any), q1, q2.
    nn::ParamList params();

    nn::LstmCell encoder;
    QNet q1;  // cond = a0, action = a1
    QNet q2;  // cond = [a1, a0], action = a2

private:
    Variant variant_ = Variant::RR;
    PolicyDims dims_;
};

// Runs the state LSTM over `inputs` in the given order (insertion order when
// `order` is null). An empty history gives the zero state.
nn::LstmState encode_history(const DqnPolicy& policy, std::span<const Vec> inputs,
                             const std::vector<std::size_t>* order = nullptr);

// Throws Error on an empty candidate list.
std::vector<double> q1_scores(const DqnPolicy& p, std::span<const double> s, std::span<const double> a0,
                              std::span<const Vec> candidates);
std::vector<double> q2_scores(const DqnPolicy& p, std::span<const double> s, std::span<const double> a0,
                              std::span<const double> a1, std::span<const Vec> candidates);

// Uniform index with probability eps, otherwise the argmax (lowest index on ties).
std::size_t epsilon_greedy(std::span<const double> q, double eps, nn::Rng& rng);

// Linear decay from start to end over decay_steps.
double epsilon_at(std::size_t step, double start, double end, std::size_t decay_steps);

// ---------------------------------------------------------------------------
// Rewards

enum class RewardMode { KlDecrease, AucDelta, AucAbsolute };

std::string_view to_string(RewardMode m);
RewardMode parse_reward_mode(std::string_view s);

struct RewardTracker {
    double running_mean_abs = 0.0;
    std::size_t events = 0;
    double scale_target = 1.0;
    double previous = 0.0;
    double floor = 1e-6;
};

struct RewardEvent {
    double raw = 0.0;
    double scaled = 0.0;
    double statistic = 0.0;
};

double raw_reward(RewardMode mode, double previous, double current);

// Updates the running mean with |raw| and returns the scaled reward.
double scale_reward(RewardTracker& tracker, double raw);

// A reward event fires when `step` (1-based) is a multiple of `period`; the
// tracker is untouched otherwise.
std::optional<RewardEvent> compute_reward(RewardTracker& tracker,
                                          const std::function<double(const KnowledgeGraph&)>& statistic,
                                          RewardMode mode, const KnowledgeGraph& kg, std::size_t step,
                                          std::size_t period);

// ---------------------------------------------------------------------------
// Transitions and Bellman training

// s is either supplied directly or produced by one encoder step
// encoder(input, h_prev, c_prev).h.
struct StateRef {
    bool encoded = false;
    Vec direct;
    Vec h_prev, c_prev, input;
};

struct Transition {
    StateRef state;
    Vec a0, a1, a2;
    std::vector<Vec> a2_candidates;  // restricted set at the time of selection
    double reward = 0.0;
    bool terminal = false;
    StateRef next_state;
    Vec next_a0;
    std::vector<Vec> next_a1_candidates;
};

Vec resolve_state(const DqnPolicy& p, const StateRef& ref, nn::LstmCell::Tape* tape = nullptr);

struct BellmanTargets {
    double y1 = 0.0;  // gamma * max_a2 Q2'(a2 | s, a0, a1)
    double y2 = 0.0;  // r + gamma * max_a1' Q1'(a1' | s', a0')
};

BellmanTargets bellman_targets(const DqnPolicy& target, const Transition& t, double gamma);

struct BellmanLoss {
    double q1 = 0.0;  // (Q1 - y1)^2
    double q2 = 0.0;  // (Q2 - y2)^2
};

// Squared Bellman errors of one transition; with accumulate_grad the
// gradient of weight * (q1 + q2) is added to the online parameters.
BellmanLoss bellman_loss(DqnPolicy& online, const Transition& t, const BellmanTargets& y,
                         bool accumulate_grad, double weight = 1.0);

// Mean loss over the batch followed by one Adam step. Throws nn::UpdateError
// on a non-finite loss.
BellmanLoss bellman_update(DqnPolicy& online, const DqnPolicy& target,
                           std::span<const Transition* const> batch, const nn::AdamConfig& adam,
                           double gamma);

void sync_target(DqnPolicy& online, DqnPolicy& target);

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 4096);
    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    // Uniform with replacement.
    std::vector<const Transition*> sample(std::size_t n, nn::Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> items_;
};

// ---------------------------------------------------------------------------
// Checkpoint: "kgperturb-dqn v1 variant=<...>", a dims line, then parameter
// blocks in declaration order.

std::string policy_to_text(DqnPolicy& p);
DqnPolicy policy_from_text(std::string_view text);

}  // namespace kgp::rl
