#pragma once
// Minimal differentiable building blocks: parameter blocks with gradient and
// optimizer state, ReLU MLPs, an LSTM cell, Adam/SGD updates and a
// finite-difference gradient checker.
//
// There is no general autodiff graph. Each forward pass can record a tape;
// the matching backward consumes it, ACCUMULATES parameter gradients and
// returns the gradient with respect to its inputs. Callers zero gradients
// between optimizer steps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgp::nn {

using Rng = std::mt19937_64;
using Vec = std::vector<double>;

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UpdateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParamBlock {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec value;
    Vec grad;
    Vec m;  // first moment
    Vec v;  // second moment
    std::int64_t step = 0;

    ParamBlock() = default;
    ParamBlock(std::string name, std::size_t rows, std::size_t cols);

    std::size_t size() const { return value.size(); }
    double& at(std::size_t r, std::size_t c) { return value[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return value[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {value.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {value.data() + r * cols, cols}; }
    std::span<double> grad_row(std::size_t r) { return {grad.data() + r * cols, cols}; }

    void zero_grad();
    // Uniform in [-bound, bound].
    void init_uniform(double bound, Rng& rng);
    void fill(double x);
    bool all_finite() const;
};

using ParamList = std::vector<ParamBlock*>;

void zero_grads(const ParamList& params);
// Copies values only (not gradients or optimizer state); shapes must match.
void copy_values(const ParamList& from, const ParamList& to);
std::size_t total_size(const ParamList& params);

// Textual dump: "<name> <rows> <cols>" then one line of 9-digit values per row.
void write_params(std::ostream& out, const ParamList& params);
void read_params(std::istream& in, const ParamList& params);

// ---------------------------------------------------------------------------
// Vector helpers

double dot(std::span<const double> a, std::span<const double> b);
double sigmoid(double x);
Vec concat(std::span<const double> a, std::span<const double> b);
Vec softmax(std::span<const double> logits);

// ---------------------------------------------------------------------------
// Dense layer y = W x + b

class Linear {
public:
    Linear() = default;
    Linear(std::string name, std::size_t in, std::size_t out);

    std::size_t in_width() const { return weight.cols; }
    std::size_t out_width() const { return weight.rows; }

    Vec forward(std::span<const double> x) const;
    // Accumulates into weight/bias gradients; returns dL/dx.
    Vec backward(std::span<const double> x, std::span<const double> dy);

    ParamBlock weight;
    ParamBlock bias;
};

// ---------------------------------------------------------------------------
// MLP: ReLU on hidden layers, identity on the output layer.

struct MlpSpec {
    // widths[0] is the input width; each further entry is a layer output width.
    std::vector<std::size_t> widths;
};

class Mlp {
public:
    struct Tape {
        std::vector<Vec> inputs;  // input to each layer
        std::vector<Vec> pre;     // pre-activation of each layer
    };

    Mlp() = default;
    Mlp(std::string name, MlpSpec spec);

    // Uniform in +-1/sqrt(fan_in); biases zero.
    void init(Rng& rng);

    const MlpSpec& spec() const { return spec_; }
    std::size_t in_width() const { return spec_.widths.front(); }
    std::size_t out_width() const { return spec_.widths.back(); }

    Vec forward(std::span<const double> x, Tape* tape = nullptr) const;
    Vec backward(const Tape& tape, std::span<const double> dy);

    ParamList params();
    std::vector<Linear>& layers() { return layers_; }
    const std::vector<Linear>& layers() const { return layers_; }

private:
    MlpSpec spec_;
    std::vector<Linear> layers_;
};

// ---------------------------------------------------------------------------
// LSTM cell. Gate order in the stacked weights: input, forget, output, candidate.

struct LstmCellSpec {
    std::size_t input = 0;
    std::size_t hidden = 0;
};

struct LstmState {
    Vec h;
    Vec c;
};

class LstmCell {
public:
    struct Tape {
        Vec x, h_prev, c_prev;
        Vec i, f, o, g;  // post-activation gates
        Vec c, tanh_c;
    };
    struct InputGrads {
        Vec dx, dh_prev, dc_prev;
    };

    LstmCell() = default;
    LstmCell(std::string name, LstmCellSpec spec);

    void init(Rng& rng);

    const LstmCellSpec& spec() const { return spec_; }

    LstmState forward(std::span<const double> x, std::span<const double> h_prev,
                      std::span<const double> c_prev, Tape* tape = nullptr) const;
    InputGrads backward(const Tape& tape, std::span<const double> dh, std::span<const double> dc);

    ParamList params();

    ParamBlock w_x;  // 4H x I
    ParamBlock w_h;  // 4H x H
    ParamBlock bias;  // 4H

private:
    LstmCellSpec spec_;
};

// ---------------------------------------------------------------------------
// Optimizers

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected adaptive-moment update. Gradients are left untouched.
// Throws UpdateError on a non-finite gradient or resulting value.
void adam_step(const ParamList& params, const AdamConfig& cfg);

void sgd_step(const ParamList& params, double learning_rate);

enum class OptimizerKind { Adam, Sgd };

struct Optimizer {
    OptimizerKind kind = OptimizerKind::Adam;
    AdamConfig adam;
    void step(const ParamList& params) const {
        if (kind == OptimizerKind::Adam) adam_step(params, adam);
        else sgd_step(params, adam.learning_rate);
    }
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct FdCheckResult {
    bool pass = false;
    double worst_relative_error = 0.0;
    std::size_t coordinates_checked = 0;
};

struct FdCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-4;
    std::size_t max_coordinates = 64;
    // Denominator floor for the relative error, so vanishing gradients are
    // compared on an absolute scale.
    double magnitude_floor = 1e-6;
};

// `loss` is evaluated at perturbed parameter values; the analytic gradient must
// already be in the blocks' `grad` fields. Values are restored afterwards.
FdCheckResult finite_diff_check(const std::function<double()>& loss, const ParamList& params,
                                Rng& rng, const FdCheckOptions& options = {});

}  // namespace kgp::nn
