#include "kgperturb/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kgperturb/format.hpp"

namespace kgp::nn {

ParamBlock::ParamBlock(std::string name_, std::size_t rows_, std::size_t cols_)
    : name(std::move(name_)), rows(rows_), cols(cols_), value(rows_ * cols_, 0.0),
      grad(rows_ * cols_, 0.0), m(rows_ * cols_, 0.0), v(rows_ * cols_, 0.0) {}

void ParamBlock::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void ParamBlock::init_uniform(double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : value) x = dist(rng);
}

void ParamBlock::fill(double x) { std::fill(value.begin(), value.end(), x); }

bool ParamBlock::all_finite() const {
    return std::all_of(value.begin(), value.end(), [](double x) { return std::isfinite(x); });
}

void zero_grads(const ParamList& params) {
    for (auto* p : params) p->zero_grad();
}

void copy_values(const ParamList& from, const ParamList& to) {
    if (from.size() != to.size()) throw ShapeError("parameter list length mismatch");
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (from[i]->rows != to[i]->rows || from[i]->cols != to[i]->cols)
            throw ShapeError("parameter shape mismatch for " + from[i]->name);
        to[i]->value = from[i]->value;
    }
}

std::size_t total_size(const ParamList& params) {
    std::size_t n = 0;
    for (auto* p : params) n += p->size();
    return n;
}

void write_params(std::ostream& out, const ParamList& params) {
    for (auto* p : params) {
        out << p->name << ' ' << p->rows << ' ' << p->cols << '\n';
        for (std::size_t r = 0; r < p->rows; ++r) {
            auto row = p->row(r);
            out << join_fixed9(std::span<const double>(row.data(), row.size()), '\t') << '\n';
        }
    }
}

void read_params(std::istream& in, const ParamList& params) {
    std::string line;
    for (auto* p : params) {
        if (!std::getline(in, line)) throw ShapeError("truncated parameter dump at " + p->name);
        std::istringstream header(line);
        std::string name;
        std::size_t rows = 0, cols = 0;
        header >> name >> rows >> cols;
        if (name != p->name || rows != p->rows || cols != p->cols)
            throw ShapeError("parameter header mismatch: expected " + p->name + " " +
                             std::to_string(p->rows) + "x" + std::to_string(p->cols) + ", got '" +
                             line + "'");
        for (std::size_t r = 0; r < rows; ++r) {
            if (!std::getline(in, line)) throw ShapeError("truncated rows in " + p->name);
            auto fields = split(line, '\t');
            if (cols == 0 && fields.size() == 1 && fields[0].empty()) continue;
            if (fields.size() != cols) throw ShapeError("row width mismatch in " + p->name);
            for (std::size_t c = 0; c < cols; ++c) p->at(r, c) = parse_double(fields[c], p->name);
        }
    }
}

// ---------------------------------------------------------------------------

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: width mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

Vec concat(std::span<const double> a, std::span<const double> b) {
    Vec out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

Vec softmax(std::span<const double> logits) {
    Vec out(logits.size());
    if (logits.empty()) return out;
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (auto& x : out) x /= sum;
    return out;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, std::size_t in, std::size_t out)
    : weight(name + ".weight", out, in), bias(name + ".bias", 1, out) {}

Vec Linear::forward(std::span<const double> x) const {
    if (x.size() != in_width())
        throw ShapeError("linear " + weight.name + ": input width " + std::to_string(x.size()) +
                         " != " + std::to_string(in_width()));
    Vec y(out_width());
    for (std::size_t r = 0; r < y.size(); ++r) {
        const double* w = weight.value.data() + r * weight.cols;
        double s = bias.value[r];
        for (std::size_t c = 0; c < x.size(); ++c) s += w[c] * x[c];
        y[r] = s;
    }
    return y;
}

Vec Linear::backward(std::span<const double> x, std::span<const double> dy) {
    if (dy.size() != out_width()) throw ShapeError("linear backward: upstream width mismatch");
    Vec dx(in_width(), 0.0);
    for (std::size_t r = 0; r < dy.size(); ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        bias.grad[r] += g;
        double* gw = weight.grad.data() + r * weight.cols;
        const double* w = weight.value.data() + r * weight.cols;
        for (std::size_t c = 0; c < x.size(); ++c) {
            gw[c] += g * x[c];
            dx[c] += g * w[c];
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::string name, MlpSpec spec) : spec_(std::move(spec)) {
    if (spec_.widths.size() < 2) throw ShapeError("mlp needs an input width and at least one layer");
    for (auto w : spec_.widths)
        if (w == 0) throw ShapeError("mlp widths must be positive");
    for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l)
        layers_.emplace_back(name + ".l" + std::to_string(l), spec_.widths[l], spec_.widths[l + 1]);
}

void Mlp::init(Rng& rng) {
    for (auto& layer : layers_) {
        layer.weight.init_uniform(1.0 / std::sqrt(static_cast<double>(layer.in_width())), rng);
        layer.bias.fill(0.0);
    }
}

Vec Mlp::forward(std::span<const double> x, Tape* tape) const {
    if (x.size() != in_width())
        throw ShapeError("mlp input width " + std::to_string(x.size()) + " != " +
                         std::to_string(in_width()));
    if (tape) {
        tape->inputs.clear();
        tape->pre.clear();
    }
    Vec cur(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Vec pre = layers_[l].forward(cur);
        if (tape) {
            tape->inputs.push_back(cur);
            tape->pre.push_back(pre);
        }
        if (l + 1 < layers_.size())
            for (auto& v : pre) v = v > 0.0 ? v : 0.0;
        cur = std::move(pre);
    }
    return cur;
}

Vec Mlp::backward(const Tape& tape, std::span<const double> dy) {
    if (tape.inputs.size() != layers_.size()) throw ShapeError("mlp backward: tape does not match");
    if (dy.size() != out_width()) throw ShapeError("mlp backward: upstream width mismatch");
    Vec g(dy.begin(), dy.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        if (l + 1 < layers_.size())
            for (std::size_t i = 0; i < g.size(); ++i)
                if (tape.pre[l][i] <= 0.0) g[i] = 0.0;
        g = layers_[l].backward(tape.inputs[l], g);
    }
    return g;
}

ParamList Mlp::params() {
    ParamList out;
    for (auto& layer : layers_) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

// ---------------------------------------------------------------------------
// LstmCell

LstmCell::LstmCell(std::string name, LstmCellSpec spec)
    : w_x(name + ".w_x", 4 * spec.hidden, spec.input), w_h(name + ".w_h", 4 * spec.hidden, spec.hidden),
      bias(name + ".bias", 1, 4 * spec.hidden), spec_(spec) {
    if (spec.input == 0 || spec.hidden == 0) throw ShapeError("lstm widths must be positive");
}

void LstmCell::init(Rng& rng) {
    w_x.init_uniform(1.0 / std::sqrt(static_cast<double>(spec_.input)), rng);
    w_h.init_uniform(1.0 / std::sqrt(static_cast<double>(spec_.hidden)), rng);
    bias.fill(0.0);
}

LstmState LstmCell::forward(std::span<const double> x, std::span<const double> h_prev,
                            std::span<const double> c_prev, Tape* tape) const {
    const std::size_t H = spec_.hidden;
    if (x.size() != spec_.input) throw ShapeError("lstm input width mismatch");
    if (h_prev.size() != H || c_prev.size() != H) throw ShapeError("lstm state width mismatch");
    Vec z(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
        double s = bias.value[r];
        const double* wx = w_x.value.data() + r * spec_.input;
        for (std::size_t c = 0; c < spec_.input; ++c) s += wx[c] * x[c];
        const double* wh = w_h.value.data() + r * H;
        for (std::size_t c = 0; c < H; ++c) s += wh[c] * h_prev[c];
        z[r] = s;
    }
    Vec i(H), f(H), o(H), g(H), c(H), tc(H), h(H);
    for (std::size_t k = 0; k < H; ++k) {
        i[k] = sigmoid(z[k]);
        f[k] = sigmoid(z[H + k]);
        o[k] = sigmoid(z[2 * H + k]);
        g[k] = std::tanh(z[3 * H + k]);
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tc[k] = std::tanh(c[k]);
        h[k] = o[k] * tc[k];
    }
    if (tape) {
        tape->x.assign(x.begin(), x.end());
        tape->h_prev.assign(h_prev.begin(), h_prev.end());
        tape->c_prev.assign(c_prev.begin(), c_prev.end());
        tape->i = i;
        tape->f = f;
        tape->o = o;
        tape->g = g;
        tape->c = c;
        tape->tanh_c = tc;
    }
    return {std::move(h), std::move(c)};
}

LstmCell::InputGrads LstmCell::backward(const Tape& t, std::span<const double> dh,
                                        std::span<const double> dc) {
    const std::size_t H = spec_.hidden;
    const std::size_t I = spec_.input;
    if (dh.size() != H || dc.size() != H) throw ShapeError("lstm backward: upstream width mismatch");
    Vec dz(4 * H);
    InputGrads out{Vec(I, 0.0), Vec(H, 0.0), Vec(H, 0.0)};
    for (std::size_t k = 0; k < H; ++k) {
        double dct = dc[k] + dh[k] * t.o[k] * (1.0 - t.tanh_c[k] * t.tanh_c[k]);
        double do_ = dh[k] * t.tanh_c[k];
        double di = dct * t.g[k];
        double df = dct * t.c_prev[k];
        double dg = dct * t.i[k];
        out.dc_prev[k] = dct * t.f[k];
        dz[k] = di * t.i[k] * (1.0 - t.i[k]);
        dz[H + k] = df * t.f[k] * (1.0 - t.f[k]);
        dz[2 * H + k] = do_ * t.o[k] * (1.0 - t.o[k]);
        dz[3 * H + k] = dg * (1.0 - t.g[k] * t.g[k]);
    }
    for (std::size_t r = 0; r < 4 * H; ++r) {
        const double g = dz[r];
        if (g == 0.0) continue;
        bias.grad[r] += g;
        double* gwx = w_x.grad.data() + r * I;
        const double* wx = w_x.value.data() + r * I;
        for (std::size_t c = 0; c < I; ++c) {
            gwx[c] += g * t.x[c];
            out.dx[c] += g * wx[c];
        }
        double* gwh = w_h.grad.data() + r * H;
        const double* wh = w_h.value.data() + r * H;
        for (std::size_t c = 0; c < H; ++c) {
            gwh[c] += g * t.h_prev[c];
            out.dh_prev[c] += g * wh[c];
        }
    }
    return out;
}

ParamList LstmCell::params() { return {&w_x, &w_h, &bias}; }

// ---------------------------------------------------------------------------
// Optimizers

void adam_step(const ParamList& params, const AdamConfig& cfg) {
    for (auto* p : params)
        for (double g : p->grad)
            if (!std::isfinite(g)) throw UpdateError("non-finite gradient in " + p->name);
    for (auto* p : params) {
        ++p->step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
        for (std::size_t k = 0; k < p->size(); ++k) {
            const double g = p->grad[k];
            p->m[k] = cfg.beta1 * p->m[k] + (1.0 - cfg.beta1) * g;
            p->v[k] = cfg.beta2 * p->v[k] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p->m[k] / bc1;
            const double vhat = p->v[k] / bc2;
            p->value[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
        if (!p->all_finite()) throw UpdateError("non-finite parameter after update in " + p->name);
    }
}

void sgd_step(const ParamList& params, double learning_rate) {
    for (auto* p : params) {
        for (std::size_t k = 0; k < p->size(); ++k) {
            if (!std::isfinite(p->grad[k])) throw UpdateError("non-finite gradient in " + p->name);
            p->value[k] -= learning_rate * p->grad[k];
        }
    }
}

// ---------------------------------------------------------------------------
// Finite differences

FdCheckResult finite_diff_check(const std::function<double()>& loss, const ParamList& params,
                                Rng& rng, const FdCheckOptions& options) {
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t b = 0; b < params.size(); ++b)
        for (std::size_t k = 0; k < params[b]->size(); ++k) coords.emplace_back(b, k);
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > options.max_coordinates) coords.resize(options.max_coordinates);

    FdCheckResult result;
    for (auto [b, k] : coords) {
        double& x = params[b]->value[k];
        const double saved = x;
        x = saved + options.step;
        const double up = loss();
        x = saved - options.step;
        const double down = loss();
        x = saved;
        const double numeric = (up - down) / (2.0 * options.step);
        const double analytic = params[b]->grad[k];
        const double denom =
            std::max({std::abs(numeric), std::abs(analytic), options.magnitude_floor});
        const double rel = std::abs(numeric - analytic) / denom;
        if (!std::isfinite(rel)) result.worst_relative_error = std::numeric_limits<double>::infinity();
        else result.worst_relative_error = std::max(result.worst_relative_error, rel);
        ++result.coordinates_checked;
    }
    result.pass = result.worst_relative_error < options.tolerance;
    return result;
}

}  // namespace kgp::nn
