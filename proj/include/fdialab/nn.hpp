#pragma once

// Differentiable building blocks: activations, dense layer, LSTM cell, MSE
// and cross-entropy losses, the Adam optimizer and a finite-difference
// gradient checker. Everything is f64 and batched row-wise (rows = samples).
//
// Layers keep gradient accumulators and forward caches for the (single
// threaded) training path; const inference entry points touch neither and
// are safe to call concurrently on a shared model.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdialab/rng.hpp"

namespace fdialab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { identity, tanh, sigmoid, relu, softmax };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "relu") return Activation::relu;
    if (s == "softmax") return Activation::softmax;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

inline MatrixXd apply_activation(Activation act, const MatrixXd& z) {
    switch (act) {
        case Activation::identity: return z;
        case Activation::tanh: return z.array().tanh();
        case Activation::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
        case Activation::relu: return z.cwiseMax(0.0);
        case Activation::softmax: {
            MatrixXd y(z.rows(), z.cols());
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                Eigen::ArrayXd row = z.row(r).array();
                row -= row.maxCoeff();
                row = row.exp();
                y.row(r) = (row / row.sum()).matrix().transpose();
            }
            return y;
        }
    }
    throw std::logic_error("unreachable");
}

// Elementwise activation derivative expressed through the output value.
inline MatrixXd activation_derivative_from_output(Activation act, const MatrixXd& y) {
    switch (act) {
        case Activation::identity: return MatrixXd::Ones(y.rows(), y.cols());
        case Activation::tanh: return (1.0 - y.array().square()).matrix();
        case Activation::sigmoid: return (y.array() * (1.0 - y.array())).matrix();
        case Activation::relu: return (y.array() > 0.0).cast<double>().matrix();
        case Activation::softmax:
            throw std::invalid_argument(
                "softmax backward is only available fused with cross-entropy");
    }
    throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// Parameter registry shared by the optimizer, checkpoints and grad checks.

struct ParamRef {
    std::string name;
    MatrixXd* value;
    MatrixXd* grad;
};

using ParamSet = std::vector<ParamRef>;

inline void zero_grads(const ParamSet& params) {
    for (const auto& p : params) p.grad->setZero();
}

inline std::size_t param_count(const ParamSet& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += static_cast<std::size_t>(p.value->size());
    return n;
}

// Uniform Glorot-style init: U(-L, L) with L = sqrt(6 / (fan_in + fan_out)).
inline void glorot_init(MatrixXd& w, std::mt19937_64& rng, double fan_in, double fan_out) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
}

// ---------------------------------------------------------------------------

class DenseLayer {
public:
    MatrixXd w;   // in x out
    MatrixXd b;   // 1 x out
    Activation act = Activation::identity;
    MatrixXd dw, db;

    DenseLayer() = default;
    DenseLayer(int in, int out, Activation a) : act(a) {
        w = MatrixXd::Zero(in, out);
        b = MatrixXd::Zero(1, out);
        dw = MatrixXd::Zero(in, out);
        db = MatrixXd::Zero(1, out);
    }

    void init(std::mt19937_64& rng) { glorot_init(w, rng, w.rows(), w.cols()); }

    int in_size() const { return static_cast<int>(w.rows()); }
    int out_size() const { return static_cast<int>(w.cols()); }

    // Inference path, no caching; thread-safe on a const layer.
    MatrixXd forward(const MatrixXd& x) const {
        if (x.cols() != w.rows())
            throw std::invalid_argument("dense forward: input width " +
                                        std::to_string(x.cols()) + " != " +
                                        std::to_string(w.rows()));
        MatrixXd z = x * w;
        z.rowwise() += b.row(0);
        return apply_activation(act, z);
    }

    VectorXd forward(const VectorXd& x) const {
        return forward(MatrixXd(x.transpose())).row(0).transpose();
    }

    // Training path: caches input and output for backward().
    const MatrixXd& forward_train(const MatrixXd& x) {
        x_cache_ = x;
        y_cache_ = forward(x);
        return y_cache_;
    }

    // Accumulates dw/db, returns dL/dx.
    MatrixXd backward(const MatrixXd& dy) {
        MatrixXd dz = dy.cwiseProduct(activation_derivative_from_output(act, y_cache_));
        dw.noalias() += x_cache_.transpose() * dz;
        db.row(0) += dz.colwise().sum();
        return dz * w.transpose();
    }

    // Backward taking dL/dz directly (used by fused softmax/sigmoid losses).
    MatrixXd backward_from_preact(const MatrixXd& dz) {
        dw.noalias() += x_cache_.transpose() * dz;
        db.row(0) += dz.colwise().sum();
        return dz * w.transpose();
    }

    void collect_params(ParamSet& out, const std::string& prefix) {
        out.push_back({prefix + ".w", &w, &dw});
        out.push_back({prefix + ".b", &b, &db});
    }

private:
    MatrixXd x_cache_, y_cache_;
};

// ---------------------------------------------------------------------------
// LSTM cell. Gate layout: input (i), forget (f), candidate (g), output (o);
// each gate has a combined weight matrix over [x_t, h_prev] of shape
// (input_size + units) x units. Gates use sigmoid, candidate and cell
// output use tanh.

class LstmCell {
public:
    static constexpr int kGates = 4;  // i, f, g, o

    MatrixXd w[kGates];
    MatrixXd b[kGates];  // 1 x units
    MatrixXd dw[kGates], db[kGates];

    LstmCell() = default;
    LstmCell(int input_size, int units) : input_size_(input_size), units_(units) {
        for (int g = 0; g < kGates; ++g) {
            w[g] = MatrixXd::Zero(input_size + units, units);
            b[g] = MatrixXd::Zero(1, units);
            dw[g] = MatrixXd::Zero(input_size + units, units);
            db[g] = MatrixXd::Zero(1, units);
        }
    }

    int input_size() const { return input_size_; }
    int units() const { return units_; }

    void init(std::mt19937_64& rng) {
        for (int g = 0; g < kGates; ++g)
            glorot_init(w[g], rng, input_size_ + units_, units_);
    }

    struct StepCache {
        MatrixXd z;             // batch x (input + units), [x_t, h_prev]
        MatrixXd i, f, g, o;    // gate activations, batch x units
        MatrixXd c;             // cell state after the step
        MatrixXd tanh_c;
    };

    // One recurrence step. h_prev/c_prev are batch x units.
    MatrixXd step(const MatrixXd& x, const MatrixXd& h_prev, const MatrixXd& c_prev,
                  StepCache* cache = nullptr) const {
        if (x.cols() != input_size_ || h_prev.cols() != units_ || c_prev.cols() != units_)
            throw std::invalid_argument("lstm step: shape mismatch");
        MatrixXd z(x.rows(), input_size_ + units_);
        z << x, h_prev;
        MatrixXd zi = z * w[0];
        zi.rowwise() += b[0].row(0);
        MatrixXd zf = z * w[1];
        zf.rowwise() += b[1].row(0);
        MatrixXd zg = z * w[2];
        zg.rowwise() += b[2].row(0);
        MatrixXd zo = z * w[3];
        zo.rowwise() += b[3].row(0);
        MatrixXd i = apply_activation(Activation::sigmoid, zi);
        MatrixXd f = apply_activation(Activation::sigmoid, zf);
        MatrixXd g = apply_activation(Activation::tanh, zg);
        MatrixXd o = apply_activation(Activation::sigmoid, zo);
        MatrixXd c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
        MatrixXd tc = c.array().tanh();
        MatrixXd h = o.cwiseProduct(tc);
        if (cache) {
            cache->z = std::move(z);
            cache->i = std::move(i);
            cache->f = std::move(f);
            cache->g = std::move(g);
            cache->o = std::move(o);
            cache->c = c;
            cache->tanh_c = std::move(tc);
        }
        return h;
    }

    // Single-vector convenience used by unit tests and spec examples.
    std::pair<VectorXd, VectorXd> step_single(const VectorXd& x, const VectorXd& h_prev,
                                              const VectorXd& c_prev) const {
        StepCache cache;
        MatrixXd h = step(MatrixXd(x.transpose()), MatrixXd(h_prev.transpose()),
                          MatrixXd(c_prev.transpose()), &cache);
        return {h.row(0).transpose(), cache.c.row(0).transpose()};
    }

    // BPTT for one step. dh is dL/dh_t; dc carries dL/dc_t in and leaves
    // dL/dc_{t-1}. Returns via out-params the input and previous-h grads.
    void step_backward(const StepCache& cache, const MatrixXd& c_prev, const MatrixXd& dh,
                       MatrixXd& dc, MatrixXd& dx, MatrixXd& dh_prev) {
        MatrixXd dct = dc + dh.cwiseProduct(cache.o)
                                .cwiseProduct((1.0 - cache.tanh_c.array().square()).matrix());
        MatrixXd d_o = dh.cwiseProduct(cache.tanh_c)
                           .cwiseProduct((cache.o.array() * (1.0 - cache.o.array())).matrix());
        MatrixXd d_i = dct.cwiseProduct(cache.g)
                           .cwiseProduct((cache.i.array() * (1.0 - cache.i.array())).matrix());
        MatrixXd d_f = dct.cwiseProduct(c_prev)
                           .cwiseProduct((cache.f.array() * (1.0 - cache.f.array())).matrix());
        MatrixXd d_g = dct.cwiseProduct(cache.i)
                           .cwiseProduct((1.0 - cache.g.array().square()).matrix());

        MatrixXd dz = d_i * w[0].transpose();
        dz.noalias() += d_f * w[1].transpose();
        dz.noalias() += d_g * w[2].transpose();
        dz.noalias() += d_o * w[3].transpose();

        dw[0].noalias() += cache.z.transpose() * d_i;
        dw[1].noalias() += cache.z.transpose() * d_f;
        dw[2].noalias() += cache.z.transpose() * d_g;
        dw[3].noalias() += cache.z.transpose() * d_o;
        db[0].row(0) += d_i.colwise().sum();
        db[1].row(0) += d_f.colwise().sum();
        db[2].row(0) += d_g.colwise().sum();
        db[3].row(0) += d_o.colwise().sum();

        dx = dz.leftCols(input_size_);
        dh_prev = dz.rightCols(units_);
        dc = dct.cwiseProduct(cache.f);
    }

    void collect_params(ParamSet& out, const std::string& prefix) {
        static const char* names[kGates] = {"wi", "wf", "wg", "wo"};
        static const char* bnames[kGates] = {"bi", "bf", "bg", "bo"};
        for (int g = 0; g < kGates; ++g) {
            out.push_back({prefix + "." + names[g], &w[g], &dw[g]});
            out.push_back({prefix + "." + bnames[g], &b[g], &db[g]});
        }
    }

private:
    int input_size_ = 0;
    int units_ = 0;
};

// ---------------------------------------------------------------------------
// Losses.

struct LossResult {
    double value = 0.0;
    MatrixXd grad;  // dL/d(prediction or logits), same shape as the input
};

// Mean over all entries of the squared difference.
inline LossResult mse_loss(const MatrixXd& pred, const MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("mse_loss: shape mismatch");
    const double n = static_cast<double>(pred.size());
    MatrixXd diff = pred - target;
    LossResult r;
    r.value = diff.squaredNorm() / n;
    r.grad = (2.0 / n) * diff;
    return r;
}

// Binary cross-entropy on logits (stable form); labels in {0,1}, one column.
// Loss is the mean over the batch; grad is w.r.t. the logits.
inline LossResult bce_with_logits(const MatrixXd& logits, const VectorXd& labels) {
    if (logits.cols() != 1 || logits.rows() != labels.size())
        throw std::invalid_argument("bce_with_logits: shape mismatch");
    const double n = static_cast<double>(logits.rows());
    LossResult r;
    r.grad.resize(logits.rows(), 1);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double z = logits(i, 0), y = labels[i];
        acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        double p = 1.0 / (1.0 + std::exp(-z));
        r.grad(i, 0) = (p - y) / n;
    }
    r.value = acc / n;
    return r;
}

// Categorical cross-entropy on logits with integer class labels.
inline LossResult softmax_cross_entropy(const MatrixXd& logits,
                                        const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw std::invalid_argument("softmax_cross_entropy: shape mismatch");
    const double n = static_cast<double>(logits.rows());
    MatrixXd probs = apply_activation(Activation::softmax, logits);
    LossResult r;
    r.grad = probs / n;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int c = labels[static_cast<std::size_t>(i)];
        if (c < 0 || c >= logits.cols())
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        acc -= std::log(std::max(probs(i, c), 1e-300));
        r.grad(i, c) -= 1.0 / n;
    }
    r.value = acc / n;
    return r;
}

// ---------------------------------------------------------------------------
// Adam with bias correction. One step() covers every registered parameter
// and bumps the shared step counter once.

class AdamOptimizer {
public:
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamOptimizer(double learning_rate = 0.001) : lr(learning_rate) {}

    void reset(const ParamSet& params) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.push_back(MatrixXd::Zero(p.value->rows(), p.value->cols()));
            v_.push_back(MatrixXd::Zero(p.value->rows(), p.value->cols()));
        }
        step_count_ = 0;
    }

    long step_count() const { return step_count_; }

    void step(const ParamSet& params) {
        if (m_.size() != params.size())
            throw std::invalid_argument("adam: optimizer not initialized for these params");
        ++step_count_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const MatrixXd& g = *params[i].grad;
            if (g.rows() != m_[i].rows() || g.cols() != m_[i].cols())
                throw std::invalid_argument("adam: gradient shape mismatch");
            m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
            v_[i] = beta2 * v_[i] + (1.0 - beta2) * g.cwiseAbs2();
            MatrixXd m_hat = m_[i] / bc1;
            MatrixXd v_hat = v_[i] / bc2;
            *params[i].value -=
                lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps).matrix());
        }
    }

private:
    std::vector<MatrixXd> m_, v_;
    long step_count_ = 0;
};

// ---------------------------------------------------------------------------
// Central finite-difference gradient check. `loss_fn` must recompute the
// full forward loss from current parameter values; analytic gradients are
// read from the registry's grad buffers.

struct GradCheckEntry {
    std::string param;
    std::size_t index;
    double analytic;
    double numeric;
    double rel_error;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    GradCheckEntry worst{};
    std::size_t n_checked = 0;

    bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

inline GradCheckReport grad_check(const ParamSet& params,
                                  const std::function<double()>& loss_fn,
                                  double eps = 1e-5) {
    GradCheckReport report;
    for (const auto& p : params) {
        for (Eigen::Index i = 0; i < p.value->size(); ++i) {
            double saved = p.value->data()[i];
            p.value->data()[i] = saved + eps;
            double up = loss_fn();
            p.value->data()[i] = saved - eps;
            double down = loss_fn();
            p.value->data()[i] = saved;
            double numeric = (up - down) / (2.0 * eps);
            double analytic = p.grad->data()[i];
            double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
            ++report.n_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = {p.name, static_cast<std::size_t>(i), analytic, numeric, rel};
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Plain MLP with ReLU hidden layers and an identity (logit) head; the
// detector wraps this with sigmoid/softmax semantics via the fused losses.

class Mlp {
public:
    std::vector<DenseLayer> layers;

    Mlp() = default;
    Mlp(int in, const std::vector<int>& hidden, int out, std::uint64_t seed) {
        auto rng = make_rng(seed);
        int prev = in;
        for (int h : hidden) {
            layers.emplace_back(prev, h, Activation::relu);
            layers.back().init(rng);
            prev = h;
        }
        layers.emplace_back(prev, out, Activation::identity);
        layers.back().init(rng);
    }

    int in_size() const { return layers.front().in_size(); }
    int out_size() const { return layers.back().out_size(); }

    MatrixXd forward(const MatrixXd& x) const {
        MatrixXd cur = x;
        for (const auto& l : layers) cur = l.forward(cur);
        return cur;
    }

    MatrixXd forward_train(const MatrixXd& x) {
        MatrixXd cur = x;
        for (auto& l : layers) cur = l.forward_train(cur);
        return cur;
    }

    // dlogits comes from a fused loss; hidden layers backprop normally.
    void backward(const MatrixXd& dlogits) {
        MatrixXd cur = layers.back().backward_from_preact(dlogits);
        for (std::size_t i = layers.size() - 1; i-- > 0;) cur = layers[i].backward(cur);
    }

    ParamSet params() {
        ParamSet out;
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].collect_params(out, "layer" + std::to_string(i));
        return out;
    }
};

}  // namespace fdialab
