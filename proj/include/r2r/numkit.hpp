#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "r2r/common.hpp"
#include "r2r/matrix.hpp"

namespace r2r {

// Probability clamp used by every log / BCE computation.
constexpr double kProbEps = 1e-7;

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow for |x| up to 1e6.
inline double stable_log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

inline double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

inline double bce_loss(double p, double y) {
    p = clamp_prob(p);
    return -y * std::log(p) - (1.0 - y) * std::log1p(-p);
}

enum class Activation { ReLU };

struct MlpParams {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> weights;  // weights[i] is (layer_sizes[i+1], layer_sizes[i])
    std::vector<std::vector<double>> biases;
    Activation activation = Activation::ReLU;
    std::vector<std::uint8_t> spectral_norm_mask;  // one flag per weight layer

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t n_layers() const { return weights.size(); }
};

// He-normal init, zero biases. Default spectral-norm mask marks the last hidden
// layer only; whether it is applied is the trainer's call.
inline MlpParams make_mlp(const std::vector<std::size_t>& layer_sizes, Rng& rng) {
    if (layer_sizes.size() < 2) throw ArgumentError("mlp needs input and output sizes");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw ArgumentError("mlp layer size must be positive");
    MlpParams p;
    p.layer_sizes = layer_sizes;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        Matrix w(layer_sizes[l + 1], layer_sizes[l]);
        const double scale = std::sqrt(2.0 / static_cast<double>(layer_sizes[l]));
        for (auto& v : w.data) v = gauss(rng) * scale;
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(layer_sizes[l + 1], 0.0);
    }
    p.spectral_norm_mask.assign(p.weights.size(), 0);
    if (p.weights.size() >= 2) p.spectral_norm_mask[p.weights.size() - 2] = 1;
    return p;
}

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre_acts;   // one per layer
    std::vector<Matrix> post_acts;  // one per hidden layer
};

inline Matrix mlp_forward(const MlpParams& p, const Matrix& batch, ForwardCache* cache = nullptr) {
    if (p.weights.empty()) throw ShapeError("mlp_forward: empty network");
    if (batch.cols != p.layer_sizes.front())
        throw ShapeError("mlp_forward: input " + shape_str(batch) + " expects cols " +
                         std::to_string(p.layer_sizes.front()));
    const std::size_t L = p.weights.size();
    if (cache) {
        cache->input = batch;
        cache->pre_acts.clear();
        cache->post_acts.clear();
        cache->pre_acts.reserve(L);
        cache->post_acts.reserve(L - 1);
    }
    const Matrix* cur = &batch;
    Matrix carry;
    for (std::size_t l = 0; l < L; ++l) {
        Matrix z = matmul_nt(*cur, p.weights[l]);
        add_bias_rows(z, p.biases[l]);
        if (l + 1 == L) {
            if (cache) cache->pre_acts.push_back(z);
            return z;
        }
        Matrix act = z;
        for (auto& v : act.data) v = v > 0.0 ? v : 0.0;
        if (cache) {
            cache->pre_acts.push_back(std::move(z));
            cache->post_acts.push_back(act);
        }
        carry = std::move(act);
        cur = &carry;
    }
    throw ShapeError("mlp_forward: unreachable");
}

struct MlpGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

inline void clear_grads(MlpGrads& g) {
    for (auto& w : g.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
    for (auto& b : g.biases) std::fill(b.begin(), b.end(), 0.0);
}

inline MlpGrads zero_grads_like(const MlpParams& p) {
    MlpGrads g;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        g.weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
        g.biases.emplace_back(p.biases[l].size(), 0.0);
    }
    return g;
}

// Reverse pass. Accumulates into grads (callers may run several passes over one
// grad buffer) and returns the gradient with respect to the input batch.
inline Matrix mlp_backward(const MlpParams& p, const ForwardCache& cache, const Matrix& output_grad,
                           MlpGrads& grads) {
    const std::size_t L = p.weights.size();
    if (cache.pre_acts.size() != L || cache.post_acts.size() + 1 != L ||
        cache.input.cols != p.layer_sizes.front())
        throw ShapeError("mlp_backward: cache does not match network");
    if (grads.weights.size() != L) throw ShapeError("mlp_backward: grads do not match network");
    for (std::size_t l = 0; l < L; ++l) {
        if (!grads.weights[l].same_shape(p.weights[l]) ||
            grads.biases[l].size() != p.biases[l].size() ||
            cache.pre_acts[l].cols != p.layer_sizes[l + 1] ||
            cache.pre_acts[l].rows != cache.input.rows)
            throw ShapeError("mlp_backward: stale or mismatched cache");
    }
    if (!output_grad.same_shape(cache.pre_acts.back()))
        throw ShapeError("mlp_backward: output_grad " + shape_str(output_grad) + " vs cache " +
                         shape_str(cache.pre_acts.back()));

    Matrix delta = output_grad;
    for (std::size_t l = L; l-- > 0;) {
        const Matrix& a_prev = (l == 0) ? cache.input : cache.post_acts[l - 1];
        matmul_tn_acc(delta, a_prev, grads.weights[l]);
        colsum_acc(delta, grads.biases[l]);
        Matrix dprev = matmul_nn(delta, p.weights[l]);
        if (l == 0) return dprev;
        // ReLU subgradient; exactly-zero pre-activation contributes 0.
        const Matrix& z = cache.pre_acts[l - 1];
        for (std::size_t i = 0; i < dprev.data.size(); ++i)
            if (!(z.data[i] > 0.0)) dprev.data[i] = 0.0;
        delta = std::move(dprev);
    }
    throw ShapeError("mlp_backward: unreachable");
}

// Central finite differences over every scalar parameter. Test oracle; must not
// share code with mlp_backward.
inline MlpGrads finite_diff_grad(const std::function<double(const MlpParams&)>& loss_fn,
                                 const MlpParams& params, double h) {
    if (!(h > 0.0)) throw ArgumentError("finite_diff_grad: h must be positive");
    MlpParams p = params;
    MlpGrads g = zero_grads_like(params);
    auto probe = [&](double& slot) {
        const double orig = slot;
        slot = orig + h;
        const double lp = loss_fn(p);
        slot = orig - h;
        const double lm = loss_fn(p);
        slot = orig;
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw NumericError("finite_diff_grad: loss not finite");
        return (lp - lm) / (2.0 * h);
    };
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        for (std::size_t i = 0; i < p.weights[l].data.size(); ++i)
            g.weights[l].data[i] = probe(p.weights[l].data[i]);
        for (std::size_t i = 0; i < p.biases[l].size(); ++i)
            g.biases[l][i] = probe(p.biases[l][i]);
    }
    return g;
}

struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    std::uint64_t step_count = 0;
    std::vector<Matrix> m_weights, v_weights;
    std::vector<std::vector<double>> m_biases, v_biases;
};

inline AdamState make_adam(const MlpParams& p, double lr) {
    AdamState st;
    st.learning_rate = lr;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        st.m_weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
        st.v_weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
        st.m_biases.emplace_back(p.biases[l].size(), 0.0);
        st.v_biases.emplace_back(p.biases[l].size(), 0.0);
    }
    return st;
}

inline void adam_span(double* __restrict p, const double* __restrict g, double* __restrict m,
                      double* __restrict v, std::size_t n, const AdamState& st, double c1,
                      double c2) {
    const double b1 = st.beta1, b2 = st.beta2, lr = st.learning_rate, eps = st.epsilon;
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        if (!std::isfinite(gi))
            throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        const double mh = m[i] / c1;
        const double vh = v[i] / c2;
        p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

inline void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st) {
    if (g.weights.size() != p.weights.size() || st.m_weights.size() != p.weights.size())
        throw ShapeError("adam_step: state/grads do not match params");
    ++st.step_count;
    const double t = static_cast<double>(st.step_count);
    const double c1 = 1.0 - std::pow(st.beta1, t);
    const double c2 = 1.0 - std::pow(st.beta2, t);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        if (!g.weights[l].same_shape(p.weights[l]))
            throw ShapeError("adam_step: grad shape mismatch at layer " + std::to_string(l));
        adam_span(p.weights[l].data.data(), g.weights[l].data.data(), st.m_weights[l].data.data(),
                  st.v_weights[l].data.data(), p.weights[l].data.size(), st, c1, c2);
        adam_span(p.biases[l].data(), g.biases[l].data(), st.m_biases[l].data(),
                  st.v_biases[l].data(), p.biases[l].size(), st, c1, c2);
    }
}

struct SpectralNormState {
    std::vector<double> u, v;  // left/right singular vector estimates
};

inline SpectralNormState make_spectral_norm_state(std::size_t rows, std::size_t cols, Rng& rng) {
    SpectralNormState st;
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto unit = [&](std::size_t n) {
        std::vector<double> x(n);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& e : x) {
                e = gauss(rng);
                norm += e * e;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (auto& e : x) e /= norm;
        return x;
    };
    st.u = unit(rows);
    st.v = unit(cols);
    return st;
}

// One state per weight layer; only masked layers get normalized.
inline std::vector<SpectralNormState> make_spectral_norm_states(const MlpParams& p, Rng& rng) {
    std::vector<SpectralNormState> states;
    states.reserve(p.weights.size());
    for (const auto& w : p.weights) states.push_back(make_spectral_norm_state(w.rows, w.cols, rng));
    return states;
}

// Divides w by a warm-started power-iteration estimate of its top singular
// value. Mutating projection: gradients downstream treat the normalized weights
// as the parameters.
inline void spectral_normalize(Matrix& w, SpectralNormState& st, std::size_t power_iterations = 1) {
    if (power_iterations < 1) throw ArgumentError("spectral_normalize: need >= 1 iteration");
    if (st.u.size() != w.rows || st.v.size() != w.cols)
        throw ShapeError("spectral_normalize: state does not match weight shape");
    const std::size_t r = w.rows, c = w.cols;
    for (std::size_t it = 0; it < power_iterations; ++it) {
        // v <- normalize(W^T u)
        double vnorm = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < r; ++i) s += w(i, j) * st.u[i];
            st.v[j] = s;
            vnorm += s * s;
        }
        vnorm = std::sqrt(vnorm);
        if (vnorm < 1e-300) return;  // zero / degenerate matrix: skip
        for (auto& e : st.v) e /= vnorm;
        // u <- normalize(W v)
        double unorm = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            const double* __restrict wi = w.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += wi[j] * st.v[j];
            st.u[i] = s;
            unorm += s * s;
        }
        unorm = std::sqrt(unorm);
        if (unorm < 1e-300) return;
        for (auto& e : st.u) e /= unorm;
    }
    double sigma = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        const double* __restrict wi = w.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += wi[j] * st.v[j];
        sigma += st.u[i] * s;
    }
    if (sigma < 1e-300) return;
    for (auto& e : w.data) e /= sigma;
}

inline void apply_spectral_norm(MlpParams& p, std::vector<SpectralNormState>& states,
                                std::size_t power_iterations = 1) {
    if (states.size() != p.weights.size())
        throw ShapeError("apply_spectral_norm: state count mismatch");
    for (std::size_t l = 0; l < p.weights.size(); ++l)
        if (p.spectral_norm_mask[l]) spectral_normalize(p.weights[l], states[l], power_iterations);
}

inline std::pair<std::vector<double>, double> mixup_pair(const std::vector<double>& x1, double y1,
                                                         const std::vector<double>& x2, double y2,
                                                         double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ArgumentError("mixup lambda outside [0,1]: " + std::to_string(lambda));
    if (x1.size() != x2.size()) throw ShapeError("mixup operands differ in length");
    std::vector<double> x(x1.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = lambda * x1[i] + (1.0 - lambda) * x2[i];
    return {std::move(x), lambda * y1 + (1.0 - lambda) * y2};
}

// Beta(1,1) is uniform on [0,1].
inline double sample_mixup_lambda(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// In-place mixup over row-aligned matrices sharing one label vector: each row i
// is blended with a random partner row using a per-row lambda. Draw order is
// partners first, then lambdas, so callers can replay it.
inline void mixup_batch(const std::vector<Matrix*>& mats, std::vector<double>& labels, Rng& rng) {
    const std::size_t n = labels.size();
    if (n == 0) throw ArgumentError("mixup_batch: empty batch");
    for (Matrix* m : mats)
        if (m == nullptr || m->rows != n) throw ShapeError("mixup_batch: row count mismatch");
    std::vector<std::size_t> partner(n);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < n; ++i) partner[i] = pick(rng);
    std::vector<double> lambda(n);
    for (std::size_t i = 0; i < n; ++i) lambda[i] = sample_mixup_lambda(rng);
    for (Matrix* m : mats) {
        const Matrix orig = *m;
        for (std::size_t i = 0; i < n; ++i) {
            const double lam = lambda[i];
            const double* __restrict a = orig.row(i);
            const double* __restrict b = orig.row(partner[i]);
            double* __restrict out = m->row(i);
            for (std::size_t j = 0; j < m->cols; ++j) out[j] = lam * a[j] + (1.0 - lam) * b[j];
        }
    }
    const std::vector<double> orig_labels = labels;
    for (std::size_t i = 0; i < n; ++i)
        labels[i] = lambda[i] * orig_labels[i] + (1.0 - lambda[i]) * orig_labels[partner[i]];
}

}  // namespace r2r
