#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "loss.hpp"
#include "params.hpp"
#include "rng.hpp"

namespace fedcyte {

enum class ModelKind { SoftmaxRegression, Mlp1h };

inline std::string to_string(ModelKind k) { return k == ModelKind::SoftmaxRegression ? "softmax" : "mlp1h"; }

/**
 * Reference classifier shapes.
 *
 * Parameter layout (row-major blocks, in this order):
 *   SoftmaxRegression: W[c][d], b[c]
 *   Mlp1h:             W1[h][d], b1[h], W2[c][h], b2[c]   (tanh hidden layer)
 *
 * The first floor(frozen_fraction * parameter_count) coordinates are frozen.
 */
struct ModelSpec {
    ModelKind kind = ModelKind::SoftmaxRegression;
    std::size_t input_dim = 1;
    std::size_t num_classes = 11;
    std::size_t hidden_dim = 32;
    double frozen_fraction = 0.0;

    static double default_frozen_fraction(ModelKind k) { return k == ModelKind::Mlp1h ? 0.5 : 0.0; }

    void validate() const {
        if (input_dim == 0 || num_classes == 0) throw ConfigError("model: input_dim and num_classes must be positive");
        if (kind == ModelKind::Mlp1h && hidden_dim == 0) throw ConfigError("model: hidden_dim must be positive");
        if (!(frozen_fraction >= 0.0 && frozen_fraction < 1.0))
            throw ConfigError("model: frozen_fraction must be in [0, 1)");
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline std::size_t parameter_count(const ModelSpec& s) {
    if (s.kind == ModelKind::SoftmaxRegression) return s.input_dim * s.num_classes + s.num_classes;
    return s.input_dim * s.hidden_dim + s.hidden_dim + s.hidden_dim * s.num_classes + s.num_classes;
}

inline std::size_t frozen_prefix(const ModelSpec& s) {
    return static_cast<std::size_t>(std::floor(s.frozen_fraction * static_cast<double>(parameter_count(s))));
}

/// Glorot-uniform weights, zero biases.
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto w = ParamVector::zeros(parameter_count(spec), frozen_prefix(spec));
    Rng rng(derive_seed(seed, "init"));
    auto fill = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (std::size_t i = 0; i < fan_out * fan_in; ++i) w[offset + i] = rng.uniform(-s, s);
    };
    const auto d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
    if (spec.kind == ModelKind::SoftmaxRegression) {
        fill(0, c, d);
    } else {
        fill(0, h, d);
        fill(h * d + h, c, h);
    }
    return w;
}

namespace detail {

inline void softmax_inplace(std::span<double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

inline void check_shapes(const ModelSpec& spec, const ParamVector& w) {
    if (w.size() != parameter_count(spec))
        throw DimensionError("model: expected " + std::to_string(parameter_count(spec)) + " parameters, got " +
                             std::to_string(w.size()));
}

/// Logits for one sample; `hidden` receives tanh activations for Mlp1h.
inline void logits(const ModelSpec& spec, std::span<const double> w, std::span<const double> x,
                   std::span<double> z, std::span<double> hidden) {
    const auto d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
    if (spec.kind == ModelKind::SoftmaxRegression) {
        const double* W = w.data();
        const double* b = W + c * d;
        for (std::size_t k = 0; k < c; ++k) {
            double acc = b[k];
            for (std::size_t j = 0; j < d; ++j) acc += W[k * d + j] * x[j];
            z[k] = acc;
        }
        return;
    }
    const double* W1 = w.data();
    const double* b1 = W1 + h * d;
    const double* W2 = b1 + h;
    const double* b2 = W2 + c * h;
    for (std::size_t u = 0; u < h; ++u) {
        double acc = b1[u];
        for (std::size_t j = 0; j < d; ++j) acc += W1[u * d + j] * x[j];
        hidden[u] = std::tanh(acc);
    }
    for (std::size_t k = 0; k < c; ++k) {
        double acc = b2[k];
        for (std::size_t u = 0; u < h; ++u) acc += W2[k * h + u] * hidden[u];
        z[k] = acc;
    }
}

} // namespace detail

/// Class probabilities for one feature vector.
inline std::vector<double> forward(const ModelSpec& spec, const ParamVector& w, std::span<const double> x) {
    detail::check_shapes(spec, w);
    if (x.size() != spec.input_dim)
        throw DimensionError("forward: expected " + std::to_string(spec.input_dim) + " features, got " +
                             std::to_string(x.size()));
    std::vector<double> z(spec.num_classes);
    std::vector<double> hidden(spec.kind == ModelKind::Mlp1h ? spec.hidden_dim : 0);
    detail::logits(spec, w.values(), x, z, hidden);
    detail::softmax_inplace(z);
    return z;
}

/// Argmax of forward(), lowest index on ties.
inline std::size_t predict(const ModelSpec& spec, const ParamVector& w, std::span<const double> x) {
    const auto p = forward(spec, w, x);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

struct LossAndGrad {
    double loss;
    ParamVector grad;
};

/**
 * Mean focal loss over `batch` (indices into `ds`) and its gradient with
 * respect to `w`. Frozen coordinates of the gradient are zero.
 */
inline LossAndGrad loss_and_grad(const ModelSpec& spec, const ParamVector& w, const LabeledDataset& ds,
                                 std::span<const std::size_t> batch, const FocalConfig& focal) {
    detail::check_shapes(spec, w);
    if (batch.empty()) throw DataError("loss_and_grad: empty batch");
    if (ds.dim() != spec.input_dim) throw DimensionError("loss_and_grad: dataset dimension does not match model");
    if (ds.num_classes() != spec.num_classes)
        throw DimensionError("loss_and_grad: dataset class count does not match model");

    const auto d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
    const bool mlp = spec.kind == ModelKind::Mlp1h;
    auto grad = ParamVector::zeros_like(w);
    std::span<double> g = grad.values();
    std::span<const double> wv = w.values();

    std::vector<double> z(c), hidden(mlp ? h : 0), dhidden(mlp ? h : 0);
    double total = 0.0;
    for (auto i : batch) {
        if (i >= ds.size()) throw DataError("loss_and_grad: sample index out of range");
        const auto x = ds.row(i);
        const std::size_t y = ds.label(i);
        if (y >= c) throw DataError("loss_and_grad: label out of range");
        detail::logits(spec, wv, x, z, hidden);
        detail::softmax_inplace(z);
        total += focal_loss(z, y, focal);
        const double scale = focal_logit_scale(z[y], focal.alpha_for(y), focal.gamma);
        // z now holds dL/dlogit.
        for (std::size_t k = 0; k < c; ++k) z[k] = scale * ((k == y ? 1.0 : 0.0) - z[k]);

        if (!mlp) {
            double* gW = g.data();
            double* gb = gW + c * d;
            for (std::size_t k = 0; k < c; ++k) {
                for (std::size_t j = 0; j < d; ++j) gW[k * d + j] += z[k] * x[j];
                gb[k] += z[k];
            }
            continue;
        }
        const double* W2 = wv.data() + h * d + h;
        double* gW1 = g.data();
        double* gb1 = gW1 + h * d;
        double* gW2 = gb1 + h;
        double* gb2 = gW2 + c * h;
        std::fill(dhidden.begin(), dhidden.end(), 0.0);
        for (std::size_t k = 0; k < c; ++k) {
            for (std::size_t u = 0; u < h; ++u) {
                gW2[k * h + u] += z[k] * hidden[u];
                dhidden[u] += W2[k * h + u] * z[k];
            }
            gb2[k] += z[k];
        }
        for (std::size_t u = 0; u < h; ++u) {
            const double da = dhidden[u] * (1.0 - hidden[u] * hidden[u]);
            for (std::size_t j = 0; j < d; ++j) gW1[u * d + j] += da * x[j];
            gb1[u] += da;
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& v : g) v *= inv;
    grad.zero_frozen();
    return {total * inv, std::move(grad)};
}

/// Whole-dataset overload.
inline LossAndGrad loss_and_grad(const ModelSpec& spec, const ParamVector& w, const LabeledDataset& ds,
                                 const FocalConfig& focal) {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return loss_and_grad(spec, w, ds, all, focal);
}

} // namespace fedcyte
