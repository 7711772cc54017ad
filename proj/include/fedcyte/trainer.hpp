#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "client_update.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "loss.hpp"
#include "model.hpp"
#include "params.hpp"

namespace fedcyte {

struct TrainerConfig {
    std::int64_t local_epochs = 5;
    std::int64_t micro_batch = 8;
    std::int64_t accumulation_steps = 4;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double clip_max_norm = 1.0;
    double prox_mu = 0.0;
    std::uint64_t seed = 0;

    std::int64_t effective_batch() const { return micro_batch * accumulation_steps; }

    void validate() const {
        if (local_epochs < 0) throw ConfigError("trainer: local_epochs must be >= 0");
        if (micro_batch < 1 || accumulation_steps < 1)
            throw ConfigError("trainer: micro_batch and accumulation_steps must be >= 1");
        if (!(learning_rate >= 0.0)) throw ConfigError("trainer: learning_rate must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("trainer: momentum must be in [0, 1)");
        if (!(clip_max_norm > 0.0)) throw ConfigError("trainer: clip_max_norm must be > 0");
        if (!(prox_mu >= 0.0)) throw ConfigError("trainer: prox_mu must be >= 0");
    }

    friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

inline ParamVector clip_gradient(const ParamVector& g, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("clip_gradient: max_norm must be > 0");
    const double norm = l2_norm(g);
    if (norm <= max_norm) return g;
    ParamVector out = g;
    const double s = max_norm / norm;
    for (auto& v : out.values()) v *= s;
    return out;
}

/// Observes every optimizer step; `grad` is the clipped gradient about to be applied.
struct StepEvent {
    std::int64_t epoch;
    std::int64_t step;
    double loss;
    const ParamVector& grad;
};
using StepHook = std::function<void(const StepEvent&)>;

inline std::int64_t steps_per_epoch(std::size_t n, const TrainerConfig& cfg) {
    const auto eb = static_cast<std::size_t>(cfg.effective_batch());
    return static_cast<std::int64_t>((n + eb - 1) / eb);
}

/**
 * Trains from `w_global` on `train` and returns the client update.
 *
 * Each optimizer step averages the mean gradients of `accumulation_steps`
 * micro-batches drawn by the weighted sampler, adds prox_mu * (w - w_global),
 * clips to clip_max_norm and applies heavy-ball momentum
 * (v <- momentum * v + g; w <- w - lr * v). Momentum starts at zero on
 * every call. An epoch is ceil(n / effective_batch) steps.
 */
inline ClientUpdate local_train(const ModelSpec& spec, const ParamVector& w_global, const LabeledDataset& train,
                                const TrainerConfig& cfg, const FocalConfig& focal, std::string client_id = {},
                                const StepHook& hook = {}) {
    cfg.validate();
    if (train.empty()) throw DataError("local_train: empty training set");
    if (w_global.size() != parameter_count(spec)) throw DimensionError("local_train: parameter count mismatch");

    ParamVector w = w_global;
    auto velocity = ParamVector::zeros_like(w);
    WeightedSampler sampler(train, cfg.seed);
    const auto steps = steps_per_epoch(train.size(), cfg);
    std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.micro_batch));
    const double inv_acc = 1.0 / static_cast<double>(cfg.accumulation_steps);

    std::int64_t global_step = 0;
    for (std::int64_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        for (std::int64_t s = 0; s < steps; ++s, ++global_step) {
            auto grad = ParamVector::zeros_like(w);
            double loss = 0.0;
            for (std::int64_t a = 0; a < cfg.accumulation_steps; ++a) {
                for (auto& i : batch) i = sampler.next();
                auto lg = loss_and_grad(spec, w, train, batch, focal);
                loss += lg.loss * inv_acc;
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += lg.grad[i] * inv_acc;
            }
            if (cfg.prox_mu > 0.0) {
                for (std::size_t i = 0; i < grad.size(); ++i)
                    if (w.trainable(i)) grad[i] += cfg.prox_mu * (w[i] - w_global[i]);
            }
            grad = clip_gradient(grad, cfg.clip_max_norm);
            if (hook) hook(StepEvent{epoch, global_step, loss, grad});
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (!w.trainable(i)) continue;
                velocity[i] = cfg.momentum * velocity[i] + grad[i];
                w[i] -= cfg.learning_rate * velocity[i];
            }
        }
    }
    if (!w.all_finite()) throw DataError("local_train: parameters diverged");
    return {std::move(client_id), std::move(w), static_cast<std::int64_t>(train.size())};
}

} // namespace fedcyte
