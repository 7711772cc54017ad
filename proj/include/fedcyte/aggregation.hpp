#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "client_update.hpp"
#include "errors.hpp"
#include "params.hpp"

namespace fedcyte {

enum class StrategyKind { FedAvg, FedMedian, FedProx, FedOpt };

inline std::string to_string(StrategyKind k) {
    switch (k) {
    case StrategyKind::FedAvg: return "FedAvg";
    case StrategyKind::FedMedian: return "FedMedian";
    case StrategyKind::FedProx: return "FedProx";
    case StrategyKind::FedOpt: return "FedOpt";
    }
    return "?";
}

struct FedOptConfig {
    double server_lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double tau = 1e-3;

    friend bool operator==(const FedOptConfig&, const FedOptConfig&) = default;
};

struct FedMedianConfig {
    bool iqr_filter = true;
    double iqr_k = 1.5;

    friend bool operator==(const FedMedianConfig&, const FedMedianConfig&) = default;
};

struct AggregationStrategy {
    StrategyKind kind = StrategyKind::FedAvg;
    FedOptConfig fedopt{};
    FedMedianConfig fedmedian{};
    double fedprox_mu = 0.01;  ///< applied by the client trainer, not here

    void validate() const {
        if (!(fedopt.server_lr >= 0.0)) throw ConfigError("fedopt.server_lr must be >= 0");
        if (!(fedopt.beta1 >= 0.0 && fedopt.beta1 < 1.0)) throw ConfigError("fedopt.beta1 must be in [0, 1)");
        if (!(fedopt.beta2 >= 0.0 && fedopt.beta2 < 1.0)) throw ConfigError("fedopt.beta2 must be in [0, 1)");
        if (!(fedopt.tau > 0.0)) throw ConfigError("fedopt.tau must be > 0");
        if (!(fedmedian.iqr_k > 0.0)) throw ConfigError("fedmedian.iqr_k must be > 0");
        if (!(fedprox_mu > 0.0)) throw ConfigError("fedprox_mu must be > 0");
    }

    friend bool operator==(const AggregationStrategy&, const AggregationStrategy&) = default;
};

/// Server Adam moments. `step` counts completed FedOpt rounds.
struct ServerOptState {
    ParamVector m;
    ParamVector v;
    std::int64_t step = 0;

    static ServerOptState fresh(const ParamVector& like) {
        return {ParamVector::zeros_like(like), ParamVector::zeros_like(like), 0};
    }
};

namespace detail {

inline void check_updates(std::span<const ClientUpdate> updates, const char* where) {
    if (updates.empty()) throw DataError(std::string(where) + ": no client updates");
    for (const auto& u : updates) {
        require_same_shape(u.params, updates[0].params, where);
        if (u.n < 1) throw DataError(std::string(where) + ": client '" + u.client_id + "' reports n < 1");
    }
}

/// Median of a non-empty range; even counts take the midpoint of the middle two.
inline double median_inplace(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const auto k = v.size();
    if (k % 2 == 1) return v[k / 2];
    return 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

/// Linear-interpolation quantile of sorted data, q in [0,1].
inline double quantile_sorted(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

} // namespace detail

/// Sample-size-weighted mean, w = sum (n_i / n) w_i. Frozen coordinates are copied.
inline ParamVector fedavg(std::span<const ClientUpdate> updates) {
    detail::check_updates(updates, "fedavg");
    double total = 0.0;
    for (const auto& u : updates) total += static_cast<double>(u.n);
    // Anchored on the first update so identical inputs average to themselves exactly.
    const auto& base = updates[0].params;
    auto out = base;
    for (std::size_t k = 1; k < updates.size(); ++k) {
        const double weight = static_cast<double>(updates[k].n) / total;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out.trainable(i)) out[i] += weight * (updates[k].params[i] - base[i]);
    }
    return out;
}

/// FedProx aggregates exactly like FedAvg; its proximal term acts in local training.
inline ParamVector fedprox_aggregate(std::span<const ClientUpdate> updates) { return fedavg(updates); }

/**
 * Indices of the updates kept by the IQR filter. Each update is scored by its
 * L2 distance to the unweighted coordinate mean; scores outside
 * [Q1 - k IQR, Q3 + k IQR] are dropped. With fewer than four updates nothing
 * is dropped, and at least two updates always survive (the two closest).
 */
inline std::vector<std::size_t> iqr_survivors(std::span<const ClientUpdate> updates, double k) {
    std::vector<std::size_t> all(updates.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (updates.size() < 4) return all;

    const std::size_t dim = updates[0].params.size();
    std::vector<double> mean(dim, 0.0);
    const double inv = 1.0 / static_cast<double>(updates.size());
    for (const auto& u : updates)
        for (std::size_t i = 0; i < dim; ++i) mean[i] += u.params[i] * inv;

    std::vector<double> dist(updates.size());
    for (std::size_t c = 0; c < updates.size(); ++c) {
        std::vector<double> diff(dim);
        for (std::size_t i = 0; i < dim; ++i) diff[i] = updates[c].params[i] - mean[i];
        dist[c] = l2_norm(ParamVector(std::move(diff)));
    }
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    const double q1 = detail::quantile_sorted(sorted, 0.25);
    const double q3 = detail::quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - k * iqr, hi = q3 + k * iqr;

    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < updates.size(); ++c)
        if (dist[c] >= lo && dist[c] <= hi) kept.push_back(c);
    if (kept.size() >= 2) return kept;

    std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    kept.assign(all.begin(), all.begin() + 2);
    std::sort(kept.begin(), kept.end());
    return kept;
}

/// Unweighted coordinate-wise median of the updates that survive IQR filtering.
inline ParamVector fedmedian(std::span<const ClientUpdate> updates, const FedMedianConfig& cfg = {}) {
    detail::check_updates(updates, "fedmedian");
    std::vector<std::size_t> keep;
    if (cfg.iqr_filter) {
        keep = iqr_survivors(updates, cfg.iqr_k);
    } else {
        keep.resize(updates.size());
        std::iota(keep.begin(), keep.end(), std::size_t{0});
    }
    auto out = ParamVector::zeros_like(updates[0].params);
    std::vector<double> column(keep.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out.trainable(i)) {
            out[i] = updates[0].params[i];
            continue;
        }
        for (std::size_t j = 0; j < keep.size(); ++j) column[j] = updates[keep[j]].params[i];
        out[i] = detail::median_inplace(column);
    }
    return out;
}

struct FedOptResult {
    ParamVector params;
    ServerOptState state;
};

/**
 * Server-side Adam on the pseudo-gradient delta = fedavg(updates) - w_prev:
 *   m <- b1 m + (1 - b1) delta,  v <- b2 v + (1 - b2) delta^2
 *   w  = w_prev + lr * m_hat / (sqrt(v_hat) + tau)
 * with bias correction at t = step + 1. Frozen coordinates stay at w_prev.
 */
inline FedOptResult fedopt_step(const ParamVector& w_prev, std::span<const ClientUpdate> updates,
                                ServerOptState state, const FedOptConfig& cfg) {
    detail::check_updates(updates, "fedopt_step");
    require_same_shape(w_prev, updates[0].params, "fedopt_step");
    require_same_shape(w_prev, state.m, "fedopt_step");
    require_same_shape(w_prev, state.v, "fedopt_step");
    if (state.step < 0) throw DataError("fedopt_step: negative step");

    const auto avg = fedavg(updates);
    const auto t = static_cast<double>(state.step + 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    ParamVector w = w_prev;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!w.trainable(i)) continue;
        const double delta = avg[i] - w_prev[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * delta;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * delta * delta;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        w[i] = w_prev[i] + cfg.server_lr * m_hat / (std::sqrt(v_hat) + cfg.tau);
    }
    ++state.step;
    return {std::move(w), std::move(state)};
}

/// Stateful server wrapper dispatching on the configured strategy.
class Aggregator {
public:
    explicit Aggregator(AggregationStrategy strategy) : strategy_(std::move(strategy)) {}

    const AggregationStrategy& strategy() const noexcept { return strategy_; }
    const std::optional<ServerOptState>& opt_state() const noexcept { return opt_state_; }

    ParamVector aggregate(const ParamVector& w_prev, std::span<const ClientUpdate> updates) {
        switch (strategy_.kind) {
        case StrategyKind::FedAvg: return fedavg(updates);
        case StrategyKind::FedProx: return fedprox_aggregate(updates);
        case StrategyKind::FedMedian: return fedmedian(updates, strategy_.fedmedian);
        case StrategyKind::FedOpt: {
            if (!opt_state_) opt_state_ = ServerOptState::fresh(w_prev);
            auto r = fedopt_step(w_prev, updates, std::move(*opt_state_), strategy_.fedopt);
            opt_state_ = std::move(r.state);
            return std::move(r.params);
        }
        }
        throw ConfigError("unknown aggregation strategy");
    }

private:
    AggregationStrategy strategy_;
    std::optional<ServerOptState> opt_state_;
};

} // namespace fedcyte
