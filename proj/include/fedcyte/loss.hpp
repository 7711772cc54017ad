#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace fedcyte {

struct AlphaClip {
    double lo = 0.1;
    double hi = 4.0;
};

/// Focal loss settings: -(1 - p_t)^gamma * alpha[y] * ln(p_t).
struct FocalConfig {
    double gamma = 2.5;
    std::vector<double> alpha;  ///< one weight per class; empty means all ones
    AlphaClip alpha_clip{};

    double alpha_for(std::size_t label) const { return alpha.empty() ? 1.0 : alpha.at(label); }
};

inline constexpr double kProbabilityFloor = 1e-12;

/**
 * Inverse-square-root-frequency class weights, clipped to [clip.lo, clip.hi].
 * Classes absent from `class_counts` get clip.hi, the limit of the formula as
 * the frequency goes to zero.
 */
inline std::vector<double> alpha_weights(std::span<const std::int64_t> class_counts, AlphaClip clip = {}) {
    std::int64_t total = 0;
    for (auto c : class_counts) {
        if (c < 0) throw DataError("alpha_weights: negative class count");
        total += c;
    }
    if (total <= 0) throw DataError("alpha_weights: all class counts are zero");
    std::vector<double> alpha(class_counts.size());
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        if (class_counts[c] == 0) {
            alpha[c] = clip.hi;
            continue;
        }
        const double f = static_cast<double>(class_counts[c]) / static_cast<double>(total);
        alpha[c] = std::clamp(std::sqrt(1.0 / f), clip.lo, clip.hi);
    }
    return alpha;
}

inline double focal_loss(std::span<const double> probs, std::size_t label, const FocalConfig& cfg) {
    if (label >= probs.size())
        throw DataError("focal_loss: label " + std::to_string(label) + " out of range");
    const double pt = probs[label];
    const double log_pt = std::log(std::max(pt, kProbabilityFloor));
    return -std::pow(1.0 - pt, cfg.gamma) * cfg.alpha_for(label) * log_pt;
}

/**
 * d(focal)/d(p_t) multiplied by p_t. Backprop through softmax then gives
 * dL/dz_k = dlogit_scale * (delta_{k,y} - p_k).
 */
inline double focal_logit_scale(double pt, double alpha, double gamma) {
    const double one_minus = 1.0 - pt;
    // Modulating factor term: d/dp (1-p)^g = -g (1-p)^(g-1).
    double modulating = 0.0;
    if (gamma > 0.0 && one_minus > 0.0)
        modulating = gamma * std::pow(one_minus, gamma - 1.0) * pt * std::log(std::max(pt, kProbabilityFloor));
    // Log term is constant below the floor.
    const double log_term = pt >= kProbabilityFloor ? std::pow(one_minus, gamma) : 0.0;
    return -alpha * (log_term - modulating);
}

} // namespace fedcyte
