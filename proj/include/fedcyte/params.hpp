#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace fedcyte {

/**
 * Flat model parameters plus a per-coordinate trainable mask.
 *
 * This is the unit exchanged between clients and the server. Frozen
 * coordinates travel with the vector but optimizers and aggregators leave
 * them untouched, which keeps every client update index-aligned.
 */
class ParamVector {
public:
    ParamVector() = default;

    /// All coordinates trainable.
    explicit ParamVector(std::vector<double> values)
        : values_(std::move(values)), trainable_(values_.size(), true) {
        validate();
    }

    ParamVector(std::vector<double> values, std::vector<bool> trainable)
        : values_(std::move(values)), trainable_(std::move(trainable)) {
        validate();
    }

    /// Zero vector of `size` coordinates, the first `frozen_prefix` of them frozen.
    static ParamVector zeros(std::size_t size, std::size_t frozen_prefix = 0) {
        std::vector<bool> mask(size, true);
        for (std::size_t i = 0; i < frozen_prefix && i < size; ++i) mask[i] = false;
        return ParamVector(std::vector<double>(size, 0.0), std::move(mask));
    }

    /// Zero vector sharing the mask of `like`.
    static ParamVector zeros_like(const ParamVector& like) {
        return ParamVector(std::vector<double>(like.size(), 0.0), like.trainable_);
    }

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    bool trainable(std::size_t i) const { return trainable_[i]; }
    const std::vector<bool>& mask() const noexcept { return trainable_; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    std::size_t frozen_count() const noexcept {
        std::size_t n = 0;
        for (bool t : trainable_) n += t ? 0 : 1;
        return n;
    }

    bool all_finite() const noexcept {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// Sets every frozen coordinate to zero (used on gradients).
    void zero_frozen() noexcept {
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (!trainable_[i]) values_[i] = 0.0;
    }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    void validate() const {
        if (values_.size() != trainable_.size())
            throw DimensionError("ParamVector: values and mask lengths differ");
        if (!all_finite()) throw DataError("ParamVector: non-finite value");
    }

    std::vector<double> values_;
    std::vector<bool> trainable_;
};

inline void require_same_shape(const ParamVector& a, const ParamVector& b, const char* where) {
    if (a.size() != b.size())
        throw DimensionError(std::string(where) + ": length mismatch (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    if (a.mask() != b.mask()) throw DimensionError(std::string(where) + ": trainable masks differ");
}

/// a*x + y, coordinate-wise.
inline ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
    require_same_shape(x, y, "axpy");
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + y[i];
    return ParamVector(std::move(out), y.mask());
}

inline double l2_norm(const ParamVector& x) {
    // Scaled accumulation avoids overflow for large coordinates.
    double scale = 0.0;
    for (double v : x.values()) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0.0;
    double sum = 0.0;
    for (double v : x.values()) {
        const double r = v / scale;
        sum += r * r;
    }
    return scale * std::sqrt(sum);
}

/// ||x - y||.
inline double l2_distance(const ParamVector& x, const ParamVector& y) {
    return l2_norm(axpy(-1.0, y, x));
}

} // namespace fedcyte
