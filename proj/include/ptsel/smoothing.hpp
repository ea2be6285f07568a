#pragma once

// Kernels, weighted Nadaraya-Watson smoothing and the normal-scale plug-in
// bandwidth used by every estimator in the library.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ptsel/errors.hpp"

namespace ptsel {

enum class KernelKind { gaussian };

/// Standard normal density.
struct GaussianKernel {
    double operator()(double t) const noexcept {
        return std::exp(-0.5 * t * t) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    }
};

template <class K>
concept KernelFunction = requires(const K& k, double t) {
    { k(t) } -> std::convertible_to<double>;
};

class Bandwidth {
public:
    explicit Bandwidth(double h) : h_(h) {
        require(std::isfinite(h) && h > 0.0, ErrorCode::invalid_argument,
                "bandwidth must be positive and finite, got " + std::to_string(h));
    }

    double value() const noexcept { return h_; }

    Bandwidth scaled(double factor) const { return Bandwidth(h_ * factor); }

    friend bool operator==(const Bandwidth&, const Bandwidth&) = default;

private:
    double h_;
};

struct WeightedPoint {
    double x;
    double y;
    double w;
};

inline constexpr double kDenominatorFloor = 1e-300;

/// sum w y K((x0-x)/h) / sum w K((x0-x)/h). Throws DenominatorUnderflow when the
/// denominator falls below kDenominatorFloor (x0 outside effective support).
template <KernelFunction K = GaussianKernel>
double nw_smooth(std::span<const WeightedPoint> points, double x0, const K& kernel, Bandwidth h) {
    double num = 0.0;
    double den = 0.0;
    const double inv_h = 1.0 / h.value();
    for (const auto& p : points) {
        if (p.w == 0.0) continue;
        const double k = p.w * kernel((x0 - p.x) * inv_h);
        num += k * p.y;
        den += k;
    }
    if (!(den >= kDenominatorFloor)) {
        fail(ErrorCode::denominator_underflow,
             "kernel denominator underflow at x0=" + std::to_string(x0) +
                 " (h=" + std::to_string(h.value()) + ")");
    }
    return num / den;
}

inline double nw_smooth(std::span<const WeightedPoint> points, double x0, Bandwidth h) {
    return nw_smooth(points, x0, GaussianKernel{}, h);
}

inline constexpr double kWidenFactor = 1.5;
inline constexpr int kWidenAttempts = 5;

/// nw_smooth with the underflow policy applied: on DenominatorUnderflow the
/// bandwidth is widened by 1.5x, at most five times, before the error escapes.
template <KernelFunction K = GaussianKernel>
double nw_smooth_widening(std::span<const WeightedPoint> points, double x0, const K& kernel,
                          Bandwidth h) {
    for (int attempt = 0;; ++attempt) {
        try {
            return nw_smooth(points, x0, kernel, h);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::denominator_underflow || attempt == kWidenAttempts) throw;
            h = h.scaled(kWidenFactor);
        }
    }
}

namespace detail {

// Sample quantile with linear interpolation between order statistics
// (Hyndman-Fan type 7). `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Normal-scale rule h = 1.06 min(sd, IQR/1.349) n^(-1/5). When the IQR is zero
/// but the sample is not constant the sd alone is used.
inline Bandwidth plugin_bandwidth(std::span<const double> xs) {
    require(xs.size() >= 2, ErrorCode::degenerate_sample, "plugin bandwidth needs at least 2 values");
    const auto n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));

    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back() || !(sd > 0.0)) {
        fail(ErrorCode::degenerate_sample, "plugin bandwidth: all values identical");
    }
    const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
    return Bandwidth(1.06 * spread * std::pow(n, -0.2));
}

/// plugin_bandwidth, or `floor` when the sample is degenerate.
inline Bandwidth plugin_bandwidth_or(std::span<const double> xs, Bandwidth floor) {
    try {
        return plugin_bandwidth(xs);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate_sample) throw;
        return floor;
    }
}

}  // namespace ptsel
