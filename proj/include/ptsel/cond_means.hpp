#pragma once

// Smoothed conditional means mu_jk(s, d) of a response given the patient
// score, restricted to training subjects whose score arm equals d.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptsel/errors.hpp"
#include "ptsel/scoring.hpp"
#include "ptsel/smoothing.hpp"
#include "ptsel/survival_weights.hpp"

namespace ptsel {

/// Used when an arm's scores are all identical and the plug-in rule has no spread.
inline constexpr double kDegenerateSurfaceBandwidth = 0.05;

struct SurfaceTuple {
    double s = 0.0;       ///< training score S_j(X_ki)
    std::size_t d = 0;    ///< training score arm delta_j(X_ki), 0-based
    double y = 0.0;       ///< Y_jki, or T_jki in censored mode
    double factor = 1.0;  ///< 1, or delta'_i / K^c_i(T_i-) in censored mode
};

struct MeanSurface {
    std::size_t response = 0;
    std::size_t arm = 0;
    std::vector<SurfaceTuple> tuples;
    Bandwidth h{1.0};
    bool censored_mode = false;
};

struct MuEstimate {
    double value = 0.0;
    bool low_confidence = false;  ///< stratum d was empty; estimate ignores the restriction
};

namespace detail {

inline Bandwidth surface_bandwidth(std::span<const PatientScore> scores, std::optional<double> override_h) {
    if (override_h) return Bandwidth(*override_h);
    std::vector<double> s;
    s.reserve(scores.size());
    for (const auto& p : scores) s.push_back(p.s);
    return plugin_bandwidth_or(s, Bandwidth(kDegenerateSurfaceBandwidth));
}

}  // namespace detail

/// Complete-data surface for response j, arm k: tuples (S_i, d_i, Y_i).
inline MeanSurface build_surface_complete(std::size_t j, std::size_t k, std::span<const PatientScore> scores,
                                          std::span<const double> y, std::optional<double> bandwidth = {}) {
    require(!scores.empty(), ErrorCode::invalid_argument, "mean surface needs at least one subject");
    require(scores.size() == y.size(), ErrorCode::length_mismatch, "scores and responses differ in length");
    MeanSurface m{j, k, {}, detail::surface_bandwidth(scores, bandwidth), false};
    m.tuples.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) m.tuples.push_back({scores[i].s, scores[i].d, y[i], 1.0});
    return m;
}

/// Censored surface: tuples (S_i, d_i, T_i, delta'_i / K^c_i(T_i-)).
inline MeanSurface build_surface_ipcw(std::size_t j, std::size_t k, std::span<const PatientScore> scores,
                                      std::span<const double> t, std::span<const char> events,
                                      const WeightTable& weights, std::optional<double> bandwidth = {}) {
    require(!scores.empty(), ErrorCode::invalid_argument, "mean surface needs at least one subject");
    require(scores.size() == t.size() && t.size() == events.size() && events.size() == weights.weights.size(),
            ErrorCode::length_mismatch, "scores, times, events and weights differ in length");
    MeanSurface m{j, k, {}, detail::surface_bandwidth(scores, bandwidth), true};
    m.tuples.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double w = weights.weights[i];
        require(w > 0.0 && w <= 1.0, ErrorCode::bad_value, "censoring weights must lie in (0, 1]");
        m.tuples.push_back({scores[i].s, scores[i].d, t[i], events[i] ? 1.0 / w : 0.0});
    }
    return m;
}

/// Kernel-weighted mean of the stratum {d_i = u.d} at score u.s. An empty
/// stratum (no tuple with positive factor) falls back to all tuples and is
/// flagged low-confidence.
inline MuEstimate eval_mu(const MeanSurface& surface, const PatientScore& u) {
    std::vector<WeightedPoint> pts;
    pts.reserve(surface.tuples.size());
    for (const auto& t : surface.tuples)
        if (t.d == u.d && t.factor > 0.0) pts.push_back({t.s, t.y, t.factor});
    MuEstimate out;
    if (pts.empty()) {
        out.low_confidence = true;
        for (const auto& t : surface.tuples)
            if (t.factor > 0.0) pts.push_back({t.s, t.y, t.factor});
        require(!pts.empty(), ErrorCode::empty_stratum,
                "response " + std::to_string(surface.response + 1) + ", arm " + std::to_string(surface.arm + 1) +
                    ": no usable training subjects");
    }
    out.value = nw_smooth_widening(std::span<const WeightedPoint>(pts), u.s, GaussianKernel{}, surface.h);
    return out;
}

}  // namespace ptsel
