#pragma once

// Single-index models Y = g(beta'X) + e, estimated by leave-one-out kernel
// least squares, with an inverse-probability-of-censoring reweighted variant
// for right-censored responses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ptsel/errors.hpp"
#include "ptsel/optim.hpp"
#include "ptsel/rng.hpp"
#include "ptsel/smoothing.hpp"
#include "ptsel/survival_weights.hpp"

namespace ptsel {

struct SimOptions {
    int restarts = 10;           ///< one least-squares start plus restarts-1 random directions
    int screen_iterations = 60;  ///< simplex iterations every restart gets
    int refine_top = 2;          ///< restarts continued to convergence after screening
    NelderMeadOptions optimizer{400, 1e-4};
    double angle_step = 0.3;     ///< initial simplex edge for each spherical angle (radians)
    double log_h_step = 0.5;     ///< initial simplex edge for log bandwidth
    double h_lower = 1e-3;       ///< bandwidth bounds relative to the restart's plug-in bandwidth
    double h_upper = 10.0;
};

/// One training subject as seen by the fitted link.
struct TrainingPoint {
    double index = 0.0;     ///< beta' x_i
    double response = 0.0;  ///< Y_i, or the observed time T_i in censored mode
    double weight = 1.0;    ///< K^c_i(T_i-) in censored mode, 1 otherwise
    bool event = true;

    /// delta'_i / K^c_i(T_i-): the factor this subject carries in every sum.
    double ipcw_factor() const { return event ? 1.0 / weight : 0.0; }
};

struct SimFit {
    Eigen::VectorXd beta;  ///< unit norm, first nonzero coordinate >= 0
    Bandwidth h_tilde{1.0};
    std::vector<TrainingPoint> training;
    double objective_value = 0.0;
    bool censored_mode = false;
    int finite_restarts = 0;
    int evaluations = 0;

    std::size_t dim() const { return static_cast<std::size_t>(beta.size()); }
};

namespace detail {

/// Unit vector from r-1 spherical angles.
inline Eigen::VectorXd beta_from_angles(std::span<const double> angles, std::size_t r) {
    Eigen::VectorXd b(static_cast<Eigen::Index>(r));
    double sin_prod = 1.0;
    for (std::size_t k = 0; k + 1 < r; ++k) {
        b(static_cast<Eigen::Index>(k)) = sin_prod * std::cos(angles[k]);
        sin_prod *= std::sin(angles[k]);
    }
    b(static_cast<Eigen::Index>(r - 1)) = sin_prod;
    return b;
}

inline std::vector<double> angles_from_beta(const Eigen::VectorXd& b) {
    const auto r = static_cast<std::size_t>(b.size());
    std::vector<double> angles(r > 0 ? r - 1 : 0);
    for (std::size_t k = 0; k + 1 < r; ++k) {
        const auto tail = b.tail(static_cast<Eigen::Index>(r - k - 1)).norm();
        angles[k] = (k + 2 == r) ? std::atan2(b(static_cast<Eigen::Index>(r - 1)), b(static_cast<Eigen::Index>(k)))
                                 : std::atan2(tail, b(static_cast<Eigen::Index>(k)));
    }
    return angles;
}

inline Eigen::VectorXd canonical_sign(Eigen::VectorXd b) {
    b /= b.norm();
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        if (b(i) != 0.0) {
            if (b(i) < 0.0) b = -b;
            break;
        }
    }
    return b;
}

inline constexpr double kKernelCutoff = 8.5;

/// Leave-one-out objective over the subjects that carry positive weight.
/// Pairwise kernel terms are shared between (i, l) and (l, i).
class LooObjective {
public:
    LooObjective(Eigen::MatrixXd X, std::vector<double> y, std::vector<double> factor)
        : X_(std::move(X)), y_(std::move(y)), m_(std::move(factor)),
          my_(y_.size()), index_(y_.size()), num_(y_.size()), den_(y_.size()) {
        for (std::size_t i = 0; i < y_.size(); ++i) my_[i] = m_[i] * y_[i];
    }

    std::size_t size() const { return y_.size(); }
    const Eigen::MatrixXd& X() const { return X_; }

    /// sum_i m_i (y_i - g_{-i}(beta'x_i))^2; +inf if some g_{-i} is undefined.
    /// Pairs further apart than kKernelCutoff bandwidths contribute less than
    /// 1e-15 relative to the diagonal neighbourhood and are skipped.
    double operator()(const Eigen::VectorXd& beta, double h) {
        const auto n = y_.size();
        Eigen::Map<Eigen::VectorXd>(index_.data(), static_cast<Eigen::Index>(n)) = X_ * beta;
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
            return index_[a] < index_[b] || (index_[a] == index_[b] && a < b);
        });
        sv_.resize(n);
        sm_.resize(n);
        smy_.resize(n);
        for (std::size_t a = 0; a < n; ++a) {
            sv_[a] = index_[order_[a]];
            sm_[a] = m_[order_[a]];
            smy_[a] = my_[order_[a]];
        }
        std::fill(num_.begin(), num_.end(), 0.0);
        std::fill(den_.begin(), den_.end(), 0.0);
        const double c = -0.5 / (h * h);
        const double reach = kKernelCutoff * h;
        kbuf_.resize(static_cast<Eigen::Index>(n));
        std::size_t end = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = sv_[i];
            if (end < i + 1) end = i + 1;
            while (end < n && sv_[end] - vi <= reach) ++end;
            const auto len = static_cast<Eigen::Index>(end - i - 1);
            if (len == 0) continue;
            const auto first = static_cast<Eigen::Index>(i + 1);
            auto k = kbuf_.head(len);
            k = (c * (vec(sv_).segment(first, len) - vi).square()).exp();
            num_[i] += (k * vec(smy_).segment(first, len)).sum();
            den_[i] += (k * vec(sm_).segment(first, len)).sum();
            vec(num_).segment(first, len) += smy_[i] * k;
            vec(den_).segment(first, len) += sm_[i] * k;
        }
        double total = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            if (!(den_[a] >= kDenominatorFloor)) return std::numeric_limits<double>::infinity();
            const double r = y_[order_[a]] - num_[a] / den_[a];
            total += sm_[a] * r * r;
        }
        return total;
    }

    /// Plug-in bandwidth of the index values under `beta`.
    Bandwidth initial_bandwidth(const Eigen::VectorXd& beta) const {
        const Eigen::VectorXd v = X_ * beta;
        const double fallback = std::max(1e-3, 0.1 * std::sqrt((v.array() - v.mean()).square().mean()));
        return plugin_bandwidth_or(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
                                   Bandwidth(std::isfinite(fallback) && fallback > 0 ? fallback : 1e-3));
    }

private:
    Eigen::MatrixXd X_;
    std::vector<double> y_, m_, my_;
    std::vector<double> index_, num_, den_;
    std::vector<std::size_t> order_;
    std::vector<double> sv_, sm_, smy_;
    Eigen::ArrayXd kbuf_;

    static Eigen::Map<Eigen::ArrayXd> vec(std::vector<double>& v) {
        return {v.data(), static_cast<Eigen::Index>(v.size())};
    }
};

/// Weighted least-squares slope direction of y on [1, X].
inline Eigen::VectorXd wls_direction(const Eigen::MatrixXd& X, std::span<const double> y,
                                     std::span<const double> w) {
    const auto n = X.rows();
    const auto r = X.cols();
    Eigen::MatrixXd A(n, r + 1);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = std::sqrt(w[static_cast<std::size_t>(i)]);
        A(i, 0) = s;
        A.row(i).tail(r) = s * X.row(i);
        b(i) = s * y[static_cast<std::size_t>(i)];
    }
    Eigen::VectorXd coef = A.completeOrthogonalDecomposition().solve(b);
    Eigen::VectorXd slope = coef.tail(r);
    if (!(slope.norm() > 1e-12) || !slope.allFinite()) {
        slope = Eigen::VectorXd::Zero(r);
        slope(0) = 1.0;
    }
    return slope / slope.norm();
}

inline Eigen::VectorXd random_unit_vector(std::size_t r, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(static_cast<Eigen::Index>(r));
    do {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    } while (!(v.norm() > 1e-12));
    return v / v.norm();
}

inline void check_design(const Eigen::MatrixXd& X, std::size_t n_response) {
    const auto n = static_cast<std::size_t>(X.rows());
    const auto r = static_cast<std::size_t>(X.cols());
    require(r >= 1, ErrorCode::invalid_argument, "covariate dimension must be at least 1");
    require(n == n_response, ErrorCode::length_mismatch,
            "design has " + std::to_string(n) + " rows but response has " + std::to_string(n_response));
    require(n > r + 2, ErrorCode::degenerate_design,
            "need more than r+2 = " + std::to_string(r + 2) + " subjects, got " + std::to_string(n));
    require(X.allFinite(), ErrorCode::bad_value, "design contains non-finite values");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    require(qr.rank() == X.cols(), ErrorCode::degenerate_design, "covariate columns are collinear");
}

/// Core estimator shared by the complete and censored variants; complete data
/// is the special case of unit weights and all events.
inline SimFit fit_sim(const Eigen::MatrixXd& X, std::span<const double> response, std::span<const char> events,
                      std::span<const double> survival_weight, bool censored_mode, const SimOptions& options,
                      Rng& rng) {
    check_design(X, response.size());
    const auto n = static_cast<std::size_t>(X.rows());
    const auto r = static_cast<std::size_t>(X.cols());
    require(options.restarts >= 1, ErrorCode::invalid_argument, "need at least one restart");

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i) {
        require(std::isfinite(response[i]), ErrorCode::bad_value, "response " + std::to_string(i) + " is not finite");
        if (events[i]) kept.push_back(i);
    }
    require(kept.size() >= r + 2, ErrorCode::too_few_events,
            "only " + std::to_string(kept.size()) + " events; need at least r+2 = " + std::to_string(r + 2));

    Eigen::MatrixXd Xk(static_cast<Eigen::Index>(kept.size()), X.cols());
    std::vector<double> yk(kept.size()), mk(kept.size());
    for (std::size_t a = 0; a < kept.size(); ++a) {
        const auto i = kept[a];
        Xk.row(static_cast<Eigen::Index>(a)) = X.row(static_cast<Eigen::Index>(i));
        yk[a] = response[i];
        mk[a] = 1.0 / survival_weight[i];
    }
    LooObjective objective(std::move(Xk), yk, mk);

    std::vector<Eigen::VectorXd> starts;
    starts.push_back(wls_direction(objective.X(), yk, mk));
    for (int s = 1; s < options.restarts; ++s) starts.push_back(random_unit_vector(r, rng));

    const double log_lo = std::log(options.h_lower);
    const double log_hi = std::log(options.h_upper);

    // Search coordinates: r-1 spherical angles then log(h / h0), where h0 is
    // the plug-in bandwidth of the starting direction's index values.
    struct Candidate {
        std::vector<double> x;
        double h0 = 0.0;
        double value = 0.0;
    };
    const std::size_t n_angles = r - 1;
    auto unpack_h = [&](const Candidate& c, double t) { return c.h0 * std::exp(std::clamp(t, log_lo, log_hi)); };
    auto unpack_beta = [&](std::span<const double> x) -> Eigen::VectorXd {
        return r == 1 ? Eigen::VectorXd::Ones(1) : beta_from_angles(x.first(n_angles), r);
    };
    std::vector<double> step(n_angles, options.angle_step);
    step.push_back(options.log_h_step);
    int total_evals = 0;

    auto run = [&](Candidate& c, const NelderMeadOptions& nm) {
        auto f = [&](std::span<const double> x) { return objective(unpack_beta(x), unpack_h(c, x[n_angles])); };
        auto res = minimize_nelder_mead(f, c.x, step, nm);
        total_evals += res.evaluations;
        c.x = res.x;
        c.value = res.value;
    };

    std::vector<Candidate> candidates;
    for (const auto& start : starts) {
        Candidate c;
        c.x = angles_from_beta(start);
        c.x.push_back(0.0);
        c.h0 = objective.initial_bandwidth(start).value();
        NelderMeadOptions screen = options.optimizer;
        screen.max_iterations = std::min(options.screen_iterations, options.optimizer.max_iterations);
        run(c, screen);
        candidates.push_back(std::move(c));
    }
    // Stable order keeps ties deterministic (earlier restart wins).
    std::vector<std::size_t> rank(candidates.size());
    for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
    std::stable_sort(rank.begin(), rank.end(),
                     [&](std::size_t a, std::size_t b) { return candidates[a].value < candidates[b].value; });
    const auto n_refine = std::min<std::size_t>(static_cast<std::size_t>(std::max(options.refine_top, 0)), rank.size());
    for (std::size_t q = 0; q < n_refine; ++q) run(candidates[rank[q]], options.optimizer);

    SimFit best;
    best.censored_mode = censored_mode;
    best.objective_value = std::numeric_limits<double>::infinity();
    const Candidate* winner = nullptr;
    int finite = 0;
    for (const auto& c : candidates) {
        if (!(c.value < kNonFinitePenalty)) continue;
        ++finite;
        if (winner == nullptr || c.value < winner->value) winner = &c;
    }
    require(winner != nullptr, ErrorCode::optim_failed, "no restart produced a finite leave-one-out objective");
    best.beta = unpack_beta(winner->x);
    best.h_tilde = Bandwidth(unpack_h(*winner, winner->x[n_angles]));
    best.objective_value = winner->value;

    best.beta = canonical_sign(best.beta);
    best.finite_restarts = finite;
    best.evaluations = total_evals;
    best.training.resize(n);
    const Eigen::VectorXd idx = X * best.beta;
    for (std::size_t i = 0; i < n; ++i) {
        best.training[i] = TrainingPoint{idx(static_cast<Eigen::Index>(i)), response[i], survival_weight[i],
                                         static_cast<bool>(events[i])};
    }
    return best;
}

}  // namespace detail

/// Ichimura's estimator: (beta, h) jointly minimize the leave-one-out
/// squared error over the unit sphere x (0, inf), by multi-start Nelder-Mead
/// over spherical angles and log bandwidth.
inline SimFit fit_sim_complete(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const SimOptions& options,
                               Rng& rng) {
    const auto n = static_cast<std::size_t>(Y.size());
    std::vector<char> events(n, 1);
    std::vector<double> ones(n, 1.0);
    return detail::fit_sim(X, std::span<const double>(Y.data(), n), events, ones, false, options, rng);
}

/// IPCW-reweighted estimator for a right-censored response: every sum carries
/// delta'_i / K^c_i(T_i-), so censored subjects drop out of both the
/// leave-one-out smoother and the outer objective.
inline SimFit fit_sim_ipcw(const Eigen::MatrixXd& X, const Eigen::VectorXd& T, std::span<const char> events,
                           const WeightTable& weights, const SimOptions& options, Rng& rng) {
    const auto n = static_cast<std::size_t>(T.size());
    require(events.size() == n && weights.weights.size() == n, ErrorCode::length_mismatch,
            "times, events and weights must have equal length");
    for (double w : weights.weights)
        require(w > 0.0 && w <= 1.0, ErrorCode::bad_value, "censoring weights must lie in (0, 1]");
    return detail::fit_sim(X, std::span<const double>(T.data(), n), events, weights.weights, true, options, rng);
}

/// The link's smoothing points: (index, response, ipcw factor).
inline std::vector<WeightedPoint> link_points(const SimFit& fit) {
    std::vector<WeightedPoint> pts;
    pts.reserve(fit.training.size());
    for (const auto& t : fit.training) pts.push_back({t.index, t.response, t.ipcw_factor()});
    return pts;
}

/// g-hat at the index value nu0 (kernel ratio over the training cache).
inline double predict_link_at_index(const SimFit& fit, double nu0) {
    const auto pts = link_points(fit);
    return nw_smooth_widening(std::span<const WeightedPoint>(pts), nu0, GaussianKernel{}, fit.h_tilde);
}

inline double predict_link(const SimFit& fit, const Eigen::VectorXd& x0) {
    require(static_cast<std::size_t>(x0.size()) == fit.dim(), ErrorCode::length_mismatch,
            "covariate vector has length " + std::to_string(x0.size()) + ", fit expects " +
                std::to_string(fit.dim()));
    return predict_link_at_index(fit, fit.beta.dot(x0));
}

/// Angle between two directions, ignoring sign (g absorbs it), in degrees.
inline double angular_distance_deg(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double c = std::min(1.0, std::abs(a.dot(b)) / (a.norm() * b.norm()));
    return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace ptsel
