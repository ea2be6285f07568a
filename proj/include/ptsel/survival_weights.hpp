#pragma once

// Inverse-probability-of-censoring weights from Aalen's additive hazard model
// fitted to the censoring process, plus a product-limit estimator used to
// validate them.
//
// Only the ordering of observed times matters to every estimator here, so
// times may be on any monotone scale (log-times are fine, negative included).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ptsel/errors.hpp"

namespace ptsel {

/// A covariate value that takes effect strictly after `start`.
struct CovariateStep {
    double start;
    Eigen::VectorXd value;
};

struct SurvivalRecord {
    double time = 0.0;
    bool event = true;  ///< true if the response was observed, false if censored
    Eigen::VectorXd covariates;       ///< baseline design row, no intercept
    std::vector<CovariateStep> path;  ///< optional time-varying covariates, sorted by start

    /// Covariates in effect just before t (the predictable history).
    Eigen::VectorXd covariates_at(double t) const {
        const Eigen::VectorXd* current = &covariates;
        for (const auto& step : path) {
            if (step.start < t) current = &step.value;
            else break;
        }
        return *current;
    }

    Eigen::VectorXd design_at(double t) const {
        Eigen::VectorXd z = covariates_at(t);
        Eigen::VectorXd w(z.size() + 1);
        w(0) = 1.0;
        w.tail(z.size()) = z;
        return w;
    }
};

struct CensoringModel {
    std::vector<double> jump_times;             ///< strictly increasing censoring times
    std::vector<Eigen::VectorXd> increments;    ///< dB at each jump, length p+1
    Eigen::MatrixXd design_at_fit;              ///< baseline rows (n x p) the model was fit on
    std::vector<std::size_t> rank_deficient;    ///< jump indices solved by generalized inverse

    std::size_t covariate_dim() const { return static_cast<std::size_t>(design_at_fit.cols()); }

    /// Cumulative censoring hazard of `record` summed over jumps < t
    /// (strict) or <= t.
    double cumulative_hazard(const SurvivalRecord& record, double t, bool strictly_before = true) const {
        const auto end = strictly_before
                             ? std::lower_bound(jump_times.begin(), jump_times.end(), t)
                             : std::upper_bound(jump_times.begin(), jump_times.end(), t);
        double total = 0.0;
        for (auto it = jump_times.begin(); it != end; ++it) {
            const auto l = static_cast<std::size_t>(it - jump_times.begin());
            total += record.design_at(*it).dot(increments[l]);
        }
        return total;
    }
};

namespace detail {

inline void validate_records(std::span<const SurvivalRecord> records) {
    require(!records.empty(), ErrorCode::invalid_argument, "survival data is empty");
    const auto p = records.front().covariates.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        require(std::isfinite(r.time), ErrorCode::bad_value,
                "survival record " + std::to_string(i) + " has a non-finite time");
        require(r.covariates.size() == p, ErrorCode::length_mismatch,
                "survival record " + std::to_string(i) + " has covariate length " +
                    std::to_string(r.covariates.size()) + ", expected " + std::to_string(p));
        require(r.covariates.allFinite(), ErrorCode::bad_value,
                "survival record " + std::to_string(i) + " has non-finite covariates");
    }
}

}  // namespace detail

/// Aalen additive model for the censoring hazard. At each distinct censoring
/// time t the increment solves R(t) dB = sum of W_l(t) over records censored
/// at t, with R(t) = sum over {T_i >= t} of W_i(t) W_i(t)'. A singular R(t) is
/// solved in the least-squares (minimum-norm) sense and recorded.
inline CensoringModel fit_aalen_censoring(std::span<const SurvivalRecord> records) {
    detail::validate_records(records);
    const auto n = records.size();
    const auto p = static_cast<Eigen::Index>(records.front().covariates.size());

    CensoringModel model;
    model.design_at_fit.resize(static_cast<Eigen::Index>(n), p);
    for (std::size_t i = 0; i < n; ++i) model.design_at_fit.row(static_cast<Eigen::Index>(i)) = records[i].covariates.transpose();

    std::vector<double> censor_times;
    for (const auto& r : records)
        if (!r.event) censor_times.push_back(r.time);
    std::sort(censor_times.begin(), censor_times.end());
    censor_times.erase(std::unique(censor_times.begin(), censor_times.end()), censor_times.end());

    const Eigen::Index q = p + 1;
    for (double t : censor_times) {
        Eigen::MatrixXd risk = Eigen::MatrixXd::Zero(q, q);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
        for (const auto& r : records) {
            if (r.time < t) continue;
            const Eigen::VectorXd w = r.design_at(t);
            risk.selfadjointView<Eigen::Lower>().rankUpdate(w);
            if (!r.event && r.time == t) rhs += w;
        }
        risk.triangularView<Eigen::StrictlyUpper>() = risk.transpose();
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(risk);
        cod.setThreshold(1e-10);
        if (cod.rank() < q) model.rank_deficient.push_back(model.jump_times.size());
        model.jump_times.push_back(t);
        model.increments.push_back(cod.solve(rhs));
    }
    return model;
}

inline constexpr double kDefaultWeightFloor = 0.05;

struct WeightTable {
    std::vector<double> weights;      ///< K^c_i(T_i-), clamped to [floor, 1]
    std::vector<bool> floor_applied;
    double floor = kDefaultWeightFloor;

    bool any_floor_applied() const {
        return std::find(floor_applied.begin(), floor_applied.end(), true) != floor_applied.end();
    }

    static WeightTable unit(std::size_t n) {
        return WeightTable{std::vector<double>(n, 1.0), std::vector<bool>(n, false), kDefaultWeightFloor};
    }
};

/// K^c_i(T_i-) = exp(-Lambda^c_i(T_i-)) per subject, clamped to [floor, 1].
/// Jumps at exactly T_i are excluded.
inline WeightTable ipcw_weights(const CensoringModel& model, std::span<const SurvivalRecord> records,
                                double floor = kDefaultWeightFloor) {
    require(floor > 0.0 && floor <= 1.0, ErrorCode::invalid_argument, "weight floor must lie in (0, 1]");
    detail::validate_records(records);
    require(records.front().covariates.size() == static_cast<Eigen::Index>(model.covariate_dim()),
            ErrorCode::length_mismatch, "records do not match the censoring model's design");
    WeightTable table;
    table.floor = floor;
    table.weights.reserve(records.size());
    table.floor_applied.reserve(records.size());
    for (const auto& r : records) {
        double k = std::exp(-model.cumulative_hazard(r, r.time, true));
        bool floored = false;
        if (!(k >= floor)) {
            k = floor;
            floored = true;
        } else if (k > 1.0) {
            k = 1.0;
        }
        table.weights.push_back(k);
        table.floor_applied.push_back(floored);
    }
    return table;
}

/// Right-continuous step function starting at 1.
struct StepFunction {
    std::vector<double> times;   ///< jump locations, increasing
    std::vector<double> values;  ///< value from times[i] (inclusive) onwards

    double operator()(double t) const {
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 1.0;
        return values[static_cast<std::size_t>(it - times.begin()) - 1];
    }
};

enum class KmTarget { event, censoring };

/// Product-limit estimate of the survival function of the chosen target.
/// The risk set at t is {T_i >= t}.
inline StepFunction kaplan_meier(std::span<const SurvivalRecord> records, KmTarget target) {
    require(!records.empty(), ErrorCode::invalid_argument, "kaplan_meier needs data");
    std::vector<double> sorted_times;
    sorted_times.reserve(records.size());
    for (const auto& r : records) sorted_times.push_back(r.time);
    std::sort(sorted_times.begin(), sorted_times.end());

    std::vector<double> target_times;
    for (const auto& r : records) {
        const bool hit = target == KmTarget::event ? r.event : !r.event;
        if (hit) target_times.push_back(r.time);
    }
    std::sort(target_times.begin(), target_times.end());

    StepFunction sf;
    double surv = 1.0;
    for (std::size_t i = 0; i < target_times.size();) {
        const double t = target_times[i];
        std::size_t d = 0;
        while (i < target_times.size() && target_times[i] == t) {
            ++d;
            ++i;
        }
        const auto at_risk = static_cast<double>(
            sorted_times.end() - std::lower_bound(sorted_times.begin(), sorted_times.end(), t));
        surv *= 1.0 - static_cast<double>(d) / at_risk;
        sf.times.push_back(t);
        sf.values.push_back(surv);
    }
    return sf;
}

}  // namespace ptsel
