#pragma once

// End-to-end treatment selection: fit a single-index model per (response,
// arm), score training subjects, build conditional-mean surfaces, and rank
// arms for a new covariate vector by aggregating per-response rankings.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ptsel/cond_means.hpp"
#include "ptsel/errors.hpp"
#include "ptsel/parallel.hpp"
#include "ptsel/rank_agg.hpp"
#include "ptsel/rng.hpp"
#include "ptsel/scoring.hpp"
#include "ptsel/sim_model.hpp"
#include "ptsel/survival_weights.hpp"

namespace ptsel {

enum class ResponseKind { complete, right_censored };
enum class Transform { identity, log };

struct ResponseSpec {
    std::string name;
    ResponseKind kind = ResponseKind::complete;
    Transform transform = Transform::identity;

    friend bool operator==(const ResponseSpec&, const ResponseSpec&) = default;
};

struct ArmData {
    Eigen::MatrixXd X;                       ///< n_k x r
    std::vector<std::vector<double>> y;      ///< y[j][i]: response, or observed time if censored (raw scale)
    std::vector<std::vector<char>> event;    ///< event[j][i]; always 1 for complete responses

    std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
};

struct TrialDataset {
    std::vector<std::string> covariate_names;
    std::vector<ResponseSpec> responses;
    std::vector<std::string> arm_names;
    std::vector<ArmData> arms;

    std::size_t J() const { return responses.size(); }
    std::size_t K() const { return arms.size(); }
    std::size_t r() const { return covariate_names.size(); }
};

struct EngineConfig {
    SimOptions sim;
    double weight_floor = kDefaultWeightFloor;
    std::optional<double> surface_bandwidth;  ///< overrides the plug-in rule for every surface
    double rho = 1.0;                         ///< default footrule exponent for recommendations
    std::size_t max_exact = kMaxExactItems;
    CeOptions ce;
    std::uint64_t seed = 0;
};

struct CensoringFit {
    CensoringModel model;
    WeightTable weights;
};

struct FittedEngine {
    std::vector<ResponseSpec> specs;
    std::vector<std::string> arm_names;
    std::vector<std::string> covariate_names;
    std::vector<std::size_t> arm_sizes;
    EngineConfig config;
    std::vector<std::vector<SimFit>> fits;                          ///< [j][k]
    std::vector<std::vector<std::optional<CensoringFit>>> censoring;  ///< [j][k], set for censored responses
    std::vector<std::vector<MeanSurface>> surfaces;                 ///< [j][k]

    std::size_t J() const { return specs.size(); }
    std::size_t K() const { return arm_names.size(); }
    std::size_t r() const { return covariate_names.size(); }
};

struct ResponseArm {
    std::size_t response = 0;
    std::size_t arm = 0;

    friend bool operator==(const ResponseArm&, const ResponseArm&) = default;
};

struct Recommendation {
    std::vector<std::vector<double>> mu;  ///< J x K
    std::vector<RankedList> lists;        ///< one per response, from mu rows
    std::vector<PatientScore> scores;     ///< u_0 per response
    Ranking v_star;
    double psi = 0.0;
    std::size_t k_star = 0;  ///< 0-based
    std::vector<double> weights;
    std::vector<double> weights_normalized;
    double rho = 1.0;
    std::vector<ResponseArm> low_confidence;   ///< surfaces evaluated without their stratum
    std::vector<ResponseArm> clamped_weights;  ///< censoring weights hit the floor during fitting
    bool tie_break_fired = false;
};

inline const char* to_string(ResponseKind k) { return k == ResponseKind::complete ? "complete" : "right_censored"; }
inline const char* to_string(Transform t) { return t == Transform::identity ? "identity" : "log"; }

inline void validate_dataset(const TrialDataset& data) {
    require(!data.responses.empty(), ErrorCode::invalid_argument, "dataset declares no responses");
    require(data.arms.size() >= 2, ErrorCode::invalid_argument, "need at least two arms");
    require(data.arm_names.size() == data.arms.size(), ErrorCode::length_mismatch, "arm names do not match arms");
    require(data.r() >= 1, ErrorCode::invalid_argument, "dataset declares no covariates");
    for (std::size_t k = 0; k < data.K(); ++k) {
        const auto& a = data.arms[k];
        const std::string where = "arm '" + data.arm_names[k] + "'";
        require(a.size() > 0, ErrorCode::invalid_argument, where + " has no subjects");
        require(static_cast<std::size_t>(a.X.cols()) == data.r(), ErrorCode::length_mismatch,
                where + " has " + std::to_string(a.X.cols()) + " covariates, expected " + std::to_string(data.r()));
        require(a.X.allFinite(), ErrorCode::bad_value, where + " has non-finite covariates");
        require(a.y.size() == data.J() && a.event.size() == data.J(), ErrorCode::length_mismatch,
                where + " does not carry every response");
        for (std::size_t j = 0; j < data.J(); ++j) {
            require(a.y[j].size() == a.size() && a.event[j].size() == a.size(), ErrorCode::length_mismatch,
                    where + ", response '" + data.responses[j].name + "': wrong number of values");
            for (double v : a.y[j])
                if (!std::isfinite(v))
                    fail(ErrorCode::bad_value, where + ", response '" + data.responses[j].name + "': non-finite value");
        }
    }
}

namespace detail {

inline std::string label(const std::vector<ResponseSpec>& specs, const std::vector<std::string>& arms,
                         std::size_t j, std::size_t k) {
    return "response '" + specs[j].name + "', arm '" + arms[k] + "'";
}

/// Response j of arm k on the modelling scale.
inline std::vector<double> transformed(const ArmData& arm, std::size_t j, const ResponseSpec& spec,
                                       const std::string& where) {
    std::vector<double> v = arm.y[j];
    if (spec.transform == Transform::log) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0))
                fail(ErrorCode::bad_value, where + ": log transform needs positive values (row " +
                                               std::to_string(i + 1) + " is " + std::to_string(v[i]) + ")");
            v[i] = std::log(v[i]);
        }
    }
    return v;
}

}  // namespace detail

/// Fits every (response, arm) model. `specs` decide which responses are
/// treated as censored; they must name the dataset's responses in order.
inline FittedEngine fit_engine(const TrialDataset& data, const std::vector<ResponseSpec>& specs,
                               const EngineConfig& config, unsigned threads = 1) {
    validate_dataset(data);
    require(specs.size() == data.J(), ErrorCode::length_mismatch,
            std::to_string(specs.size()) + " response specs for " + std::to_string(data.J()) + " responses");
    require(config.weight_floor > 0.0 && config.weight_floor <= 1.0, ErrorCode::invalid_argument,
            "weight floor must lie in (0, 1]");
    require(std::isfinite(config.rho) && config.rho > 0.0, ErrorCode::invalid_argument, "rho must be positive");
    require(!config.surface_bandwidth || (std::isfinite(*config.surface_bandwidth) && *config.surface_bandwidth > 0.0),
            ErrorCode::invalid_argument, "surface bandwidth must be positive");

    const auto J = data.J(), K = data.K();
    FittedEngine eng;
    eng.specs = specs;
    eng.arm_names = data.arm_names;
    eng.covariate_names = data.covariate_names;
    eng.config = config;
    for (const auto& a : data.arms) eng.arm_sizes.push_back(a.size());
    eng.fits.assign(J, std::vector<SimFit>(K));
    eng.censoring.assign(J, std::vector<std::optional<CensoringFit>>(K));

    std::vector<std::vector<std::vector<double>>> values(J, std::vector<std::vector<double>>(K));
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            const auto where = detail::label(specs, data.arm_names, j, k);
            values[j][k] = detail::transformed(data.arms[k], j, specs[j], where);
            if (specs[j].kind == ResponseKind::complete) {
                for (char e : data.arms[k].event[j])
                    if (e != 1) fail(ErrorCode::invalid_argument, where + ": censored values in a complete response");
            }
        }
    }

    std::vector<std::string> failures(J * K);
    parallel_for(J * K, threads, [&](std::size_t task) {
        const auto j = task / K, k = task % K;
        const auto& arm = data.arms[k];
        Rng rng = substream(config.seed, {stream::sim_fit, j, k});
        try {
            const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(values[j][k].data(),
                                                                      static_cast<Eigen::Index>(arm.size()));
            if (specs[j].kind == ResponseKind::complete) {
                eng.fits[j][k] = fit_sim_complete(arm.X, y, config.sim, rng);
            } else {
                std::vector<SurvivalRecord> records(arm.size());
                for (std::size_t i = 0; i < arm.size(); ++i)
                    records[i] = SurvivalRecord{y(static_cast<Eigen::Index>(i)), arm.event[j][i] != 0,
                                                arm.X.row(static_cast<Eigen::Index>(i)).transpose(), {}};
                CensoringFit cf;
                cf.model = fit_aalen_censoring(records);
                cf.weights = ipcw_weights(cf.model, records, config.weight_floor);
                eng.fits[j][k] = fit_sim_ipcw(arm.X, y, arm.event[j], cf.weights, config.sim, rng);
                eng.censoring[j][k] = std::move(cf);
            }
        } catch (const Error& e) {
            failures[task] = detail::label(specs, data.arm_names, j, k) + ": " + std::string(to_string(e.code())) + ": " + e.what();
        }
    });
    std::string report;
    for (const auto& f : failures) {
        if (f.empty()) continue;
        if (!report.empty()) report += "; ";
        report += f;
    }
    if (!report.empty()) fail(ErrorCode::fit_failed, report);

    // Training scores use the in-sample fits.
    std::vector<std::vector<ScorePanel>> panels(K);
    std::vector<std::string> score_failures(K);
    parallel_for(K, threads, [&](std::size_t k) {
        const auto& arm = data.arms[k];
        panels[k].resize(arm.size());
        try {
            for (std::size_t i = 0; i < arm.size(); ++i) {
                Rng rng = substream(config.seed, {stream::training_scores, k, i});
                panels[k][i] = score_patient(eng.fits, arm.X.row(static_cast<Eigen::Index>(i)).transpose(), rng);
            }
        } catch (const Error& e) {
            score_failures[k] = "arm '" + data.arm_names[k] + "': scoring training subjects: " + e.what();
        }
    });
    for (const auto& f : score_failures)
        if (!f.empty()) fail(ErrorCode::fit_failed, f);

    eng.surfaces.assign(J, std::vector<MeanSurface>(K));
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<PatientScore> sc;
            sc.reserve(panels[k].size());
            for (const auto& p : panels[k]) sc.push_back(p.scores[j]);
            if (specs[j].kind == ResponseKind::complete) {
                eng.surfaces[j][k] = build_surface_complete(j, k, sc, values[j][k], config.surface_bandwidth);
            } else {
                eng.surfaces[j][k] = build_surface_ipcw(j, k, sc, values[j][k], data.arms[k].event[j],
                                                        eng.censoring[j][k]->weights, config.surface_bandwidth);
            }
        }
    }
    return eng;
}

inline FittedEngine fit_engine(const TrialDataset& data, const EngineConfig& config, unsigned threads = 1) {
    return fit_engine(data, data.responses, config, threads);
}

inline void check_weights(std::span<const double> weights, std::size_t J) {
    require(weights.size() == J, ErrorCode::length_mismatch,
            "expected " + std::to_string(J) + " weights, got " + std::to_string(weights.size()));
    double sum = 0.0;
    for (double w : weights) {
        require(std::isfinite(w) && w >= 0.0, ErrorCode::invalid_argument, "weights must be nonnegative and finite");
        sum += w;
    }
    require(sum > 0.0, ErrorCode::invalid_argument, "weights must not sum to zero");
}

/// k* for covariates x0: scores, conditional means, per-response rankings
/// (rank 1 = largest mean) and their weighted footrule aggregate.
inline Recommendation recommend(const FittedEngine& eng, const Eigen::VectorXd& x0, std::span<const double> weights,
                                double rho, Rng& rng) {
    check_weights(weights, eng.J());
    require(std::isfinite(rho) && rho > 0.0, ErrorCode::invalid_argument, "rho must be positive");
    require(static_cast<std::size_t>(x0.size()) == eng.r(), ErrorCode::length_mismatch,
            "expected " + std::to_string(eng.r()) + " covariates, got " + std::to_string(x0.size()));
    require(x0.allFinite(), ErrorCode::bad_value, "covariates must be finite");

    Recommendation rec;
    rec.rho = rho;
    rec.weights.assign(weights.begin(), weights.end());
    double sum = 0.0;
    for (double w : weights) sum += w;
    for (double w : weights) rec.weights_normalized.push_back(w / sum);

    const auto panel = score_patient(eng.fits, x0, rng);
    rec.scores = panel.scores;
    rec.tie_break_fired = panel.tie_break_fired;

    AggregationProblem problem;
    problem.weights = rec.weights;
    problem.rho = rho;
    rec.mu.assign(eng.J(), std::vector<double>(eng.K()));
    for (std::size_t j = 0; j < eng.J(); ++j) {
        for (std::size_t k = 0; k < eng.K(); ++k) {
            const auto est = eval_mu(eng.surfaces[j][k], panel.scores[j]);
            rec.mu[j][k] = est.value;
            if (est.low_confidence) rec.low_confidence.push_back({j, k});
            if (eng.censoring[j][k] && eng.censoring[j][k]->weights.any_floor_applied())
                rec.clamped_weights.push_back({j, k});
        }
        rec.lists.push_back(ranks_from_values(rec.mu[j], rng, &rec.tie_break_fired));
    }
    problem.lists = rec.lists;
    const auto agg = aggregate(problem, rng, eng.config.max_exact, eng.config.ce);
    rec.v_star = agg.v_star;
    rec.psi = agg.psi;
    rec.tie_break_fired = rec.tie_break_fired || agg.tie_break_fired;
    rec.k_star = top_item(rec.v_star);
    return rec;
}

/// Stream for row i of a batch; a single recommendation uses row 0.
inline Rng recommend_stream(std::uint64_t seed, std::size_t row) { return substream(seed, {stream::recommend_row, row}); }

struct BatchEntry {
    std::optional<Recommendation> recommendation;
    std::optional<Error> error;
};

inline std::vector<BatchEntry> recommend_batch(const FittedEngine& eng, const Eigen::MatrixXd& X0,
                                               std::span<const double> weights, double rho, std::uint64_t seed,
                                               unsigned threads = 1) {
    std::vector<BatchEntry> out(static_cast<std::size_t>(X0.rows()));
    parallel_for(out.size(), threads, [&](std::size_t i) {
        Rng rng = recommend_stream(seed, i);
        try {
            out[i].recommendation = recommend(eng, X0.row(static_cast<Eigen::Index>(i)).transpose(), weights, rho, rng);
        } catch (const Error& e) {
            out[i].error = e;
        }
    });
    return out;
}

}  // namespace ptsel
