#pragma once

// Synthetic randomized trials with known mean surfaces, right-censoring of
// the first response, and the replicate loop that measures how often the
// recommended arm matches the arm a fresh noisy draw would favour.

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ptsel/errors.hpp"
#include "ptsel/parallel.hpp"
#include "ptsel/pipeline.hpp"
#include "ptsel/rank_agg.hpp"
#include "ptsel/rng.hpp"

namespace ptsel::sim {

inline constexpr std::size_t kCovariates = 5;
inline constexpr std::size_t kArms = 3;

enum class ErrorDist { normal, double_exponential };
enum class CensoringKind { none, random, covdep };

inline const char* to_string(ErrorDist e) { return e == ErrorDist::normal ? "normal" : "double_exponential"; }
inline const char* to_string(CensoringKind c) {
    switch (c) {
        case CensoringKind::none: return "none";
        case CensoringKind::random: return "random";
        case CensoringKind::covdep: return "covdep";
    }
    return "none";
}

struct CensoringSpec {
    CensoringKind kind = CensoringKind::none;
    std::vector<double> zeta;   ///< per-arm exponential rate (random)
    std::vector<double> zeta1;  ///< per-arm rate where dir'x > threshold (covdep)
    std::vector<double> zeta2;  ///< per-arm rate elsewhere (covdep)
    std::vector<double> dir{0.7, 0.3, 0.0, 0.5, -0.5};
    double threshold = 0.0;
    std::string label = "none";
};

struct ScenarioConfig {
    int model_set = 1;
    std::size_t J = 4;
    std::size_t n = 100;  ///< subjects per arm
    ErrorDist error = ErrorDist::normal;
    double sigma = 0.1;
    double error_corr = 0.3;
    CensoringSpec censoring;
    std::vector<double> weights{0.7, 0.1, 0.1, 0.1};
    double rho = 1.0;
    std::size_t replicates = 200;
    std::uint64_t seed = 1;
    SimOptions sim;
};

// Index vectors for model set 1, rows (j, k) in order 11, 12, 13, 21, ...;
// printed to two decimals and renormalized on use.
inline constexpr std::array<std::array<double, 5>, 12> kModelSet1Beta{{
    {0.74, -0.37, -0.37, 0.37, -0.19},
    {0.80, 0.00, 0.20, -0.40, -0.40},
    {0.07, 0.15, 0.30, 0.45, -0.82},
    {0.23, 0.15, 0.45, -0.83, -0.15},
    {-0.69, 0.51, 0.34, 0.34, -0.17},
    {0.63, 0.21, 0.32, -0.53, -0.42},
    {0.15, 0.30, 0.07, -0.82, 0.45},
    {0.24, 0.16, 0.65, -0.24, -0.65},
    {-0.18, 0.36, 0.54, 0.18, -0.72},
    {-0.40, 0.00, 0.80, -0.40, 0.20},
    {0.48, 0.27, -0.55, 0.41, -0.48},
    {-0.75, 0.34, -0.14, 0.14, 0.54},
}};

/// Unit index vector of (j, k), 0-based.
inline Eigen::VectorXd index_vector(int model_set, std::size_t j, std::size_t k) {
    Eigen::VectorXd b(static_cast<Eigen::Index>(kCovariates));
    if (model_set == 1) {
        const auto& row = kModelSet1Beta.at(j * kArms + k);
        for (std::size_t c = 0; c < kCovariates; ++c) b(static_cast<Eigen::Index>(c)) = row[c];
    } else {
        b.setConstant(1.0);
    }
    return b / b.norm();
}

/// Link g_jk(v) at index value v.
inline double link(int model_set, std::size_t j, std::size_t k, double v) {
    using std::numbers::pi;
    if (model_set == 1) {
        switch (j * kArms + k) {
            case 0: return 1.0 + std::exp(0.5 * v * v * v);
            case 1: return 1.0 + std::exp(-0.5 + 0.5 * (v - 0.8) * (v - 0.8));
            case 2: return 1.0 + std::exp(1.0 - 5.0 * v * v);
            case 3: return std::exp(0.5 - 2.5 * (v - 1.0) * (v - 1.0));
            case 4: return std::exp(0.5 - 2.5 * (v + 1.0) * (v + 1.0));
            case 5: return std::exp(0.5 - 2.5 * v * v);
            case 6: return std::exp(0.5 - 3.0 * std::pow(v - 1.0, 4));
            case 7: return std::exp(0.5 - 3.0 * std::pow(v + 1.0, 4));
            case 8: return std::exp(0.5 - 3.0 * std::pow(v, 4));
            case 9: return 1.0 + std::exp(-1.0 + v);
            case 10: return 1.0 + std::exp(-1.0 - v);
            case 11: return std::exp(1.0 - v * v);
        }
    } else {
        switch (j * kArms + k) {
            case 0: return 2.0 + std::sin(2.0 * pi / 5.0 + pi / 2.0 * v);
            case 1: return 2.0 + std::sin(6.0 * pi / 5.0 + pi / 2.0 * v);
            case 2: return 2.0 + std::sin(-2.0 * pi / 5.0 + pi / 2.0 * v);
            case 3: return std::cos(pi / 2.0 * v);
            case 4: return std::cos(4.0 * pi / 5.0 + pi / 2.0 * v);
            case 5: return std::cos(-4.0 * pi / 5.0 + pi / 2.0 * v);
            case 6: return std::sin(pi / 3.0 + pi / 3.0 * v);
            case 7: return std::sin(pi + pi / 3.0 * v);
            case 8: return std::sin(-2.0 * pi / 3.0 + pi / 3.0 * v);
            case 9: return std::cos(pi / 3.0 * v);
            case 10: return std::cos(2.0 * pi / 3.0 + pi / 3.0 * v);
            case 11: return std::cos(-2.0 * pi / 3.0 + pi / 3.0 * v);
        }
    }
    fail(ErrorCode::invalid_argument, "no mean function for response " + std::to_string(j + 1) + ", arm " +
                                          std::to_string(k + 1));
}

/// True mean of response j under arm k at covariates x.
inline double mean_response(int model_set, std::size_t j, std::size_t k, const Eigen::VectorXd& x) {
    return link(model_set, j, k, index_vector(model_set, j, k).dot(x));
}

/// Censoring rates by model set and label ("random25", "random50",
/// "covdep25", "covdep50"), giving roughly 25% / 50% censoring of response 1.
inline CensoringSpec censoring_preset(int model_set, const std::string& label) {
    CensoringSpec c;
    c.label = label;
    const bool ms1 = model_set == 1;
    if (label == "none") {
        c.kind = CensoringKind::none;
    } else if (label == "random25") {
        c.kind = CensoringKind::random;
        c.zeta = ms1 ? std::vector<double>{0.14, 0.14, 0.12} : std::vector<double>{0.11, 0.18, 0.23};
    } else if (label == "random50") {
        c.kind = CensoringKind::random;
        c.zeta = ms1 ? std::vector<double>{0.35, 0.35, 0.32} : std::vector<double>{0.26, 0.45, 0.55};
    } else if (label == "covdep25") {
        c.kind = CensoringKind::covdep;
        c.zeta1 = ms1 ? std::vector<double>{0.10, 0.10, 0.07} : std::vector<double>{0.05, 0.10, 0.15};
        c.zeta2 = ms1 ? std::vector<double>{0.20, 0.20, 0.18} : std::vector<double>{0.20, 0.26, 0.30};
    } else if (label == "covdep50") {
        c.kind = CensoringKind::covdep;
        c.zeta1 = ms1 ? std::vector<double>{0.20, 0.20, 0.18} : std::vector<double>{0.15, 0.25, 0.35};
        c.zeta2 = ms1 ? std::vector<double>{0.50, 0.50, 0.47} : std::vector<double>{0.40, 0.62, 0.70};
    } else {
        fail(ErrorCode::invalid_argument, "unknown censoring preset '" + label + "'");
    }
    return c;
}

/// Default scenario for a model set: set 1 with four responses weighted
/// (0.7, 0.1, 0.1, 0.1), set 2 with three weighted (0.8, 0.1, 0.1); normal
/// errors, sigma 0.1, correlation 0.3.
inline ScenarioConfig preset(int model_set, std::size_t n, const std::string& censoring, std::size_t replicates = 200,
                             std::uint64_t seed = 1) {
    ScenarioConfig cfg;
    cfg.model_set = model_set;
    cfg.n = n;
    cfg.J = model_set == 1 ? 4 : 3;
    cfg.weights = model_set == 1 ? std::vector<double>{0.7, 0.1, 0.1, 0.1} : std::vector<double>{0.8, 0.1, 0.1};
    cfg.censoring = censoring_preset(model_set, censoring);
    cfg.replicates = replicates;
    cfg.seed = seed;
    return cfg;
}

inline void validate(const ScenarioConfig& cfg) {
    require(cfg.model_set == 1 || cfg.model_set == 2, ErrorCode::invalid_argument, "model set must be 1 or 2");
    require(cfg.J >= 1 && cfg.J <= 4, ErrorCode::invalid_argument, "J must lie in 1..4");
    require(cfg.n >= 10, ErrorCode::invalid_argument, "need at least 10 subjects per arm");
    require(std::isfinite(cfg.sigma) && cfg.sigma >= 0.0, ErrorCode::invalid_argument, "sigma must be >= 0");
    const double lo = cfg.J > 1 ? -1.0 / static_cast<double>(cfg.J - 1) : -1.0;
    require(cfg.error_corr > lo && cfg.error_corr < 1.0, ErrorCode::invalid_argument,
            "error correlation must keep the correlation matrix positive definite");
    require(cfg.weights.size() == cfg.J, ErrorCode::length_mismatch, "need one weight per response");
    check_weights(cfg.weights, cfg.J);
    require(std::isfinite(cfg.rho) && cfg.rho > 0.0, ErrorCode::invalid_argument, "rho must be positive");
    const auto& c = cfg.censoring;
    auto rates_ok = [](const std::vector<double>& z) {
        if (z.size() != kArms) return false;
        for (double v : z)
            if (!(std::isfinite(v) && v > 0.0)) return false;
        return true;
    };
    if (c.kind == CensoringKind::random)
        require(rates_ok(c.zeta), ErrorCode::invalid_argument, "random censoring needs 3 positive rates");
    if (c.kind == CensoringKind::covdep) {
        require(rates_ok(c.zeta1) && rates_ok(c.zeta2), ErrorCode::invalid_argument,
                "covariate-dependent censoring needs two sets of 3 positive rates");
        require(c.dir.size() == kCovariates, ErrorCode::length_mismatch, "direction vector must have 5 entries");
    }
}

/// Draws J correlated errors: sigma L z for normal errors; sqrt(E) sigma L z
/// with E ~ Exp(1) for double-exponential errors, a Gaussian scale mixture
/// whose marginals are Laplace with the same covariance sigma^2 R.
class ErrorSampler {
public:
    explicit ErrorSampler(const ScenarioConfig& cfg) : dist_(cfg.error), sigma_(cfg.sigma) {
        const auto J = static_cast<Eigen::Index>(cfg.J);
        Eigen::MatrixXd R = Eigen::MatrixXd::Constant(J, J, cfg.error_corr);
        R.diagonal().setOnes();
        L_ = R.llt().matrixL();
    }

    Eigen::VectorXd operator()(Rng& rng) {
        Eigen::VectorXd z(L_.rows());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal_(rng);
        double scale = sigma_;
        if (dist_ == ErrorDist::double_exponential) scale *= std::sqrt(exponential_(rng));
        return scale * (L_ * z);
    }

private:
    ErrorDist dist_;
    double sigma_;
    Eigen::MatrixXd L_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::exponential_distribution<double> exponential_{1.0};
};

inline Eigen::VectorXd draw_covariates(Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x(static_cast<Eigen::Index>(kCovariates));
    for (Eigen::Index c = 0; c < x.size(); ++c) x(c) = u(rng);
    return x;
}

inline std::vector<ResponseSpec> response_specs(const ScenarioConfig& cfg) {
    std::vector<ResponseSpec> specs;
    for (std::size_t j = 0; j < cfg.J; ++j)
        specs.push_back({"y" + std::to_string(j + 1), j == 0 ? ResponseKind::right_censored : ResponseKind::complete,
                         Transform::identity});
    return specs;
}

/// One synthetic trial: n subjects per arm; response 1 observed as
/// min(Y_1, C) with its event flag.
inline TrialDataset generate_replicate(const ScenarioConfig& cfg, Rng& rng) {
    validate(cfg);
    TrialDataset data;
    for (std::size_t c = 0; c < kCovariates; ++c) data.covariate_names.push_back("x" + std::to_string(c + 1));
    data.responses = response_specs(cfg);
    ErrorSampler errors(cfg);
    const auto n = static_cast<Eigen::Index>(cfg.n);
    for (std::size_t k = 0; k < kArms; ++k) {
        data.arm_names.push_back("arm" + std::to_string(k + 1));
        ArmData arm;
        arm.X.resize(n, static_cast<Eigen::Index>(kCovariates));
        arm.y.assign(cfg.J, std::vector<double>(cfg.n));
        arm.event.assign(cfg.J, std::vector<char>(cfg.n, 1));
        for (Eigen::Index i = 0; i < n; ++i) arm.X.row(i) = draw_covariates(rng).transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd x = arm.X.row(i).transpose();
            const Eigen::VectorXd e = errors(rng);
            for (std::size_t j = 0; j < cfg.J; ++j)
                arm.y[j][static_cast<std::size_t>(i)] = mean_response(cfg.model_set, j, k, x) + e(static_cast<Eigen::Index>(j));
        }
        const auto& cs = cfg.censoring;
        if (cs.kind != CensoringKind::none) {
            const Eigen::Map<const Eigen::VectorXd> dir(cs.dir.data(), static_cast<Eigen::Index>(cs.dir.size()));
            for (Eigen::Index i = 0; i < n; ++i) {
                double rate = 0.0;
                if (cs.kind == CensoringKind::random) rate = cs.zeta[k];
                else rate = dir.dot(arm.X.row(i).transpose()) > cs.threshold ? cs.zeta1[k] : cs.zeta2[k];
                const double c = std::exponential_distribution<double>(rate)(rng);
                auto& y = arm.y[0][static_cast<std::size_t>(i)];
                if (c < y) {
                    y = c;
                    arm.event[0][static_cast<std::size_t>(i)] = 0;
                }
            }
        }
        data.arms.push_back(std::move(arm));
    }
    return data;
}

/// Arm favoured by one fresh draw of all K response vectors at x0: each
/// response's arms are ranked by the drawn values and the rankings are
/// aggregated with the scenario's weights.
inline std::size_t truth_label(const ScenarioConfig& cfg, const Eigen::VectorXd& x0, Rng& rng) {
    validate(cfg);
    ErrorSampler errors(cfg);
    std::vector<std::vector<double>> y0(cfg.J, std::vector<double>(kArms));
    for (std::size_t k = 0; k < kArms; ++k) {
        const Eigen::VectorXd e = errors(rng);
        for (std::size_t j = 0; j < cfg.J; ++j) y0[j][k] = mean_response(cfg.model_set, j, k, x0) + e(static_cast<Eigen::Index>(j));
    }
    AggregationProblem p;
    p.weights = cfg.weights;
    p.rho = cfg.rho;
    for (std::size_t j = 0; j < cfg.J; ++j) p.lists.push_back(ranks_from_values(y0[j], rng));
    return top_item(aggregate_exact(p, rng).v_star);
}

struct ReplicateOutcome {
    bool ok = false;
    std::size_t k_star = 0;
    std::size_t truth = 0;
    std::string error_code;
    std::string error_message;
    std::vector<double> censored_fraction;  ///< response 1, per arm
    bool low_confidence = false;
    bool clamped_weights = false;
    bool tie_break = false;
};

struct AccuracyReport {
    ScenarioConfig config;
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t excluded = 0;
    double accuracy = 0.0;
    double ci_low = 0.0;  ///< Wilson 95% interval
    double ci_high = 0.0;
    std::vector<double> censored_fraction;  ///< response 1, per arm, averaged over replicates
    std::size_t low_confidence = 0;
    std::size_t clamped_weights = 0;
    std::size_t tie_breaks = 0;
    std::map<std::string, std::size_t> failures;  ///< excluded replicates by error code
    bool failed = false;                          ///< excluded >= 2% of replicates
    double wall_seconds = 0.0;
    std::vector<ReplicateOutcome> outcomes;
};

inline ReplicateOutcome run_replicate(const ScenarioConfig& cfg, std::size_t r) {
    ReplicateOutcome out;
    try {
        Rng data_rng = substream(cfg.seed, {stream::replicate, r});
        const auto data = generate_replicate(cfg, data_rng);
        for (const auto& arm : data.arms) {
            std::size_t censored = 0;
            for (char e : arm.event[0]) censored += e ? 0 : 1;
            out.censored_fraction.push_back(static_cast<double>(censored) / static_cast<double>(arm.size()));
        }
        const Eigen::VectorXd x0 = draw_covariates(data_rng);

        EngineConfig ec;
        ec.sim = cfg.sim;
        ec.rho = cfg.rho;
        ec.seed = substream(cfg.seed, {stream::replicate_engine, r})();
        const auto engine = fit_engine(data, ec);
        Rng rec_rng = recommend_stream(ec.seed, 0);
        const auto rec = recommend(engine, x0, cfg.weights, cfg.rho, rec_rng);

        Rng truth_rng = substream(cfg.seed, {stream::replicate_truth, r});
        out.truth = truth_label(cfg, x0, truth_rng);
        out.k_star = rec.k_star;
        out.low_confidence = !rec.low_confidence.empty();
        out.clamped_weights = !rec.clamped_weights.empty();
        out.tie_break = rec.tie_break_fired;
        out.ok = true;
    } catch (const Error& e) {
        out.error_code = std::string(ptsel::to_string(e.code()));
        out.error_message = e.what();
    } catch (const std::exception& e) {
        out.error_code = "Internal";
        out.error_message = e.what();
    }
    return out;
}

inline void wilson_interval(std::size_t hits, std::size_t total, double& lo, double& hi) {
    if (total == 0) {
        lo = 0.0;
        hi = 1.0;
        return;
    }
    const double z = 1.959963984540054;
    const double nn = static_cast<double>(total);
    const double p = static_cast<double>(hits) / nn;
    const double denom = 1.0 + z * z / nn;
    const double centre = (p + z * z / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
    lo = std::max(0.0, centre - half);
    hi = std::min(1.0, centre + half);
}

/// Replicates run in parallel on independent streams; results do not depend
/// on the thread count.
inline AccuracyReport run_scenario(const ScenarioConfig& cfg, unsigned threads = 0) {
    validate(cfg);
    const auto start = std::chrono::steady_clock::now();
    AccuracyReport rep;
    rep.config = cfg;
    rep.outcomes.resize(cfg.replicates);
    parallel_for(cfg.replicates, threads, [&](std::size_t r) { rep.outcomes[r] = run_replicate(cfg, r); });

    rep.censored_fraction.assign(kArms, 0.0);
    std::size_t with_fraction = 0;
    for (const auto& o : rep.outcomes) {
        if (!o.ok) {
            ++rep.excluded;
            ++rep.failures[o.error_code];
        } else {
            (o.k_star == o.truth ? rep.hits : rep.misses) += 1;
            rep.low_confidence += o.low_confidence;
            rep.clamped_weights += o.clamped_weights;
            rep.tie_breaks += o.tie_break;
        }
        if (o.censored_fraction.size() == kArms) {
            ++with_fraction;
            for (std::size_t k = 0; k < kArms; ++k) rep.censored_fraction[k] += o.censored_fraction[k];
        }
    }
    if (with_fraction > 0)
        for (auto& f : rep.censored_fraction) f /= static_cast<double>(with_fraction);
    const auto scored = rep.hits + rep.misses;
    rep.accuracy = scored ? static_cast<double>(rep.hits) / static_cast<double>(scored) : 0.0;
    wilson_interval(rep.hits, scored, rep.ci_low, rep.ci_high);
    rep.failed = cfg.replicates > 0 && 50 * rep.excluded >= cfg.replicates;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

}  // namespace ptsel::sim
