#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "ptsel/simgen.hpp"
#include "support/oracles.hpp"

using namespace ptsel;
using namespace ptsel::sim;

namespace {

std::vector<double> mean_censored_fraction(const ScenarioConfig& cfg, std::size_t reps) {
    std::vector<double> frac(kArms, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
        Rng rng = substream(cfg.seed, {500, r});
        const auto d = generate_replicate(cfg, rng);
        for (std::size_t k = 0; k < kArms; ++k) {
            const auto& ev = d.arms[k].event[0];
            frac[k] += static_cast<double>(std::count(ev.begin(), ev.end(), 0)) / static_cast<double>(ev.size());
        }
    }
    for (auto& f : frac) f /= static_cast<double>(reps);
    return frac;
}

}  // namespace

TEST(ModelSets, IndexVectorsAreUnitAndTableRowsNearlySo) {
    for (const auto& row : kModelSet1Beta) {
        double ss = 0.0;
        for (double v : row) ss += v * v;
        EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-2);
    }
    for (int ms : {1, 2})
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t k = 0; k < kArms; ++k) EXPECT_NEAR(index_vector(ms, j, k).norm(), 1.0, 1e-15);
    const auto c = index_vector(2, 1, 2);
    for (Eigen::Index i = 0; i < c.size(); ++i) EXPECT_NEAR(c(i), 1.0 / std::sqrt(5.0), 1e-15);
}

TEST(GenerateReplicate, NoCensoringMeansAllEvents) {
    auto cfg = preset(1, 50, "none");
    Rng rng = substream(1, {1});
    const auto d = generate_replicate(cfg, rng);
    ASSERT_EQ(d.K(), 3u);
    ASSERT_EQ(d.J(), 4u);
    EXPECT_EQ(d.responses[0].kind, ResponseKind::right_censored);
    for (const auto& a : d.arms) {
        EXPECT_EQ(a.size(), 50u);
        for (const auto& ev : a.event) EXPECT_EQ(std::count(ev.begin(), ev.end(), 0), 0);
        EXPECT_LE(a.X.maxCoeff(), 1.0);
        EXPECT_GE(a.X.minCoeff(), -1.0);
    }
}

TEST(GenerateReplicate, NoiselessResponsesLieOnSurfaces) {
    for (int ms : {1, 2}) {
        auto cfg = preset(ms, 30, "none");
        cfg.sigma = 0.0;
        Rng rng = substream(2, {1});
        const auto d = generate_replicate(cfg, rng);
        for (std::size_t k = 0; k < kArms; ++k)
            for (std::size_t i = 0; i < 30; ++i)
                for (std::size_t j = 0; j < cfg.J; ++j)
                    EXPECT_EQ(d.arms[k].y[j][i], mean_response(ms, j, k, d.arms[k].X.row(static_cast<Eigen::Index>(i)).transpose()));
    }
}

TEST(GenerateReplicate, CensoringPresetsHitTargetFractions) {
    for (int ms : {1, 2}) {
        for (const auto& [label, target] : std::vector<std::pair<std::string, double>>{
                 {"random25", 0.25}, {"random50", 0.50}, {"covdep25", 0.25}, {"covdep50", 0.50}}) {
            const auto frac = mean_censored_fraction(preset(ms, 400, label), 50);
            for (std::size_t k = 0; k < kArms; ++k)
                EXPECT_NEAR(frac[k], target, 0.04) << "model set " << ms << ' ' << label << " arm " << k + 1;
        }
    }
}

TEST(GenerateReplicate, ErrorCovarianceMatchesSigmaSquaredR) {
    for (auto dist : {ErrorDist::normal, ErrorDist::double_exponential}) {
        auto cfg = preset(1, 100, "none");
        cfg.sigma = 0.5;
        cfg.error_corr = 0.7;
        cfg.error = dist;
        ErrorSampler sampler(cfg);
        Rng rng = substream(3, {static_cast<std::uint64_t>(dist)});
        const int m = 200000;
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(4, 4);
        double m4 = 0.0;
        for (int i = 0; i < m; ++i) {
            const Eigen::VectorXd e = sampler(rng);
            S += e * e.transpose();
            m4 += std::pow(e(0), 4);
        }
        S /= m;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) EXPECT_NEAR(S(a, b), 0.25 * (a == b ? 1.0 : 0.7), 0.01);
        // Kurtosis 3 for normal margins, 6 for Laplace margins.
        const double kurt = (m4 / m) / (S(0, 0) * S(0, 0));
        EXPECT_NEAR(kurt, dist == ErrorDist::normal ? 3.0 : 6.0, 0.35);
    }
}

TEST(TruthLabel, NoiselessMatchesOracleOnTrueMeans) {
    for (int ms : {1, 2}) {
        auto cfg = preset(ms, 30, "none");
        cfg.sigma = 0.0;
        Rng xr = substream(4, {static_cast<std::uint64_t>(ms)});
        for (int t = 0; t < 40; ++t) {
            const auto x0 = draw_covariates(xr);
            AggregationProblem p;
            p.weights = cfg.weights;
            p.rho = cfg.rho;
            for (std::size_t j = 0; j < cfg.J; ++j) {
                RankedList l;
                for (std::size_t k = 0; k < kArms; ++k) l.values.push_back(mean_response(ms, j, k, x0));
                for (std::size_t k = 0; k < kArms; ++k) {
                    int rank = 1;
                    for (std::size_t m = 0; m < kArms; ++m) rank += l.values[m] > l.values[k];
                    l.ranks.push_back(rank);
                }
                p.lists.push_back(l);
            }
            Rng o = substream(0, {0});
            const auto want = oracle::brute_force_aggregate(p, o);
            const auto want_top = static_cast<std::size_t>(std::find(want.begin(), want.end(), 1) - want.begin());
            Rng r = substream(5, {static_cast<std::uint64_t>(t)});
            EXPECT_EQ(truth_label(cfg, x0, r), want_top);
        }
    }
}

TEST(TruthLabel, SameStreamSameLabel) {
    const auto cfg = preset(1, 30, "none");
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(5, 0.1);
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng a = substream(s, {1}), b = substream(s, {1});
        EXPECT_EQ(truth_label(cfg, x0, a), truth_label(cfg, x0, b));
    }
}

TEST(Wilson, KnownInterval) {
    double lo = 0, hi = 0;
    wilson_interval(8, 10, lo, hi);
    EXPECT_NEAR(lo, 0.4902, 1e-4);
    EXPECT_NEAR(hi, 0.9433, 1e-4);
    wilson_interval(0, 0, lo, hi);
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);
}

TEST(Validate, RejectsBadScenarios) {
    auto cfg = preset(1, 100, "none");
    cfg.model_set = 3;
    EXPECT_THROW(validate(cfg), Error);
    cfg = preset(1, 100, "none");
    cfg.weights = {1.0, 0.0};
    EXPECT_THROW(validate(cfg), Error);
    cfg = preset(1, 100, "none");
    cfg.error_corr = 1.0;
    EXPECT_THROW(validate(cfg), Error);
    cfg = preset(1, 100, "random50");
    cfg.censoring.zeta = {0.3, -1.0, 0.3};
    EXPECT_THROW(validate(cfg), Error);
    EXPECT_THROW(censoring_preset(1, "random75"), Error);
}

TEST(RunScenario, CountsAddUpAndThreadsDoNotMatter) {
    auto cfg = preset(2, 40, "random25", 6, 9);
    cfg.sim.restarts = 3;
    const auto a = run_scenario(cfg, 1);
    const auto b = run_scenario(cfg, 3);
    EXPECT_EQ(a.hits + a.misses + a.excluded, cfg.replicates);
    EXPECT_GE(a.accuracy, 0.0);
    EXPECT_LE(a.accuracy, 1.0);
    EXPECT_EQ(a.hits, b.hits);
    EXPECT_EQ(a.censored_fraction, b.censored_fraction);
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
        EXPECT_EQ(a.outcomes[r].k_star, b.outcomes[r].k_star);
        EXPECT_EQ(a.outcomes[r].truth, b.outcomes[r].truth);
    }
    EXPECT_LE(a.ci_low, a.accuracy);
    EXPECT_GE(a.ci_high, a.accuracy);
}
