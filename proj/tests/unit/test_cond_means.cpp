#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ptsel/cond_means.hpp"

using namespace ptsel;

namespace {

std::vector<PatientScore> scores_of(std::vector<double> s, std::vector<std::size_t> d) {
    std::vector<PatientScore> out;
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i], d[i]});
    return out;
}

}  // namespace

TEST(MeanSurface, ConstantStratumResponse) {
    const auto sc = scores_of({0.1, 0.4, 0.2, 0.9, 0.3}, {0, 0, 1, 0, 1});
    std::vector<double> y{4.2, 4.2, 9.0, 4.2, -3.0};
    const auto m = build_surface_complete(0, 0, sc, y);
    for (double s : {-1.0, 0.25, 2.0}) {
        const auto mu = eval_mu(m, {s, 0});
        EXPECT_NEAR(mu.value, 4.2, 1e-14);
        EXPECT_FALSE(mu.low_confidence);
    }
}

TEST(MeanSurface, BandwidthIsPluginOnScores) {
    const auto sc = scores_of({0.1, 0.4, 0.2, 0.9, 0.3}, {0, 0, 1, 0, 1});
    std::vector<double> s{0.1, 0.4, 0.2, 0.9, 0.3};
    const auto m = build_surface_complete(0, 0, sc, std::vector<double>(5, 1.0));
    EXPECT_EQ(m.h, plugin_bandwidth(s));
    const auto fixed = build_surface_complete(0, 0, sc, std::vector<double>(5, 1.0), 0.3);
    EXPECT_EQ(fixed.h.value(), 0.3);
    const auto flat = build_surface_complete(0, 0, scores_of({1, 1, 1}, {0, 0, 0}), std::vector<double>(3, 1.0));
    EXPECT_EQ(flat.h.value(), kDegenerateSurfaceBandwidth);
}

TEST(MeanSurface, StratumRestrictionMatchesDirectRatio) {
    const auto sc = scores_of({0.0, 0.5, 1.0, 0.2, 0.7}, {1, 1, 0, 0, 1});
    std::vector<double> y{1.0, 2.0, 50.0, 60.0, 4.0};
    const auto m = build_surface_complete(1, 2, sc, y, 0.4);
    double num = 0.0, den = 0.0;
    for (int i : {0, 1, 4}) {
        const double k = std::exp(-0.5 * std::pow((0.3 - sc[i].s) / 0.4, 2));
        num += k * y[i];
        den += k;
    }
    EXPECT_NEAR(eval_mu(m, {0.3, 1}).value, num / den, 1e-14);
}

TEST(MeanSurface, IpcwRatio) {
    const auto sc = scores_of({0.0, 0.5, 1.0, 0.2}, {0, 0, 0, 0});
    std::vector<double> t{1.0, 2.0, 3.0, 4.0};
    std::vector<char> ev{1, 0, 1, 1};
    WeightTable w{{1.0, 0.9, 0.5, 0.25}, {false, false, false, false}, 0.05};
    const auto m = build_surface_ipcw(0, 1, sc, t, ev, w, 0.5);
    double num = 0.0, den = 0.0;
    for (int i : {0, 2, 3}) {
        const double k = std::exp(-0.5 * std::pow((0.4 - sc[i].s) / 0.5, 2)) / w.weights[i];
        num += k * t[i];
        den += k;
    }
    EXPECT_NEAR(eval_mu(m, {0.4, 0}).value, num / den, 1e-14);
}

TEST(MeanSurface, ZeroCensoringEqualsComplete) {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<PatientScore> sc;
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) {
        sc.push_back({u(gen), static_cast<std::size_t>(i % 3)});
        y.push_back(2 + u(gen));
    }
    const auto a = build_surface_complete(0, 0, sc, y);
    const auto b = build_surface_ipcw(0, 0, sc, y, std::vector<char>(40, 1), WeightTable::unit(40));
    EXPECT_EQ(a.h, b.h);
    for (double s : {-0.5, 0.0, 0.8})
        for (std::size_t d : {0u, 1u, 2u}) EXPECT_EQ(eval_mu(a, {s, d}).value, eval_mu(b, {s, d}).value);
}

TEST(MeanSurface, EmptyStratumFallsBackWithFlag) {
    const auto sc = scores_of({0.0, 0.5, 1.0}, {0, 0, 0});
    std::vector<double> y{1.0, 2.0, 3.0};
    const auto m = build_surface_complete(0, 0, sc, y, 0.5);
    const auto mu = eval_mu(m, {0.5, 2});
    EXPECT_TRUE(mu.low_confidence);
    EXPECT_NEAR(mu.value, eval_mu(m, {0.5, 0}).value, 1e-15);

    // A stratum holding only censored subjects is empty too.
    WeightTable w = WeightTable::unit(3);
    const auto c = build_surface_ipcw(0, 0, scores_of({0.0, 0.5, 1.0}, {0, 1, 0}), y, std::vector<char>{1, 0, 1}, w);
    EXPECT_TRUE(eval_mu(c, {0.5, 1}).low_confidence);
    EXPECT_FALSE(eval_mu(c, {0.5, 0}).low_confidence);
}

TEST(MeanSurface, BoundedAndPermutationInvariant) {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<PatientScore> sc;
    std::vector<double> y;
    for (int i = 0; i < 30; ++i) {
        sc.push_back({u(gen), static_cast<std::size_t>(i % 2)});
        y.push_back(u(gen));
    }
    const auto m = build_surface_complete(0, 0, sc, y);
    auto sc2 = sc;
    auto y2 = y;
    std::reverse(sc2.begin(), sc2.end());
    std::reverse(y2.begin(), y2.end());
    const auto m2 = build_surface_complete(0, 0, sc2, y2);
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 30; i += 2) lo = std::min(lo, y[i]), hi = std::max(hi, y[i]);
    for (double s : {-0.9, 0.1, 0.6}) {
        const double v = eval_mu(m, {s, 0}).value;
        EXPECT_GE(v, lo);
        EXPECT_LE(v, hi);
        EXPECT_NEAR(eval_mu(m2, {s, 0}).value, v, 1e-13);
    }
}

TEST(MeanSurface, LengthChecks) {
    const auto sc = scores_of({0.0, 0.5}, {0, 0});
    EXPECT_THROW(build_surface_complete(0, 0, sc, std::vector<double>{1.0}), Error);
    EXPECT_THROW(build_surface_ipcw(0, 0, sc, std::vector<double>{1.0, 2.0}, std::vector<char>{1}, WeightTable::unit(2)),
                 Error);
}
