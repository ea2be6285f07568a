#pragma once

// Small synthetic trials for engine-level tests.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ptsel/pipeline.hpp"
#include "ptsel/rng.hpp"

namespace synth {

using Mean = std::function<double(std::size_t j, std::size_t k, const Eigen::VectorXd& x)>;

/// Covariates U(-1,1)^r, y_jk = mean(j,k,x) + sigma * N(0,1); every
/// response complete unless `censor_rate` > 0, which censors response 0
/// with Exp(censor_rate) times after shifting it positive by `shift`.
inline ptsel::TrialDataset make(std::size_t K, std::size_t J, std::size_t r, std::size_t n, const Mean& mean,
                                double sigma, std::uint64_t seed, double censor_rate = 0.0) {
    ptsel::TrialDataset d;
    for (std::size_t c = 0; c < r; ++c) d.covariate_names.push_back("x" + std::to_string(c + 1));
    for (std::size_t j = 0; j < J; ++j)
        d.responses.push_back({"y" + std::to_string(j + 1),
                               (j == 0 && censor_rate > 0.0) ? ptsel::ResponseKind::right_censored
                                                             : ptsel::ResponseKind::complete,
                               ptsel::Transform::identity});
    auto rng = ptsel::substream(seed, {99});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> z(0.0, 1.0);
    std::exponential_distribution<double> cens(censor_rate > 0.0 ? censor_rate : 1.0);
    for (std::size_t k = 0; k < K; ++k) {
        d.arm_names.push_back("arm" + std::to_string(k + 1));
        ptsel::ArmData a;
        a.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
        a.y.assign(J, std::vector<double>(n));
        a.event.assign(J, std::vector<char>(n, 1));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < r; ++c) a.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = u(rng);
            const Eigen::VectorXd x = a.X.row(static_cast<Eigen::Index>(i)).transpose();
            for (std::size_t j = 0; j < J; ++j) a.y[j][i] = mean(j, k, x) + sigma * z(rng);
            if (censor_rate > 0.0) {
                const double c = cens(rng);
                if (c < a.y[0][i]) {
                    a.y[0][i] = c;
                    a.event[0][i] = 0;
                }
            }
        }
        d.arms.push_back(std::move(a));
    }
    return d;
}

inline ptsel::EngineConfig quick_config(std::uint64_t seed) {
    ptsel::EngineConfig c;
    c.seed = seed;
    c.sim.restarts = 4;
    return c;
}

}  // namespace synth
