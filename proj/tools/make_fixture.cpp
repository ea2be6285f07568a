// Writes the synthetic ACTG-like fixture: four arms, five baseline
// covariates, a right-censored survival time and two week-20 counts.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

#include "CLI11.hpp"

#include "ptsel/dataset_io.hpp"
#include "ptsel/rng.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate the ACTG-like fixture dataset"};
    std::string out = "data/actg_like.csv";
    std::size_t n = 200;
    std::uint64_t seed = 175;
    app.add_option("--out,-o", out, "Output path");
    app.add_option("--n", n, "Subjects per arm");
    app.add_option("--seed", seed, "Seed");
    CLI11_PARSE(app, argc, argv);

    using namespace ptsel;
    TrialDataset d;
    d.arm_names = {"zdv", "zdv_ddi", "zdv_ddc", "ddi"};
    d.covariate_names = {"age", "wtkg", "preanti", "log_cd40", "log_cd80"};
    d.responses = {{"days", ResponseKind::right_censored, Transform::log},
                   {"cd420", ResponseKind::complete, Transform::log},
                   {"cd820", ResponseKind::complete, Transform::log}};

    // Per-arm level shifts (log scale) and slopes along the index. The
    // monotherapy arm trails on every response almost everywhere.
    const double surv_level[4] = {0.00, 0.45, 0.30, 0.40};
    const double surv_slope[4] = {0.30, 0.25, 0.55, 0.10};
    const double cd4_level[4] = {-0.05, 0.12, 0.06, 0.10};
    const double cd4_slope[4] = {0.05, 0.02, 0.12, -0.06};
    const double cd8_level[4] = {-0.02, 0.05, 0.04, 0.03};
    const double cd8_slope[4] = {0.02, -0.04, 0.05, 0.06};

    Rng rng = substream(seed, {0});
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t k = 0; k < 4; ++k) {
        ArmData a;
        a.X.resize(static_cast<Eigen::Index>(n), 5);
        a.y.assign(3, std::vector<double>(n));
        a.event.assign(3, std::vector<char>(n, 1));
        for (std::size_t i = 0; i < n; ++i) {
            const double age = std::round(std::clamp(35.0 + 8.5 * z(rng), 18.0, 70.0));
            const double wt = std::round(std::clamp(75.0 + 13.0 * z(rng), 40.0, 150.0) * 10.0) / 10.0;
            const double pre_draw = -std::log(1.0 - u01(rng));
            const double pre = u01(rng) < 0.6 ? std::round(380.0 * pre_draw) : 0.0;
            const double lcd4 = std::round((5.8 + 0.25 * z(rng)) * 1000.0) / 1000.0;
            const double lcd8 = std::round((6.85 + 0.4 * z(rng)) * 1000.0) / 1000.0;
            const auto row = static_cast<Eigen::Index>(i);
            a.X(row, 0) = age;
            a.X(row, 1) = wt;
            a.X(row, 2) = pre;
            a.X(row, 3) = lcd4;
            a.X(row, 4) = lcd8;

            // Standardized index shared by all responses.
            const double s = 0.6 * (lcd4 - 5.8) / 0.25 - 0.4 * (age - 35.0) / 8.5 - 0.5 * (pre - 230.0) / 330.0 +
                             0.3 * (lcd8 - 6.85) / 0.4;
            const double t = std::tanh(s);

            const double log_time = 7.0 + surv_level[k] + surv_slope[k] * t + 0.5 * z(rng);
            const double log_cens = 7.1 + 0.35 * z(rng);
            const bool event = log_time <= log_cens;
            a.y[0][i] = std::round(std::exp(std::min(log_time, log_cens)) + 1.0);
            a.event[0][i] = event ? 1 : 0;
            a.y[1][i] = std::round(std::exp(lcd4 + cd4_level[k] + cd4_slope[k] * t + 0.15 * z(rng)));
            a.y[2][i] = std::round(std::exp(lcd8 + cd8_level[k] + cd8_slope[k] * t + 0.15 * z(rng)));
        }
        d.arms.push_back(std::move(a));
    }
    io::save_dataset(out, d);
    std::cerr << "wrote " << out << '\n';
    return 0;
}
