#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ptsel/errors.hpp"
#include "ptsel/rng.hpp"
#include "ptsel/sim_model.hpp"

namespace ptsel {

/// Link values closer than this to the maximum count as tied.
inline constexpr double kLinkTieTolerance = 1e-12;

/// Composite score for one response: best margin and the arm (0-based) achieving it.
struct PatientScore {
    double s = 0.0;
    std::size_t d = 0;
};

struct ScorePanel {
    std::vector<PatientScore> scores;        ///< one per response
    std::vector<std::vector<double>> links;  ///< links[j][k] = g_jk(beta_jk' x)
    bool tie_break_fired = false;
};

/// S_k = g_k - max_{l != k} g_l.
inline std::vector<double> margins_from_links(std::span<const double> links) {
    require(links.size() >= 2, ErrorCode::invalid_argument, "scores need at least two arms");
    std::vector<double> s(links.size());
    for (std::size_t k = 0; k < links.size(); ++k) {
        double other = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < links.size(); ++l)
            if (l != k && links[l] > other) other = links[l];
        s[k] = links[k] - other;
    }
    return s;
}

/// Best margin and its arm; arms whose link is within kLinkTieTolerance of the
/// maximum are tied and one is drawn uniformly from `rng` (no draw otherwise).
inline PatientScore score_from_links(std::span<const double> links, Rng& rng, bool* tie_fired = nullptr) {
    const auto margins = margins_from_links(links);
    double top = links[0];
    for (double g : links) top = std::max(top, g);
    std::vector<std::size_t> tied;
    for (std::size_t k = 0; k < links.size(); ++k)
        if (links[k] >= top - kLinkTieTolerance) tied.push_back(k);
    std::size_t d = tied.front();
    if (tied.size() > 1) {
        d = tied[uniform_index(rng, tied.size())];
        if (tie_fired) *tie_fired = true;
    }
    double s = margins[0];
    for (double m : margins) s = std::max(s, m);
    return PatientScore{s, d};
}

/// Margins S_jk for one response from its K fitted links at x.
inline std::vector<double> score_margins(std::span<const SimFit> fits, const Eigen::VectorXd& x) {
    require(fits.size() >= 2, ErrorCode::invalid_argument, "scores need at least two arms");
    std::vector<double> links;
    links.reserve(fits.size());
    for (const auto& f : fits) links.push_back(predict_link(f, x));
    return margins_from_links(links);
}

/// fits_by_response[j][k]; returns (s_j, d_j) for every response.
inline ScorePanel score_patient(const std::vector<std::vector<SimFit>>& fits_by_response, const Eigen::VectorXd& x,
                                Rng& rng) {
    require(!fits_by_response.empty(), ErrorCode::invalid_argument, "no responses to score");
    ScorePanel panel;
    for (const auto& fits : fits_by_response) {
        require(fits.size() >= 2, ErrorCode::invalid_argument, "scores need at least two arms");
        std::vector<double> links;
        links.reserve(fits.size());
        for (const auto& f : fits) links.push_back(predict_link(f, x));
        panel.scores.push_back(score_from_links(links, rng, &panel.tie_break_fired));
        panel.links.push_back(std::move(links));
    }
    return panel;
}

}  // namespace ptsel
