#pragma once

// Weighted Spearman footrule and aggregation of J ranked lists into one
// ordering, by exhaustive search or cross-entropy Monte Carlo.
//
// A ranking is stored per item: ranks[k] is the rank (1 = best) of item k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ptsel/errors.hpp"
#include "ptsel/rng.hpp"

namespace ptsel {

using Ranking = std::vector<int>;

struct RankedList {
    Ranking ranks;               ///< ranks[k] in 1..K
    std::vector<double> values;  ///< underlying score M of item k
};

struct AggregationProblem {
    std::vector<RankedList> lists;
    std::vector<double> weights;
    double rho = 1.0;

    std::size_t items() const { return lists.empty() ? 0 : lists.front().ranks.size(); }
};

struct AggregationResult {
    Ranking v_star;
    double psi = 0.0;
    bool tie_break_fired = false;
};

inline constexpr std::size_t kMaxExactItems = 8;
/// Objective values within this relative distance of the minimum count as tied.
inline constexpr double kPsiTieTolerance = 1e-12;

inline bool is_permutation_ranks(std::span<const int> ranks) {
    std::vector<char> seen(ranks.size(), 0);
    for (int r : ranks) {
        if (r < 1 || static_cast<std::size_t>(r) > ranks.size() || seen[static_cast<std::size_t>(r - 1)]) return false;
        seen[static_cast<std::size_t>(r - 1)] = 1;
    }
    return true;
}

/// Item holding rank q (1-based) -> index.
inline std::vector<std::size_t> items_by_rank(std::span<const int> ranks) {
    std::vector<std::size_t> at(ranks.size());
    for (std::size_t k = 0; k < ranks.size(); ++k) at[static_cast<std::size_t>(ranks[k] - 1)] = k;
    return at;
}

/// Rank 1 to the largest value. Exactly equal values are ordered by a uniform
/// random shuffle; the stream is untouched when there are no ties.
inline RankedList ranks_from_values(std::span<const double> values, Rng& rng, bool* tie_fired = nullptr) {
    require(!values.empty(), ErrorCode::invalid_argument, "cannot rank an empty list");
    for (double v : values) require(std::isfinite(v), ErrorCode::bad_value, "ranked values must be finite");
    const auto K = values.size();
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    for (std::size_t lo = 0; lo < K;) {
        std::size_t hi = lo + 1;
        while (hi < K && values[order[hi]] == values[order[lo]]) ++hi;
        if (hi - lo > 1) {
            for (std::size_t i = hi - 1; i > lo; --i) std::swap(order[i], order[lo + uniform_index(rng, i - lo + 1)]);
            if (tie_fired) *tie_fired = true;
        }
        lo = hi;
    }
    RankedList list{Ranking(K), std::vector<double>(values.begin(), values.end())};
    for (std::size_t q = 0; q < K; ++q) list.ranks[order[q]] = static_cast<int>(q + 1);
    return list;
}

/// sum_k |c_k - r_k| * |M(c_k) - M(r_k)|^rho, with M(q) the value of the item
/// holding rank q in `list`.
inline double footrule(std::span<const int> candidate, const RankedList& list, double rho) {
    require(candidate.size() == list.ranks.size(), ErrorCode::length_mismatch,
            "candidate has " + std::to_string(candidate.size()) + " items, list has " +
                std::to_string(list.ranks.size()));
    const auto at = items_by_rank(list.ranks);
    double total = 0.0;
    for (std::size_t k = 0; k < candidate.size(); ++k) {
        const int c = candidate[k];
        const int r = list.ranks[k];
        if (c == r) continue;
        const double gap = std::abs(list.values[at[static_cast<std::size_t>(c - 1)]] -
                                    list.values[at[static_cast<std::size_t>(r - 1)]]);
        total += std::abs(c - r) * std::pow(gap, rho);
    }
    return total;
}

/// psi(v) = sum_j w_j footrule(v, list_j, rho).
inline double psi(std::span<const int> candidate, const AggregationProblem& problem) {
    double total = 0.0;
    for (std::size_t j = 0; j < problem.lists.size(); ++j)
        if (problem.weights[j] != 0.0) total += problem.weights[j] * footrule(candidate, problem.lists[j], problem.rho);
    return total;
}

inline void validate(const AggregationProblem& problem) {
    require(!problem.lists.empty(), ErrorCode::invalid_argument, "aggregation needs at least one list");
    require(problem.weights.size() == problem.lists.size(), ErrorCode::length_mismatch,
            std::to_string(problem.lists.size()) + " lists but " + std::to_string(problem.weights.size()) +
                " weights");
    require(std::isfinite(problem.rho) && problem.rho > 0.0, ErrorCode::invalid_argument, "rho must be positive");
    double sum = 0.0;
    for (double w : problem.weights) {
        require(std::isfinite(w) && w >= 0.0, ErrorCode::invalid_argument, "weights must be nonnegative");
        sum += w;
    }
    require(sum > 0.0, ErrorCode::invalid_argument, "weights must not all be zero");
    const auto K = problem.items();
    require(K >= 1, ErrorCode::invalid_argument, "lists must rank at least one item");
    for (const auto& l : problem.lists) {
        require(l.ranks.size() == K && l.values.size() == K, ErrorCode::length_mismatch,
                "all lists must rank the same number of items");
        require(is_permutation_ranks(l.ranks), ErrorCode::bad_value, "list ranks are not a permutation of 1..K");
        for (double v : l.values) require(std::isfinite(v), ErrorCode::bad_value, "list values must be finite");
    }
}

namespace detail {

inline bool psi_tied(double a, double b) {
    return std::abs(a - b) <= kPsiTieTolerance * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace detail

/// Minimizes psi over all K! rankings, visited in lexicographic order; ties
/// among minimizers are resolved by one uniform draw over them.
inline AggregationResult aggregate_exact(const AggregationProblem& problem, Rng& rng) {
    validate(problem);
    const auto K = problem.items();
    require(K <= kMaxExactItems, ErrorCode::too_large,
            "exact aggregation is limited to " + std::to_string(kMaxExactItems) + " items, got " + std::to_string(K));
    Ranking v(K);
    std::iota(v.begin(), v.end(), 1);
    std::vector<Ranking> best;
    double best_psi = 0.0;
    do {
        const double p = psi(v, problem);
        if (best.empty() || (p < best_psi && !detail::psi_tied(p, best_psi))) {
            best.assign(1, v);
            best_psi = p;
        } else if (detail::psi_tied(p, best_psi)) {
            best.push_back(v);
            best_psi = std::min(best_psi, p);
        }
    } while (std::next_permutation(v.begin(), v.end()));
    AggregationResult out{best.front(), best_psi, false};
    if (best.size() > 1) {
        out.v_star = best[uniform_index(rng, best.size())];
        out.tie_break_fired = true;
    }
    out.psi = psi(out.v_star, problem);
    return out;
}

struct CeOptions {
    int iterations = 50;
    std::size_t sample_size = 0;  ///< 0 means 10 K^2
    double elite_fraction = 0.1;
    double smoothing = 0.7;
    int stagnation_limit = 10;
};

/// Cross-entropy search: a K x K matrix P(item, rank) generates rankings
/// (ranks assigned in order 1..K, each drawn from the unassigned items
/// proportionally to its column); P moves toward the elite samples' empirical
/// frequencies. Returns the best ranking ever sampled.
inline AggregationResult aggregate_ce(const AggregationProblem& problem, Rng& rng, const CeOptions& options = {}) {
    validate(problem);
    require(options.iterations >= 1 && options.elite_fraction > 0.0 && options.elite_fraction <= 1.0 &&
                options.smoothing > 0.0 && options.smoothing <= 1.0,
            ErrorCode::invalid_argument, "invalid cross-entropy options");
    const auto K = problem.items();
    const std::size_t N = options.sample_size ? options.sample_size : 10 * K * K;
    const auto n_elite = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(options.elite_fraction * static_cast<double>(N))));

    std::vector<double> P(K * K, 1.0 / static_cast<double>(K));  // P[item * K + rank]
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Ranking> samples(N, Ranking(K));
    std::vector<double> values(N);
    std::vector<std::size_t> order(N);
    std::vector<char> used(K);

    AggregationResult best;
    int stagnant = 0;
    for (int it = 0; it < options.iterations && stagnant < options.stagnation_limit; ++it) {
        for (std::size_t s = 0; s < N; ++s) {
            std::fill(used.begin(), used.end(), 0);
            for (std::size_t q = 0; q < K; ++q) {
                double mass = 0.0;
                for (std::size_t k = 0; k < K; ++k)
                    if (!used[k]) mass += P[k * K + q];
                std::size_t pick = K;
                if (mass > 0.0) {
                    double u = unif(rng) * mass;
                    for (std::size_t k = 0; k < K; ++k) {
                        if (used[k]) continue;
                        pick = k;
                        u -= P[k * K + q];
                        if (u < 0.0) break;
                    }
                } else {
                    std::size_t free = 0;
                    for (std::size_t k = 0; k < K; ++k) free += used[k] ? 0 : 1;
                    std::size_t target = uniform_index(rng, free);
                    for (std::size_t k = 0; k < K; ++k) {
                        if (used[k]) continue;
                        if (target-- == 0) {
                            pick = k;
                            break;
                        }
                    }
                }
                used[pick] = 1;
                samples[s][pick] = static_cast<int>(q + 1);
            }
            values[s] = psi(samples[s], problem);
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

        if (best.v_star.empty() || values[order[0]] < best.psi) {
            best.v_star = samples[order[0]];
            best.psi = values[order[0]];
            stagnant = 0;
        } else {
            ++stagnant;
        }

        std::vector<double> freq(K * K, 0.0);
        for (std::size_t e = 0; e < n_elite; ++e) {
            const auto& v = samples[order[e]];
            for (std::size_t k = 0; k < K; ++k) freq[k * K + static_cast<std::size_t>(v[k] - 1)] += 1.0;
        }
        for (std::size_t c = 0; c < K * K; ++c)
            P[c] = options.smoothing * freq[c] / static_cast<double>(n_elite) + (1.0 - options.smoothing) * P[c];
    }
    return best;
}

/// Exact search up to `max_exact` items, cross-entropy beyond.
inline AggregationResult aggregate(const AggregationProblem& problem, Rng& rng, std::size_t max_exact = kMaxExactItems,
                                   const CeOptions& ce = {}) {
    if (problem.items() <= std::min(max_exact, kMaxExactItems)) return aggregate_exact(problem, rng);
    return aggregate_ce(problem, rng, ce);
}

/// The item ranked first (0-based).
inline std::size_t top_item(std::span<const int> v) {
    for (std::size_t k = 0; k < v.size(); ++k)
        if (v[k] == 1) return k;
    fail(ErrorCode::bad_value, "ranking has no first place");
}

}  // namespace ptsel
