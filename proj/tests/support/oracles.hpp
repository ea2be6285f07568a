#pragma once

// Reference implementations written independently of the library code they
// check. Deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ptsel/rank_agg.hpp"
#include "ptsel/rng.hpp"

namespace oracle {

inline void all_permutations(std::vector<int>& prefix, std::vector<bool>& used, std::size_t K,
                             std::vector<std::vector<int>>& out) {
    if (prefix.size() == K) {
        out.push_back(prefix);
        return;
    }
    for (std::size_t v = 1; v <= K; ++v) {
        if (used[v - 1]) continue;
        used[v - 1] = true;
        prefix.push_back(static_cast<int>(v));
        all_permutations(prefix, used, K, out);
        prefix.pop_back();
        used[v - 1] = false;
    }
}

/// Value of the item that holds rank q in `list`.
inline double value_at_rank(const ptsel::RankedList& list, int q) {
    for (std::size_t k = 0; k < list.ranks.size(); ++k)
        if (list.ranks[k] == q) return list.values[k];
    return NAN;
}

inline double distance(const std::vector<int>& cand, const ptsel::RankedList& list, double rho) {
    double d = 0.0;
    for (std::size_t k = 0; k < cand.size(); ++k) {
        const double pos = std::fabs(double(cand[k]) - double(list.ranks[k]));
        const double gap = std::fabs(value_at_rank(list, cand[k]) - value_at_rank(list, list.ranks[k]));
        d += pos * std::pow(gap, rho);
    }
    return d;
}

/// Enumerates all K! rankings; the set of minimizers (relative tolerance
/// 1e-12) in lexicographic order is resolved by one uniform draw.
inline std::vector<int> brute_force_aggregate(const ptsel::AggregationProblem& p, ptsel::Rng& rng) {
    const std::size_t K = p.lists.front().ranks.size();
    std::vector<std::vector<int>> perms;
    std::vector<int> prefix;
    std::vector<bool> used(K, false);
    all_permutations(prefix, used, K, perms);
    std::vector<double> psi(perms.size(), 0.0);
    for (std::size_t i = 0; i < perms.size(); ++i)
        for (std::size_t j = 0; j < p.lists.size(); ++j) psi[i] += p.weights[j] * distance(perms[i], p.lists[j], p.rho);
    const double best = *std::min_element(psi.begin(), psi.end());
    std::vector<std::vector<int>> winners;
    for (std::size_t i = 0; i < perms.size(); ++i)
        if (std::fabs(psi[i] - best) <= 1e-12 * std::max(1.0, std::max(std::fabs(psi[i]), std::fabs(best))))
            winners.push_back(perms[i]);
    if (winners.size() == 1) return winners.front();
    return winners[ptsel::uniform_index(rng, winners.size())];
}

}  // namespace oracle
