#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace ptsel {

using Rng = std::mt19937_64;

/// Independent stream derived from a root seed and a path of integer tags,
/// e.g. substream(seed, {replicate, 3}). Identical inputs give identical
/// streams regardless of how work is scheduled across threads.
inline Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * path.size());
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (auto tag : path) {
        words.push_back(static_cast<std::uint32_t>(tag));
        words.push_back(static_cast<std::uint32_t>(tag >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(rng);
}

// Stream tags. Keeping them in one place avoids accidental reuse.
namespace stream {
inline constexpr std::uint64_t sim_fit = 1;
inline constexpr std::uint64_t training_scores = 2;
inline constexpr std::uint64_t recommend_row = 3;
inline constexpr std::uint64_t replicate = 4;
inline constexpr std::uint64_t replicate_engine = 5;
inline constexpr std::uint64_t replicate_truth = 6;
}  // namespace stream

}  // namespace ptsel
