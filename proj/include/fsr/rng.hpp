#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fsr {

using Rng = std::mt19937_64;

/// Generator keyed by a list of integers (seed, epoch, stream id, ...).
inline Rng keyed_rng(std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    for (auto k : key) {
        words.push_back(static_cast<std::uint32_t>(k));
        words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

}  // namespace fsr
