#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fsr/dataset.hpp"

namespace fsr {

struct BatchItem {
    std::size_t class_id;
    std::size_t sample;  // index within the class
};

/// Class-balanced P×Q batches for one epoch.
struct BatchPlan {
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::size_t classes_per_batch = 0;  // P
    std::size_t samples_per_class = 0;  // Q
    std::vector<std::vector<BatchItem>> batches;
};

/// Every batch holds P distinct classes with Q distinct samples each, and the
/// epoch covers every training sample at least once. Deterministic in (seed, epoch).
/// Throws std::invalid_argument when (P, Q) is infeasible for the class counts.
BatchPlan plan_batches(const std::vector<std::size_t>& class_counts, std::size_t p, std::size_t q,
                       std::uint64_t seed, std::uint64_t epoch);
BatchPlan plan_batches(const DatasetIndex& index, std::size_t p, std::size_t q, std::uint64_t seed,
                       std::uint64_t epoch);

}  // namespace fsr
