#include "fsr/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fsr/rng.hpp"

namespace fsr {

namespace {

std::vector<std::size_t> random_subset(std::size_t n, std::size_t q, Rng& rng) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(q);
    return all;
}

// Shuffled chunks of size q that together cover 0..n-1; the last chunk is
// topped up with distinct samples not already in it.
std::vector<std::vector<std::size_t>> cover_chunks(std::size_t n, std::size_t q, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> chunks;
    for (std::size_t i = 0; i < n; i += q)
        chunks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                            order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + q)));
    auto& last = chunks.back();
    if (last.size() < q) {
        for (std::size_t idx : random_subset(n, n, rng)) {
            if (last.size() == q) break;
            if (std::find(last.begin(), last.end(), idx) == last.end()) last.push_back(idx);
        }
    }
    return chunks;
}

}  // namespace

BatchPlan plan_batches(const std::vector<std::size_t>& class_counts, std::size_t p, std::size_t q,
                       std::uint64_t seed, std::uint64_t epoch) {
    const std::size_t k = class_counts.size();
    if (p < 2 || q < 2)
        throw std::invalid_argument("infeasible batch plan: need P >= 2 and Q >= 2, got P=" + std::to_string(p) +
                                    " Q=" + std::to_string(q));
    if (p > k)
        throw std::invalid_argument("infeasible batch plan: P=" + std::to_string(p) + " exceeds " +
                                    std::to_string(k) + " classes");
    for (std::size_t c = 0; c < k; ++c)
        if (class_counts[c] < q)
            throw std::invalid_argument("infeasible batch plan: class " + std::to_string(c) + " has " +
                                        std::to_string(class_counts[c]) + " samples, Q=" + std::to_string(q));

    Rng rng = keyed_rng({seed, epoch, 0xba7c4ULL});
    std::vector<std::vector<std::vector<std::size_t>>> chunks(k);
    std::size_t rounds = 0;
    for (std::size_t c = 0; c < k; ++c) {
        chunks[c] = cover_chunks(class_counts[c], q, rng);
        rounds = std::max(rounds, chunks[c].size());
    }

    BatchPlan plan{seed, epoch, p, q, {}};
    for (std::size_t r = 0; r < rounds; ++r) {
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < k; start += p) {
            std::vector<std::size_t> group(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(k, start + p)));
            const std::size_t owned = group.size();
            // Fill a short final group with other classes.
            for (std::size_t c : random_subset(k, k, rng)) {
                if (group.size() == p) break;
                if (std::find(group.begin(), group.end(), c) == group.end()) group.push_back(c);
            }
            std::vector<BatchItem> batch;
            for (std::size_t i = 0; i < group.size(); ++i) {
                const std::size_t c = group[i];
                const auto members = i < owned && r < chunks[c].size() ? chunks[c][r]
                                                                       : random_subset(class_counts[c], q, rng);
                for (std::size_t s : members) batch.push_back({c, s});
            }
            plan.batches.push_back(std::move(batch));
        }
    }
    std::shuffle(plan.batches.begin(), plan.batches.end(), rng);
    return plan;
}

BatchPlan plan_batches(const DatasetIndex& index, std::size_t p, std::size_t q, std::uint64_t seed,
                       std::uint64_t epoch) {
    return plan_batches(index.class_counts(Split::train), p, q, seed, epoch);
}

}  // namespace fsr
