#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "fsr/extractor.hpp"
#include "fsr/nn.hpp"

namespace fsr {

/// Invocation counters for the augmentation and refinement mechanisms, used
/// to confirm that ablated configurations never touch them.
struct OpCounters {
    std::atomic<std::uint64_t> augmenter{0};
    std::atomic<std::uint64_t> refiner{0};
};
OpCounters& op_counters();

inline constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();

/// Hard and easy partners of one anchor, with their cosine similarities.
/// inner = same label, inter = different label; kAbsent when no candidate.
struct PairAssignment {
    std::size_t inner_hard = kAbsent;
    std::size_t inter_hard = kAbsent;
    std::size_t inner_easy = kAbsent;
    std::size_t inter_easy = kAbsent;
    double s_inner_hard = 0.0;
    double s_inter_hard = 0.0;
    double s_inner_easy = 0.0;
    double s_inter_easy = 0.0;

    bool has_inner() const { return inner_hard != kAbsent; }
    bool has_inter() const { return inter_hard != kAbsent; }
    bool complete() const { return has_inner() && has_inter(); }
};

enum class PartnerKind { inner_hard, inter_hard };

struct VirtualFeature {
    std::size_t anchor;
    std::size_t partner;
    PartnerKind kind;
    int label_a;
    int label_b;
    double alpha;
};

/// Mixed feature maps (M×C×h×w, on the tape) and what each row was built from.
struct VirtualSet {
    Tensor maps;
    std::vector<VirtualFeature> items;

    std::size_t size() const { return items.size(); }
    Tensor map(std::size_t i) const;  // C×h×w
};

struct LossBreakdown {
    Tensor l_reg;
    Tensor l_ada;
    Tensor l_total;
    double lambda1 = 1.0;
    double lambda2 = 0.8;
    double rho = 1.0;
};

using AlphaSampler = std::function<double(Rng&)>;

/// X/(X+Y) with X ~ Gamma(a,1), Y ~ Gamma(b,1).
double sample_beta(double a, double b, Rng& rng);
AlphaSampler beta_sampler(double a = 0.1, double b = 0.1);
AlphaSampler fixed_alpha(double alpha);

/// Gram matrix of the embedding rows: S[i][j] = e_i · e_j.
Tensor similarity_matrix(const Tensor& embeddings);

/// Per-anchor hard/easy partners from S. Ties go to the smallest index.
std::vector<PairAssignment> search_pairs(const Tensor& similarity, const std::vector<int>& labels);

/// One mixed map per (anchor, present hard partner); a pair already emitted
/// from the other end with the same partner kind is skipped.
VirtualSet synthesize_virtual(const FeatureBatch& batch, const std::vector<PairAssignment>& pairs,
                              Rng& rng, const AlphaSampler& alpha = beta_sampler());

inline constexpr double kProbFloor = 1e-12;

/// Mean real cross-entropy plus mean mixed-label cross-entropy over virtuals.
/// `probs_virtual` may be undefined when `virtuals` is empty.
Tensor recognition_loss(const Tensor& probs_real, const std::vector<int>& labels,
                        const Tensor& probs_virtual, const std::vector<VirtualFeature>& virtuals);

double benchmark_distance(double s_inter_easy, double s_inner_easy);
std::vector<std::optional<double>> benchmark_distance(const std::vector<PairAssignment>& pairs);

/// Hardness base (1 − (s_inner_hard − s_inter_hard + 2)/4), clamped to [0, 1].
double intensity_base(double s_inner_hard, double s_inter_hard);
double dynamic_intensity(double s_inner_hard, double s_inter_hard, double d_bm, double rho);
std::vector<std::optional<double>> dynamic_intensity(const std::vector<PairAssignment>& pairs,
                                                     const std::vector<std::optional<double>>& d_bm,
                                                     double rho);

/// Mean over eligible anchors of max(S[a][inter_hard] + ψ(a) − S[a][inner_hard], 0).
/// ψ is a constant; gradient reaches `similarity` through the two hard entries.
Tensor adaptive_loss(const Tensor& similarity, const std::vector<PairAssignment>& pairs,
                     const std::vector<std::optional<double>>& psi);

LossBreakdown total_loss(const Tensor& l_reg, const Tensor& l_ada, double lambda1, double lambda2);

}  // namespace fsr
