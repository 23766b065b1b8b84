#include "fsr/augmenter.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <tuple>

namespace fsr {

OpCounters& op_counters() {
    static OpCounters counters;
    return counters;
}

Tensor VirtualSet::map(std::size_t i) const {
    Tensor row = slice(maps, i, i + 1);
    Shape s(maps.shape().begin() + 1, maps.shape().end());
    return reshape(row, s);
}

double sample_beta(double a, double b, Rng& rng) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    // Shape 0.1 gammas underflow to exactly 0 now and then; redraw.
    for (;;) {
        const double x = ga(rng);
        const double y = gb(rng);
        if (x + y > 0.0) return x / (x + y);
    }
}

AlphaSampler beta_sampler(double a, double b) {
    return [a, b](Rng& rng) { return sample_beta(a, b, rng); };
}

AlphaSampler fixed_alpha(double alpha) {
    return [alpha](Rng&) { return alpha; };
}

Tensor similarity_matrix(const Tensor& embeddings) {
    ++op_counters().augmenter;
    if (embeddings.rank() != 2) throw ShapeError("similarity_matrix expects N×D, got " + shape_str(embeddings.shape()));
    return matmul(embeddings, transpose(embeddings));
}

std::vector<PairAssignment> search_pairs(const Tensor& similarity, const std::vector<int>& labels) {
    ++op_counters().augmenter;
    const std::size_t n = labels.size();
    if (similarity.rank() != 2 || similarity.dim(0) != n || similarity.dim(1) != n)
        throw ShapeError("search_pairs: similarity " + shape_str(similarity.shape()) + " for " +
                         std::to_string(n) + " labels");
    auto s = similarity.data();
    std::vector<PairAssignment> out(n);
    for (std::size_t a = 0; a < n; ++a) {
        PairAssignment& p = out[a];
        for (std::size_t j = 0; j < n; ++j) {
            if (j == a) continue;
            const double v = s[a * n + j];
            if (labels[j] == labels[a]) {
                if (p.inner_hard == kAbsent || v < p.s_inner_hard) p.inner_hard = j, p.s_inner_hard = v;
                if (p.inner_easy == kAbsent || v > p.s_inner_easy) p.inner_easy = j, p.s_inner_easy = v;
            } else {
                if (p.inter_hard == kAbsent || v > p.s_inter_hard) p.inter_hard = j, p.s_inter_hard = v;
                if (p.inter_easy == kAbsent || v < p.s_inter_easy) p.inter_easy = j, p.s_inter_easy = v;
            }
        }
    }
    return out;
}

VirtualSet synthesize_virtual(const FeatureBatch& batch, const std::vector<PairAssignment>& pairs,
                              Rng& rng, const AlphaSampler& alpha) {
    ++op_counters().augmenter;
    if (pairs.size() != batch.size())
        throw ShapeError("synthesize_virtual: " + std::to_string(pairs.size()) + " assignments for batch of " +
                         std::to_string(batch.size()));
    VirtualSet set;
    std::set<std::tuple<std::size_t, std::size_t, int>> seen;
    std::vector<std::size_t> anchors, partners;
    std::vector<double> alphas;
    for (std::size_t a = 0; a < pairs.size(); ++a) {
        for (PartnerKind kind : {PartnerKind::inner_hard, PartnerKind::inter_hard}) {
            const std::size_t p = kind == PartnerKind::inner_hard ? pairs[a].inner_hard : pairs[a].inter_hard;
            if (p == kAbsent) continue;
            if (!seen.insert({std::min(a, p), std::max(a, p), static_cast<int>(kind)}).second) continue;
            const double al = alpha(rng);
            if (!(al >= 0.0 && al <= 1.0)) throw std::domain_error("mixing coefficient outside [0,1]");
            set.items.push_back({a, p, kind, batch.labels[a], batch.labels[p], al});
            anchors.push_back(a);
            partners.push_back(p);
            alphas.push_back(al);
        }
    }
    if (set.items.empty()) return set;
    const std::size_t m = alphas.size();
    Shape coeff_shape(batch.maps.rank(), 1);
    coeff_shape[0] = m;
    std::vector<double> complement(m);
    for (std::size_t i = 0; i < m; ++i) complement[i] = 1.0 - alphas[i];
    Tensor wa(coeff_shape, alphas);
    Tensor wb(coeff_shape, std::move(complement));
    Tensor left = hadamard(index_select(batch.maps, anchors), wa);
    Tensor right = hadamard(index_select(batch.maps, partners), wb);
    // An endpoint coefficient reproduces its source bit-exactly: x·1 + y·0 = x.
    set.maps = add(left, right);
    return set;
}

Tensor recognition_loss(const Tensor& probs_real, const std::vector<int>& labels, const Tensor& probs_virtual,
                        const std::vector<VirtualFeature>& virtuals) {
    if (probs_real.rank() != 2 || probs_real.dim(0) != labels.size())
        throw ShapeError("recognition_loss: probabilities " + shape_str(probs_real.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
    const std::size_t k = probs_real.dim(1);
    const std::size_t n = labels.size();
    std::vector<double> w(n * k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw std::out_of_range("label " + std::to_string(labels[i]) + " outside [0," + std::to_string(k) + ")");
        w[i * k + static_cast<std::size_t>(labels[i])] = 1.0 / static_cast<double>(n);
    }
    Tensor loss = scale(sum_all(hadamard(Tensor({n, k}, std::move(w)), log(clamp_min(probs_real, kProbFloor)))), -1.0);

    const std::size_t m = probs_virtual.defined() ? probs_virtual.dim(0) : 0;
    if (m != virtuals.size())
        throw ShapeError("recognition_loss: " + std::to_string(m) + " virtual probability rows for " +
                         std::to_string(virtuals.size()) + " virtual features");
    if (m == 0) return loss;
    if (probs_virtual.dim(1) != k) throw ShapeError("recognition_loss: class count mismatch");
    std::vector<double> wv(m * k, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& v = virtuals[i];
        wv[i * k + static_cast<std::size_t>(v.label_a)] += v.alpha / static_cast<double>(m);
        wv[i * k + static_cast<std::size_t>(v.label_b)] += (1.0 - v.alpha) / static_cast<double>(m);
    }
    Tensor virt = scale(sum_all(hadamard(Tensor({m, k}, std::move(wv)), log(clamp_min(probs_virtual, kProbFloor)))), -1.0);
    return add(loss, virt);
}

double benchmark_distance(double s_inter_easy, double s_inner_easy) { return s_inter_easy - s_inner_easy; }

std::vector<std::optional<double>> benchmark_distance(const std::vector<PairAssignment>& pairs) {
    ++op_counters().augmenter;
    std::vector<std::optional<double>> out(pairs.size());
    for (std::size_t a = 0; a < pairs.size(); ++a)
        if (pairs[a].complete()) out[a] = benchmark_distance(pairs[a].s_inter_easy, pairs[a].s_inner_easy);
    return out;
}

double intensity_base(double s_inner_hard, double s_inter_hard) {
    return std::clamp(1.0 - (s_inner_hard - s_inter_hard + 2.0) / 4.0, 0.0, 1.0);
}

double dynamic_intensity(double s_inner_hard, double s_inter_hard, double d_bm, double rho) {
    if (!(rho >= 0.0)) throw std::invalid_argument("rho must be non-negative");
    return std::pow(intensity_base(s_inner_hard, s_inter_hard), rho) * d_bm;
}

std::vector<std::optional<double>> dynamic_intensity(const std::vector<PairAssignment>& pairs,
                                                     const std::vector<std::optional<double>>& d_bm, double rho) {
    ++op_counters().augmenter;
    if (!(rho >= 0.0)) throw std::invalid_argument("rho must be non-negative");
    if (d_bm.size() != pairs.size()) throw ShapeError("dynamic_intensity: size mismatch");
    std::vector<std::optional<double>> out(pairs.size());
    for (std::size_t a = 0; a < pairs.size(); ++a)
        if (pairs[a].complete() && d_bm[a])
            out[a] = dynamic_intensity(pairs[a].s_inner_hard, pairs[a].s_inter_hard, *d_bm[a], rho);
    return out;
}

Tensor adaptive_loss(const Tensor& similarity, const std::vector<PairAssignment>& pairs,
                     const std::vector<std::optional<double>>& psi) {
    ++op_counters().augmenter;
    const std::size_t n = pairs.size();
    if (psi.size() != n || similarity.rank() != 2 || similarity.dim(0) != n || similarity.dim(1) != n)
        throw ShapeError("adaptive_loss: size mismatch");
    std::vector<std::size_t> inter_idx, inner_idx;
    std::vector<double> margins;
    for (std::size_t a = 0; a < n; ++a) {
        if (!pairs[a].complete() || !psi[a]) continue;
        inter_idx.push_back(a * n + pairs[a].inter_hard);
        inner_idx.push_back(a * n + pairs[a].inner_hard);
        margins.push_back(*psi[a]);
    }
    if (margins.empty()) return Tensor::scalar(0.0);
    const std::size_t e = margins.size();
    Tensor gap = sub(add(take(similarity, inter_idx), Tensor({e}, std::move(margins))), take(similarity, inner_idx));
    return mean(max_with_zero(gap), {0});
}

LossBreakdown total_loss(const Tensor& l_reg, const Tensor& l_ada, double lambda1, double lambda2) {
    if (!std::isfinite(l_reg.item()) || !std::isfinite(l_ada.item()))
        throw DomainError("total_loss: non-finite loss component");
    LossBreakdown out;
    out.l_reg = l_reg;
    out.l_ada = l_ada;
    out.lambda1 = lambda1;
    out.lambda2 = lambda2;
    out.l_total = add(scale(l_reg, lambda1), scale(l_ada, lambda2));
    return out;
}

}  // namespace fsr
