#include "fsr/grad_suite.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "fsr/augmenter.hpp"
#include "fsr/nn.hpp"
#include "fsr/refiner.hpp"
#include "fsr/rng.hpp"

namespace fsr {

namespace {

using Fn = std::function<Tensor(const Tensor&)>;

Tensor uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = d(rng);
    return Tensor(shape, std::move(v));
}

// Values kept at least 0.1 away from zero so kinks stay out of the stencil.
Tensor off_zero(const Shape& shape, Rng& rng) {
    std::uniform_real_distribution<double> mag(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
    return Tensor(shape, std::move(v));
}

// Projects a tensor-valued op to a scalar with fixed random weights so every
// output element contributes a distinct coefficient.
Fn weighted(std::function<Tensor(const Tensor&)> op, const Shape& out_shape, Rng& rng) {
    Tensor w = uniform(out_shape, rng);
    return [op = std::move(op), w](const Tensor& x) { return sum_all(hadamard(op(x), w)); };
}

Shape shape_of(const std::function<Tensor(const Tensor&)>& op, const Tensor& x) {
    NoGradGuard g;
    return op(x).shape();
}

struct Suite {
    std::uint64_t seed;
    double tol;
    std::vector<GradSuiteEntry> out;
    std::uint64_t counter = 0;

    Rng rng() { return keyed_rng({seed, 0x96ad, counter++}); }

    void check(const std::string& name, const std::function<Tensor(const Tensor&)>& op, const Tensor& x) {
        Rng r = rng();
        Fn fn = weighted(op, shape_of(op, x), r);
        out.push_back({name, grad_check(fn, x, tol)});
    }
    void check_scalar(const std::string& name, const Fn& fn, const Tensor& x) {
        out.push_back({name, grad_check(fn, x, tol)});
    }
};

void elementwise_ops(Suite& s) {
    Rng r = s.rng();
    Tensor a = uniform({3, 4}, r), b = uniform({3, 4}, r), row = uniform({1, 4}, r);
    s.check("add", [b](const Tensor& x) { return add(x, b); }, a);
    s.check("add_broadcast", [a](const Tensor& x) { return add(a, x); }, row);
    s.check("sub", [a](const Tensor& x) { return sub(a, x); }, b);
    s.check("hadamard", [b](const Tensor& x) { return hadamard(x, b); }, a);
    s.check("hadamard_broadcast", [a](const Tensor& x) { return hadamard(a, x); }, row);
    s.check("scale", [](const Tensor& x) { return scale(x, -2.5); }, a);
    s.check("add_scalar", [](const Tensor& x) { return add_scalar(x, 0.7); }, a);
    s.check("relu", [](const Tensor& x) { return relu(x); }, off_zero({3, 4}, r));
    s.check("max_with_zero", [](const Tensor& x) { return max_with_zero(x); }, off_zero({3, 4}, r));
    s.check("clamp_min", [](const Tensor& x) { return clamp_min(x, 0.0); }, off_zero({3, 4}, r));
    s.check("sigmoid", [](const Tensor& x) { return sigmoid(scale(x, 3.0)); }, a);
    s.check("exp", [](const Tensor& x) { return exp(x); }, a);
    s.check("log", [](const Tensor& x) { return log(x); }, uniform({3, 4}, r, 0.5, 2.0));
}

void reduction_ops(Suite& s) {
    Rng r = s.rng();
    Tensor a = uniform({2, 3, 4}, r);
    s.check("sum", [](const Tensor& x) { return sum(x, {0, 2}); }, a);
    s.check("mean", [](const Tensor& x) { return mean(x, {1}); }, a);
    s.check("max", [](const Tensor& x) { return max(x, {2}); }, a);
    s.check_scalar("sum_all", [](const Tensor& x) { return sum_all(hadamard(x, x)); }, a);
    s.check("softmax", [](const Tensor& x) { return softmax(x, 1); }, a);
    s.check("l2_normalize", [](const Tensor& x) { return l2_normalize(x, 1); }, uniform({3, 5}, r));
}

void linear_ops(Suite& s) {
    Rng r = s.rng();
    Tensor a = uniform({3, 4}, r), b = uniform({4, 2}, r);
    s.check("matmul_lhs", [b](const Tensor& x) { return matmul(x, b); }, a);
    s.check("matmul_rhs", [a](const Tensor& x) { return matmul(a, x); }, b);
    s.check("transpose", [](const Tensor& x) { return transpose(x); }, a);
    s.check("reshape", [](const Tensor& x) { return reshape(x, {2, 6}); }, a);
    s.check("index_select", [](const Tensor& x) { return index_select(x, {2, 0, 2}); }, a);
    s.check("take", [](const Tensor& x) { return take(x, {0, 5, 5, 11}); }, a);
    s.check("slice", [](const Tensor& x) { return slice(x, 1, 3); }, a);
    Tensor c = uniform({2, 4}, r);
    s.check("concat", [c](const Tensor& x) { return concat({x, c, x}); }, a);
}

void spatial_ops(Suite& s) {
    Rng r = s.rng();
    Tensor in = uniform({2, 2, 5, 5}, r), k = uniform({3, 2, 3, 3}, r), bias = uniform({3}, r);
    s.check("conv2d_input", [k, bias](const Tensor& x) { return conv2d(x, k, bias, 2, 1); }, in);
    s.check("conv2d_kernel", [in, bias](const Tensor& x) { return conv2d(in, x, bias, 1, 1); }, k);
    s.check("conv2d_bias", [in, k](const Tensor& x) { return conv2d(in, k, x, 1, 0); }, bias);
    Tensor in1 = uniform({2, 2, 6}, r), k1 = uniform({3, 2, 3}, r), b1 = uniform({3}, r);
    s.check("conv1d_input", [k1, b1](const Tensor& x) { return conv1d(x, k1, b1, 1, 1); }, in1);
    s.check("conv1d_kernel", [in1, b1](const Tensor& x) { return conv1d(in1, x, b1, 2, 1); }, k1);
    s.check("adaptive_avg_pool2d", [](const Tensor& x) { return adaptive_avg_pool2d(x, 2, 3); }, in);
    Tensor gamma = uniform({2}, r, 0.5, 1.5), beta = uniform({2}, r);
    s.check("batchnorm_input",
            [gamma, beta](const Tensor& x) {
                BatchNormState st = BatchNormState::fresh(2);
                return batchnorm(x, gamma, beta, st, Mode::train);
            },
            in);
    s.check("batchnorm_gamma",
            [in, beta](const Tensor& x) {
                BatchNormState st = BatchNormState::fresh(2);
                return batchnorm(in, x, beta, st, Mode::train);
            },
            gamma);
}

// Similarity, pair-driven mixup, classifier and both loss terms. Pairs, ψ and
// α are fixed from the unperturbed input: they are selections and detached
// constants, not part of the differentiable path.
void augmenter_path(Suite& s) {
    const std::vector<int> labels{0, 0, 1, 1, 2, 2};
    const std::size_t c = 4;
    for (int attempt = 0;; ++attempt) {
        Rng r = s.rng();
        Tensor maps = uniform({labels.size(), c, 2, 2}, r);
        ParamStore params;
        Classifier head("cls", c, 3);
        head.init(params, r);
        auto pairs_of = [&](const Tensor& m) {
            NoGradGuard g;
            return search_pairs(similarity_matrix(similarity_embeddings(m, SimilaritySource::pooled)), labels);
        };
        const auto pairs = pairs_of(maps);
        const auto psi = dynamic_intensity(pairs, benchmark_distance(pairs), 1.0);
        Tensor probe;
        {
            NoGradGuard g;
            probe = adaptive_loss(similarity_matrix(similarity_embeddings(maps, SimilaritySource::pooled)), pairs, psi);
        }
        if (probe.item() <= 1e-3 && attempt < 50) continue;  // want the hinge active
        const std::uint64_t alpha_key = s.seed;
        Fn fn = [=](const Tensor& m) mutable {
            FeatureBatch fb{m, similarity_embeddings(m, SimilaritySource::pooled), labels, {}};
            Tensor sim = similarity_matrix(fb.embeddings);
            Rng ar = keyed_rng({alpha_key, 0xa1});
            VirtualSet vs = synthesize_virtual(fb, pairs, ar);
            const std::size_t n = labels.size();
            Tensor all = concat({m, vs.maps});
            Classification out = head(reshape(adaptive_avg_pool2d(all, 1, 1), {all.dim(0), c}), params);
            Tensor l_reg = recognition_loss(slice(out.probs, 0, n), labels, slice(out.probs, n, all.dim(0)), vs.items);
            return total_loss(l_reg, adaptive_loss(sim, pairs, psi), 1.0, 0.8).l_total;
        };
        s.check_scalar("augmenter_loss_path", fn, maps);
        return;
    }
}

void refiner_block(Suite& s) {
    Rng r = s.rng();
    const std::size_t c = 6;
    Refiner refiner(c, "ref");
    auto params = std::make_shared<ParamStore>();
    refiner.init(*params, r);
    Tensor f = uniform({3, c, 3, 3}, r);
    s.check("refiner_input", [refiner, params](const Tensor& x) { return refiner.refine(x, *params, Mode::train).refined; }, f);
    const Tensor w = params->get("ref.global.hidden.weight");
    s.check("refiner_kernel_weights",
            [refiner, params, f](const Tensor& x) {
                params->get("ref.global.hidden.weight") = x;
                return refiner.refine(f, *params, Mode::train).refined;
            },
            w);
    params->get("ref.global.hidden.weight") = w;
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, double tol) {
    Suite s{seed, tol, {}};
    elementwise_ops(s);
    reduction_ops(s);
    linear_ops(s);
    spatial_ops(s);
    augmenter_path(s);
    refiner_block(s);
    return s.out;
}

}  // namespace fsr
