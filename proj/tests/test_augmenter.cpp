#include <gtest/gtest.h>

#include <cmath>

#include "fsr/augmenter.hpp"
#include "helpers.hpp"

using namespace fsr;

namespace {

// Direct O(N²) scan with the smallest-index tie rule.
std::vector<PairAssignment> brute_force_pairs(const Tensor& s, const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    std::vector<PairAssignment> out(n);
    for (std::size_t a = 0; a < n; ++a) {
        auto pick = [&](bool same, bool want_max) {
            std::size_t best = kAbsent;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == a || (labels[j] == labels[a]) != same) continue;
                const double v = s.at({a, j});
                if (best == kAbsent || (want_max ? v > s.at({a, best}) : v < s.at({a, best}))) best = j;
            }
            return best;
        };
        out[a].inner_hard = pick(true, false);
        out[a].inner_easy = pick(true, true);
        out[a].inter_hard = pick(false, true);
        out[a].inter_easy = pick(false, false);
    }
    return out;
}

FeatureBatch batch_of(Tensor maps, std::vector<int> labels) {
    FeatureBatch b;
    b.embeddings = similarity_embeddings(maps, SimilaritySource::pooled);
    b.maps = std::move(maps);
    b.labels = std::move(labels);
    return b;
}

}  // namespace

TEST(Similarity, DotProductsOfRows) {
    Tensor s = similarity_matrix(Tensor::mat({{0.6, 0.8}, {1, 0}}));
    EXPECT_DOUBLE_EQ(s.at({0, 1}), 0.6);
    EXPECT_DOUBLE_EQ(s.at({1, 0}), 0.6);
    Tensor eye = similarity_matrix(Tensor::mat({{1, 0}, {0, 1}}));
    EXPECT_EQ(eye.at({0, 0}), 1);
    EXPECT_EQ(eye.at({0, 1}), 0);
}

TEST(PairSearch, HandSetTwoByTwo) {
    // Classes {0,1}, two samples each.
    Tensor e = l2_normalize(Tensor::mat({{1, 0}, {0.8, 0.6}, {0, 1}, {0.6, 0.8}}), 1);
    std::vector<int> labels{0, 0, 1, 1};
    Tensor s = similarity_matrix(e);
    auto got = search_pairs(s, labels);
    auto want = brute_force_pairs(s, labels);
    for (std::size_t a = 0; a < 4; ++a) {
        EXPECT_EQ(got[a].inner_hard, want[a].inner_hard);
        EXPECT_EQ(got[a].inter_hard, want[a].inter_hard);
        EXPECT_EQ(got[a].inner_easy, want[a].inner_easy);
        EXPECT_EQ(got[a].inter_easy, want[a].inter_easy);
    }
    // Anchor 0: its only same-class partner is 1; sample 3 (0.6) beats 2 (0.0).
    EXPECT_EQ(got[0].inner_hard, 1u);
    EXPECT_EQ(got[0].inter_hard, 3u);
    EXPECT_EQ(got[0].inter_easy, 2u);
    EXPECT_DOUBLE_EQ(got[0].s_inter_hard, s.at({0, 3}));
}

TEST(PairSearch, SingleClassHasNoInterPartners) {
    auto p = search_pairs(Tensor::mat({{1, 0.3}, {0.3, 1}}), {2, 2});
    EXPECT_FALSE(p[0].has_inter());
    EXPECT_EQ(p[0].inner_hard, 1u);
    EXPECT_EQ(p[0].inner_easy, 1u);
    EXPECT_FALSE(p[0].complete());
}

TEST(PairSearch, TiesGoToSmallestIndex) {
    Tensor s = Tensor::mat({{1, 0.5, 0.5, 0.2, 0.2}, {0.5, 1, 0, 0, 0}, {0.5, 0, 1, 0, 0}, {0.2, 0, 0, 1, 0},
                            {0.2, 0, 0, 0, 1}});
    auto p = search_pairs(s, {0, 0, 0, 1, 1});
    EXPECT_EQ(p[0].inner_hard, 1u);
    EXPECT_EQ(p[0].inner_easy, 1u);
    EXPECT_EQ(p[0].inter_hard, 3u);
    EXPECT_EQ(p[0].inter_easy, 3u);
}

TEST(PairSearch, RandomBatchesMatchBruteForce) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng = keyed_rng({seed, 77});
        std::uniform_int_distribution<int> lab(0, 3);
        const std::size_t n = 2 + seed % 20;
        std::vector<int> labels(n);
        for (auto& l : labels) l = lab(rng);
        // Quantized embeddings make ties common.
        Tensor e = fsr::test::random_tensor({n, 3}, rng);
        for (auto& v : e.mutable_data()) v = std::round(v * 2) / 2;
        Tensor s = similarity_matrix(e);
        auto got = search_pairs(s, labels);
        auto want = brute_force_pairs(s, labels);
        for (std::size_t a = 0; a < n; ++a) {
            ASSERT_EQ(got[a].inner_hard, want[a].inner_hard);
            ASSERT_EQ(got[a].inner_easy, want[a].inner_easy);
            ASSERT_EQ(got[a].inter_hard, want[a].inter_hard);
            ASSERT_EQ(got[a].inter_easy, want[a].inter_easy);
        }
    }
}

TEST(Virtual, EndpointAndMidpointMixing) {
    Rng rng(1);
    Tensor maps = fsr::test::random_tensor({4, 3, 2, 2}, rng);
    FeatureBatch b = batch_of(maps, {0, 0, 1, 1});
    auto pairs = search_pairs(similarity_matrix(b.embeddings), b.labels);
    VirtualSet one = synthesize_virtual(b, pairs, rng, fixed_alpha(1.0));
    ASSERT_GT(one.size(), 0u);
    for (std::size_t i = 0; i < one.size(); ++i) {
        Tensor anchor = slice(maps, one.items[i].anchor, one.items[i].anchor + 1);
        for (std::size_t k = 0; k < anchor.numel(); ++k) EXPECT_EQ(one.map(i)[k], anchor[k]);
    }
    VirtualSet half = synthesize_virtual(b, pairs, rng, fixed_alpha(0.5));
    for (std::size_t i = 0; i < half.size(); ++i) {
        const std::size_t row = maps.numel() / 4;
        for (std::size_t k = 0; k < row; ++k)
            EXPECT_NEAR(half.map(i)[k],
                        0.5 * (maps[half.items[i].anchor * row + k] + maps[half.items[i].partner * row + k]), 1e-15);
    }
}

TEST(Virtual, PairsAreNotDuplicatedFromBothEnds) {
    Rng rng(2);
    FeatureBatch b = batch_of(fsr::test::random_tensor({2, 3, 2, 2}, rng), {0, 0});
    auto pairs = search_pairs(similarity_matrix(b.embeddings), b.labels);
    VirtualSet v = synthesize_virtual(b, pairs, rng);
    EXPECT_EQ(v.size(), 1u);  // (0,1) and (1,0) are the same inner-hard pair
    EXPECT_EQ(v.items[0].kind, PartnerKind::inner_hard);
}

TEST(Virtual, BetaSampleMean) {
    Rng rng(123);
    double total = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double a = sample_beta(0.1, 0.1, rng);
        ASSERT_GE(a, 0.0);
        ASSERT_LE(a, 1.0);
        total += a;
    }
    EXPECT_NEAR(total / n, 0.5, 0.01);
}

TEST(RecognitionLoss, OneHotUniformAndMixed) {
    Tensor perfect = Tensor::mat({{1, 0}, {0, 1}});
    EXPECT_LE(recognition_loss(perfect, {0, 1}, Tensor(), {}).item(), 1e-10);

    Tensor uniform = Tensor({3, 10}, 0.1);
    EXPECT_NEAR(recognition_loss(uniform, {0, 4, 9}, Tensor(), {}).item(), 2.302585092994046, 1e-12);

    // No real error: the real rows are perfect, so the loss is the virtual term alone.
    Tensor pv = Tensor::mat({{0.5, 0.25, 0.25}});
    VirtualFeature v{0, 1, PartnerKind::inter_hard, 0, 1, 0.3};
    Tensor real = Tensor::mat({{1, 0, 0}, {0, 1, 0}});
    EXPECT_NEAR(recognition_loss(real, {0, 1}, pv, {v}).item(), 1.178350206951907, 1e-12);
    EXPECT_THROW(recognition_loss(real, {0, 3}, Tensor(), {}), std::out_of_range);
}

TEST(AdaptiveMargin, WalkthroughValues) {
    EXPECT_NEAR(benchmark_distance(-0.5, 0.95), -1.45, 1e-9);
    EXPECT_NEAR(benchmark_distance(0.0, 0.8), -0.8, 1e-9);
    EXPECT_EQ(benchmark_distance(0.3, 0.3), 0.0);

    EXPECT_NEAR(intensity_base(0.2, 0.9), 0.675, 1e-12);
    EXPECT_NEAR(dynamic_intensity(0.2, 0.9, -1.45, 1.0), -0.97875, 1e-9);
    EXPECT_NEAR(intensity_base(0.1, 0.9), 0.7, 1e-12);
    EXPECT_NEAR(dynamic_intensity(0.1, 0.9, -0.8, 1.0), -0.56, 1e-9);
    EXPECT_EQ(dynamic_intensity(0.4, -0.3, -1.2, 0.0), -1.2);
    EXPECT_THROW(dynamic_intensity(0.4, -0.3, -1.2, -1.0), std::invalid_argument);
}

TEST(AdaptiveMargin, HingeWalkthrough) {
    // Anchor 0 with inner-hard partner 1 and inter-hard partner 2.
    auto one_anchor = [](double s_inner, double s_inter, double psi) {
        Tensor s = Tensor::mat({{1, s_inner, s_inter}, {s_inner, 1, 0}, {s_inter, 0, 1}});
        PairAssignment p;
        p.inner_hard = p.inner_easy = 1;
        p.inter_hard = p.inter_easy = 2;
        PairAssignment none;
        return adaptive_loss(s, {p, none, none}, {psi, std::nullopt, std::nullopt}).item();
    };
    EXPECT_NEAR(one_anchor(0.1, 0.9, -0.56), 0.24, 1e-9);
    EXPECT_NEAR(one_anchor(0.2, 0.9, -0.97875), 0.0, 1e-9);
    EXPECT_EQ(one_anchor(0.9, 0.1, 0.0), 0.0);
}

TEST(AdaptiveMargin, GradientFlowsOnlyThroughHardEntries) {
    Tensor s = Tensor::mat({{1, 0.1, 0.9}, {0.1, 1, 0}, {0.9, 0, 1}});
    s.set_requires_grad(true);
    PairAssignment p;
    p.inner_hard = p.inner_easy = 1;
    p.inter_hard = p.inter_easy = 2;
    adaptive_loss(s, {p, {}, {}}, {-0.56, std::nullopt, std::nullopt}).backward();
    auto g = s.grad();
    EXPECT_EQ(g[2], 1.0);
    EXPECT_EQ(g[1], -1.0);
    double rest = 0;
    for (std::size_t i = 0; i < 9; ++i)
        if (i != 1 && i != 2) rest += std::abs(g[i]);
    EXPECT_EQ(rest, 0.0);
}

TEST(TotalLoss, WeightsAndGuards) {
    EXPECT_NEAR(total_loss(Tensor::scalar(2), Tensor::scalar(0.5), 1.0, 0.8).l_total.item(), 2.4, 1e-15);
    EXPECT_EQ(total_loss(Tensor::scalar(1.7), Tensor::scalar(3), 1.0, 0.0).l_total.item(), 1.7);
    EXPECT_EQ(total_loss(Tensor::scalar(0), Tensor::scalar(0), 1.0, 0.8).l_total.item(), 0.0);
    EXPECT_THROW(total_loss(Tensor::scalar(NAN), Tensor::scalar(0), 1, 1), DomainError);
}

TEST(AdaptiveMargin, FuzzedBaseInRangeAndLossNonNegative) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng = keyed_rng({seed, 5});
        const std::size_t n = 4 + seed % 12;
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 3);
        Tensor e = l2_normalize(fsr::test::random_tensor({n, 5}, rng), 1);
        Tensor s = similarity_matrix(e);
        auto pairs = search_pairs(s, labels);
        for (const auto& p : pairs) {
            if (!p.complete()) continue;
            const double b = intensity_base(p.s_inner_hard, p.s_inter_hard);
            EXPECT_GE(b, 0.0);
            EXPECT_LE(b, 1.0);
        }
        auto psi = dynamic_intensity(pairs, benchmark_distance(pairs), 1.0);
        EXPECT_GE(adaptive_loss(s, pairs, psi).item(), 0.0);
    }
}
