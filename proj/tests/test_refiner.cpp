#include <gtest/gtest.h>

#include <cmath>

#include "fsr/refiner.hpp"
#include "helpers.hpp"

using namespace fsr;

namespace {

void set_all(ParamStore& ps, const std::string& name, double v) {
    for (auto& x : ps.get(name).mutable_data()) x = v;
}

}  // namespace

TEST(Refiner, HandComposedLocalEnhancement) {
    Refiner r(1, "r");
    ParamStore ps;
    Rng rng(0);
    r.init(ps, rng);
    set_all(ps, "r.local.squeeze.weight", 1.0);
    set_all(ps, "r.local.mask.weight", 1.0);
    Tensor f({1, 1, 3, 3}, std::vector<double>{0.001, -0.002, 0.003, 0.004, 0.005, -0.006, 0.007, 0.008, 0.009});
    LocalEnhancement le = r.local_enhance(f, ps, Mode::eval);
    const std::vector<double> mask{0.5646359722366043, 0.58127226744477,   0.5508236126038601,
                                   0.6139621074263456, 0.6447399544282517, 0.5929075366976548,
                                   0.6015668504881764, 0.6327417960269692, 0.5880713719664882};
    const std::vector<double> local{0.0005646359722366043, -0.00116254453488954,  0.0016524708378115804,
                                    0.0024558484297053824, 0.0032236997721412585, -0.003557445220185929,
                                    0.004210967953417234,  0.005061934368215754,  0.0052926423476983946};
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_NEAR(le.mask[i], mask[i], 1e-10);
        EXPECT_NEAR(le.local[i], local[i], 1e-10);
    }
}

TEST(Refiner, ZeroInputGivesZeroOutputs) {
    Refiner r(4);
    ParamStore ps;
    Rng rng(1);
    r.init(ps, rng);
    RefinerOutput out = r.refine(Tensor::zeros({2, 4, 3, 3}), ps, Mode::eval);
    for (double v : out.local.data()) EXPECT_EQ(v, 0.0);
    for (double v : out.refined.data()) EXPECT_EQ(v, 0.0);
}

TEST(Refiner, KernelsAreSoftmaxRowsAndUniformForZeroWeights) {
    Refiner r(5);
    ParamStore ps;
    Rng rng(2);
    r.init(ps, rng);
    Tensor f = fsr::test::random_tensor({3, 5, 3, 3}, rng);
    Tensor k = r.generate_kernels(f, ps, Mode::train);
    ASSERT_EQ(k.shape(), (Shape{3, 5}));
    for (std::size_t n = 0; n < 3; ++n) {
        double total = 0;
        for (std::size_t c = 0; c < 5; ++c) {
            EXPECT_GT(k.at({n, c}), 0.0);
            total += k.at({n, c});
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
    set_all(ps, "refiner.global.out.weight", 0.0);
    Tensor u = r.generate_kernels(f, ps, Mode::train);
    for (double v : u.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Refiner, IdenticalSamplesGetIdenticalKernels) {
    Refiner r(4);
    ParamStore ps;
    Rng rng(3);
    r.init(ps, rng);
    Tensor one = fsr::test::random_tensor({1, 4, 3, 3}, rng);
    Tensor k = r.generate_kernels(concat({one, one, fsr::test::random_tensor({1, 4, 3, 3}, rng)}), ps, Mode::train);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(k.at({0, c}), k.at({1, c}));
}

TEST(Refiner, UniformKernelsScaleByOneOverC) {
    Rng rng(4);
    Tensor f = fsr::test::random_tensor({2, 4, 2, 2}, rng);
    Tensor g = apply_channel_kernels(f, Tensor({2, 4}, 0.25));
    for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(g[i], f[i] / 4.0);
}

TEST(Refiner, TwoChannelHandEvaluation) {
    // One sample, two channels, 1×1 spatial: GL_c = L_c · f_c · k_c.
    Tensor f({1, 2, 1, 1}, std::vector<double>{2.0, -3.0});
    Tensor local({1, 2, 1, 1}, std::vector<double>{0.5, -1.5});
    Tensor k = Tensor::mat({{0.25, 0.75}});
    Tensor gl = hadamard(local, apply_channel_kernels(f, k));
    EXPECT_DOUBLE_EQ(gl[0], 0.25);    // 0.5 · 2 · 0.25
    EXPECT_DOUBLE_EQ(gl[1], 3.375);   // −1.5 · −3 · 0.75
}

TEST(Refiner, AttenuatesAndMasksStayInOpenInterval) {
    Refiner r(6);
    ParamStore ps;
    Rng rng(5);
    r.init(ps, rng);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor f = fsr::test::random_tensor({3, 6, 4, 4}, rng);
        RefinerOutput out = r.refine(f, ps, Mode::train);
        for (double m : out.mask.data()) {
            EXPECT_GT(m, 0.0);
            EXPECT_LT(m, 1.0);
        }
        for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_LE(std::abs(out.refined[i]), std::abs(f[i]));
    }
}

// GL = mask·k·f², so the attenuation bound relies on |f|·mask·k ≤ 1.
TEST(Refiner, AttenuationBoundNeedsModerateActivations) {
    Tensor f({1, 3, 1, 1}, std::vector<double>{40.0, 1.0, 1.0});
    Tensor local = hadamard(f, Tensor({1, 1, 1, 1}, 0.9));
    Tensor gl = hadamard(local, apply_channel_kernels(f, Tensor::mat({{0.9, 0.05, 0.05}})));
    EXPECT_GT(std::abs(gl[0]), std::abs(f[0]));
    EXPECT_LT(std::abs(gl[1]), std::abs(f[1]));
}

TEST(Refiner, TooFewChannelsForKernels) {
    Refiner r(2);
    ParamStore ps;
    Rng rng(6);
    r.init(ps, rng);
    EXPECT_THROW(r.generate_kernels(Tensor({1, 2, 3, 3}, 1.0), ps, Mode::eval), ShapeError);
    EXPECT_THROW(r.local_enhance(Tensor({1, 3, 3, 3}, 1.0), ps, Mode::eval), ShapeError);
}
