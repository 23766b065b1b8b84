#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fsr/checkpoint.hpp"
#include "fsr/tns_io.hpp"
#include "fsr/trainer.hpp"
#include "helpers.hpp"

using namespace fsr;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.warmup_epochs = 1;
    cfg.classes_per_batch = 2;
    cfg.samples_per_class = 2;
    cfg.image_size = 16;
    return cfg;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Sgd, TwoMomentumSteps) {
    std::vector<double> p{1.0}, g{1.0}, v{0.0};
    sgd_update(p, g, v, 0.9, 0.0, 0.1);
    sgd_update(p, g, v, 0.9, 0.0, 0.1);
    EXPECT_NEAR(p[0], 0.71, 1e-15);
}

TEST(Sgd, DegenerateCases) {
    std::vector<double> p{2.0, -1.0}, g{0.5, 0.25}, v{0.0, 0.0};
    sgd_update(p, g, v, 0.0, 0.0, 0.2);
    EXPECT_DOUBLE_EQ(p[0], 1.9);
    EXPECT_DOUBLE_EQ(p[1], -1.05);
    std::vector<double> q{3.0}, zero{0.0}, vq{0.0};
    for (int i = 0; i < 5; ++i) sgd_update(q, zero, vq, 0.9, 0.0, 0.1);
    EXPECT_EQ(q[0], 3.0);
    std::vector<double> r{3.0}, gr{4.0}, vr{0.0};
    sgd_update(r, gr, vr, 0.9, 5e-5, 0.0);
    EXPECT_EQ(r[0], 3.0);
}

TEST(Sgd, StepSkipsBuffersAndDecaysParams) {
    ParamStore ps;
    ps.add_param("w", Tensor::vec({1.0}));
    ps.add_buffer("b", Tensor::vec({1.0}));
    OptimState st{0.0, 0.5, {}};
    sgd_step(ps, st, 0.1);  // no grad: only decay acts
    EXPECT_DOUBLE_EQ(ps.get("w")[0], 1.0 - 0.1 * 0.5);
    EXPECT_EQ(ps.get("b")[0], 1.0);
    EXPECT_EQ(st.velocity.count("b"), 0u);
}

TEST(Schedule, WarmupAndCosine) {
    Schedule s;
    EXPECT_NEAR(lr_at(0, s), 0.01 / 15, 1e-18);
    EXPECT_NEAR(lr_at(14, s), 0.01, 1e-15);
    EXPECT_NEAR(lr_at(15, s), 0.01, 1e-15);
    EXPECT_NEAR(lr_at(175, s), 0.005, 1e-15);
    EXPECT_NEAR(lr_at(335, s), 0.0, 1e-15);
}

class TinyData : public ::testing::Test {
   protected:
    void SetUp() override { index = generate_synthetic({2, 4, 3, 16, 1}, dir.path() / "data"); }
    fsr::test::TempDir dir{"train"};
    DatasetIndex index;
};

TEST_F(TinyData, BaselineStepNeverTouchesAugmenterOrRefiner) {
    TrainConfig cfg = tiny_config();
    cfg.efa = cfg.ada = cfg.dhfr = false;
    LoadedSplit train = load_split(index, Split::train, 16);
    Model model({2, 16, false}, 0);
    OptimState optim;
    Rng rng(0);
    const auto aug = op_counters().augmenter.load(), ref = op_counters().refiner.load();
    auto plan = plan_batches(index.class_counts(Split::train), 2, 2, 0, 0);
    StepStats st = train_step(gather_batch(train, plan.batches[0]), model, optim, cfg, 0.01, rng);
    EXPECT_EQ(op_counters().augmenter.load(), aug);
    EXPECT_EQ(op_counters().refiner.load(), ref);
    EXPECT_EQ(st.loss.l_ada.item(), 0.0);
    EXPECT_EQ(st.virtual_count, 0u);
}

TEST_F(TinyData, FullStepUsesVirtualsAndIsDeterministic) {
    TrainConfig cfg = tiny_config();
    LoadedSplit train = load_split(index, Split::train, 16);
    auto plan = plan_batches(index.class_counts(Split::train), 2, 2, 0, 0);
    Batch batch = gather_batch(train, plan.batches[0]);
    double totals[2];
    for (double& total : totals) {
        Model model({2, 16, true}, 3);
        OptimState optim;
        Rng rng(42);
        StepStats st = train_step(batch, model, optim, cfg, 0.01, rng);
        EXPECT_GT(st.virtual_count, 0u);
        total = st.loss.l_total.item();
    }
    EXPECT_EQ(totals[0], totals[1]);
}

TEST_F(TinyData, LambdaTwoZeroMeansNoAdaptiveLoss) {
    TrainConfig cfg = tiny_config();
    cfg.lambda2 = 0.0;
    FitResult r = fit(index, cfg, dir.path() / "run");
    for (const auto& m : r.history) {
        EXPECT_EQ(m.l_ada, 0.0);
        EXPECT_EQ(m.l_total, m.l_reg);
    }
}

TEST_F(TinyData, SmokeFitWritesArtifactsAndCheckpointReproducesAccuracy) {
    TrainConfig cfg = tiny_config();
    FitResult r = fit(index, cfg, dir.path() / "run");
    ASSERT_EQ(r.history.size(), 2u);
    for (const auto& m : r.history) EXPECT_TRUE(std::isfinite(m.l_total));
    EXPECT_TRUE(fs::exists(dir.path() / "run" / "metrics.csv"));
    EXPECT_EQ(read_text(dir.path() / "run" / "metrics.csv").substr(0, 42), "epoch,lr,l_reg,l_ada,l_total,test_accuracy");

    Model again = restore_model(load_checkpoint(dir.path() / "run" / "checkpoint"));
    LoadedSplit test = load_split(index, Split::test, 16);
    EXPECT_EQ(accuracy(again.predict(test.images), test.labels), r.final_accuracy);
}

TEST_F(TinyData, RepeatedFitIsBitIdentical) {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 3;
    fit(index, cfg, dir.path() / "a");
    fit(index, cfg, dir.path() / "b");
    EXPECT_EQ(read_text(dir.path() / "a" / "metrics.csv"), read_text(dir.path() / "b" / "metrics.csv"));
}

TEST(Fit, LossDecreasesOnSeparableToy) {
    // Two classes that differ only in overall brightness.
    fsr::test::TempDir dir("toy");
    for (int c = 0; c < 2; ++c)
        for (const char* split : {"train", "test"}) {
            const fs::path d = dir.path() / split / ("c" + std::to_string(c));
            fs::create_directories(d);
            Rng rng = keyed_rng({static_cast<std::uint64_t>(c), split[1] == 'r' ? 1ULL : 2ULL});
            for (int i = 0; i < 6; ++i) {
                Tensor img = fsr::test::random_tensor({1, 16, 16}, rng, c ? 0.6 : 0.0, c ? 1.0 : 0.4);
                tns_write(d / (std::to_string(i) + ".tns"), img);
            }
        }
    TrainConfig cfg = tiny_config();
    cfg.epochs = 20;
    cfg.warmup_epochs = 2;
    cfg.samples_per_class = 3;
    FitResult r = fit(index_dataset(dir.path()), cfg, dir.path() / "run");
    EXPECT_LT(r.history.back().l_reg, r.history.front().l_reg);
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
    fsr::test::TempDir dir("ckpt");
    Model m({3, 16, true}, 7);
    OptimState optim;
    optim.velocity["classifier.bias"] = {0.1, 0.2, 0.3};
    save_checkpoint(dir.path(), m, optim, {"a", "b", "c"}, 5);
    Checkpoint ck = load_checkpoint(dir.path());
    EXPECT_EQ(ck.class_names, (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(ck.epochs_completed, 5u);
    EXPECT_TRUE(ck.model.dhfr);
    for (const auto& e : m.params().entries()) {
        const Tensor& got = ck.params.get(e.name);
        ASSERT_EQ(got.shape(), e.value.shape());
        for (std::size_t i = 0; i < got.numel(); ++i)
            EXPECT_EQ(got[i], static_cast<double>(static_cast<float>(e.value[i]))) << e.name;
    }
    EXPECT_EQ(ck.optim.velocity.at("classifier.bias")[1], static_cast<double>(0.2f));
}

TEST(Checkpoint, CorruptionsAreReportedByName) {
    fsr::test::TempDir dir("ckpt_bad");
    Model m({2, 16, false}, 1);
    save_checkpoint(dir.path(), m, OptimState{}, {"a", "b"}, 1);
    const fs::path manifest = dir.path() / "manifest.txt";
    const std::string original = read_text(manifest);

    auto expect_error = [&](const std::string& text, const std::string& needle) {
        std::ofstream(manifest, std::ios::trunc) << text;
        try {
            load_checkpoint(dir.path());
            ADD_FAILURE() << "no error for " << needle;
        } catch (const CheckpointError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    expect_error(original + "param mystery.weight 3x3\n", "mystery.weight");
    std::string wrong = original;
    const std::string rec = "param classifier.bias 2";
    wrong.replace(wrong.find(rec), rec.size(), "param classifier.bias 5");
    expect_error(wrong, "classifier.bias");
    std::string missing = original;
    missing.erase(missing.find(rec), rec.size() + 1);
    expect_error(missing, "classifier.bias");
    std::ofstream(manifest, std::ios::trunc) << original;
    EXPECT_NO_THROW(load_checkpoint(dir.path()));
}

TEST(Checkpoint, MismatchedArchitectureNamesParameter) {
    ParamStore ps = Model({3, 16, false}, 0).params().clone();
    try {
        Model({2, 16, false}, ps);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("classifier"), std::string::npos);
    }
    EXPECT_THROW(Model({3, 16, true}, ps), std::invalid_argument);
}
