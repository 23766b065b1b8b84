#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "fsr/augmenter.hpp"
#include "fsr/evaluator.hpp"
#include "helpers.hpp"

using namespace fsr;
namespace fs = std::filesystem;

TEST(Confusion, HandTally) {
    ConfusionMatrix cm = confusion({0, 1, 1, 0}, {0, 1, 0, 0}, 2);
    EXPECT_EQ(cm.counts, (std::vector<std::uint64_t>{2, 1, 0, 1}));
    EXPECT_EQ(cm.total(), 4u);
}

TEST(Confusion, DiagonalEmptyAndRangeErrors) {
    ConfusionMatrix d = confusion({0, 1, 2}, {0, 1, 2}, 3);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(d.at(t, p), t == p ? 1u : 0u);
    EXPECT_EQ(confusion({}, {}, 3).total(), 0u);
    EXPECT_THROW(confusion({3}, {0}, 3), std::out_of_range);
    EXPECT_THROW(confusion({0}, {-1}, 3), std::out_of_range);
}

TEST(Metrics, HandEvaluatedExample) {
    ConfusionMatrix cm(2);
    cm.counts = {2, 1, 0, 1};
    MetricsReport r = metrics(cm);
    EXPECT_NEAR(r.recall[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.recall[1], 1.0, 1e-12);
    EXPECT_NEAR(r.precision[0], 1.0, 1e-12);
    EXPECT_NEAR(r.precision[1], 0.5, 1e-12);
    EXPECT_NEAR(r.f1[0], 0.8, 1e-12);
    EXPECT_NEAR(r.f1[1], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.accuracy, 0.75, 1e-12);
    EXPECT_NEAR(r.macro_recall, (2.0 / 3.0 + 1.0) / 2.0, 1e-12);
    EXPECT_NEAR(r.macro_f1, (0.8 + 2.0 / 3.0) / 2.0, 1e-12);
    EXPECT_FALSE(r.zero_denominator);
}

TEST(Metrics, PerfectAndAbsentClass) {
    MetricsReport p = metrics(confusion({0, 1, 1}, {0, 1, 1}, 2));
    EXPECT_EQ(p.macro_f1, 1.0);
    EXPECT_EQ(p.accuracy, 1.0);
    MetricsReport a = metrics(confusion({0, 0, 1}, {0, 0, 1}, 3));
    EXPECT_EQ(a.recall[2], 0.0);
    EXPECT_EQ(a.f1[2], 0.0);
    EXPECT_TRUE(a.zero_denominator);
    EXPECT_THROW(metrics(ConfusionMatrix(2)), std::invalid_argument);
}

TEST(Metrics, FuzzedPermutationMergeAndAccuracy) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng = keyed_rng({seed, 21});
        const std::size_t k = 2 + seed % 6, n = 1 + seed % 50;
        std::uniform_int_distribution<std::size_t> cls(0, k - 1);
        std::vector<std::size_t> preds(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) preds[i] = cls(rng), labels[i] = static_cast<int>(cls(rng));
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::size_t> pp(n);
        std::vector<int> pl(n);
        for (std::size_t i = 0; i < n; ++i) pp[i] = perm[preds[i]], pl[i] = static_cast<int>(perm[labels[i]]);
        MetricsReport a = metrics(confusion(preds, labels, k)), b = metrics(confusion(pp, pl, k));
        EXPECT_NEAR(a.macro_recall, b.macro_recall, 1e-12);
        EXPECT_NEAR(a.macro_precision, b.macro_precision, 1e-12);
        EXPECT_NEAR(a.macro_f1, b.macro_f1, 1e-12);
        EXPECT_NEAR(a.accuracy, b.accuracy, 1e-12);

        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) hits += preds[i] == static_cast<std::size_t>(labels[i]);
        EXPECT_NEAR(a.accuracy, static_cast<double>(hits) / n, 1e-15);

        const std::size_t cut = n / 2;
        ConfusionMatrix left = confusion({preds.begin(), preds.begin() + cut}, {labels.begin(), labels.begin() + cut}, k);
        ConfusionMatrix right = confusion({preds.begin() + cut, preds.end()}, {labels.begin() + cut, labels.end()}, k);
        EXPECT_EQ(merge(left, right), confusion(preds, labels, k));
    }
}

TEST(Metrics, ConfusionCsvSumsMatchCounts) {
    ConfusionMatrix cm = confusion({0, 1, 1, 0, 2}, {0, 1, 0, 0, 2}, 3);
    const std::string csv = confusion_csv(cm, {"a", "b", "c"});
    EXPECT_EQ(csv, "true\\pred,a,b,c\na,2,1,0\nb,0,1,0\nc,0,0,1\n");
}

TEST(Ablation, ConfigTableMatchesFlagMap) {
    const auto& c = ablation_configs();
    ASSERT_EQ(c.size(), 6u);
    std::vector<std::tuple<std::string, bool, bool, bool>> want{{"V0", 0, 0, 0}, {"V1", 1, 0, 0}, {"V2", 1, 1, 0},
                                                                {"V3", 1, 0, 1}, {"V4", 0, 0, 1}, {"full", 1, 1, 1}};
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(c[i].name, std::get<0>(want[i]));
        EXPECT_EQ(c[i].efa, std::get<1>(want[i]));
        EXPECT_EQ(c[i].ada, std::get<2>(want[i]));
        EXPECT_EQ(c[i].dhfr, std::get<3>(want[i]));
        EXPECT_TRUE(!c[i].ada || c[i].efa);
    }
}

TEST(Ablation, RowsResumeAndSummary) {
    fsr::test::TempDir dir("abl");
    DatasetIndex idx = generate_synthetic({2, 4, 2, 16, 3}, dir.path() / "data");
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.warmup_epochs = 1;
    cfg.classes_per_batch = 2;
    cfg.samples_per_class = 2;
    cfg.image_size = 16;
    AblationOptions opt{dir.path() / "runs", dir.path() / "runs" / "ablation.csv", 1, nullptr};
    auto rows = run_ablation(idx, cfg, {1, 2}, opt);
    ASSERT_EQ(rows.size(), 12u);
    EXPECT_EQ(rows[0].config, "V0");
    EXPECT_EQ(rows[11].config, "full");
    EXPECT_EQ(rows[1].seed, 2u);
    EXPECT_EQ(rows[0].per_class.size(), 2u);

    std::ifstream in(opt.csv);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "config,seed,accuracy,class_00,class_01");

    // Drop two rows; only they are rerun and they come back identical.
    auto saved = read_ablation_csv(opt.csv, 2);
    ASSERT_EQ(saved.size(), 12u);
    {
        std::ofstream out(opt.csv, std::ios::trunc);
        out << header << '\n';
        for (std::size_t i = 0; i < 10; ++i) out << ablation_csv_row(saved[i]) << '\n';
    }
    const auto before = op_counters().augmenter.load();
    auto resumed = run_ablation(idx, cfg, {1, 2}, opt);
    EXPECT_GT(op_counters().augmenter.load(), before);  // full rows were retrained
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(resumed[i].config, rows[i].config);
        EXPECT_EQ(resumed[i].accuracy, rows[i].accuracy);
    }
    auto summary = summarize_ablation(rows);
    ASSERT_EQ(summary.size(), 6u);
    for (std::size_t i = 1; i < summary.size(); ++i) EXPECT_GE(summary[i - 1].mean_accuracy, summary[i].mean_accuracy);
}

TEST(Ablation, ErrorsNameConfigAndSeed) {
    fsr::test::TempDir dir("abl_err");
    DatasetIndex idx = generate_synthetic({2, 2, 1, 16, 3}, dir.path() / "data");
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.warmup_epochs = 1;
    cfg.image_size = 16;
    cfg.samples_per_class = 4;  // more than the 2 samples per class available
    cfg.classes_per_batch = 2;
    AblationOptions opt{dir.path() / "runs", {}, 1, nullptr};
    try {
        run_ablation(idx, cfg, {5}, opt);
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("V0 seed 5"), std::string::npos) << e.what();
    }
}
