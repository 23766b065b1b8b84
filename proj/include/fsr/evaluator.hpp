#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fsr/config.hpp"
#include "fsr/dataset.hpp"

namespace fsr {

/// counts[t][p]: rows are the true class, columns the prediction.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;  // row-major K×K

    explicit ConfusionMatrix(std::size_t k = 0) : classes(k), counts(k * k, 0) {}
    std::uint64_t& at(std::size_t t, std::size_t p) { return counts[t * classes + p]; }
    std::uint64_t at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }
    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t t) const;
    std::uint64_t col_sum(std::size_t p) const;
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const std::vector<std::size_t>& preds, const std::vector<int>& labels, std::size_t k);
ConfusionMatrix merge(const ConfusionMatrix& a, const ConfusionMatrix& b);

struct MetricsReport {
    std::vector<double> recall;
    std::vector<double> precision;
    std::vector<double> f1;
    double macro_recall = 0.0;
    double macro_precision = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    bool zero_denominator = false;  // some class had an empty row or column
};

MetricsReport metrics(const ConfusionMatrix& cm);

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
std::string format_report(const MetricsReport& report, const std::vector<std::string>& class_names);

struct AblationConfig {
    std::string name;
    bool efa;
    bool ada;
    bool dhfr;
};

/// V0..V4 and full, in table order.
const std::vector<AblationConfig>& ablation_configs();

struct AblationRow {
    std::string config;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::vector<double> per_class;  // per-class recall on the test split
};

struct AblationOptions {
    std::filesystem::path out_dir;  // runs land in out_dir/<config>/seed_<s>
    std::filesystem::path csv;      // rows already present here are not rerun
    std::size_t workers = 1;
    std::ostream* log = nullptr;
};

std::string ablation_csv_header(const std::vector<std::string>& class_names);
std::string ablation_csv_row(const AblationRow& row);
std::vector<AblationRow> read_ablation_csv(const std::filesystem::path& path, std::size_t classes);

/// Trains every config for every seed. Rows come back (and the CSV is
/// rewritten) in table order, seeds in the given order.
std::vector<AblationRow> run_ablation(const DatasetIndex& dataset, const TrainConfig& base,
                                      const std::vector<std::uint64_t>& seeds, const AblationOptions& options);

struct AblationSummary {
    std::string config;
    double mean_accuracy;
};

/// Mean accuracy per config, highest first (ties keep table order).
std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRow>& rows);

}  // namespace fsr
