#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsr/augmenter.hpp"
#include "fsr/config.hpp"
#include "fsr/dataset.hpp"
#include "fsr/model.hpp"
#include "fsr/optimizer.hpp"
#include "fsr/sampler.hpp"

namespace fsr {

struct Batch {
    Tensor images;
    std::vector<int> labels;
    std::vector<std::string> ids;
};

Batch gather_batch(const LoadedSplit& split, const std::vector<BatchItem>& items);

struct StepStats {
    LossBreakdown loss;
    std::size_t virtual_count = 0;
};

/// One forward/backward/update over a class-balanced batch. With efa, ada and
/// dhfr all off this is plain cross-entropy training of extractor + classifier.
StepStats train_step(const Batch& batch, Model& model, OptimState& optim, const TrainConfig& cfg, double lr,
                     Rng& rng);

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double l_reg = 0.0;
    double l_ada = 0.0;
    double l_total = 0.0;
    double test_accuracy = 0.0;
};

class TrainingDiverged : public std::runtime_error {
   public:
    TrainingDiverged(std::size_t epoch, const std::string& what) : std::runtime_error(what), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

   private:
    std::size_t epoch_;
};

struct FitResult {
    Model model;
    OptimState optim;
    std::vector<EpochMetrics> history;
    std::vector<std::size_t> test_predictions;  // from the saved checkpoint
    std::vector<int> test_labels;
    double final_accuracy = 0.0;                 // of the saved checkpoint
};

std::string metrics_csv(const std::vector<EpochMetrics>& history);

double accuracy(const std::vector<std::size_t>& preds, const std::vector<int>& labels);

/// Trains for cfg.epochs, evaluating the test split after every epoch, and
/// writes `metrics.csv` plus `checkpoint/` under `out_dir`. The reported final
/// accuracy is that of the checkpoint as stored.
FitResult fit(const DatasetIndex& dataset, const TrainConfig& cfg, const std::filesystem::path& out_dir,
              std::ostream* log = nullptr);

}  // namespace fsr
