#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "fsr/extractor.hpp"
#include "fsr/nn.hpp"
#include "fsr/refiner.hpp"

namespace fsr {

struct ModelConfig {
    std::size_t classes = 4;
    std::size_t image_size = 32;
    bool dhfr = true;
};

/// Extractor, optional refiner and classifier over one parameter store.
class Model {
   public:
    /// Fresh parameters. Extractor and classifier draws come first, so two
    /// models with the same seed share them regardless of `dhfr`.
    Model(const ModelConfig& config, std::uint64_t seed);
    /// Adopts existing parameters; names and shapes must match the architecture.
    Model(const ModelConfig& config, ParamStore params);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const FeatureExtractor& extractor() const { return extractor_; }
    const Refiner* refiner() const { return refiner_ ? &*refiner_ : nullptr; }
    const Classifier& classifier() const { return classifier_; }

    /// Refines (when enabled), pools, normalizes and classifies N×C×h×w maps.
    Classification head(const Tensor& maps, Mode mode);

    /// Eval-mode class predictions, processed in chunks across `threads` workers.
    std::vector<std::size_t> predict(const Tensor& images, std::size_t threads = 1);

   private:
    ModelConfig config_;
    ParamStore params_;
    SmallCnnExtractor extractor_;
    std::optional<Refiner> refiner_;
    BatchNorm1d neck_;
    Classifier classifier_;
};

/// Fails with the offending name when `candidate` does not match the layout of `reference`.
void check_param_layout(const ParamStore& reference, const ParamStore& candidate);

}  // namespace fsr
