#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fsr/nn.hpp"

namespace fsr {

/// Per-sample feature maps and their similarity embeddings for one batch.
struct FeatureBatch {
    Tensor maps;        // N×C×h×w
    Tensor embeddings;  // N×D, rows L2-normalized (or zero)
    std::vector<int> labels;
    std::vector<std::string> ids;

    std::size_t size() const { return labels.size(); }
};

/// What the similarity embedding summarizes.
enum class SimilaritySource {
    pooled,    // global-average-pooled channel vector
    flattened  // the whole C·h·w map
};

Tensor similarity_embeddings(const Tensor& maps, SimilaritySource source);

/// Maps N×1×S×S images to low-dimensional feature maps.
class FeatureExtractor {
   public:
    virtual ~FeatureExtractor() = default;
    virtual void init(ParamStore& params, Rng& rng) const = 0;
    virtual Tensor feature_maps(const Tensor& images, ParamStore& params, Mode mode) const = 0;
    virtual std::size_t channels() const = 0;

    FeatureBatch extract(const Tensor& images, std::vector<int> labels, std::vector<std::string> ids,
                         ParamStore& params, Mode mode,
                         SimilaritySource source = SimilaritySource::pooled) const;
};

/// Three stride-2 conv-bn-relu stages, 16 → 32 → 64 channels.
class SmallCnnExtractor : public FeatureExtractor {
   public:
    static constexpr std::size_t kMinImageSize = 16;
    static constexpr std::array<std::size_t, 3> kChannels{16, 32, 64};

    SmallCnnExtractor();
    void init(ParamStore& params, Rng& rng) const override;
    Tensor feature_maps(const Tensor& images, ParamStore& params, Mode mode) const override;
    std::size_t channels() const override { return kChannels.back(); }

   private:
    std::vector<ConvBnRelu2d> stages_;
};

}  // namespace fsr
