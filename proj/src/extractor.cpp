#include "fsr/extractor.hpp"

namespace fsr {

Tensor similarity_embeddings(const Tensor& maps, SimilaritySource source) {
    const std::size_t n = maps.dim(0);
    if (source == SimilaritySource::flattened) return l2_normalize(reshape(maps, {n, maps.numel() / n}), 1);
    return l2_normalize(reshape(adaptive_avg_pool2d(maps, 1, 1), {n, maps.dim(1)}), 1);
}

FeatureBatch FeatureExtractor::extract(const Tensor& images, std::vector<int> labels,
                                       std::vector<std::string> ids, ParamStore& params, Mode mode,
                                       SimilaritySource source) const {
    if (images.rank() != 4) throw ShapeError("extract expects N×1×S×S images, got " + shape_str(images.shape()));
    if (labels.size() != images.dim(0))
        throw ShapeError("extract got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(images.dim(0)) + " images");
    if (ids.empty()) {
        for (std::size_t i = 0; i < labels.size(); ++i) ids.push_back(std::to_string(i));
    } else if (ids.size() != labels.size()) {
        throw ShapeError("extract got mismatched id count");
    }
    FeatureBatch batch;
    batch.maps = feature_maps(images, params, mode);
    batch.embeddings = similarity_embeddings(batch.maps, source);
    batch.labels = std::move(labels);
    batch.ids = std::move(ids);
    return batch;
}

SmallCnnExtractor::SmallCnnExtractor() {
    std::size_t in = 1;
    for (std::size_t i = 0; i < kChannels.size(); ++i) {
        stages_.emplace_back("extractor.stage" + std::to_string(i + 1), ConvSpec{in, kChannels[i], 3, 2, 1});
        in = kChannels[i];
    }
}

void SmallCnnExtractor::init(ParamStore& params, Rng& rng) const {
    for (const auto& s : stages_) s.init(params, rng);
}

Tensor SmallCnnExtractor::feature_maps(const Tensor& images, ParamStore& params, Mode mode) const {
    if (images.rank() != 4 || images.dim(1) != 1)
        throw ShapeError("extractor expects N×1×S×S images, got " + shape_str(images.shape()));
    if (images.dim(2) < kMinImageSize || images.dim(3) < kMinImageSize)
        throw ShapeError("image too small: " + shape_str(images.shape()) + ", need at least " +
                         std::to_string(kMinImageSize) + "×" + std::to_string(kMinImageSize));
    Tensor x = images;
    for (const auto& s : stages_) x = s(x, params, mode);
    return x;
}

}  // namespace fsr
