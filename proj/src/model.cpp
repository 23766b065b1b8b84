#include "fsr/model.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <thread>

namespace fsr {

namespace {

constexpr std::size_t kPredictChunk = 50;

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      neck_("neck", SmallCnnExtractor::kChannels.back()),
      classifier_("classifier", SmallCnnExtractor::kChannels.back(), config.classes) {
    if (config.classes < 2) throw std::invalid_argument("model needs at least 2 classes");
    Rng rng = keyed_rng({seed, 0x1417ULL});
    extractor_.init(params_, rng);
    classifier_.init(params_, rng);
    neck_.init(params_);
    if (config.dhfr) {
        refiner_.emplace(extractor_.channels());
        refiner_->init(params_, rng);
    }
}

Model::Model(const ModelConfig& config, ParamStore params)
    : config_(config),
      neck_("neck", SmallCnnExtractor::kChannels.back()),
      classifier_("classifier", SmallCnnExtractor::kChannels.back(), config.classes) {
    Model reference(config, 0);
    check_param_layout(reference.params_, params);
    params_ = std::move(params);
    if (config.dhfr) refiner_.emplace(extractor_.channels());
}

void check_param_layout(const ParamStore& reference, const ParamStore& candidate) {
    std::vector<std::string> unknown, missing;
    for (const auto& e : candidate.entries())
        if (!reference.contains(e.name)) unknown.push_back(e.name);
    for (const auto& e : reference.entries()) {
        if (!candidate.contains(e.name)) {
            missing.push_back(e.name);
            continue;
        }
        const Tensor& got = candidate.get(e.name);
        if (got.shape() != e.value.shape())
            throw ShapeError("parameter " + e.name + " has shape " + shape_str(got.shape()) + ", expected " +
                             shape_str(e.value.shape()));
    }
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
        return s;
    };
    if (!unknown.empty()) throw std::invalid_argument("unknown parameter names: " + join(unknown));
    if (!missing.empty()) throw std::invalid_argument("missing parameter names: " + join(missing));
}

Classification Model::head(const Tensor& maps, Mode mode) {
    Tensor features = refiner_ ? refiner_->refine(maps, params_, mode).refined : maps;
    const std::size_t n = features.dim(0);
    Tensor pooled = reshape(adaptive_avg_pool2d(features, 1, 1), {n, features.dim(1)});
    // The refined maps are products of three attenuating factors; normalizing
    // the pooled vector keeps the classifier's input scale comparable across configs.
    return classifier_(neck_(pooled, params_, mode), params_);
}

std::vector<std::size_t> Model::predict(const Tensor& images, std::size_t threads) {
    const std::size_t n = images.dim(0);
    const std::size_t chunks = (n + kPredictChunk - 1) / kPredictChunk;
    std::vector<std::size_t> out(n, 0);
    auto work = [&](std::size_t first_chunk, std::size_t stride) {
        NoGradGuard no_grad;
        for (std::size_t c = first_chunk; c < chunks; c += stride) {
            const std::size_t begin = c * kPredictChunk;
            const std::size_t end = std::min(n, begin + kPredictChunk);
            Tensor maps = extractor_.feature_maps(slice(images, begin, end), params_, Mode::eval);
            auto preds = argmax_rows(head(maps, Mode::eval).logits);
            std::copy(preds.begin(), preds.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(chunks, 1));
    if (threads == 1) {
        work(0, 1);
        return out;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace fsr
