#include "fsr/refiner.hpp"

#include <algorithm>

#include "fsr/augmenter.hpp"

namespace fsr {

Refiner::Refiner(std::size_t channels, std::string prefix)
    : channels_(channels),
      bottleneck_(std::max<std::size_t>(channels / 4, 4)),
      squeeze_(prefix + ".local.squeeze", ConvSpec{channels, std::max<std::size_t>(channels / 4, 4), 3, 1, 1}),
      mask_(prefix + ".local.mask", ConvSpec{std::max<std::size_t>(channels / 4, 4), 1, 3, 1, 1}),
      kernel_hidden_(prefix + ".global.hidden", ConvSpec{1, kKernelHidden, 3, 1, 1}),
      kernel_out_(prefix + ".global.out", ConvSpec{kKernelHidden, 1, 3, 1, 1}) {
    if (channels == 0) throw ShapeError("refiner needs at least one channel");
}

void Refiner::init(ParamStore& params, Rng& rng) const {
    squeeze_.init(params, rng);
    mask_.init(params, rng);
    kernel_hidden_.init(params, rng);
    kernel_out_.init(params, rng);
}

LocalEnhancement Refiner::local_enhance(const Tensor& f, ParamStore& params, Mode mode) const {
    ++op_counters().refiner;
    if (f.rank() != 4 || f.dim(1) != channels_)
        throw ShapeError("refiner expects N×" + std::to_string(channels_) + "×h×w, got " + shape_str(f.shape()));
    Tensor mask = mask_(squeeze_(f, params, mode), params);
    return {mask, hadamard(f, mask)};
}

Tensor Refiner::generate_kernels(const Tensor& f, ParamStore& params, Mode mode) const {
    ++op_counters().refiner;
    if (channels_ < kMinChannels)
        throw ShapeError("kernel generation needs at least " + std::to_string(kMinChannels) + " channels");
    if (f.rank() != 4 || f.dim(1) != channels_)
        throw ShapeError("refiner expects N×" + std::to_string(channels_) + "×h×w, got " + shape_str(f.shape()));
    const std::size_t n = f.dim(0);
    Tensor v = reshape(adaptive_avg_pool2d(f, 1, 1), {n, 1, channels_});
    Tensor k = kernel_out_(kernel_hidden_(v, params, mode), params);
    return reshape(k, {n, channels_});
}

Tensor apply_channel_kernels(const Tensor& f, const Tensor& kernels) {
    if (kernels.rank() != 2 || kernels.dim(0) != f.dim(0) || kernels.dim(1) != f.dim(1))
        throw ShapeError("channel kernels " + shape_str(kernels.shape()) + " do not fit maps " + shape_str(f.shape()));
    return hadamard(f, reshape(kernels, {f.dim(0), f.dim(1), 1, 1}));
}

RefinerOutput Refiner::refine(const Tensor& f, ParamStore& params, Mode mode) const {
    ++op_counters().refiner;
    LocalEnhancement local = local_enhance(f, params, mode);
    Tensor kernels = generate_kernels(f, params, mode);
    Tensor global = apply_channel_kernels(f, kernels);
    return {local.mask, local.local, kernels, hadamard(local.local, global)};
}

}  // namespace fsr
