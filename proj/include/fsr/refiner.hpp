#pragma once

#include <cstddef>

#include "fsr/nn.hpp"

namespace fsr {

struct LocalEnhancement {
    Tensor mask;   // N×1×h×w, values in (0,1)
    Tensor local;  // N×C×h×w
};

struct RefinerOutput {
    Tensor mask;
    Tensor local;    // f ⊙ mask
    Tensor kernels;  // N×C, softmax rows
    Tensor refined;  // local ⊙ (f scaled per channel by kernels)
};

/// Dynamic hierarchical-feature refiner: a learned spatial mask followed by
/// per-sample channel kernels generated from the pooled input.
class Refiner {
   public:
    static constexpr std::size_t kMinChannels = 3;
    static constexpr std::size_t kKernelHidden = 4;

    explicit Refiner(std::size_t channels, std::string prefix = "refiner");

    void init(ParamStore& params, Rng& rng) const;
    std::size_t channels() const { return channels_; }
    std::size_t bottleneck() const { return bottleneck_; }

    LocalEnhancement local_enhance(const Tensor& f, ParamStore& params, Mode mode) const;
    Tensor generate_kernels(const Tensor& f, ParamStore& params, Mode mode) const;
    RefinerOutput refine(const Tensor& f, ParamStore& params, Mode mode) const;

   private:
    std::size_t channels_;
    std::size_t bottleneck_;
    ConvBnRelu2d squeeze_;
    ConvSigmoid2d mask_;
    ConvBnRelu1d kernel_hidden_;
    ConvSoftmax1d kernel_out_;
};

/// out[n,c,·,·] = f[n,c,·,·] · kernels[n,c] (a depthwise 1×1 convolution).
Tensor apply_channel_kernels(const Tensor& f, const Tensor& kernels);

}  // namespace fsr
