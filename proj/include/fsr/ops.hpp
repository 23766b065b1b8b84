#pragma once

#include <cstddef>
#include <vector>

#include "fsr/tensor.hpp"

namespace fsr {

enum class Mode { train, eval };

enum class Elementwise { add, sub, hadamard, scalar_mul, relu, sigmoid, exp, log, max_with_zero };
enum class Reduction { sum, mean, max };

// Broadcasting: the shorter shape is padded with leading 1s, then each axis
// must match or be 1 on one side. Anything else is a ShapeError.
Shape broadcast_shape(const Shape& a, const Shape& b);

/// Dispatcher over the elementwise kinds. Binary kinds take `b`; scalar_mul
/// takes `scalar`; unary kinds ignore both.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b = {}, double scalar = 0.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws DomainError on any non-positive entry.
Tensor log(const Tensor& a);
Tensor max_with_zero(const Tensor& a);
/// max(a, floor); gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& a, double floor);

Tensor reduce(Reduction kind, const Tensor& a, const std::vector<std::size_t>& axes);
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor max(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor sum_all(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Cross-correlation. input N×Cin×H×W, kernel Cout×Cin×kh×kw, bias [Cout] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);
/// input N×Cin×L, kernel Cout×Cin×k.
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, std::size_t axis);

struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNormState fresh(std::size_t channels);
};

/// Per-channel (axis 1) normalization. Train mode uses batch statistics and
/// updates `state` (running variance uses the unbiased estimate); eval mode
/// uses the running statistics.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode);

/// Bins run from floor(i·H/h) to ceil((i+1)·H/h).
Tensor adaptive_avg_pool2d(const Tensor& input, std::size_t out_h, std::size_t out_w);

inline constexpr double kNormFloor = 1e-12;
/// Divides each slice along `axis` by max(‖slice‖₂, 1e-12).
Tensor l2_normalize(const Tensor& v, std::size_t axis);

Tensor reshape(const Tensor& a, Shape shape);
/// Rows of `a` (axis 0) at `indices`, in order; repeats allowed.
Tensor index_select(const Tensor& a, const std::vector<std::size_t>& indices);
/// 1-D tensor of the flat entries at `indices`.
Tensor take(const Tensor& a, const std::vector<std::size_t>& indices);
Tensor concat(const std::vector<Tensor>& parts);  // along axis 0
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);  // along axis 0

}  // namespace fsr
