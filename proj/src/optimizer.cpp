#include "fsr/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace fsr {

void sgd_update(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
                double momentum, double weight_decay, double lr) {
    if (param.size() != velocity.size() || (!grad.empty() && grad.size() != param.size()))
        throw ShapeError("sgd_update: parameter, gradient and velocity sizes differ");
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = (grad.empty() ? 0.0 : grad[i]) + weight_decay * param[i];
        velocity[i] = momentum * velocity[i] + g;
        param[i] -= lr * velocity[i];
    }
}

void sgd_step(ParamStore& params, OptimState& state, double lr) {
    for (const auto& entry : params.entries()) {
        if (!entry.trainable) continue;
        Tensor p = entry.value;
        auto& v = state.velocity[entry.name];
        if (v.empty()) v.assign(p.numel(), 0.0);
        if (v.size() != p.numel()) throw ShapeError("sgd_step: velocity size mismatch for " + entry.name);
        sgd_update(p.mutable_data(), p.grad(), v, state.momentum, state.weight_decay, lr);
    }
}

double lr_at(std::size_t epoch, const Schedule& s) {
    if (epoch < s.warmup_epochs)
        return s.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs);
    const double phase = static_cast<double>(epoch - s.warmup_epochs) / static_cast<double>(s.cosine_period);
    return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

}  // namespace fsr
