#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "fsr/nn.hpp"

namespace fsr {

/// SGD with momentum and L2 weight decay. Velocities are keyed by parameter name.
struct OptimState {
    double momentum = 0.9;
    double weight_decay = 5e-5;
    std::map<std::string, std::vector<double>> velocity;
};

/// g' = g + wd·p;  v ← m·v + g';  p ← p − lr·v
void sgd_update(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
                double momentum, double weight_decay, double lr);

/// Applies one step to every trainable entry; missing gradients count as zero.
/// Buffers are untouched.
void sgd_step(ParamStore& params, OptimState& state, double lr);

struct Schedule {
    double base_lr = 0.01;
    std::size_t warmup_epochs = 15;
    std::size_t cosine_period = 320;
};

/// Linear warmup to base_lr over the first warmup_epochs, then
/// base_lr·½(1 + cos(π·(epoch − warmup)/period)).
double lr_at(std::size_t epoch, const Schedule& schedule);

}  // namespace fsr
