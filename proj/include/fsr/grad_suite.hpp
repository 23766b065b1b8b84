#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsr/grad_check.hpp"

namespace fsr {

inline constexpr double kGradTolerance = 1e-4;

struct GradSuiteEntry {
    std::string name;
    GradCheckReport report;
};

/// Every differentiable op plus the augmenter loss path (with the hinge
/// active) and the full refiner, on inputs drawn from `seed`.
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, double tol = kGradTolerance);

}  // namespace fsr
