#pragma once

#include <functional>

#include "fsr/tensor.hpp"

namespace fsr {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

/// Compares the analytic gradient of scalar `fn` at `input` against central
/// differences, element by element. Relative error is |a−n| / max(1, |a|, |n|).
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& input,
                           double tol, double step = 1e-5);

}  // namespace fsr
