#include "fsr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fsr {

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& input,
                           double tol, double step) {
    Tensor x = input.detach();
    x.set_requires_grad(true);
    Tape::current().clear();
    Tensor loss = fn(x);
    if (loss.numel() != 1) throw ShapeError("grad_check needs a scalar function");
    std::vector<double> analytic(x.numel(), 0.0);
    if (loss.requires_grad()) {
        loss.backward();
        if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    }

    GradCheckReport report;
    NoGradGuard no_grad;
    auto values = x.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + step;
        const double up = fn(x).item();
        values[i] = original - step;
        const double down = fn(x).item();
        values[i] = original;
        const double numeric = (up - down) / (2.0 * step);
        const double err = std::abs(analytic[i] - numeric) /
                           std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        report.max_rel_err = std::max(report.max_rel_err, err);
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace fsr
