#pragma once

#include <cmath>
#include <functional>

#include "fast/tensor.hpp"

namespace fast::testing {

// Central finite differences of a scalar-valued function with respect to one
// parameter tensor, entry by entry. The function re-reads the tensor on every
// call, so the caller passes a mutable reference it also closes over.
inline Tensor finite_difference(const std::function<double()>& f, Tensor& param, double h = 1e-5) {
    Tensor grad(param.shape());
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double up = f();
        param[i] = saved - h;
        const double down = f();
        param[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Max elementwise relative error with a floor, so structurally-zero entries
// checked against finite-difference noise do not dominate.
inline double max_rel_err(const Tensor& analytic, const Tensor& numeric, double floor = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

} // namespace fast::testing
