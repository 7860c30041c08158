#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "embedkit/tensor.hpp"

namespace embedkit {

// Central-difference gradient oracle. Deliberately independent of the graph
// machinery so it can arbitrate it.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Tensor grad(x.shape, std::vector<double>(x.data.size(), 0.0));
    Tensor probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + eps;
        const double hi = f(probe);
        probe.data[i] = orig - eps;
        const double lo = f(probe);
        probe.data[i] = orig;
        if (!std::isfinite(hi) || !std::isfinite(lo)) {
            throw std::runtime_error("finite_diff_grad: non-finite evaluation");
        }
        grad.data[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

}  // namespace embedkit
