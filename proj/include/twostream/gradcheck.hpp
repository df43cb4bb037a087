#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "twostream/tensor.hpp"

namespace twostream {

// Central-difference gradient oracle: (f(x + eps*e_i) - f(x - eps*e_i)) / (2 eps)
// per coordinate. Independent of every analytic backward path it checks.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, double eps = 1e-5) {
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double original = probe[i];
        probe[i] = original + eps;
        double hi = f(probe);
        probe[i] = original - eps;
        double lo = f(probe);
        probe[i] = original;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

// max |a_i - b_i| / (max(max|a|, max|b|) + 1e-12), a scale-invariant distance
// that stays meaningful when individual components pass through zero.
inline double relative_gradient_error(const Tensor& analytic, const Tensor& numeric) {
    require_same_shape(analytic, numeric, "relative_gradient_error");
    double max_diff = 0.0, max_mag = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(analytic[i] - numeric[i]));
        max_mag = std::max({max_mag, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    return max_diff / (max_mag + 1e-12);
}

}  // namespace twostream
