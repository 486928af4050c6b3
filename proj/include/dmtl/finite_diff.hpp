#pragma once

#include <functional>

#include "dmtl/tensor.hpp"

namespace dmtl {

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central-difference gradient (f(x+εeᵢ) − f(x−εeᵢ)) / 2ε per coordinate.
/// Throws NumericError if f is non-finite at any probe.
Tensor finite_diff(const ScalarFunction& f, const Tensor& x, double eps = 1e-5);

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂); zero when both vanish.
double relative_error(const Tensor& a, const Tensor& b);

}  // namespace dmtl
