#pragma once

#include <functional>
#include <vector>

#include "analogia/tensor.hpp"

namespace analogia {

// Compares reverse-mode gradients of a scalar function against central
// differences. Returns max over all coordinates of
//   |analytic - numeric| / (|numeric| + 1e-8).
// `loss` must rebuild its graph on every call. Parameter values are restored
// and their grads cleared before returning. eps must lie in [1e-6, 1e-3].
double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params, double eps = 1e-5);

// Same comparison in allclose form: max over coordinates of
//   |analytic - numeric| / (atol + rtol * |numeric|),
// so a result <= 1 means every coordinate is within tolerance.
double finite_diff_ratio(const std::function<Tensor()>& loss, std::vector<Tensor> params, double rtol, double atol,
                         double eps = 1e-5);

}  // namespace analogia
