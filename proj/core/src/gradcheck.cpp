#include "analogia/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "analogia/errors.hpp"

namespace analogia {

namespace {

// Calls visit(analytic, numeric) once per coordinate of every parameter.
template <class Visit>
void compare_gradients(const std::function<Tensor()>& loss, std::vector<Tensor>& params, double eps, Visit visit) {
    if (eps < 1e-6 || eps > 1e-3) throw ContractError("finite_diff_check: eps must be in [1e-6, 1e-3]");
    for (auto& p : params) {
        if (!p.requires_grad()) throw ContractError("finite_diff_check: parameter does not require grad");
        p.clear_grad();
    }
    loss().backward();
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        if (p.has_grad()) {
            analytic.emplace_back(p.grad().begin(), p.grad().end());
        } else {
            analytic.emplace_back(p.numel(), 0.0);  // loss does not reach p
        }
        p.clear_grad();
    }

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k].mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + eps;
            const double up = loss().item();
            w[i] = orig - eps;
            const double down = loss().item();
            w[i] = orig;
            visit(analytic[k][i], (up - down) / (2.0 * eps));
        }
    }
}

}  // namespace

double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params, double eps) {
    double worst = 0.0;
    compare_gradients(loss, params, eps, [&](double a, double n) {
        worst = std::max(worst, std::abs(a - n) / (std::abs(n) + 1e-8));
    });
    return worst;
}

double finite_diff_ratio(const std::function<Tensor()>& loss, std::vector<Tensor> params, double rtol, double atol,
                         double eps) {
    if (!(rtol >= 0.0) || !(atol >= 0.0) || rtol + atol == 0.0) {
        throw ContractError("finite_diff_ratio: tolerances must be non-negative and not both zero");
    }
    double worst = 0.0;
    compare_gradients(loss, params, eps, [&](double a, double n) {
        worst = std::max(worst, std::abs(a - n) / (atol + rtol * std::abs(n)));
    });
    return worst;
}

}  // namespace analogia
