#include "analogia/optim.hpp"

#include <cmath>

#include "analogia/errors.hpp"

namespace analogia {

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerOptions options)
    : params_(std::move(params)), options_(options) {
    if (!(options_.learning_rate > 0.0)) throw ContractError("optimizer: learning rate must be positive");
    for (auto& p : params_) {
        if (!p.is_leaf()) throw ContractError("optimizer: parameters must be leaf tensors");
        slot1_.emplace_back(p.numel(), 0.0);
        if (options_.kind == OptimizerKind::kAdam) slot2_.emplace_back(p.numel(), 0.0);
    }
}

void Optimizer::step() {
    for (const auto& p : params_) {
        if (!p.has_grad()) throw ContractError("optimizer: parameter " + shape_str(p.shape()) + " has no gradient");
    }
    ++steps_;
    const double lr = options_.learning_rate;
    // Clipping rescales the gradient as read here; stored grads stay as they are.
    double gscale = 1.0;
    if (options_.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : params_)
            for (double g : p.grad()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > options_.max_grad_norm) gscale = options_.max_grad_norm / norm;
    }
    if (options_.kind == OptimizerKind::kSgdMomentum) {
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto w = params_[k].mutable_data();
            auto g = params_[k].grad();
            auto& v = slot1_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                v[i] = options_.momentum * v[i] + gscale * g[i];
                w[i] -= lr * v[i];
            }
        }
        return;
    }
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto w = params_[k].mutable_data();
        auto g = params_[k].grad();
        auto& m = slot1_[k];
        auto& s = slot2_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = gscale * g[i];
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gi;
            s[i] = options_.beta2 * s[i] + (1.0 - options_.beta2) * gi * gi;
            const double mhat = m[i] / c1;
            const double shat = s[i] / c2;
            w[i] -= lr * mhat / (std::sqrt(shat) + options_.epsilon);
        }
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace analogia
