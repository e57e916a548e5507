#pragma once

#include <cstddef>
#include <vector>

#include "analogia/tensor.hpp"

namespace analogia {

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerOptions {
    OptimizerKind kind = OptimizerKind::kSgdMomentum;
    double learning_rate = 1e-3;
    double momentum = 0.9;  // SGD
    double beta1 = 0.9;     // Adam
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double max_grad_norm = 0.0;  // global L2 clip; 0 disables
};

// Parameter handles plus per-parameter slot buffers.
//
// SGD:  v <- momentum * v + g ;  w <- w - lr * v
// Adam: bias-corrected first/second moments.
// With max_grad_norm > 0 the gradient is first rescaled to that global norm.
class Optimizer {
public:
    Optimizer(std::vector<Tensor> params, OptimizerOptions options);

    // Updates every parameter in place. Gradients are left untouched.
    // Throws ContractError if a parameter has no gradient buffer.
    void step();
    void zero_grad();

    const OptimizerOptions& options() const { return options_; }
    const std::vector<Tensor>& params() const { return params_; }
    std::size_t steps_taken() const { return steps_; }

private:
    std::vector<Tensor> params_;
    OptimizerOptions options_;
    std::vector<std::vector<double>> slot1_;
    std::vector<std::vector<double>> slot2_;
    std::size_t steps_ = 0;
};

}  // namespace analogia
