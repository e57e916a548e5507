#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "analogia/tensor.hpp"

// Differentiable operations. Matrices are row-major; 1-D tensors act as a
// single row wherever a matrix is expected.
namespace analogia {

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// a (n x d) + b (1 x d), b broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// max(a, lo); gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& a, double lo);

// Row-wise softmax of a / temperature, max-subtracted.
Tensor softmax(const Tensor& a, double temperature = 1.0);
Tensor log_softmax(const Tensor& a, double temperature = 1.0);

// Row-wise layer normalization with affine gamma/beta (each 1 x d).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
// out[i] = a[i, cols[i]], shape n x 1.
Tensor pick_per_row(const Tensor& a, std::span<const std::size_t> cols);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Multi-head scaled dot-product self-attention, fused.
// qkv is (batch*seq) x (3*d) with [q | k | v] column blocks; each sample's
// seq consecutive rows attend only to each other. Returns (batch*seq) x d.
Tensor multi_head_attention(const Tensor& qkv, std::size_t batch, std::size_t seq, std::size_t heads);

// How normalized_distance_rows treats a row whose norm is below 1e-8.
enum class ZeroNorm {
    kThrow,     // contract error: normalization undefined
    kZeroTerm,  // that row's distance is 0 with zero gradient
};

// d_i = scale * || a_i/|a_i| - b_i/|b_i| ||_2 per row, shape n x 1.
// The gradient at d_i == 0 is taken as zero.
Tensor normalized_distance_rows(const Tensor& a, const Tensor& b, double scale,
                                ZeroNorm zero_policy = ZeroNorm::kThrow);

}  // namespace analogia
