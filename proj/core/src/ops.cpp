#include "analogia/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "analogia/errors.hpp"

namespace analogia {

namespace {

using detail::Node;

// Grad buffer of parent i, or nullptr when that parent does not need one.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
    auto& p = self.parents[i];
    return p->requires_grad ? &p->ensure_grad() : nullptr;
}

const std::vector<double>& parent_data(const Node& self, std::size_t i) { return self.parents[i]->data; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

template <class F, class G>
Tensor unary(const Tensor& a, F forward, G derivative) {
    std::vector<double> out(a.numel());
    auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
    return make_op_result(a.shape(), std::move(out), {a}, [derivative](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        const auto& x = parent_data(self, 0);
        for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] += self.grad[i] * derivative(x[i], self.data[i]);
    });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &B[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return make_op_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        const auto& A = parent_data(self, 0);
        const auto& B = parent_data(self, 1);
        const auto& G = self.grad;
        if (auto* ga = parent_grad(self, 0)) {
            // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = &B[p * n];
                    const double* grow = &G[i * n];
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    (*ga)[i * k + p] += acc;
                }
            }
        }
        if (auto* gb = parent_grad(self, 1)) {
            // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    if (aip == 0.0) continue;
                    const double* grow = &G[i * n];
                    double* brow = &(*gb)[p * n];
                    for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    return make_op_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (auto* g = parent_grad(self, p)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    return make_op_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        if (auto* g = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        }
        if (auto* g = parent_grad(self, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    return make_op_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        const auto& A = parent_data(self, 0);
        const auto& B = parent_data(self, 1);
        if (auto* g = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * B[i];
        }
        if (auto* g = parent_grad(self, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * A[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
    return make_op_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
        if (auto* g = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
        }
    });
}

Tensor add_scalar(const Tensor& a, double value) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + value;
    return make_op_result(a.shape(), std::move(out), {a}, [](Node& self) {
        if (auto* g = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        }
    });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows(), d = a.cols();
    if (b.numel() != d) {
        throw DimensionError("add_row: row of " + shape_str(b.shape()) + " cannot broadcast over " +
                             shape_str(a.shape()));
    }
    std::vector<double> out(a.numel());
    auto A = a.data();
    auto B = b.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = A[i * d + j] + B[j];
    return make_op_result(a.shape(), std::move(out), {a, b}, [n, d](Node& self) {
        if (auto* g = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        }
        if (auto* g = parent_grad(self, 1)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j];
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_op_result({1}, {s}, {a}, [](Node& self) {
        if (auto* g = parent_grad(self, 0)) {
            for (auto& v : *g) v += self.grad[0];
        }
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor relu(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [inv_sqrt_2pi](double x, double) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * std::exp(-0.5 * x * x) * inv_sqrt_2pi;
        });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data()) {
        if (!(v > 0.0)) throw ContractError("log: non-positive input");
    }
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
    return unary(
        a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Tensor softmax(const Tensor& a, double temperature) {
    if (!(temperature > 0.0)) throw ContractError("softmax: temperature must be positive");
    const std::size_t n = a.rows(), d = a.cols();
    std::vector<double> out(a.numel());
    auto A = a.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &A[i * d];
        double mx = *std::max_element(row, row + d);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = std::exp((row[j] - mx) / temperature);
            z += out[i * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= z;
    }
    return make_op_result(a.shape(), std::move(out), {a}, [n, d, temperature](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.data[i * d + j];
            for (std::size_t j = 0; j < d; ++j) {
                (*g)[i * d + j] += self.data[i * d + j] * (self.grad[i * d + j] - dot) / temperature;
            }
        }
    });
}

Tensor log_softmax(const Tensor& a, double temperature) {
    if (!(temperature > 0.0)) throw ContractError("log_softmax: temperature must be positive");
    const std::size_t n = a.rows(), d = a.cols();
    std::vector<double> out(a.numel());
    auto A = a.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &A[i * d];
        double mx = *std::max_element(row, row + d);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += std::exp((row[j] - mx) / temperature);
        const double lse = std::log(z);
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = (row[j] - mx) / temperature - lse;
    }
    return make_op_result(a.shape(), std::move(out), {a}, [n, d, temperature](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < n; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < d; ++j) gsum += self.grad[i * d + j];
            for (std::size_t j = 0; j < d; ++j) {
                const double p = std::exp(self.data[i * d + j]);
                (*g)[i * d + j] += (self.grad[i * d + j] - p * gsum) / temperature;
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t n = x.rows(), d = x.cols();
    if (gamma.numel() != d || beta.numel() != d) throw DimensionError("layer_norm: affine size mismatch");
    std::vector<double> out(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto rstd = std::make_shared<std::vector<double>>(n);
    auto X = x.data();
    auto G = gamma.data();
    auto B = beta.data();
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += X[i * d + j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (X[i * d + j] - mu) * (X[i * d + j] - mu);
        var /= static_cast<double>(d);
        const double r = 1.0 / std::sqrt(var + eps);
        (*rstd)[i] = r;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (X[i * d + j] - mu) * r;
            (*xhat)[i * d + j] = h;
            out[i * d + j] = h * G[j] + B[j];
        }
    }
    return make_op_result(x.shape(), std::move(out), {x, gamma, beta}, [n, d, xhat, rstd](Node& self) {
        const auto& G = parent_data(self, 1);
        const auto& dy = self.grad;
        if (auto* gg = parent_grad(self, 1)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) (*gg)[j] += dy[i * d + j] * (*xhat)[i * d + j];
        }
        if (auto* gb = parent_grad(self, 2)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) (*gb)[j] += dy[i * d + j];
        }
        if (auto* gx = parent_grad(self, 0)) {
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t i = 0; i < n; ++i) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dh = dy[i * d + j] * G[j];
                    m1 += dh;
                    m2 += dh * (*xhat)[i * d + j];
                }
                m1 *= inv_d;
                m2 *= inv_d;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dh = dy[i * d + j] * G[j];
                    (*gx)[i * d + j] += (*rstd)[i] * (dh - m1 - (*xhat)[i * d + j] * m2);
                }
            }
        }
    });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
    const std::size_t n = a.rows(), d = a.cols();
    if (rows.empty()) throw ContractError("gather_rows: empty index list");
    std::vector<double> out(rows.size() * d);
    auto A = a.data();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= n) throw DimensionError("gather_rows: row index out of range");
        std::copy_n(&A[rows[r] * d], d, &out[r * d]);
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return make_op_result({rows.size(), d}, std::move(out), {a}, [idx = std::move(idx), d](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < d; ++j) (*g)[idx[r] * d + j] += self.grad[r * d + j];
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    const std::size_t n = a.rows(), d = a.cols();
    if (begin >= end || end > d) throw DimensionError("slice_cols: invalid column range");
    const std::size_t w = end - begin;
    std::vector<double> out(n * w);
    auto A = a.data();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(&A[i * d + begin], w, &out[i * w]);
    return make_op_result({n, w}, std::move(out), {a}, [n, d, w, begin](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) (*g)[i * d + begin + j] += self.grad[i * w + j];
    });
}

Tensor pick_per_row(const Tensor& a, std::span<const std::size_t> cols) {
    const std::size_t n = a.rows(), d = a.cols();
    if (cols.size() != n) throw DimensionError("pick_per_row: need one column index per row");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (cols[i] >= d) throw DimensionError("pick_per_row: column index out of range");
        out[i] = a.at(i * d + cols[i]);
    }
    std::vector<std::size_t> idx(cols.begin(), cols.end());
    return make_op_result({n, 1}, std::move(out), {a}, [idx = std::move(idx), d](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < idx.size(); ++i) (*g)[i * d + idx[i]] += self.grad[i];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: nothing to concatenate");
    const std::size_t d = parts.front().cols();
    std::size_t n = 0;
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        if (p.cols() != d) throw DimensionError("concat_rows: column count mismatch");
        offsets.push_back(out.size());
        out.insert(out.end(), p.data().begin(), p.data().end());
        n += p.rows();
    }
    return make_op_result({n, d}, std::move(out), parts, [offsets = std::move(offsets)](Node& self) {
        for (std::size_t p = 0; p < offsets.size(); ++p) {
            if (auto* g = parent_grad(self, p)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[offsets[p] + i];
            }
        }
    });
}

Tensor multi_head_attention(const Tensor& qkv, std::size_t batch, std::size_t seq, std::size_t heads) {
    if (qkv.rows() != batch * seq || qkv.cols() % 3 != 0) {
        throw DimensionError("multi_head_attention: qkv must be (batch*seq) x 3d, got " + shape_str(qkv.shape()));
    }
    const std::size_t d = qkv.cols() / 3;
    if (heads == 0 || d % heads != 0) throw DimensionError("multi_head_attention: d not divisible by heads");
    const std::size_t dh = d / heads;
    const std::size_t stride = 3 * d;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    auto probs = std::make_shared<std::vector<double>>(batch * heads * seq * seq);
    std::vector<double> out(batch * seq * d, 0.0);
    auto X = qkv.data();

    for (std::size_t b = 0; b < batch; ++b) {
        const double* base = &X[b * seq * stride];
        for (std::size_t h = 0; h < heads; ++h) {
            double* P = &(*probs)[(b * heads + h) * seq * seq];
            const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
            for (std::size_t i = 0; i < seq; ++i) {
                double mx = -INFINITY;
                for (std::size_t j = 0; j < seq; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += base[i * stride + qo + c] * base[j * stride + ko + c];
                    s *= inv_scale;
                    P[i * seq + j] = s;
                    mx = std::max(mx, s);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < seq; ++j) {
                    P[i * seq + j] = std::exp(P[i * seq + j] - mx);
                    z += P[i * seq + j];
                }
                for (std::size_t j = 0; j < seq; ++j) P[i * seq + j] /= z;
                double* orow = &out[(b * seq + i) * d + h * dh];
                for (std::size_t j = 0; j < seq; ++j) {
                    const double p = P[i * seq + j];
                    for (std::size_t c = 0; c < dh; ++c) orow[c] += p * base[j * stride + vo + c];
                }
            }
        }
    }

    return make_op_result(
        {batch * seq, d}, std::move(out), {qkv}, [batch, seq, heads, d, dh, stride, inv_scale, probs](Node& self) {
            auto* g = parent_grad(self, 0);
            if (!g) return;
            const auto& X = parent_data(self, 0);
            std::vector<double> dP(seq * seq);
            for (std::size_t b = 0; b < batch; ++b) {
                const double* base = &X[b * seq * stride];
                double* gbase = &(*g)[b * seq * stride];
                for (std::size_t h = 0; h < heads; ++h) {
                    const double* P = &(*probs)[(b * heads + h) * seq * seq];
                    const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
                    // dP = dO V^T ; dV = P^T dO
                    for (std::size_t i = 0; i < seq; ++i) {
                        const double* go = &self.grad[(b * seq + i) * d + h * dh];
                        for (std::size_t j = 0; j < seq; ++j) {
                            double s = 0.0;
                            for (std::size_t c = 0; c < dh; ++c) s += go[c] * base[j * stride + vo + c];
                            dP[i * seq + j] = s;
                            const double p = P[i * seq + j];
                            for (std::size_t c = 0; c < dh; ++c) gbase[j * stride + vo + c] += p * go[c];
                        }
                    }
                    // dS = P * (dP - rowsum(dP * P)), then through the scaled dot product.
                    for (std::size_t i = 0; i < seq; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < seq; ++j) dot += dP[i * seq + j] * P[i * seq + j];
                        for (std::size_t j = 0; j < seq; ++j) {
                            const double ds = P[i * seq + j] * (dP[i * seq + j] - dot) * inv_scale;
                            if (ds == 0.0) continue;
                            for (std::size_t c = 0; c < dh; ++c) {
                                gbase[i * stride + qo + c] += ds * base[j * stride + ko + c];
                                gbase[j * stride + ko + c] += ds * base[i * stride + qo + c];
                            }
                        }
                    }
                }
            }
        });
}

Tensor normalized_distance_rows(const Tensor& a, const Tensor& b, double scale_factor, ZeroNorm zero_policy) {
    require_same_shape(a, b, "normalized_distance_rows");
    constexpr double kTiny = 1e-8;
    const std::size_t n = a.rows(), d = a.cols();
    auto A = a.data();
    auto B = b.data();
    std::vector<double> out(n, 0.0);
    // Per row: 1/|a|, 1/|b|, distance before scaling (0 marks an inactive row).
    auto cache = std::make_shared<std::vector<double>>(3 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            na += A[i * d + j] * A[i * d + j];
            nb += B[i * d + j] * B[i * d + j];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        if (na < kTiny || nb < kTiny) {
            if (zero_policy == ZeroNorm::kThrow) {
                throw ContractError("distance: zero-norm vector has no normalized direction");
            }
            continue;
        }
        double r = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = A[i * d + j] / na - B[i * d + j] / nb;
            r += diff * diff;
        }
        r = std::sqrt(r);
        (*cache)[3 * i] = 1.0 / na;
        (*cache)[3 * i + 1] = 1.0 / nb;
        (*cache)[3 * i + 2] = r;
        out[i] = scale_factor * r;
    }
    return make_op_result({n, 1}, std::move(out), {a, b}, [n, d, scale_factor, cache](Node& self) {
        const auto& A = parent_data(self, 0);
        const auto& B = parent_data(self, 1);
        auto* ga = parent_grad(self, 0);
        auto* gb = parent_grad(self, 1);
        std::vector<double> u(d), v(d), gu(d);
        for (std::size_t i = 0; i < n; ++i) {
            const double ia = (*cache)[3 * i], ib = (*cache)[3 * i + 1], r = (*cache)[3 * i + 2];
            if (r == 0.0 || self.grad[i] == 0.0) continue;
            const double coeff = self.grad[i] * scale_factor / r;
            for (std::size_t j = 0; j < d; ++j) {
                u[j] = A[i * d + j] * ia;
                v[j] = B[i * d + j] * ib;
                gu[j] = coeff * (u[j] - v[j]);
            }
            // Project through x -> x/|x|: (g - u (u.g)) / |x|.
            if (ga) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += u[j] * gu[j];
                for (std::size_t j = 0; j < d; ++j) (*ga)[i * d + j] += (gu[j] - u[j] * dot) * ia;
            }
            if (gb) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot -= v[j] * gu[j];
                for (std::size_t j = 0; j < d; ++j) (*gb)[i * d + j] += (-gu[j] - v[j] * dot) * ib;
            }
        }
    });
}

}  // namespace analogia
