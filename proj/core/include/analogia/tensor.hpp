#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace analogia {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass reaches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into parents that require grad.
    std::function<void(Node&)> backward;

    bool is_leaf() const { return parents.empty(); }
    std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense row-major tensor of doubles with reverse-mode autodiff.
//
// A Tensor is a shared handle: copies alias the same storage and graph node.
// Results of differentiable ops record their parents only when at least one
// operand requires grad.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    // Convenience for literals in tests: rows of a matrix.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad = false);
    static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t dim() const { return shape().size(); }
    // 2-D accessors; a 1-D tensor of length n is treated as 1 x n.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    // Direct mutation is reserved for leaves (parameters, optimizer updates).
    std::span<double> mutable_data();
    double at(std::size_t i) const { return data()[i]; }
    double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
    double item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();
    void clear_grad();

    bool is_leaf() const;
    // Gradient of this scalar w.r.t. every reachable requires-grad node.
    // Leaf gradients accumulate across calls; interior ones are recomputed.
    void backward() const;

    // Same values, no graph history, no grad requirement.
    Tensor detach() const;
    // Deep copy of values into a fresh leaf with the given grad flag.
    Tensor clone(bool requires_grad = false) const;
    std::vector<double> to_vector() const;

    // Hooks for defining custom differentiable ops.
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool grad_enabled();

private:
    bool previous_;
};

// Creates the result of a differentiable op. `backward` receives the result
// node (whose grad is populated) and must accumulate into the parents' grads
// via Node::ensure_grad(). It is dropped when no parent requires grad.
Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backward);

}  // namespace analogia
