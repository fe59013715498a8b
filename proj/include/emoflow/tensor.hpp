#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "emoflow/error.hpp"
#include "emoflow/rng.hpp"

namespace emoflow {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& s);

namespace autograd {

struct Node;
using NodeP = std::shared_ptr<Node>;

// One recorded operation output. The graph is implicit: each node keeps the
// nodes it was computed from plus a closure that pushes its gradient into
// them. backward() recovers the topological order by DFS from the loss.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on demand, same length as value
    bool requires_grad = false;
    bool backward_done = false;  // set on the node backward() was called on
    std::vector<NodeP> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad();
};

bool grad_enabled();

// Scoped switch that stops ops from recording graph edges (evaluation mode).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

}  // namespace autograd

// Dense row-major tensor of 64-bit reals with optional gradient tracking.
// Copying a Tensor copies the handle, not the storage; ops produce fresh
// nodes, and parameter tensors are mutated in place only by the optimizer.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, double fill);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(const Shape& shape) { return Tensor(shape, 0.0); }
    static Tensor full(const Shape& shape, double v) { return Tensor(shape, v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
    static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);
    static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi);
    static Tensor from_node(autograd::NodeP n);

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const;
    int ndim() const { return static_cast<int>(shape().size()); }
    int dim(int i) const;
    int rows() const { return dim(0); }
    int cols() const { return dim(1); }
    int64_t numel() const;

    double item() const;  // requires numel() == 1
    double at(int64_t flat) const;
    double at(int r, int c) const;  // 2-D
    const std::vector<double>& values() const;
    std::vector<double>& values();  // in-place mutation (parameters, test setup)

    Tensor& set_requires_grad(bool v = true);
    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<double>& grad() const;  // throws contract_error if absent
    void zero_grad() const;  // mutates the shared node, not the handle

    // Reverse sweep from a scalar. Errors: non-scalar loss, repeated call on
    // the same node (gradients do not implicitly accumulate across calls).
    void backward();

    autograd::NodeP node() const { return n_; }

private:
    autograd::NodeP n_;
};

// Construct an op result; records parents/backprop only when tracking is on
// and some parent requires grad.
Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(autograd::Node&)> backprop);

// Gradient accumulation helper used inside backprop closures.
void accumulate_grad(autograd::Node& p, const double* g, int64_t n);

}  // namespace emoflow
