#include "emoflow/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace emoflow {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw shape_error("shape dimensions must be positive, got " + shape_str(s));
        n *= d;
    }
    return n;
}

bool same_shape(const Shape& a, const Shape& b) {
    return a == b;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace autograd {

void Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() {
    return g_grad_enabled;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) {
    g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    g_grad_enabled = prev_;
}

}  // namespace autograd

using autograd::Node;
using autograd::NodeP;

Tensor::Tensor(Shape shape, double fill) {
    int64_t n = shape_numel(shape);
    n_ = std::make_shared<Node>();
    n_->shape = std::move(shape);
    n_->value.assign(static_cast<size_t>(n), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw shape_error("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    n_ = std::make_shared<Node>();
    n_->shape = std::move(shape);
    n_->value = std::move(data);
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev) {
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
    for (double& v : d) v = rng.normal() * stddev;
    return Tensor(shape, std::move(d));
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi) {
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
    for (double& v : d) v = rng.uniform(lo, hi);
    return Tensor(shape, std::move(d));
}

Tensor Tensor::from_node(NodeP n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
}

const Shape& Tensor::shape() const {
    if (!n_) throw contract_error("use of undefined tensor");
    return n_->shape;
}

int Tensor::dim(int i) const {
    const Shape& s = shape();
    if (i < 0 || i >= static_cast<int>(s.size())) throw shape_error("dim index out of range");
    return s[i];
}

int64_t Tensor::numel() const {
    if (!n_) throw contract_error("use of undefined tensor");
    return n_->numel();
}

double Tensor::item() const {
    if (numel() != 1) throw contract_error("item() requires a one-element tensor, shape is " + shape_str(shape()));
    return n_->value[0];
}

double Tensor::at(int64_t flat) const {
    return n_->value.at(static_cast<size_t>(flat));
}

double Tensor::at(int r, int c) const {
    if (ndim() != 2) throw shape_error("at(r,c) requires a 2-D tensor");
    return n_->value[static_cast<size_t>(r) * dim(1) + c];
}

const std::vector<double>& Tensor::values() const {
    if (!n_) throw contract_error("use of undefined tensor");
    return n_->value;
}

std::vector<double>& Tensor::values() {
    if (!n_) throw contract_error("use of undefined tensor");
    return n_->value;
}

Tensor& Tensor::set_requires_grad(bool v) {
    if (!n_) throw contract_error("use of undefined tensor");
    n_->requires_grad = v;
    return *this;
}

bool Tensor::requires_grad() const {
    return n_ && n_->requires_grad;
}

bool Tensor::has_grad() const {
    return n_ && n_->grad.size() == n_->value.size();
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw contract_error("tensor has no gradient (backward not run or grad cleared)");
    return n_->grad;
}

void Tensor::zero_grad() const {
    if (n_) n_->grad.clear();
}

void Tensor::backward() {
    if (!n_) throw contract_error("backward on undefined tensor");
    if (n_->numel() != 1) throw contract_error("backward requires a scalar loss, shape is " + shape_str(n_->shape));
    if (n_->backward_done) throw contract_error("backward already called on this graph; rebuild the forward pass first");
    n_->backward_done = true;

    // DFS post-order over parents: parents precede their consumers in `topo`.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    visited.insert(n_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    // Every reachable tracked node gets grad storage, even if no flow reaches it.
    for (Node* node : topo)
        if (node->requires_grad) node->ensure_grad();

    n_->ensure_grad();
    n_->grad[0] = 1.0;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backprop && node->grad.size() == node->value.size()) node->backprop(*node);
    }
}

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Node&)> backprop) {
    if (shape_numel(shape) != static_cast<int64_t>(value.size()))
        throw shape_error("op produced value of wrong size for shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool track = autograd::grad_enabled();
    bool any = false;
    if (track)
        for (const Tensor& p : parents)
            if (p.requires_grad()) any = true;
    if (track && any) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const Tensor& p : parents) n->parents.push_back(p.node());
        n->backprop = std::move(backprop);
    }
    return Tensor::from_node(std::move(n));
}

void accumulate_grad(Node& p, const double* g, int64_t n) {
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int64_t i = 0; i < n; ++i) p.grad[static_cast<size_t>(i)] += g[i];
}

}  // namespace emoflow
