#include "emoflow/optim.hpp"

#include <cmath>

namespace emoflow {

Optimizer::Optimizer(std::vector<Tensor> params, OptimConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        if (!p.requires_grad()) throw contract_error("optimizer: parameter does not track gradients");
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Optimizer::step() {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        auto& data = p.values();
        auto& m = m_[i];
        auto& v = v_[i];
        const std::vector<double>* g = p.has_grad() ? &p.grad() : nullptr;
        if (g && g->size() != data.size()) throw shape_error("optimizer: gradient shape does not match parameter");
        for (size_t j = 0; j < data.size(); ++j) {
            double gj = g ? (*g)[j] : 0.0;
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            // Decoupled decay acts on the pre-update parameter value.
            double decay = (cfg_.variant == OptVariant::adamw) ? cfg_.lr * cfg_.weight_decay * data[j] : 0.0;
            data[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) + decay;
        }
    }
}

void Optimizer::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void Optimizer::load_state(int64_t step, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
        throw shape_error("optimizer: state tensor count mismatch");
    for (size_t i = 0; i < params_.size(); ++i)
        if (m[i].size() != params_[i].values().size() || v[i].size() != params_[i].values().size())
            throw shape_error("optimizer: state shape mismatch");
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace emoflow
