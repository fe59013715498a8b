#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emoflow/tensor.hpp"

namespace emoflow {

enum class OptVariant { adam, adamw };

struct OptimConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // used by adamw only (decoupled)
    OptVariant variant = OptVariant::adam;
};

// Adam / AdamW with bias correction. adamw applies decoupled weight decay
// (-lr*wd*p); adam ignores weight_decay entirely.
class Optimizer {
public:
    Optimizer(std::vector<Tensor> params, OptimConfig cfg);

    void step();
    void zero_grad();
    int64_t step_count() const { return step_; }
    const OptimConfig& config() const { return cfg_; }

    size_t param_count() const { return params_.size(); }
    // Moment buffers exposed for checkpointing; index matches construction order.
    const std::vector<double>& first_moment(size_t i) const { return m_[i]; }
    const std::vector<double>& second_moment(size_t i) const { return v_[i]; }
    void load_state(int64_t step, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    int64_t step_ = 0;
    OptimConfig cfg_;
};

}  // namespace emoflow
