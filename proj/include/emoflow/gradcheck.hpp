#pragma once

#include <functional>
#include <string>
#include <vector>

#include "emoflow/tensor.hpp"

namespace emoflow {

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference check of reverse-mode gradients. `forward` must be a
// deterministic function of the given parameters (stochastic pieces take
// fixed seeds inside). Relative error uses max(|analytic|,|numeric|,1e-8)
// as denominator. Coordinates whose absolute disagreement is below
// `abs_floor` count as exact matches; central differences carry rounding
// noise of roughly eps*|f|/h, so deep graphs with tiny true gradients need
// a small floor (≈1e-8) to avoid comparing noise against noise.
FiniteDiffReport finite_diff_check(const std::function<Tensor()>& forward,
                                   const std::vector<std::pair<std::string, Tensor>>& params,
                                   double h = 1e-6, double abs_floor = 0.0);

}  // namespace emoflow
