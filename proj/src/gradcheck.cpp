#include "emoflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "emoflow/error.hpp"

namespace emoflow {

FiniteDiffReport finite_diff_check(const std::function<Tensor()>& forward,
                                   const std::vector<std::pair<std::string, Tensor>>& params,
                                   double h, double abs_floor) {
    if (params.empty()) throw contract_error("finite_diff_check: no parameters given");
    for (auto& [name, p] : params) {
        if (!p.requires_grad())
            throw contract_error("finite_diff_check: parameter '" + name + "' has requires_grad=false");
        p.zero_grad();
    }

    Tensor loss = forward();
    if (loss.numel() != 1) throw contract_error("finite_diff_check: forward() must return a scalar");
    loss.backward();

    // Snapshot analytic gradients before we start perturbing values.
    std::vector<std::vector<double>> analytic(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = params[i].second;
        analytic[i].assign(p.numel(), 0.0);
        if (p.node()->grad.size() == static_cast<size_t>(p.numel()))
            analytic[i].assign(p.node()->grad.begin(), p.node()->grad.end());
    }

    FiniteDiffReport report;
    autograd::NoGradGuard guard;
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].second;
        std::vector<double>& v = p.node()->value;
        for (int64_t j = 0; j < p.numel(); ++j) {
            const double saved = v[j];
            v[j] = saved + h;
            const double fp = forward().item();
            v[j] = saved - h;
            const double fm = forward().item();
            v[j] = saved;

            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[i][j];
            if (std::fabs(num - ana) <= abs_floor) continue;
            const double denom = std::max({std::fabs(num), std::fabs(ana), 1e-8});
            const double rel = std::fabs(num - ana) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[i].first;
                report.worst_index = j;
                report.analytic = ana;
                report.numeric = num;
            }
        }
    }
    return report;
}

}  // namespace emoflow
