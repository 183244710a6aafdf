#pragma once

#include <cmath>
#include <functional>

#include "loginv/nn/optim.hpp"
#include "loginv/tensor.hpp"

// Central-difference gradient checking helpers (64-bit only).

namespace fdcheck {

inline double rel_err(double analytic, double numeric) {
    const double scale = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / scale;
}

// Central difference of a scalar function wrt one entry.
inline double central_diff(const std::function<double()>& f, double* x, double h = 1e-5) {
    const double x0 = *x;
    *x = x0 + h;
    const double fp = f();
    *x = x0 - h;
    const double fm = f();
    *x = x0;
    return (fp - fm) / (2.0 * h);
}

// Worst relative error between analytic grads and finite differences over a
// parameter set, probing at most max_probe entries per tensor.
inline double max_param_grad_err(loginv::nn::ParamSet<double>& ps,
                                 const std::function<double()>& loss,
                                 const std::function<void()>& compute_grads,
                                 int max_probe = 24, double h = 1e-5) {
    compute_grads();
    // copy analytic grads before FD evaluations disturb anything
    std::vector<loginv::Tensor<double>> analytic;
    for (auto* g : ps.grads) analytic.push_back(*g);
    double worst = 0.0;
    for (size_t i = 0; i < ps.count(); ++i) {
        loginv::Tensor<double>& w = *ps.weights[i];
        const int64_t n = w.size();
        const int64_t stride = std::max<int64_t>(1, n / max_probe);
        for (int64_t j = 0; j < n; j += stride) {
            const double num = central_diff(loss, &w[j], h);
            worst = std::max(worst, rel_err(analytic[i][j], num));
        }
    }
    return worst;
}

// Worst relative error of an input gradient against finite differences.
inline double max_input_grad_err(loginv::Tensor<double>& x, const loginv::Tensor<double>& analytic,
                                 const std::function<double()>& loss, double h = 1e-5) {
    double worst = 0.0;
    for (int64_t j = 0; j < x.size(); ++j) {
        const double num = central_diff(loss, &x[j], h);
        worst = std::max(worst, rel_err(analytic[j], num));
    }
    return worst;
}

} // namespace fdcheck
