#pragma once

#include <cmath>
#include <stdexcept>

#include "loginv/tensor.hpp"

namespace loginv::nn {

// ---------------------------------------------------------------------------
// Batch standardization: per-channel statistics over (batch, height, width),
// biased variance, epsilon floor. Shared by plain and conditioned batch norm.
// Training mode uses batch statistics; eval mode uses statistics frozen from
// a calibration pass (no moving averages are kept during training).
// ---------------------------------------------------------------------------

template <typename T>
struct StandardizeCache {
    Tensor<T> xhat;     // standardized input
    Tensor<T> inv_std;  // [C]
};

template <typename T>
void batch_moments(const Tensor<T>& x, Tensor<T>& mu, Tensor<T>& var) {
    const int C = x.dim(x.rank() - 1);
    const int64_t N = x.size() / C;
    mu = Tensor<T>({C});
    var = Tensor<T>({C});
    const T* p = x.data();
    for (int64_t i = 0; i < N; ++i, p += C)
        for (int c = 0; c < C; ++c) mu[c] += p[c];
    for (int c = 0; c < C; ++c) mu[c] /= T(N);
    p = x.data();
    for (int64_t i = 0; i < N; ++i, p += C)
        for (int c = 0; c < C; ++c) { const T d = p[c] - mu[c]; var[c] += d * d; }
    for (int c = 0; c < C; ++c) var[c] /= T(N);
}

template <typename T>
Tensor<T> standardize_fwd(const Tensor<T>& x, T eps, StandardizeCache<T>* cache) {
    if (x.dim(0) < 2)
        throw std::invalid_argument("batch norm: training mode needs batch size >= 2");
    const int C = x.dim(x.rank() - 1);
    const int64_t N = x.size() / C;
    Tensor<T> mu, var;
    batch_moments(x, mu, var);
    Tensor<T> inv_std({C});
    for (int c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + eps);
    Tensor<T> xhat = x;
    T* p = xhat.data();
    for (int64_t i = 0; i < N; ++i, p += C)
        for (int c = 0; c < C; ++c) p[c] = (p[c] - mu[c]) * inv_std[c];
    if (cache) {
        cache->xhat = xhat;
        cache->inv_std = inv_std;
    }
    return xhat;
}

template <typename T>
Tensor<T> standardize_eval(const Tensor<T>& x, const Tensor<T>& mu, const Tensor<T>& var, T eps) {
    const int C = x.dim(x.rank() - 1);
    const int64_t N = x.size() / C;
    Tensor<T> y = x;
    T* p = y.data();
    for (int64_t i = 0; i < N; ++i, p += C)
        for (int c = 0; c < C; ++c) p[c] = (p[c] - mu[c]) / std::sqrt(var[c] + eps);
    return y;
}

// Backward through the batch statistics:
//   dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
template <typename T>
Tensor<T> standardize_bwd(const Tensor<T>& dxhat, const StandardizeCache<T>& cache) {
    const Tensor<T>& xhat = cache.xhat;
    const int C = xhat.dim(xhat.rank() - 1);
    const int64_t N = xhat.size() / C;
    Tensor<T> m1({C}), m2({C});
    {
        const T* d = dxhat.data();
        const T* h = xhat.data();
        for (int64_t i = 0; i < N; ++i, d += C, h += C)
            for (int c = 0; c < C; ++c) { m1[c] += d[c]; m2[c] += d[c] * h[c]; }
    }
    for (int c = 0; c < C; ++c) { m1[c] /= T(N); m2[c] /= T(N); }
    Tensor<T> dx = dxhat;
    T* o = dx.data();
    const T* h = xhat.data();
    for (int64_t i = 0; i < N; ++i, o += C, h += C)
        for (int c = 0; c < C; ++c) o[c] = cache.inv_std[c] * (o[c] - m1[c] - h[c] * m2[c]);
    return dx;
}

// ---------------------------------------------------------------------------
// Conditioned modulation: per-sample gain/bias [B, C] applied to the
// standardized activation. gamma/beta come from small nets of the
// conditioning vector, handled by the owning layer.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> modulate_fwd(const Tensor<T>& xhat, const Tensor<T>& gamma, const Tensor<T>& beta) {
    const int B = xhat.dim(0), C = xhat.dim(xhat.rank() - 1);
    const int64_t HW = xhat.size() / (int64_t(B) * C);
    Tensor<T> y = xhat;
    T* p = y.data();
    for (int b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i, p += C)
            for (int c = 0; c < C; ++c) p[c] = p[c] * gamma.at2(b, c) + beta.at2(b, c);
    return y;
}

template <typename T>
void modulate_bwd(const Tensor<T>& dy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                  Tensor<T>& dxhat, Tensor<T>& dgamma, Tensor<T>& dbeta) {
    const int B = xhat.dim(0), C = xhat.dim(xhat.rank() - 1);
    const int64_t HW = xhat.size() / (int64_t(B) * C);
    dxhat = dy;
    dgamma = Tensor<T>({B, C});
    dbeta = Tensor<T>({B, C});
    T* dxp = dxhat.data();
    const T* dyp = dy.data();
    const T* hp = xhat.data();
    for (int b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i, dxp += C, dyp += C, hp += C)
            for (int c = 0; c < C; ++c) {
                dgamma.at2(b, c) += dyp[c] * hp[c];
                dbeta.at2(b, c) += dyp[c];
                dxp[c] = dyp[c] * gamma.at2(b, c);
            }
}

// Plain batch norm with free per-channel gain/bias (used at the generator
// output head).
template <typename T>
struct BatchNorm {
    Tensor<T> gamma, beta, g_gamma, g_beta;
    Tensor<T> mu_eval, var_eval;   // frozen calibration statistics
    bool calibrated = false;
    T eps = T(1e-5);
    Tensor<T> mu_sum, var_sum;
    int64_t calib_count = 0;

    void init(int channels, T eps_) {
        eps = eps_;
        gamma = Tensor<T>::full({channels}, T(1));
        beta = Tensor<T>({channels});
        g_gamma = Tensor<T>({channels});
        g_beta = Tensor<T>({channels});
        mu_eval = Tensor<T>({channels});
        var_eval = Tensor<T>::full({channels}, T(1));
    }

    Tensor<T> train_fwd(const Tensor<T>& x, StandardizeCache<T>& cache, bool calib = false) {
        if (calib) {
            Tensor<T> mu, var;
            batch_moments(x, mu, var);
            if (calib_count == 0) {
                mu_sum = Tensor<T>({gamma.dim(0)});
                var_sum = Tensor<T>({gamma.dim(0)});
            }
            mu_sum.vec() += mu.vec();
            var_sum.vec() += var.vec();
            ++calib_count;
        }
        Tensor<T> xhat = standardize_fwd(x, eps, &cache);
        return scale_shift(xhat);
    }

    void finish_calibration() {
        if (calib_count == 0) return;
        mu_eval = mu_sum;
        var_eval = var_sum;
        mu_eval.vec() /= T(calib_count);
        var_eval.vec() /= T(calib_count);
        calibrated = true;
        calib_count = 0;
    }

    Tensor<T> eval_fwd(const Tensor<T>& x) const {
        Tensor<T> xhat = standardize_eval(x, mu_eval, var_eval, eps);
        return scale_shift(xhat);
    }

    Tensor<T> bwd(const Tensor<T>& dy, const StandardizeCache<T>& cache) {
        const int C = gamma.dim(0);
        const int64_t N = dy.size() / C;
        Tensor<T> dxhat = dy;
        T* dp = dxhat.data();
        const T* hp = cache.xhat.data();
        const T* yp = dy.data();
        for (int64_t i = 0; i < N; ++i, dp += C, hp += C, yp += C)
            for (int c = 0; c < C; ++c) {
                g_gamma[c] += yp[c] * hp[c];
                g_beta[c] += yp[c];
                dp[c] = yp[c] * gamma[c];
            }
        return standardize_bwd(dxhat, cache);
    }

private:
    Tensor<T> scale_shift(const Tensor<T>& xhat) const {
        const int C = gamma.dim(0);
        const int64_t N = xhat.size() / C;
        Tensor<T> y = xhat;
        T* p = y.data();
        for (int64_t i = 0; i < N; ++i, p += C)
            for (int c = 0; c < C; ++c) p[c] = p[c] * gamma[c] + beta[c];
        return y;
    }
};

} // namespace loginv::nn
