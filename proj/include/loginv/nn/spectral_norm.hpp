#pragma once

#include <cmath>

#include "loginv/rng.hpp"
#include "loginv/tensor.hpp"

namespace loginv::nn {

// ---------------------------------------------------------------------------
// Spectral normalization by power iteration.
//
// Weights are stored as [K, O] (dense: K=in, conv: K=kh*kw*cin, O=out
// channels); the normalized matrix is W / sigma_hat where sigma_hat tracks
// the top singular value of the (O, K)-shaped view. One power-iteration
// update of u runs per training forward; eval reuses the stored u, v.
// ---------------------------------------------------------------------------

template <typename T>
struct SpectralNorm {
    Tensor<T> u;  // [O]
    Tensor<T> v;  // [K]

    static constexpr T kFloor = T(1e-12);

    void init(Rng& rng, int k_dim, int out_dim, const Tensor<T>* w_warmup = nullptr) {
        u = Tensor<T>({out_dim});
        v = Tensor<T>({k_dim});
        rng.fill_normal(u);
        normalize(u);
        rng.fill_normal(v);
        normalize(v);
        if (w_warmup)
            for (int i = 0; i < 3; ++i) power_iterate(*w_warmup);
    }

    // v <- norm(S u); u <- norm(S^T v); returns sigma = u^T S^T v = ||S^T v||.
    T power_iterate(const Tensor<T>& w) {
        v.vec().noalias() = w.mat() * u.vec();
        normalize(v);
        Tensor<T> t({u.dim(0)});
        t.vec().noalias() = w.mat().transpose() * v.vec();
        const T n = std::max(static_cast<T>(t.vec().norm()), kFloor);
        u.vec() = t.vec() / n;
        return n;
    }

    T sigma_from_state(const Tensor<T>& w) const {
        const T s = static_cast<T>(u.vec().dot(w.mat().transpose() * v.vec()));
        return std::max(s, kFloor);
    }

    // Normalized weight; updates the power-iteration state when update=true.
    Tensor<T> apply(const Tensor<T>& w, bool update, T* sigma_out) {
        const T s = update ? power_iterate(w) : sigma_from_state(w);
        if (sigma_out) *sigma_out = s;
        Tensor<T> wn = w;
        wn.vec() *= T(1) / s;
        return wn;
    }

    Tensor<T> apply_const(const Tensor<T>& w, T* sigma_out = nullptr) const {
        const T s = sigma_from_state(w);
        if (sigma_out) *sigma_out = s;
        Tensor<T> wn = w;
        wn.vec() *= T(1) / s;
        return wn;
    }

    // Gradient wrt the raw weight given the gradient wrt the normalized one,
    // with u, v treated as constants:
    //   dW = (dWn - (sum dWn*Wn) v u^T) / sigma        (in [K, O] layout)
    static Tensor<T> grad(const Tensor<T>& dwn, const Tensor<T>& wn,
                          const Tensor<T>& u_used, const Tensor<T>& v_used, T sigma) {
        const T c = static_cast<T>(dwn.vec().dot(wn.vec()));
        Tensor<T> dw = dwn;
        dw.mat().noalias() -= c * (v_used.vec() * u_used.vec().transpose());
        dw.vec() *= T(1) / sigma;
        return dw;
    }

private:
    static void normalize(Tensor<T>& x) {
        const T n = std::max(static_cast<T>(x.vec().norm()), kFloor);
        x.vec() /= n;
    }
};

} // namespace loginv::nn
