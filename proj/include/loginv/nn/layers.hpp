#pragma once

#include <string>

#include "loginv/nn/batchnorm.hpp"
#include "loginv/nn/init.hpp"
#include "loginv/nn/ops.hpp"
#include "loginv/nn/optim.hpp"
#include "loginv/nn/spectral_norm.hpp"

namespace loginv::nn {

// ---------------------------------------------------------------------------
// Parameterized layers. Weights and their gradient accumulators live in the
// layer; per-call activations live in external cache structs so eval-mode
// forwards stay const and shareable.
//
// Entry points follow one convention:
//   eval(x)            const, no cache, spectral norm from stored state
//   fwd(x, cache)      const, caches for backward, spectral norm from state
//   train_fwd(x,cache) like fwd but runs one power-iteration update first
//   bwd_input(c, dy)   const, input gradient only
//   bwd(c, dy)         input gradient + parameter gradient accumulation
// ---------------------------------------------------------------------------

template <typename T>
struct DenseLayer {
    Tensor<T> w, b, gw, gb;
    bool has_bias = true;
    bool use_sn = false;
    SpectralNorm<T> sn;

    struct Cache {
        Tensor<T> x, wn, u, v;
        T sigma = T(1);
    };

    void init(Rng& rng, int in, int out, bool bias, bool spectral, bool zero_weights = false,
              T bias_value = T(0)) {
        w = Tensor<T>({in, out});
        gw = Tensor<T>({in, out});
        has_bias = bias;
        if (bias) {
            b = Tensor<T>::full({out}, bias_value);
            gb = Tensor<T>({out});
        }
        if (!zero_weights) orthogonal_init(w, rng);
        use_sn = spectral;
        if (use_sn) sn.init(rng, in, out, &w);
    }

    Tensor<T> eval(const Tensor<T>& x) const {
        if (!use_sn) return dense_fwd(x, w, has_bias ? &b : nullptr);
        Tensor<T> wn = sn.apply_const(w);
        return dense_fwd(x, wn, has_bias ? &b : nullptr);
    }

    Tensor<T> fwd(const Tensor<T>& x, Cache& c) const {
        c.x = x;
        if (!use_sn) return dense_fwd(x, w, has_bias ? &b : nullptr);
        c.wn = sn.apply_const(w, &c.sigma);
        c.u = sn.u;
        c.v = sn.v;
        return dense_fwd(x, c.wn, has_bias ? &b : nullptr);
    }

    Tensor<T> train_fwd(const Tensor<T>& x, Cache& c) {
        if (use_sn) sn.power_iterate(w);
        return fwd(x, c);
    }

    Tensor<T> bwd_input(const Cache& c, const Tensor<T>& dy) const {
        return dense_bwd_input(dy, use_sn ? c.wn : w);
    }

    Tensor<T> bwd(const Cache& c, const Tensor<T>& dy) {
        if (!use_sn) {
            dense_bwd_params(c.x, dy, gw, has_bias ? &gb : nullptr);
            return dense_bwd_input(dy, w);
        }
        Tensor<T> dwn(gw.shape());
        dense_bwd_params(c.x, dy, dwn, has_bias ? &gb : nullptr);
        gw.vec() += SpectralNorm<T>::grad(dwn, c.wn, c.u, c.v, c.sigma).vec();
        return dense_bwd_input(dy, c.wn);
    }

    void collect(ParamSet<T>& ps, const std::string& prefix) {
        ps.add(prefix + "/w", &w, &gw);
        if (has_bias) ps.add(prefix + "/b", &b, &gb);
    }
};

template <typename T>
struct ConvLayer {
    Tensor<T> w, b, gw, gb; // w: [kh*kw*cin, cout]
    int kh = 3, kw = 3, pad = 1, cin = 0, cout = 0;
    bool has_bias = true;
    bool use_sn = false;
    SpectralNorm<T> sn;

    struct Cache {
        Tensor<T> x, wn, u, v;
        T sigma = T(1);
    };

    void init(Rng& rng, int cin_, int cout_, int k, int pad_, bool bias, bool spectral) {
        kh = kw = k;
        pad = pad_;
        cin = cin_;
        cout = cout_;
        w = Tensor<T>({k * k * cin, cout});
        gw = Tensor<T>({k * k * cin, cout});
        has_bias = bias;
        if (bias) {
            b = Tensor<T>({cout});
            gb = Tensor<T>({cout});
        }
        orthogonal_init(w, rng);
        use_sn = spectral;
        if (use_sn) sn.init(rng, k * k * cin, cout, &w);
    }

    Tensor<T> eval(const Tensor<T>& x) const {
        if (!use_sn) return conv2d_fwd(x, w, has_bias ? &b : nullptr, kh, kw, pad);
        Tensor<T> wn = sn.apply_const(w);
        return conv2d_fwd(x, wn, has_bias ? &b : nullptr, kh, kw, pad);
    }

    Tensor<T> fwd(const Tensor<T>& x, Cache& c) const {
        c.x = x;
        if (!use_sn) return conv2d_fwd(x, w, has_bias ? &b : nullptr, kh, kw, pad);
        c.wn = sn.apply_const(w, &c.sigma);
        c.u = sn.u;
        c.v = sn.v;
        return conv2d_fwd(x, c.wn, has_bias ? &b : nullptr, kh, kw, pad);
    }

    Tensor<T> train_fwd(const Tensor<T>& x, Cache& c) {
        if (use_sn) sn.power_iterate(w);
        return fwd(x, c);
    }

    Tensor<T> bwd_input(const Cache& c, const Tensor<T>& dy) const {
        return conv2d_bwd_input(dy, use_sn ? c.wn : w, c.x.dim(0), c.x.dim(1), c.x.dim(2), cin, kh, kw, pad);
    }

    Tensor<T> bwd(const Cache& c, const Tensor<T>& dy) {
        if (!use_sn) {
            conv2d_bwd_params(c.x, dy, kh, kw, pad, gw, has_bias ? &gb : nullptr);
        } else {
            Tensor<T> dwn(gw.shape());
            conv2d_bwd_params(c.x, dy, kh, kw, pad, dwn, has_bias ? &gb : nullptr);
            gw.vec() += SpectralNorm<T>::grad(dwn, c.wn, c.u, c.v, c.sigma).vec();
        }
        return bwd_input(c, dy);
    }

    void collect(ParamSet<T>& ps, const std::string& prefix) {
        ps.add(prefix + "/w", &w, &gw);
        if (has_bias) ps.add(prefix + "/b", &b, &gb);
    }
};

// ---------------------------------------------------------------------------
// Conditioned batch norm: standardize with batch statistics, then apply
// per-sample gain/bias produced by two-layer nets of the conditioning
// vector. The gain head starts at 1 and the bias head at 0 (zero final
// weights, biased output), so the layer begins as plain batch norm.
// ---------------------------------------------------------------------------
template <typename T>
struct CondBn {
    DenseLayer<T> g1, g2; // gamma head
    DenseLayer<T> b1, b2; // beta head
    T eps = T(1e-5);
    int channels = 0;
    Tensor<T> mu_eval, var_eval;
    bool calibrated = false;
    // calibration accumulators
    Tensor<T> mu_sum, var_sum;
    int64_t calib_count = 0;

    struct Cache {
        StandardizeCache<T> std_c;
        typename DenseLayer<T>::Cache g1c, g2c, b1c, b2c;
        Tensor<T> g_hidden_in, b_hidden_in; // pre-relu hidden activations
        Tensor<T> gamma, beta;
    };

    void init(Rng& rng, int cond_dim, int hidden, int channels_, T eps_) {
        channels = channels_;
        eps = eps_;
        g1.init(rng, cond_dim, hidden, true, false);
        g2.init(rng, hidden, channels, true, false, /*zero_weights=*/true, /*bias_value=*/T(1));
        b1.init(rng, cond_dim, hidden, true, false);
        b2.init(rng, hidden, channels, true, false, /*zero_weights=*/true, /*bias_value=*/T(0));
        mu_eval = Tensor<T>({channels});
        var_eval = Tensor<T>::full({channels}, T(1));
    }

    void heads(const Tensor<T>& cond, Cache& c) const {
        c.g_hidden_in = g1.fwd(cond, c.g1c);
        c.gamma = g2.fwd(relu_fwd(c.g_hidden_in), c.g2c);
        c.b_hidden_in = b1.fwd(cond, c.b1c);
        c.beta = b2.fwd(relu_fwd(c.b_hidden_in), c.b2c);
    }

    Tensor<T> fwd(const Tensor<T>& x, const Tensor<T>& cond, Cache& c, bool calib = false) {
        if (calib) {
            Tensor<T> mu, var;
            batch_moments(x, mu, var);
            if (calib_count == 0) {
                mu_sum = Tensor<T>({channels});
                var_sum = Tensor<T>({channels});
            }
            mu_sum.vec() += mu.vec();
            var_sum.vec() += var.vec();
            ++calib_count;
        }
        heads(cond, c);
        Tensor<T> xhat = standardize_fwd(x, eps, &c.std_c);
        return modulate_fwd(xhat, c.gamma, c.beta);
    }

    Tensor<T> eval_fwd(const Tensor<T>& x, const Tensor<T>& cond) const {
        Cache c;
        heads(cond, c);
        Tensor<T> xhat = standardize_eval(x, mu_eval, var_eval, eps);
        return modulate_fwd(xhat, c.gamma, c.beta);
    }

    // Returns dx; accumulates head parameter gradients and adds the
    // conditioning gradient into dcond.
    Tensor<T> bwd(const Cache& c, const Tensor<T>& dy, Tensor<T>& dcond) {
        Tensor<T> dxhat, dgamma, dbeta;
        modulate_bwd(dy, c.std_c.xhat, c.gamma, dxhat, dgamma, dbeta);
        Tensor<T> dh = g2.bwd(c.g2c, dgamma);
        dcond.vec() += g1.bwd(c.g1c, relu_bwd(dh, c.g_hidden_in)).vec();
        dh = b2.bwd(c.b2c, dbeta);
        dcond.vec() += b1.bwd(c.b1c, relu_bwd(dh, c.b_hidden_in)).vec();
        return standardize_bwd(dxhat, c.std_c);
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

    void collect(ParamSet<T>& ps, const std::string& prefix) {
        g1.collect(ps, prefix + "/gamma1");
        g2.collect(ps, prefix + "/gamma2");
        b1.collect(ps, prefix + "/beta1");
        b2.collect(ps, prefix + "/beta2");
    }
};

} // namespace loginv::nn
