#pragma once

#include <string>
#include <vector>

#include "loginv/nn/layers.hpp"
#include "loginv/rng.hpp"

namespace loginv::gan {

// ---------------------------------------------------------------------------
// Projection discriminator. A residual downsampling trunk with global sum
// pooling produces a feature vector psi(x); the score couples it with the
// logit vector:
//
//     D(x, z) = (w1 + W2 z)^T psi(x)
//
// w1 judges realism on its own; the W2 term judges consistency between the
// image and the logit vector. Every weight is spectral-normalized.
// ---------------------------------------------------------------------------

struct DiscriminatorConfig {
    int n_c = 10;
    int base_channels = 64;
    int img_channels = 3;
    int input_size = 32;
    bool spectral_norm = true;

    int feature_dim() const { return 4 * base_channels; }
};

// Score math shared by the model and by tests: s = (w1 + W2 z)^T psi.
// w1: [n_d], w2: [n_d, n_c], psi/z: single vectors.
template <typename T>
T project_score(const Tensor<T>& psi, const Tensor<T>& z, const Tensor<T>& w1, const Tensor<T>& w2) {
    if (psi.size() != w1.size() || w2.size() != w1.size() * z.size())
        throw std::invalid_argument("project_score: dimension mismatch");
    T s = T(0);
    for (int64_t d = 0; d < psi.size(); ++d) {
        T coef = w1[d];
        for (int64_t c = 0; c < z.size(); ++c) coef += w2[d * z.size() + c] * z[c];
        s += coef * psi[d];
    }
    return s;
}

namespace detail {

// Residual downsampling block. The input block (first=true) convolves raw
// pixels without a leading ReLU and pools before its 1x1 shortcut.
template <typename T>
struct DiscBlock {
    nn::ConvLayer<T> conv1, conv2, conv_sc;
    bool first = false, down = true, has_sc = true;

    struct Cache {
        typename nn::ConvLayer<T>::Cache c1c, c2c, cscc;
        Tensor<T> x, a1; // block input / pre-relu activation between convs
    };

    void init(Rng& rng, int cin, int cout, bool first_, bool down_, bool sn) {
        first = first_;
        down = down_;
        has_sc = first_ || cin != cout;
        conv1.init(rng, cin, cout, 3, 1, true, sn);
        conv2.init(rng, cout, cout, 3, 1, true, sn);
        if (has_sc) conv_sc.init(rng, cin, cout, 1, 0, false, sn);
    }

    Tensor<T> fwd(const Tensor<T>& x, Cache& c, bool update_sn) {
        c.x = x;
        auto maybe_update = [&](nn::ConvLayer<T>& l) {
            if (update_sn && l.use_sn) l.sn.power_iterate(l.w);
        };
        maybe_update(conv1);
        c.a1 = conv1.fwd(first ? x : nn::relu_fwd(x), c.c1c);
        maybe_update(conv2);
        Tensor<T> h = conv2.fwd(nn::relu_fwd(c.a1), c.c2c);
        if (down) h = nn::avgpool2_fwd(h);
        Tensor<T> sc;
        if (has_sc) {
            maybe_update(conv_sc);
            if (first) {
                sc = conv_sc.fwd(nn::avgpool2_fwd(x), c.cscc);
            } else {
                sc = conv_sc.fwd(x, c.cscc);
                if (down) sc = nn::avgpool2_fwd(sc);
            }
        } else {
            sc = down ? nn::avgpool2_fwd(x) : x;
        }
        h.vec() += sc.vec();
        return h;
    }

    template <bool WithParams>
    Tensor<T> bwd_impl(const Cache& c, const Tensor<T>& dy) {
        const int H = c.x.dim(1), W = c.x.dim(2);
        Tensor<T> dh = down ? nn::avgpool2_bwd(dy, H, W) : dy;
        dh = WithParams ? conv2.bwd(c.c2c, dh) : conv2.bwd_input(c.c2c, dh);
        dh = nn::relu_bwd(dh, c.a1);
        Tensor<T> dx = WithParams ? conv1.bwd(c.c1c, dh) : conv1.bwd_input(c.c1c, dh);
        if (!first) dx = nn::relu_bwd(dx, c.x);
        if (has_sc) {
            Tensor<T> dsc;
            if (first) {
                dsc = WithParams ? conv_sc.bwd(c.cscc, dy) : conv_sc.bwd_input(c.cscc, dy);
                dsc = nn::avgpool2_bwd(dsc, H, W);
            } else {
                dsc = down ? nn::avgpool2_bwd(dy, H, W) : dy;
                dsc = WithParams ? conv_sc.bwd(c.cscc, dsc) : conv_sc.bwd_input(c.cscc, dsc);
            }
            dx.vec() += dsc.vec();
        } else {
            dx.vec() += (down ? nn::avgpool2_bwd(dy, H, W) : dy).vec();
        }
        return dx;
    }

    void collect(nn::ParamSet<T>& ps, const std::string& p) {
        conv1.collect(ps, p + "/conv1");
        conv2.collect(ps, p + "/conv2");
        if (has_sc) conv_sc.collect(ps, p + "/sc");
    }

    void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& st, const std::string& p) {
        auto sn = [&](nn::ConvLayer<T>& l, const std::string& n) {
            if (!l.use_sn) return;
            st.emplace_back(n + "/sn_u", &l.sn.u);
            st.emplace_back(n + "/sn_v", &l.sn.v);
        };
        sn(conv1, p + "/conv1");
        sn(conv2, p + "/conv2");
        if (has_sc) sn(conv_sc, p + "/sc");
    }
};

} // namespace detail

template <typename T>
class Discriminator {
public:
    DiscriminatorConfig cfg;

    struct Cache {
        typename detail::DiscBlock<T>::Cache b1, b2, b3, b4;
        typename nn::DenseLayer<T>::Cache w1c, projc;
        Tensor<T> trunk_out; // pre-relu final activation
        Tensor<T> psi;       // pooled features [B, n_d]
        Tensor<T> pz;        // projected logits [B, n_d]
    };

    void init(const DiscriminatorConfig& config, Rng& rng) {
        cfg = config;
        const int b = cfg.base_channels;
        b1_.init(rng, cfg.img_channels, b, true, true, cfg.spectral_norm);
        b2_.init(rng, b, 2 * b, false, true, cfg.spectral_norm);
        b3_.init(rng, 2 * b, 4 * b, false, true, cfg.spectral_norm);
        b4_.init(rng, 4 * b, 4 * b, false, false, cfg.spectral_norm);
        w1_.init(rng, cfg.feature_dim(), 1, false, cfg.spectral_norm);
        proj_.init(rng, cfg.n_c, cfg.feature_dim(), false, cfg.spectral_norm);
    }

    // One scalar score per (image, logit) pair; eval mode.
    Tensor<T> discriminate(const Tensor<T>& x, const Tensor<T>& z) const {
        Cache c;
        return const_cast<Discriminator*>(this)->forward(x, z, c, /*update_sn=*/false);
    }

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& z, Cache& c, bool update_sn = true) {
        if (x.dim(1) != cfg.input_size || x.dim(2) != cfg.input_size || x.dim(3) != cfg.img_channels)
            throw std::invalid_argument("discriminator: input geometry mismatch, got " + x.shape_str());
        if (z.dim(1) != cfg.n_c) throw std::invalid_argument("discriminator: logit width mismatch");
        Tensor<T> h = b1_.fwd(x, c.b1, update_sn);
        h = b2_.fwd(h, c.b2, update_sn);
        h = b3_.fwd(h, c.b3, update_sn);
        c.trunk_out = b4_.fwd(h, c.b4, update_sn);
        c.psi = nn::global_sum_pool_fwd(nn::relu_fwd(c.trunk_out));
        if (update_sn && w1_.use_sn) w1_.sn.power_iterate(w1_.w);
        Tensor<T> s1 = w1_.fwd(c.psi, c.w1c); // [B,1]
        if (update_sn && proj_.use_sn) proj_.sn.power_iterate(proj_.w);
        c.pz = proj_.fwd(z, c.projc);         // [B, n_d]
        const int B = x.dim(0);
        Tensor<T> s({B});
        for (int b = 0; b < B; ++b) {
            T acc = s1.at2(b, 0);
            for (int d = 0; d < cfg.feature_dim(); ++d) acc += c.psi.at2(b, d) * c.pz.at2(b, d);
            s[b] = acc;
        }
        return s;
    }

    // Input gradient; parameter gradients accumulated when with_params.
    // dz_out, when non-null, receives the score gradient wrt the logits.
    Tensor<T> backward(const Cache& c, const Tensor<T>& ds, bool with_params, Tensor<T>* dz_out = nullptr) {
        const int B = ds.dim(0), nd = cfg.feature_dim();
        Tensor<T> ds2 = ds.reshaped({B, 1});
        Tensor<T> dpsi = with_params ? w1_.bwd(c.w1c, ds2) : w1_.bwd_input(c.w1c, ds2);
        Tensor<T> dpz({B, nd});
        for (int b = 0; b < B; ++b)
            for (int d = 0; d < nd; ++d) {
                dpsi.at2(b, d) += ds[b] * c.pz.at2(b, d);
                dpz.at2(b, d) = ds[b] * c.psi.at2(b, d);
            }
        if (with_params) {
            Tensor<T> dz = proj_.bwd(c.projc, dpz);
            if (dz_out) *dz_out = std::move(dz);
        } else if (dz_out) {
            *dz_out = proj_.bwd_input(c.projc, dpz);
        }
        const int s4 = cfg.input_size / 8;
        Tensor<T> d = nn::global_sum_pool_bwd(dpsi, s4, s4);
        d = nn::relu_bwd(d, c.trunk_out);
        d = with_params ? b4_.template bwd_impl<true>(c.b4, d) : b4_.template bwd_impl<false>(c.b4, d);
        d = with_params ? b3_.template bwd_impl<true>(c.b3, d) : b3_.template bwd_impl<false>(c.b3, d);
        d = with_params ? b2_.template bwd_impl<true>(c.b2, d) : b2_.template bwd_impl<false>(c.b2, d);
        d = with_params ? b1_.template bwd_impl<true>(c.b1, d) : b1_.template bwd_impl<false>(c.b1, d);
        return d;
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix = "d") {
        b1_.collect(ps, prefix + "/block1");
        b2_.collect(ps, prefix + "/block2");
        b3_.collect(ps, prefix + "/block3");
        b4_.collect(ps, prefix + "/block4");
        w1_.collect(ps, prefix + "/w1");
        proj_.collect(ps, prefix + "/proj");
    }

    void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& st, const std::string& prefix = "d") {
        b1_.collect_state(st, prefix + "/block1");
        b2_.collect_state(st, prefix + "/block2");
        b3_.collect_state(st, prefix + "/block3");
        b4_.collect_state(st, prefix + "/block4");
        if (w1_.use_sn) {
            st.emplace_back(prefix + "/w1/sn_u", &w1_.sn.u);
            st.emplace_back(prefix + "/w1/sn_v", &w1_.sn.v);
        }
        if (proj_.use_sn) {
            st.emplace_back(prefix + "/proj/sn_u", &proj_.sn.u);
            st.emplace_back(prefix + "/proj/sn_v", &proj_.sn.v);
        }
    }

private:
    detail::DiscBlock<T> b1_, b2_, b3_, b4_;
    nn::DenseLayer<T> w1_, proj_;
};

using DiscriminatorF = Discriminator<float>;

} // namespace loginv::gan
