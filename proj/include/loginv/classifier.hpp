#pragma once

#include <map>
#include <string>
#include <vector>

#include "loginv/nn/layers.hpp"
#include "loginv/rng.hpp"

namespace loginv {

// ---------------------------------------------------------------------------
// Classifier: a small residual CNN ending in a linear head. Trained once,
// then frozen; its logit vector is the conditioning signal for the
// inversion model. Stages expose named activations ("stage1".."stage4")
// used by the feature-space perceptual distance.
//
// An Inception-style variant (parallel mixed convolutions, no skips) can be
// selected to compare architectures.
// ---------------------------------------------------------------------------

struct ClassifierConfig {
    int n_classes = 10;
    int image_size = 32;    // square input
    int channels = 3;
    int base_width = 32;
    std::string arch = "resnet"; // resnet | inception
};

namespace detail {

// Pre-activation residual block, no normalization:
//   y = shortcut(x) + conv2(relu(conv1(relu(x))))
template <typename T>
struct ResBlock {
    nn::ConvLayer<T> conv1, conv2, conv_sc;
    bool has_sc = false;

    struct Cache {
        typename nn::ConvLayer<T>::Cache c1, c2, csc;
        Tensor<T> x, h1;
    };

    void init(Rng& rng, int cin, int cout) {
        conv1.init(rng, cin, cout, 3, 1, true, false);
        conv2.init(rng, cout, cout, 3, 1, true, false);
        has_sc = cin != cout;
        if (has_sc) conv_sc.init(rng, cin, cout, 1, 0, false, false);
    }

    Tensor<T> fwd(const Tensor<T>& x, Cache& c) const {
        c.x = x;
        c.h1 = conv1.fwd(nn::relu_fwd(x), c.c1);
        Tensor<T> h = conv2.fwd(nn::relu_fwd(c.h1), c.c2);
        Tensor<T> sc = has_sc ? conv_sc.fwd(x, c.csc) : x;
        h.vec() += sc.vec();
        return h;
    }

    template <bool WithParams>
    Tensor<T> bwd_impl(const Cache& c, const Tensor<T>& dy) {
        Tensor<T> dh = WithParams ? conv2.bwd(c.c2, dy) : conv2.bwd_input(c.c2, dy);
        dh = nn::relu_bwd(dh, c.h1);
        Tensor<T> dx = WithParams ? conv1.bwd(c.c1, dh) : conv1.bwd_input(c.c1, dh);
        dx = nn::relu_bwd(dx, c.x);
        if (has_sc) {
            Tensor<T> dsc = WithParams ? conv_sc.bwd(c.csc, dy) : conv_sc.bwd_input(c.csc, dy);
            dx.vec() += dsc.vec();
        } else {
            dx.vec() += dy.vec();
        }
        return dx;
    }

    void collect(nn::ParamSet<T>& ps, const std::string& p) {
        conv1.collect(ps, p + "/conv1");
        conv2.collect(ps, p + "/conv2");
        if (has_sc) conv_sc.collect(ps, p + "/sc");
    }
};

// Inception-style mixed block: parallel 1x1, 3x3 and pooled-1x1 branches,
// concatenated along channels (cout/4 + cout/2 + cout/4).
template <typename T>
struct MixedBlock {
    nn::ConvLayer<T> br1, br3, brp;
    int c1 = 0, c3 = 0, cp = 0;

    struct Cache {
        typename nn::ConvLayer<T>::Cache b1, b3, bp;
        Tensor<T> x, xr, pooled;
    };

    void init(Rng& rng, int cin, int cout) {
        c1 = cout / 4;
        c3 = cout / 2;
        cp = cout - c1 - c3;
        br1.init(rng, cin, c1, 1, 0, true, false);
        br3.init(rng, cin, c3, 3, 1, true, false);
        brp.init(rng, cin, cp, 1, 0, true, false);
    }

    Tensor<T> fwd(const Tensor<T>& x, Cache& c) const {
        c.x = x;
        c.xr = nn::relu_fwd(x);
        Tensor<T> y1 = br1.fwd(c.xr, c.b1);
        Tensor<T> y3 = br3.fwd(c.xr, c.b3);
        c.pooled = avg3(c.xr);
        Tensor<T> yp = brp.fwd(c.pooled, c.bp);
        const int B = x.dim(0), H = x.dim(1), W = x.dim(2);
        Tensor<T> y({B, H, W, c1 + c3 + cp});
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    T* o = &y.at4(b, h, w, 0);
                    std::memcpy(o, &y1.at4(b, h, w, 0), sizeof(T) * static_cast<size_t>(c1));
                    std::memcpy(o + c1, &y3.at4(b, h, w, 0), sizeof(T) * static_cast<size_t>(c3));
                    std::memcpy(o + c1 + c3, &yp.at4(b, h, w, 0), sizeof(T) * static_cast<size_t>(cp));
                }
        return y;
    }

    template <bool WithParams>
    Tensor<T> bwd_impl(const Cache& c, const Tensor<T>& dy) {
        const int B = dy.dim(0), H = dy.dim(1), W = dy.dim(2);
        Tensor<T> d1({B, H, W, c1}), d3({B, H, W, c3}), dp({B, H, W, cp});
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const T* g = &dy.at4(b, h, w, 0);
                    std::memcpy(&d1.at4(b, h, w, 0), g, sizeof(T) * static_cast<size_t>(c1));
                    std::memcpy(&d3.at4(b, h, w, 0), g + c1, sizeof(T) * static_cast<size_t>(c3));
                    std::memcpy(&dp.at4(b, h, w, 0), g + c1 + c3, sizeof(T) * static_cast<size_t>(cp));
                }
        Tensor<T> dxr = WithParams ? br1.bwd(c.b1, d1) : br1.bwd_input(c.b1, d1);
        dxr.vec() += (WithParams ? br3.bwd(c.b3, d3) : br3.bwd_input(c.b3, d3)).vec();
        Tensor<T> dpool = WithParams ? brp.bwd(c.bp, dp) : brp.bwd_input(c.bp, dp);
        dxr.vec() += avg3_bwd(dpool).vec();
        return nn::relu_bwd(dxr, c.x);
    }

    void collect(nn::ParamSet<T>& ps, const std::string& p) {
        br1.collect(ps, p + "/br1");
        br3.collect(ps, p + "/br3");
        brp.collect(ps, p + "/brp");
    }

private:
    // 3x3 box average, replicate border (keeps geometry)
    static Tensor<T> avg3(const Tensor<T>& x) {
        const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
        Tensor<T> y({B, H, W, C});
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    for (int c = 0; c < C; ++c) {
                        T acc = T(0);
                        for (int dh = -1; dh <= 1; ++dh)
                            for (int dw = -1; dw <= 1; ++dw) {
                                int hh = std::min(std::max(h + dh, 0), H - 1);
                                int ww = std::min(std::max(w + dw, 0), W - 1);
                                acc += x.at4(b, hh, ww, c);
                            }
                        y.at4(b, h, w, c) = acc / T(9);
                    }
        return y;
    }
    static Tensor<T> avg3_bwd(const Tensor<T>& dy) {
        const int B = dy.dim(0), H = dy.dim(1), W = dy.dim(2), C = dy.dim(3);
        Tensor<T> dx({B, H, W, C});
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    for (int c = 0; c < C; ++c) {
                        const T g = dy.at4(b, h, w, c) / T(9);
                        for (int dh = -1; dh <= 1; ++dh)
                            for (int dw = -1; dw <= 1; ++dw) {
                                int hh = std::min(std::max(h + dh, 0), H - 1);
                                int ww = std::min(std::max(w + dw, 0), W - 1);
                                dx.at4(b, hh, ww, c) += g;
                            }
                    }
        return dx;
    }
};

} // namespace detail

template <typename T>
class Classifier {
public:
    ClassifierConfig cfg;

    struct Cache {
        typename nn::ConvLayer<T>::Cache stem_c;
        typename detail::ResBlock<T>::Cache r1, r2, r3, r4;
        typename detail::MixedBlock<T>::Cache m1, m2, m3, m4;
        typename nn::DenseLayer<T>::Cache head_c;
        Tensor<T> s1, s2, s3, s4; // stage outputs (pre-pool)
        Tensor<T> p1, p2, p3;     // pooled stage outputs
        Tensor<T> feat;           // global average
    };

    void init(const ClassifierConfig& config, Rng& rng) {
        cfg = config;
        const int b = cfg.base_width;
        stem_.init(rng, cfg.channels, b, 3, 1, true, false);
        if (resnet()) {
            rb1_.init(rng, b, b);
            rb2_.init(rng, b, 2 * b);
            rb3_.init(rng, 2 * b, 4 * b);
            rb4_.init(rng, 4 * b, 4 * b);
        } else {
            mb1_.init(rng, b, b);
            mb2_.init(rng, b, 2 * b);
            mb3_.init(rng, 2 * b, 4 * b);
            mb4_.init(rng, 4 * b, 4 * b);
        }
        // zero head: uniform predictions at initialization
        head_.init(rng, 4 * b, cfg.n_classes, true, false, /*zero_weights=*/true);
    }

    int n_classes() const { return cfg.n_classes; }
    int feature_dim() const { return 4 * cfg.base_width; }

    // Eval-mode logits: pure function of (weights, x).
    Tensor<T> logits(const Tensor<T>& x) const {
        Cache c;
        return fwd(x, c);
    }

    static const std::vector<std::string>& tap_names() {
        static const std::vector<std::string> names = {"stage1", "stage2", "stage3", "stage4"};
        return names;
    }

    Tensor<T> logits_and_taps(const Tensor<T>& x, std::map<std::string, Tensor<T>>& taps) const {
        Cache c;
        Tensor<T> out = fwd(x, c);
        taps["stage1"] = c.s1;
        taps["stage2"] = c.s2;
        taps["stage3"] = c.s3;
        taps["stage4"] = c.s4;
        return out;
    }

    std::vector<int> predict(const Tensor<T>& x) const {
        Tensor<T> z = logits(x);
        std::vector<int> out(static_cast<size_t>(z.dim(0)));
        for (int i = 0; i < z.dim(0); ++i) out[static_cast<size_t>(i)] = nn::argmax_row(z, i);
        return out;
    }

    Tensor<T> fwd(const Tensor<T>& x, Cache& c) const {
        if (x.dim(1) != cfg.image_size || x.dim(2) != cfg.image_size || x.dim(3) != cfg.channels)
            throw std::invalid_argument("classifier: input geometry mismatch, got " + x.shape_str());
        Tensor<T> h = stem_.fwd(x, c.stem_c);
        c.s1 = resnet() ? rb1_.fwd(h, c.r1) : mb1_.fwd(h, c.m1);
        c.p1 = nn::avgpool2_fwd(c.s1);
        c.s2 = resnet() ? rb2_.fwd(c.p1, c.r2) : mb2_.fwd(c.p1, c.m2);
        c.p2 = nn::avgpool2_fwd(c.s2);
        c.s3 = resnet() ? rb3_.fwd(c.p2, c.r3) : mb3_.fwd(c.p2, c.m3);
        c.p3 = nn::avgpool2_fwd(c.s3);
        c.s4 = resnet() ? rb4_.fwd(c.p3, c.r4) : mb4_.fwd(c.p3, c.m4);
        c.feat = nn::global_avg_pool_fwd(c.s4);
        return head_.fwd(c.feat, c.head_c);
    }

    // Input gradient + optional parameter gradient accumulation.
    Tensor<T> bwd(const Cache& c, const Tensor<T>& dlogits) { return bwd_impl<true>(c, dlogits); }
    Tensor<T> bwd_input(const Cache& c, const Tensor<T>& dlogits) const {
        return const_cast<Classifier*>(this)->template bwd_impl<false>(c, dlogits);
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix = "cls") {
        stem_.collect(ps, prefix + "/stem");
        if (resnet()) {
            rb1_.collect(ps, prefix + "/stage1");
            rb2_.collect(ps, prefix + "/stage2");
            rb3_.collect(ps, prefix + "/stage3");
            rb4_.collect(ps, prefix + "/stage4");
        } else {
            mb1_.collect(ps, prefix + "/stage1");
            mb2_.collect(ps, prefix + "/stage2");
            mb3_.collect(ps, prefix + "/stage3");
            mb4_.collect(ps, prefix + "/stage4");
        }
        head_.collect(ps, prefix + "/head");
    }

private:
    bool resnet() const { return cfg.arch != "inception"; }

    template <bool WithParams>
    Tensor<T> bwd_impl(const Cache& c, const Tensor<T>& dlogits) {
        const int s = cfg.image_size;
        Tensor<T> dfeat = WithParams ? head_.bwd(c.head_c, dlogits) : head_.bwd_input(c.head_c, dlogits);
        Tensor<T> d = nn::global_avg_pool_bwd(dfeat, s / 8, s / 8);
        d = resnet() ? rb4_.template bwd_impl<WithParams>(c.r4, d) : mb4_.template bwd_impl<WithParams>(c.m4, d);
        d = nn::avgpool2_bwd(d, s / 4, s / 4);
        d = resnet() ? rb3_.template bwd_impl<WithParams>(c.r3, d) : mb3_.template bwd_impl<WithParams>(c.m3, d);
        d = nn::avgpool2_bwd(d, s / 2, s / 2);
        d = resnet() ? rb2_.template bwd_impl<WithParams>(c.r2, d) : mb2_.template bwd_impl<WithParams>(c.m2, d);
        d = nn::avgpool2_bwd(d, s, s);
        d = resnet() ? rb1_.template bwd_impl<WithParams>(c.r1, d) : mb1_.template bwd_impl<WithParams>(c.m1, d);
        return WithParams ? stem_.bwd(c.stem_c, d) : stem_.bwd_input(c.stem_c, d);
    }

    nn::ConvLayer<T> stem_;
    detail::ResBlock<T> rb1_, rb2_, rb3_, rb4_;
    detail::MixedBlock<T> mb1_, mb2_, mb3_, mb4_;
    nn::DenseLayer<T> head_;
};

using ClassifierF = Classifier<float>;

} // namespace loginv
