#pragma once

#include <string>
#include <vector>

#include "loginv/nn/layers.hpp"
#include "loginv/rng.hpp"

namespace loginv::gan {

// ---------------------------------------------------------------------------
// Generator: maps a logit vector z and a noise vector eps to an image.
//
// A linear stem turns the first noise chunk into a 4x4 seed activation;
// residual upsampling blocks follow, each modulated by conditioned batch
// norms; the head is batch norm + ReLU + conv + tanh, so outputs stay in
// [-1, 1]. Output size is 4 * 2^blocks.
//
// The noise vector is consumed hierarchically: it is split into
// (blocks + 1) chunks, one for the stem and one per block, where each block
// chunk is concatenated with the (optionally embedded) logit vector to form
// that block's conditioning input.
// ---------------------------------------------------------------------------

struct GeneratorConfig {
    int n_z = 120;          // noise dimension
    int n_c = 10;           // logit dimension
    int embed_dim = 128;    // shared linear embedding of z; 0 = condition on raw logits
    int base_channels = 64; // channels of the last block
    int blocks = 3;         // output size = 4 * 2^blocks
    int img_channels = 3;
    int cbn_hidden = 64;    // hidden width of the gamma/beta nets
    double bn_eps = 1e-5;
    bool spectral_norm = true;

    int output_size() const { return 4 << blocks; }
    int sites() const { return blocks + 1; }
    int chunk_len() const { return (n_z + sites() - 1) / sites(); }
    int cond_dim() const { return (embed_dim > 0 ? embed_dim : n_c) + chunk_len(); }
    int stem_channels() const { return base_channels << (blocks - 1); }
    int block_out(int i) const { return base_channels << (blocks - 1 - i); }
    int block_in(int i) const { return i == 0 ? stem_channels() : block_out(i - 1); }
};

// Split eps into per-site chunks of equal length, zero-padding the tail.
template <typename T>
std::vector<Tensor<T>> noise_chunks(const Tensor<T>& eps, int sites, int chunk_len) {
    const int B = eps.dim(0), nz = eps.dim(1);
    std::vector<Tensor<T>> out;
    for (int s = 0; s < sites; ++s) {
        Tensor<T> c({B, chunk_len});
        for (int b = 0; b < B; ++b)
            for (int j = 0; j < chunk_len; ++j) {
                const int src = s * chunk_len + j;
                if (src < nz) c.at2(b, j) = eps.at2(b, src);
            }
        out.push_back(std::move(c));
    }
    return out;
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    const int B = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    Tensor<T> y({B, ca + cb});
    for (int i = 0; i < B; ++i) {
        std::memcpy(&y.at2(i, 0), &a.at2(i, 0), sizeof(T) * static_cast<size_t>(ca));
        std::memcpy(&y.at2(i, ca), &b.at2(i, 0), sizeof(T) * static_cast<size_t>(cb));
    }
    return y;
}

namespace detail {

template <typename T>
struct GenBlock {
    nn::CondBn<T> bn1, bn2;
    nn::ConvLayer<T> conv1, conv2, conv_sc;

    struct Cache {
        typename nn::CondBn<T>::Cache bn1c, bn2c;
        typename nn::ConvLayer<T>::Cache c1c, c2c, cscc;
        Tensor<T> a1, a2; // pre-relu activations
    };

    void init(Rng& rng, const GeneratorConfig& cfg, int cin, int cout) {
        bn1.init(rng, cfg.cond_dim(), cfg.cbn_hidden, cin, static_cast<T>(cfg.bn_eps));
        conv1.init(rng, cin, cout, 3, 1, true, cfg.spectral_norm);
        bn2.init(rng, cfg.cond_dim(), cfg.cbn_hidden, cout, static_cast<T>(cfg.bn_eps));
        conv2.init(rng, cout, cout, 3, 1, true, cfg.spectral_norm);
        conv_sc.init(rng, cin, cout, 1, 0, false, cfg.spectral_norm);
    }

    Tensor<T> fwd(const Tensor<T>& x, const Tensor<T>& cond, Cache& c, bool update_sn, bool calib) {
        c.a1 = bn1.fwd(x, cond, c.bn1c, calib);
        Tensor<T> h = nn::upsample2_fwd(nn::relu_fwd(c.a1));
        if (update_sn) conv1.sn.power_iterate(conv1.w);
        h = conv1.fwd(h, c.c1c);
        c.a2 = bn2.fwd(h, cond, c.bn2c, calib);
        h = nn::relu_fwd(c.a2);
        if (update_sn) conv2.sn.power_iterate(conv2.w);
        h = conv2.fwd(h, c.c2c);
        if (update_sn) conv_sc.sn.power_iterate(conv_sc.w);
        Tensor<T> sc = conv_sc.fwd(nn::upsample2_fwd(x), c.cscc);
        h.vec() += sc.vec();
        return h;
    }

    Tensor<T> eval_fwd(const Tensor<T>& x, const Tensor<T>& cond) const {
        Tensor<T> h = conv1.eval(nn::upsample2_fwd(nn::relu_fwd(bn1.eval_fwd(x, cond))));
        h = conv2.eval(nn::relu_fwd(bn2.eval_fwd(h, cond)));
        Tensor<T> sc = conv_sc.eval(nn::upsample2_fwd(x));
        h.vec() += sc.vec();
        return h;
    }

    Tensor<T> bwd(const Cache& c, const Tensor<T>& dy, Tensor<T>& dcond) {
        Tensor<T> dx = nn::upsample2_bwd(conv_sc.bwd(c.cscc, dy));
        Tensor<T> dh = conv2.bwd(c.c2c, dy);
        dh = nn::relu_bwd(dh, c.a2);
        dh = bn2.bwd(c.bn2c, dh, dcond);
        dh = conv1.bwd(c.c1c, dh);
        dh = nn::upsample2_bwd(dh);
        dh = nn::relu_bwd(dh, c.a1);
        dx.vec() += bn1.bwd(c.bn1c, dh, dcond).vec();
        return dx;
    }

    void finish_calibration() {
        bn1.finish_calibration();
        bn2.finish_calibration();
    }

    void collect(nn::ParamSet<T>& ps, const std::string& p) {
        bn1.collect(ps, p + "/bn1");
        conv1.collect(ps, p + "/conv1");
        bn2.collect(ps, p + "/bn2");
        conv2.collect(ps, p + "/conv2");
        conv_sc.collect(ps, p + "/sc");
    }
};

} // namespace detail

template <typename T>
class Generator {
public:
    GeneratorConfig cfg;

    struct Cache {
        typename nn::DenseLayer<T>::Cache embed_c, stem_c;
        std::vector<typename detail::GenBlock<T>::Cache> blocks;
        nn::StandardizeCache<T> head_bn_c;
        typename nn::ConvLayer<T>::Cache head_conv_c;
        Tensor<T> head_a;           // pre-relu head activation
        Tensor<T> pre_tanh, out;    // head conv output / tanh output
        std::vector<Tensor<T>> conds;
        Tensor<T> cond_base;
        int batch = 0;
    };

    void init(const GeneratorConfig& config, Rng& rng) {
        cfg = config;
        if (cfg.embed_dim > 0) embed_.init(rng, cfg.n_c, cfg.embed_dim, false, false);
        stem_.init(rng, cfg.chunk_len(), 16 * cfg.stem_channels(), true, cfg.spectral_norm);
        blocks_.resize(static_cast<size_t>(cfg.blocks));
        for (int i = 0; i < cfg.blocks; ++i)
            blocks_[static_cast<size_t>(i)].init(rng, cfg, cfg.block_in(i), cfg.block_out(i));
        head_bn_.init(cfg.base_channels, static_cast<T>(cfg.bn_eps));
        head_conv_.init(rng, cfg.base_channels, cfg.img_channels, 3, 1, true, cfg.spectral_norm);
    }

    // Deterministic eval-mode generation with frozen batch-norm statistics.
    Tensor<T> generate(const Tensor<T>& z, const Tensor<T>& eps) const {
        check_widths(z, eps);
        if (!head_bn_.calibrated)
            throw std::runtime_error("generator: eval requested before calibration");
        auto chunks = noise_chunks(eps, cfg.sites(), cfg.chunk_len());
        Tensor<T> cond_base = cfg.embed_dim > 0 ? embed_.eval(z) : z;
        Tensor<T> h = stem_.eval(chunks[0]);
        h.reshape({z.dim(0), 4, 4, cfg.stem_channels()});
        for (int i = 0; i < cfg.blocks; ++i) {
            Tensor<T> cond = concat_cols(cond_base, chunks[static_cast<size_t>(i + 1)]);
            h = blocks_[static_cast<size_t>(i)].eval_fwd(h, cond);
        }
        h = head_bn_.eval_fwd(h);
        h = head_conv_.eval(nn::relu_fwd(h));
        return nn::tanh_fwd(h);
    }

    // Training-statistics forward. update_sn runs one power-iteration per
    // spectral-normalized weight; calib accumulates batch-norm statistics.
    Tensor<T> forward(const Tensor<T>& z, const Tensor<T>& eps, Cache& c,
                      bool update_sn = true, bool calib = false) {
        check_widths(z, eps);
        c.batch = z.dim(0);
        auto chunks = noise_chunks(eps, cfg.sites(), cfg.chunk_len());
        c.cond_base = cfg.embed_dim > 0 ? embed_.fwd(z, c.embed_c) : z;
        if (update_sn && stem_.use_sn) stem_.sn.power_iterate(stem_.w);
        Tensor<T> h = stem_.fwd(chunks[0], c.stem_c);
        h.reshape({z.dim(0), 4, 4, cfg.stem_channels()});
        c.blocks.resize(static_cast<size_t>(cfg.blocks));
        c.conds.resize(static_cast<size_t>(cfg.blocks));
        for (int i = 0; i < cfg.blocks; ++i) {
            c.conds[static_cast<size_t>(i)] = concat_cols(c.cond_base, chunks[static_cast<size_t>(i + 1)]);
            h = blocks_[static_cast<size_t>(i)].fwd(h, c.conds[static_cast<size_t>(i)],
                                                    c.blocks[static_cast<size_t>(i)], update_sn, calib);
        }
        c.head_a = head_bn_.train_fwd(h, c.head_bn_c, calib);
        if (update_sn && head_conv_.use_sn) head_conv_.sn.power_iterate(head_conv_.w);
        c.pre_tanh = head_conv_.fwd(nn::relu_fwd(c.head_a), c.head_conv_c);
        c.out = nn::tanh_fwd(c.pre_tanh);
        return c.out;
    }

    // Accumulates parameter gradients from the image gradient.
    void backward(const Cache& c, const Tensor<T>& d_img) {
        Tensor<T> d = nn::tanh_bwd(d_img, c.out);
        d = head_conv_.bwd(c.head_conv_c, d);
        d = nn::relu_bwd(d, c.head_a);
        d = head_bn_.bwd(d, c.head_bn_c);
        Tensor<T> dcond_base({c.batch, cfg.embed_dim > 0 ? cfg.embed_dim : cfg.n_c});
        for (int i = cfg.blocks - 1; i >= 0; --i) {
            Tensor<T> dcond({c.batch, cfg.cond_dim()});
            d = blocks_[static_cast<size_t>(i)].bwd(c.blocks[static_cast<size_t>(i)], d, dcond);
            // first cond_dim-chunk_len columns flow back into the embedding
            const int cb = dcond_base.dim(1);
            for (int b = 0; b < c.batch; ++b)
                for (int j = 0; j < cb; ++j) dcond_base.at2(b, j) += dcond.at2(b, j);
        }
        d.reshape({c.batch, 16 * cfg.stem_channels()});
        stem_.bwd(c.stem_c, d);
        if (cfg.embed_dim > 0) embed_.bwd(c.embed_c, dcond_base);
    }

    void finish_calibration() {
        for (auto& b : blocks_) b.finish_calibration();
        head_bn_.finish_calibration();
        for (auto& b : blocks_) { b.bn1.calibrated = true; b.bn2.calibrated = true; }
    }

    bool calibrated() const { return head_bn_.calibrated; }
    void mark_calibrated(bool on) {
        head_bn_.calibrated = on;
        for (auto& b : blocks_) { b.bn1.calibrated = on; b.bn2.calibrated = on; }
    }

    void collect(nn::ParamSet<T>& ps, const std::string& prefix = "g") {
        if (cfg.embed_dim > 0) embed_.collect(ps, prefix + "/embed");
        stem_.collect(ps, prefix + "/stem");
        for (size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].collect(ps, prefix + "/block" + std::to_string(i));
        ps.add(prefix + "/head_bn/gamma", &head_bn_.gamma, &head_bn_.g_gamma);
        ps.add(prefix + "/head_bn/beta", &head_bn_.beta, &head_bn_.g_beta);
        head_conv_.collect(ps, prefix + "/head_conv");
    }

    // Power-iteration and frozen-statistics state, for checkpoints.
    void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& st, const std::string& prefix = "g") {
        auto sn = [&](nn::ConvLayer<T>& l, const std::string& n) {
            if (!l.use_sn) return;
            st.emplace_back(n + "/sn_u", &l.sn.u);
            st.emplace_back(n + "/sn_v", &l.sn.v);
        };
        if (stem_.use_sn) {
            st.emplace_back(prefix + "/stem/sn_u", &stem_.sn.u);
            st.emplace_back(prefix + "/stem/sn_v", &stem_.sn.v);
        }
        for (size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = prefix + "/block" + std::to_string(i);
            auto& b = blocks_[i];
            sn(b.conv1, p + "/conv1");
            sn(b.conv2, p + "/conv2");
            sn(b.conv_sc, p + "/sc");
            st.emplace_back(p + "/bn1/mu", &b.bn1.mu_eval);
            st.emplace_back(p + "/bn1/var", &b.bn1.var_eval);
            st.emplace_back(p + "/bn2/mu", &b.bn2.mu_eval);
            st.emplace_back(p + "/bn2/var", &b.bn2.var_eval);
        }
        st.emplace_back(prefix + "/head_bn/mu", &head_bn_.mu_eval);
        st.emplace_back(prefix + "/head_bn/var", &head_bn_.var_eval);
        sn(head_conv_, prefix + "/head_conv");
    }

private:
    void check_widths(const Tensor<T>& z, const Tensor<T>& eps) const {
        if (z.rank() != 2 || z.dim(1) != cfg.n_c)
            throw std::invalid_argument("generator: logit width mismatch, got " + z.shape_str());
        if (eps.rank() != 2 || eps.dim(1) != cfg.n_z)
            throw std::invalid_argument("generator: noise width mismatch, got " + eps.shape_str());
        if (z.dim(0) != eps.dim(0))
            throw std::invalid_argument("generator: z/eps batch mismatch");
    }

    nn::DenseLayer<T> embed_, stem_;
    std::vector<detail::GenBlock<T>> blocks_;
    nn::BatchNorm<T> head_bn_;
    nn::ConvLayer<T> head_conv_;
};

using GeneratorF = Generator<float>;

} // namespace loginv::gan
