#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "loginv/tensor.hpp"

namespace loginv::nn {

// ---------------------------------------------------------------------------
// Core dense / convolution / pooling primitives, NHWC layout, stride 1.
// Each op comes as forward plus explicit backward pieces; model classes do
// the bookkeeping. Convolutions lower to GEMM via im2col.
//
// Weight layouts:
//   dense:  w[in, out]
//   conv:   w[kh*kw*cin, cout]   (row k = kernel tap (dy,dx,ci))
// ---------------------------------------------------------------------------

template <typename T>
void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// ---- dense ----------------------------------------------------------------

template <typename T>
Tensor<T> dense_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b) {
    const int64_t bsz = x.size() / w.dim(0);
    Tensor<T> y({static_cast<int>(bsz), w.dim(1)});
    y.mat().noalias() = x.mat(bsz, w.dim(0)) * w.mat();
    if (b) y.mat().rowwise() += b->vec().transpose();
    return y;
}

template <typename T>
Tensor<T> dense_bwd_input(const Tensor<T>& dy, const Tensor<T>& w) {
    Tensor<T> dx({dy.dim(0), w.dim(0)});
    dx.mat().noalias() = dy.mat() * w.mat().transpose();
    return dx;
}

template <typename T>
void dense_bwd_params(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dw, Tensor<T>* db) {
    const int64_t bsz = dy.dim(0);
    dw.mat().noalias() += x.mat(bsz, dw.dim(0)).transpose() * dy.mat();
    if (db) db->vec().noalias() += dy.mat().colwise().sum().transpose();
}

// ---- conv2d ---------------------------------------------------------------

namespace detail {

// Gather padded 3x3 (or kxk) patches into a [B*H*W, kh*kw*cin] matrix.
template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int pad, std::vector<T>& cols) {
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int HO = H + 2 * pad - kh + 1, WO = W + 2 * pad - kw + 1;
    const int64_t K = int64_t(kh) * kw * C;
    cols.assign(static_cast<size_t>(int64_t(B) * HO * WO * K), T(0));
    const T* xp = x.data();
    for (int b = 0; b < B; ++b) {
        for (int oh = 0; oh < HO; ++oh) {
            for (int dy = 0; dy < kh; ++dy) {
                const int ih = oh + dy - pad;
                if (ih < 0 || ih >= H) continue;
                for (int dx = 0; dx < kw; ++dx) {
                    const int w0 = std::max(0, pad - dx);           // first ow with iw >= 0
                    const int w1 = std::min(WO, W + pad - dx);      // first ow with iw >= W
                    if (w0 >= w1) continue;
                    const T* src = xp + ((int64_t(b) * H + ih) * W + (w0 + dx - pad)) * C;
                    T* dst = cols.data() + ((int64_t(b) * HO + oh) * WO + w0) * K + (int64_t(dy) * kw + dx) * C;
                    for (int ow = w0; ow < w1; ++ow) {
                        std::memcpy(dst, src, sizeof(T) * static_cast<size_t>(C));
                        src += C;
                        dst += K;
                    }
                }
            }
        }
    }
}

// Scatter-add the column matrix back into image layout.
template <typename T>
void col2im(const std::vector<T>& cols, int B, int H, int W, int C, int kh, int kw, int pad, Tensor<T>& dx) {
    const int HO = H + 2 * pad - kh + 1, WO = W + 2 * pad - kw + 1;
    const int64_t K = int64_t(kh) * kw * C;
    T* xp = dx.data();
    for (int b = 0; b < B; ++b) {
        for (int oh = 0; oh < HO; ++oh) {
            for (int dy = 0; dy < kh; ++dy) {
                const int ih = oh + dy - pad;
                if (ih < 0 || ih >= H) continue;
                for (int dx_ = 0; dx_ < kw; ++dx_) {
                    const int w0 = std::max(0, pad - dx_);
                    const int w1 = std::min(WO, W + pad - dx_);
                    if (w0 >= w1) continue;
                    T* dst = xp + ((int64_t(b) * H + ih) * W + (w0 + dx_ - pad)) * C;
                    const T* src = cols.data() + ((int64_t(b) * HO + oh) * WO + w0) * K + (int64_t(dy) * kw + dx_) * C;
                    for (int ow = w0; ow < w1; ++ow) {
                        for (int c = 0; c < C; ++c) dst[c] += src[c];
                        dst += C;
                        src += K;
                    }
                }
            }
        }
    }
}

template <typename T>
std::vector<T>& conv_scratch() {
    static thread_local std::vector<T> buf;
    return buf;
}
template <typename T>
std::vector<T>& conv_scratch2() {
    static thread_local std::vector<T> buf;
    return buf;
}

} // namespace detail

template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, int kh, int kw, int pad) {
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int HO = H + 2 * pad - kh + 1, WO = W + 2 * pad - kw + 1;
    const int cout = w.dim(1);
    check<T>(w.dim(0) == kh * kw * C, "conv2d: weight/input channel mismatch");
    Tensor<T> y({B, HO, WO, cout});
    const int64_t R = int64_t(B) * HO * WO;
    if (kh == 1 && kw == 1 && pad == 0) {
        y.mat(R, cout).noalias() = x.mat(R, C) * w.mat();
    } else {
        auto& cols = detail::conv_scratch<T>();
        detail::im2col(x, kh, kw, pad, cols);
        typename Tensor<T>::ConstMatMap cm(cols.data(), R, w.dim(0));
        y.mat(R, cout).noalias() = cm * w.mat();
    }
    if (b) y.mat(R, cout).rowwise() += b->vec().transpose();
    return y;
}

template <typename T>
Tensor<T> conv2d_bwd_input(const Tensor<T>& dy, const Tensor<T>& w, int B, int H, int W, int C, int kh, int kw, int pad) {
    const int HO = H + 2 * pad - kh + 1, WO = W + 2 * pad - kw + 1;
    const int64_t R = int64_t(B) * HO * WO;
    Tensor<T> dx({B, H, W, C});
    if (kh == 1 && kw == 1 && pad == 0) {
        dx.mat(R, C).noalias() = dy.mat(R, w.dim(1)) * w.mat().transpose();
        return dx;
    }
    auto& dcols = detail::conv_scratch2<T>();
    dcols.assign(static_cast<size_t>(R * w.dim(0)), T(0));
    typename Tensor<T>::MatMap dcm(dcols.data(), R, w.dim(0));
    dcm.noalias() = dy.mat(R, w.dim(1)) * w.mat().transpose();
    detail::col2im(dcols, B, H, W, C, kh, kw, pad, dx);
    return dx;
}

template <typename T>
void conv2d_bwd_params(const Tensor<T>& x, const Tensor<T>& dy, int kh, int kw, int pad, Tensor<T>& dw, Tensor<T>* db) {
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int HO = H + 2 * pad - kh + 1, WO = W + 2 * pad - kw + 1;
    const int64_t R = int64_t(B) * HO * WO;
    const int cout = dy.dim(dy.rank() - 1);
    if (kh == 1 && kw == 1 && pad == 0) {
        dw.mat().noalias() += x.mat(R, C).transpose() * dy.mat(R, cout);
    } else {
        auto& cols = detail::conv_scratch<T>();
        detail::im2col(x, kh, kw, pad, cols);
        typename Tensor<T>::ConstMatMap cm(cols.data(), R, dw.dim(0));
        dw.mat().noalias() += cm.transpose() * dy.mat(R, cout);
    }
    if (db) db->vec().noalias() += dy.mat(R, cout).colwise().sum().transpose();
}

// ---- pooling / resampling -------------------------------------------------

template <typename T>
Tensor<T> avgpool2_fwd(const Tensor<T>& x) {
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor<T> y({B, H / 2, W / 2, C});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H / 2; ++h)
            for (int w = 0; w < W / 2; ++w)
                for (int c = 0; c < C; ++c)
                    y.at4(b, h, w, c) = (x.at4(b, 2 * h, 2 * w, c) + x.at4(b, 2 * h, 2 * w + 1, c) +
                                         x.at4(b, 2 * h + 1, 2 * w, c) + x.at4(b, 2 * h + 1, 2 * w + 1, c)) / T(4);
    return y;
}

template <typename T>
Tensor<T> avgpool2_bwd(const Tensor<T>& dy, int H, int W) {
    const int B = dy.dim(0), C = dy.dim(3);
    Tensor<T> dx({B, H, W, C});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H / 2; ++h)
            for (int w = 0; w < W / 2; ++w)
                for (int c = 0; c < C; ++c) {
                    const T g = dy.at4(b, h, w, c) / T(4);
                    dx.at4(b, 2 * h, 2 * w, c) = g;
                    dx.at4(b, 2 * h, 2 * w + 1, c) = g;
                    dx.at4(b, 2 * h + 1, 2 * w, c) = g;
                    dx.at4(b, 2 * h + 1, 2 * w + 1, c) = g;
                }
    return dx;
}

template <typename T>
Tensor<T> upsample2_fwd(const Tensor<T>& x) {
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor<T> y({B, 2 * H, 2 * W, C});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < 2 * H; ++h)
            for (int w = 0; w < 2 * W; ++w)
                std::memcpy(&y.at4(b, h, w, 0), &x.at4(b, h / 2, w / 2, 0), sizeof(T) * static_cast<size_t>(C));
    return y;
}

template <typename T>
Tensor<T> upsample2_bwd(const Tensor<T>& dy) {
    const int B = dy.dim(0), H = dy.dim(1) / 2, W = dy.dim(2) / 2, C = dy.dim(3);
    Tensor<T> dx({B, H, W, C});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < 2 * H; ++h)
            for (int w = 0; w < 2 * W; ++w)
                for (int c = 0; c < C; ++c)
                    dx.at4(b, h / 2, w / 2, c) += dy.at4(b, h, w, c);
    return dx;
}

// sum over H,W -> [B, C]
template <typename T>
Tensor<T> global_sum_pool_fwd(const Tensor<T>& x) {
    const int B = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
    Tensor<T> y({B, C});
    for (int b = 0; b < B; ++b) {
        const T* p = x.data() + int64_t(b) * HW * C;
        for (int i = 0; i < HW; ++i, p += C)
            for (int c = 0; c < C; ++c) y.at2(b, c) += p[c];
    }
    return y;
}

template <typename T>
Tensor<T> global_sum_pool_bwd(const Tensor<T>& dy, int H, int W) {
    const int B = dy.dim(0), C = dy.dim(1);
    Tensor<T> dx({B, H, W, C});
    for (int b = 0; b < B; ++b) {
        T* p = dx.data() + int64_t(b) * H * W * C;
        for (int i = 0; i < H * W; ++i, p += C)
            for (int c = 0; c < C; ++c) p[c] = dy.at2(b, c);
    }
    return dx;
}

template <typename T>
Tensor<T> global_avg_pool_fwd(const Tensor<T>& x) {
    Tensor<T> y = global_sum_pool_fwd(x);
    y.vec() /= T(x.dim(1) * x.dim(2));
    return y;
}

template <typename T>
Tensor<T> global_avg_pool_bwd(const Tensor<T>& dy, int H, int W) {
    Tensor<T> dx = global_sum_pool_bwd(dy, H, W);
    dx.vec() /= T(H * W);
    return dx;
}

// ---- activations ----------------------------------------------------------

template <typename T>
Tensor<T> relu_fwd(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (int64_t i = 0; i < y.size(); ++i) y[i] = y[i] > T(0) ? y[i] : T(0);
    return y;
}

// dx from dy and the forward *input* (mask recomputed, no cache needed)
template <typename T>
Tensor<T> relu_bwd(const Tensor<T>& dy, const Tensor<T>& x) {
    Tensor<T> dx = dy;
    for (int64_t i = 0; i < dx.size(); ++i)
        if (!(x[i] > T(0))) dx[i] = T(0);
    return dx;
}

template <typename T>
Tensor<T> tanh_fwd(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (int64_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
    return y;
}

// dx from dy and the forward *output*
template <typename T>
Tensor<T> tanh_bwd(const Tensor<T>& dy, const Tensor<T>& y) {
    Tensor<T> dx = dy;
    for (int64_t i = 0; i < dx.size(); ++i) dx[i] *= T(1) - y[i] * y[i];
    return dx;
}

// ---- softmax cross-entropy --------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    const int B = logits.dim(0), C = logits.dim(1);
    Tensor<T> p = logits;
    for (int b = 0; b < B; ++b) {
        T mx = p.at2(b, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, p.at2(b, c));
        T sum = T(0);
        for (int c = 0; c < C; ++c) { p.at2(b, c) = std::exp(p.at2(b, c) - mx); sum += p.at2(b, c); }
        for (int c = 0; c < C; ++c) p.at2(b, c) /= sum;
    }
    return p;
}

// Mean cross-entropy over the batch; probs is returned for the backward pass.
template <typename T>
T softmax_ce_fwd(const Tensor<T>& logits, const std::vector<int>& y, Tensor<T>* probs_out = nullptr) {
    const int B = logits.dim(0), C = logits.dim(1);
    Tensor<T> p = softmax(logits);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const T pb = std::max(p.at2(b, y[static_cast<size_t>(b)]), T(1e-30));
        loss -= std::log(static_cast<double>(pb));
    }
    if (probs_out) *probs_out = std::move(p);
    return static_cast<T>(loss / B);
}

template <typename T>
Tensor<T> softmax_ce_bwd(const Tensor<T>& probs, const std::vector<int>& y) {
    const int B = probs.dim(0), C = probs.dim(1);
    Tensor<T> d = probs;
    for (int b = 0; b < B; ++b) d.at2(b, y[static_cast<size_t>(b)]) -= T(1);
    d.vec() /= T(B);
    return d;
}

template <typename T>
int argmax_row(const Tensor<T>& m, int row) {
    int best = 0;
    for (int c = 1; c < m.dim(1); ++c)
        if (m.at2(row, c) > m.at2(row, best)) best = c; // ties keep the lowest index
    return best;
}

} // namespace loginv::nn
