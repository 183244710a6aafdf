#pragma once

#include <algorithm>
#include <stdexcept>

#include "loginv/tensor.hpp"

namespace loginv::gan {

// ---------------------------------------------------------------------------
// Hinge adversarial losses.
//
//   d_loss = mean(max(-1, s_fake)) - mean(min(1, s_real))
//   g_loss = -mean(s_fake)
//
// d_loss equals the usual two-sided hinge
// mean(max(0, 1 + s_fake)) + mean(max(0, 1 - s_real)) minus exactly 2, so
// the gradients of the two forms coincide.
// ---------------------------------------------------------------------------

template <typename T>
T d_loss(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
    if (scores_real.size() != scores_fake.size())
        throw std::invalid_argument("d_loss: batch size mismatch");
    const int64_t n = scores_real.size();
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i)
        acc += std::max(T(-1), scores_fake[i]) - std::min(T(1), scores_real[i]);
    return acc / T(n);
}

template <typename T>
void d_loss_grad(const Tensor<T>& scores_real, const Tensor<T>& scores_fake,
                 Tensor<T>& d_real, Tensor<T>& d_fake) {
    const int64_t n = scores_real.size();
    d_real = Tensor<T>(scores_real.shape());
    d_fake = Tensor<T>(scores_fake.shape());
    for (int64_t i = 0; i < n; ++i) {
        d_fake[i] = scores_fake[i] > T(-1) ? T(1) / T(n) : T(0);
        d_real[i] = scores_real[i] < T(1) ? T(-1) / T(n) : T(0);
    }
}

template <typename T>
T g_loss(const Tensor<T>& scores_fake) {
    T acc = T(0);
    for (int64_t i = 0; i < scores_fake.size(); ++i) acc += scores_fake[i];
    return -acc / T(scores_fake.size());
}

template <typename T>
Tensor<T> g_loss_grad(const Tensor<T>& scores_fake) {
    Tensor<T> d(scores_fake.shape());
    d.fill(T(-1) / T(scores_fake.size()));
    return d;
}

// Reference form used by the loss-identity checks.
template <typename T>
T standard_hinge(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
    const int64_t n = scores_real.size();
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i)
        acc += std::max(T(0), T(1) + scores_fake[i]) + std::max(T(0), T(1) - scores_real[i]);
    return acc / T(n);
}

} // namespace loginv::gan
