#pragma once

#include <Eigen/Dense>

#include "loginv/rng.hpp"
#include "loginv/tensor.hpp"

namespace loginv::nn {

// Orthogonal initialization: QR of a Gaussian matrix, sign-fixed so the
// decomposition is unique. Non-square weights get orthonormal rows or
// columns, whichever fit.
template <typename T>
void orthogonal_init(Tensor<T>& w, Rng& rng, T gain = T(1)) {
    const int64_t rows = w.size() / w.dim(w.rank() - 1);
    const int64_t cols = w.dim(w.rank() - 1);
    const int64_t big = std::max(rows, cols), small = std::min(rows, cols);
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> a(big, small);
    for (int64_t i = 0; i < big; ++i)
        for (int64_t j = 0; j < small; ++j) a(i, j) = static_cast<T>(rng.normal());
    Eigen::HouseholderQR<decltype(a)> qr(a);
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> q =
        qr.householderQ() * Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>::Identity(big, small);
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (int64_t j = 0; j < small; ++j)
        if (r(j, j) < T(0)) q.col(j) = -q.col(j);
    auto m = w.mat(rows, cols);
    if (rows >= cols)
        m = gain * q;
    else
        m = gain * q.transpose();
}

} // namespace loginv::nn
