#pragma once

#include <Eigen/Core>

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace loginv {

// ---------------------------------------------------------------------------
// Tensor: a dense row-major array of rank 1..4.
//
// Image batches use NHWC layout (batch, height, width, channel). Matrices
// are (rows, cols). The data buffer is contiguous; Eigen maps are used for
// matrix products, so no data is ever copied for linear algebra.
// ---------------------------------------------------------------------------
template <typename T>
class Tensor {
public:
    using MatMap      = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using VecMap      = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
    using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), T(0));
    }
    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor full(std::vector<int> shape, T value) {
        Tensor t(std::move(shape));
        t.fill(value);
        return t;
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // NHWC element access
    T& at4(int b, int h, int w, int c) {
        return data_[static_cast<size_t>(((int64_t(b) * dim(1) + h) * dim(2) + w) * dim(3) + c)];
    }
    const T& at4(int b, int h, int w, int c) const {
        return data_[static_cast<size_t>(((int64_t(b) * dim(1) + h) * dim(2) + w) * dim(3) + c)];
    }
    T& at2(int r, int c) { return data_[static_cast<size_t>(int64_t(r) * dim(1) + c)]; }
    const T& at2(int r, int c) const { return data_[static_cast<size_t>(int64_t(r) * dim(1) + c)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    // Same buffer, new shape (element count must match).
    void reshape(std::vector<int> shape) {
        if (count(shape) != size())
            throw std::invalid_argument("Tensor::reshape: element count mismatch");
        shape_ = std::move(shape);
    }

    Tensor reshaped(std::vector<int> shape) const {
        Tensor t = *this;
        t.reshape(std::move(shape));
        return t;
    }

    // Matrix views. Row/col products must cover the whole buffer.
    MatMap mat(int64_t rows, int64_t cols) {
        assert(rows * cols == size());
        return MatMap(data(), rows, cols);
    }
    ConstMatMap mat(int64_t rows, int64_t cols) const {
        assert(rows * cols == size());
        return ConstMatMap(data(), rows, cols);
    }
    // Rank-2 view of the natural shape (rank-1 -> column vector).
    MatMap mat() { return mat(rows_(), cols_()); }
    ConstMatMap mat() const { return mat(rows_(), cols_()); }
    VecMap vec() { return VecMap(data(), size()); }
    ConstVecMap vec() const { return ConstVecMap(data(), size()); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i)
            s += std::to_string(shape_[i]) + (i + 1 < shape_.size() ? "," : "");
        return s + "]";
    }

private:
    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }
    int64_t rows_() const { return rank() == 0 ? 0 : (rank() == 1 ? size() : size() / dim(rank() - 1)); }
    int64_t cols_() const { return rank() == 0 ? 0 : (rank() == 1 ? 1 : dim(rank() - 1)); }

    std::vector<int> shape_;
    std::vector<T>   data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace loginv
