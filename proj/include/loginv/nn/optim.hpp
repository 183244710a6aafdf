#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "loginv/tensor.hpp"

namespace loginv::nn {

// ---------------------------------------------------------------------------
// Parameter registry: models register (name, weight, grad) triples in a
// fixed order. Optimizers, EMA, checkpointing and hashing all walk the same
// registry, so record order is stable.
// ---------------------------------------------------------------------------
template <typename T>
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor<T>*> weights;
    std::vector<Tensor<T>*> grads;

    void add(const std::string& name, Tensor<T>* w, Tensor<T>* g) {
        names.push_back(name);
        weights.push_back(w);
        grads.push_back(g);
    }
    size_t count() const { return names.size(); }
    int64_t total_size() const {
        int64_t n = 0;
        for (auto* w : weights) n += w->size();
        return n;
    }
    void zero_grads() {
        for (auto* g : grads) g->zero();
    }
};

template <typename T>
class Adam {
public:
    T beta1 = T(0), beta2 = T(0.999), eps = T(1e-8);
    int64_t t = 0;
    std::vector<Tensor<T>> m, v;

    void init(const ParamSet<T>& params) {
        m.clear();
        v.clear();
        for (auto* w : params.weights) {
            m.emplace_back(w->shape());
            v.emplace_back(w->shape());
        }
        t = 0;
    }

    void step(ParamSet<T>& params, T lr) {
        ++t;
        const T bc1 = T(1) - std::pow(beta1, T(t));
        const T bc2 = T(1) - std::pow(beta2, T(t));
        for (size_t i = 0; i < params.count(); ++i) {
            Tensor<T>& w = *params.weights[i];
            const Tensor<T>& g = *params.grads[i];
            for (int64_t j = 0; j < w.size(); ++j) {
                m[i][j] = beta1 * m[i][j] + (T(1) - beta1) * g[j];
                v[i][j] = beta2 * v[i][j] + (T(1) - beta2) * g[j] * g[j];
                w[j] -= lr * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + eps);
            }
        }
    }
};

template <typename T>
class MomentumSgd {
public:
    T momentum = T(0.9);
    std::vector<Tensor<T>> vel;

    void init(const ParamSet<T>& params) {
        vel.clear();
        for (auto* w : params.weights) vel.emplace_back(w->shape());
    }

    void step(ParamSet<T>& params, T lr, T weight_decay) {
        for (size_t i = 0; i < params.count(); ++i) {
            Tensor<T>& w = *params.weights[i];
            const Tensor<T>& g = *params.grads[i];
            for (int64_t j = 0; j < w.size(); ++j) {
                const T gg = g[j] + weight_decay * w[j];
                vel[i][j] = momentum * vel[i][j] + gg;
                w[j] -= lr * vel[i][j];
            }
        }
    }
};

// Exponential moving average of a parameter set.
template <typename T>
struct Ema {
    std::vector<Tensor<T>> shadow;

    void init_from(const ParamSet<T>& params) {
        shadow.clear();
        for (auto* w : params.weights) shadow.push_back(*w);
    }
    void copy_from(const ParamSet<T>& params) {
        for (size_t i = 0; i < shadow.size(); ++i) shadow[i] = *params.weights[i];
    }
    void update(const ParamSet<T>& params, T decay) {
        for (size_t i = 0; i < shadow.size(); ++i) {
            const Tensor<T>& w = *params.weights[i];
            for (int64_t j = 0; j < w.size(); ++j)
                shadow[i][j] = decay * shadow[i][j] + (T(1) - decay) * w[j];
        }
    }
    void write_to(ParamSet<T>& params) const {
        for (size_t i = 0; i < shadow.size(); ++i) *params.weights[i] = shadow[i];
    }
};

// Cosine learning-rate decay from lr0 to ~0 over total steps.
template <typename T>
T cosine_lr(T lr0, int64_t step, int64_t total) {
    if (total <= 0) return lr0;
    const double p = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
    return static_cast<T>(lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * p)));
}

} // namespace loginv::nn
