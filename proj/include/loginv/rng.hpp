#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "loginv/tensor.hpp"

namespace loginv {

// ---------------------------------------------------------------------------
// Rng: the project's single randomness source.
//
// Wraps mt19937_64 with hand-rolled uniform/normal transforms so the stream
// is identical across standard libraries, and so the full state (engine +
// Box-Muller cache) can be serialized into checkpoints.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    // Derive an independent child stream from a label. Used so that all
    // randomness in a run flows from one top-level seed.
    Rng child(const std::string& tag) const {
        uint64_t h = 1469598103934665603ull; // FNV-1a 64
        for (unsigned char c : tag) { h ^= c; h *= 1099511628211ull; }
        uint64_t mixed = seed_mix_ ^ h;
        Rng r(mixed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
        r.seed_mix_ = mixed;
        return r;
    }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    int64_t uniform_int(int64_t n) {
        // rejection sampling keeps the distribution exact
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do { x = engine_(); } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller with one cached value.
    double normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cache_ = r * std::sin(a);
        has_cache_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void fill_normal(Tensor<T>& t, double stddev = 1.0, double mean = 0.0) {
        for (int64_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<T>(mean + stddev * normal());
    }

    template <typename T>
    void fill_uniform(Tensor<T>& t, double lo, double hi) {
        for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
    }

    // Fisher-Yates shuffle of an index vector.
    template <typename V>
    void shuffle(V& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            int64_t j = uniform_int(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_ << " " << (has_cache_ ? 1 : 0) << " ";
        os.precision(17);
        os << cache_ << " " << seed_mix_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        is >> engine_ >> flag >> cache_ >> seed_mix_;
        if (!is) throw std::runtime_error("Rng::deserialize: malformed state string");
        has_cache_ = flag != 0;
    }

private:
    std::mt19937_64 engine_;
    bool   has_cache_ = false;
    double cache_     = 0.0;
    uint64_t seed_mix_ = 0;
};

} // namespace loginv
