#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "common.hpp"

namespace fading {

// Dense row-major float32 tensor. Shapes stay small here (toy backbone),
// so everything is plain std::vector based.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0f);
    }
    Tensor(std::vector<int> s, float fill) : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) n *= static_cast<std::size_t>(d);
        return n;
    }

    std::size_t numel() const { return data.size(); }
    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }
    float& operator[](std::size_t i) { return data[i]; }
    float operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw_data(std::string("shape mismatch in ") + what);
}

// Deterministic RNG. Gaussian draws use an explicit Box-Muller so that
// sequences do not depend on the standard library's distribution
// implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed)) {}

    std::uint32_t next_u32() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return (gen_() >> 5) * (1.0 / 134217728.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(uniform() * (hi - lo + 1.0));
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0, u2 = 0.0;
        do { u1 = uniform(); } while (u1 <= 1e-12);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(Tensor& t, float stddev = 1.0f) {
        for (auto& v : t.data) v = static_cast<float>(normal()) * stddev;
    }

private:
    std::mt19937 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline double mse(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

// PSNR for [0,1]-range images; infinite for identical inputs.
inline double psnr(const Tensor& a, const Tensor& b) {
    double m = mse(a, b);
    if (m <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

}  // namespace fading
