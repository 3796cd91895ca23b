#include "regressor.hpp"

namespace fading {

std::vector<double> toy_image_features(const Tensor& image) {
    if (image.shape.size() != 3 || image.shape[0] != 1 || image.shape[1] != 32 || image.shape[2] != 32)
        throw_data("toy features: expected (1,32,32) image");
    const int S = 32;
    auto px = [&](int y, int x) { return static_cast<double>(image[static_cast<std::size_t>(y) * S + x]); };

    // background band: rows 0..2, cols 4..27 (clear of corner markers and face)
    double grad_bg = 0.0;
    int crossings = 0;
    {
        double mean = 0.0;
        int n = 0;
        for (int y = 0; y <= 2; ++y)
            for (int x = 4; x <= 27; ++x) {
                mean += px(y, x);
                ++n;
            }
        mean /= n;
        for (int y = 0; y <= 2; ++y)
            for (int x = 4; x < 27; ++x) grad_bg += std::abs(px(y, x + 1) - px(y, x));
        grad_bg /= n;
        int prev = 0;
        for (int x = 4; x <= 27; ++x) {
            double v = px(1, x) - mean;
            int sgn = v > 0 ? 1 : (v < 0 ? -1 : prev);
            if (prev != 0 && sgn != prev) ++crossings;
            if (sgn != 0) prev = sgn;
        }
    }

    // contour statistics around the face annulus
    double dark_annulus = 0.0;
    int n_annulus = 0;
    double dark_total = 0.0;
    double mean_all = 0.0, sq_all = 0.0, grad_v = 0.0;
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            double v = px(y, x);
            mean_all += v;
            sq_all += v * v;
            if (y + 1 < S) grad_v += std::abs(px(y + 1, x) - v);
            if (v < 0.3) dark_total += 1.0;
            double d = std::hypot(x + 0.5 - S / 2.0, y + 0.5 - S / 2.0);
            if (d >= 7.0 && d <= 14.0) {
                ++n_annulus;
                if (v < 0.3) dark_annulus += 1.0;
            }
        }
    mean_all /= S * S;
    double var_all = sq_all / (S * S) - mean_all * mean_all;

    // ring crossing thickness along the horizontal midline
    double row_dark = 0.0;
    for (int x = 0; x < S; ++x)
        if (px(16, x) < 0.3) row_dark += 1.0;

    return {grad_bg, static_cast<double>(crossings), dark_annulus / n_annulus, dark_total / (S * S),
            mean_all, var_all, grad_v / (S * S), row_dark};
}

// Solves (A + lambda I) w = rhs in place; A square, small.
static std::vector<double> solve_spd(std::vector<std::vector<double>> a, std::vector<double> rhs) {
    const std::size_t n = rhs.size();
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t piv = i;
        for (std::size_t r = i + 1; r < n; ++r)
            if (std::abs(a[r][i]) > std::abs(a[piv][i])) piv = r;
        std::swap(a[i], a[piv]);
        std::swap(rhs[i], rhs[piv]);
        if (std::abs(a[i][i]) < 1e-12) throw_compute("ridge solve: singular system");
        for (std::size_t r = i + 1; r < n; ++r) {
            double f = a[r][i] / a[i][i];
            for (std::size_t c = i; c < n; ++c) a[r][c] -= f * a[i][c];
            rhs[r] -= f * rhs[i];
        }
    }
    std::vector<double> w(n);
    for (std::size_t i = n; i-- > 0;) {
        double acc = rhs[i];
        for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * w[c];
        w[i] = acc / a[i][i];
    }
    return w;
}

ToyAgeRegressor ToyAgeRegressor::fit(const ToyDataset& dataset, double ridge_lambda) {
    const int d = kToyFeatureDim + 1;  // + bias column
    std::vector<std::vector<double>> xtx(d, std::vector<double>(d, 0.0));
    std::vector<double> xty(d, 0.0);
    for (const auto& s : dataset.samples) {
        std::vector<double> f = toy_image_features(s.image);
        f.push_back(1.0);
        for (int i = 0; i < d; ++i) {
            xty[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)] * s.age;
            for (int j = 0; j < d; ++j)
                xtx[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
                    f[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(j)];
        }
    }
    for (int i = 0; i < d; ++i) xtx[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += ridge_lambda;
    ToyAgeRegressor r;
    r.coef_ = solve_spd(std::move(xtx), std::move(xty));
    return r;
}

const ToyAgeRegressor& ToyAgeRegressor::frozen() {
    static const ToyAgeRegressor instance = [] {
        ToyDatasetSpec spec;
        spec.num_samples = 600;
        spec.rng_seed = 0xFAD1A6ull;  // calibration seed, fixed forever
        return fit(generate_toy_dataset(spec));
    }();
    return instance;
}

double ToyAgeRegressor::estimate_raw(const Tensor& image) const {
    std::vector<double> f = toy_image_features(image);
    f.push_back(1.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) acc += coef_[i] * f[i];
    return acc;
}

std::pair<std::string, double> ToyGenderOracle::classify(const Tensor& image) const {
    if (image.shape.size() != 3 || image.shape[1] < 3) throw_data("gender oracle: bad image");
    const int S = image.shape[2];
    double left = 0.0, right = 0.0;
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            left += image[static_cast<std::size_t>(y) * S + x];
            right += image[static_cast<std::size_t>(y) * S + (S - 3 + x)];
        }
    double diff = (right - left) / 9.0;  // male marker darkens the left corner
    double conf = std::min(1.0, 0.5 + std::abs(diff));
    return {diff > 0 ? "male" : "female", conf};
}

static std::pair<bool, double> mouth_score(const Tensor& image) {
    const int S = image.shape[2];
    auto px = [&](int y, int x) { return static_cast<double>(image[static_cast<std::size_t>(y) * S + x]); };
    // neutral darkens (20,16); the smile arc darkens (21,16) instead
    double diff = px(20, 16) - px(21, 16);
    return {diff > 0, std::min(1.0, 0.5 + 2.0 * std::abs(diff))};
}

std::pair<std::string, double> ToySmileOracle::classify(const Tensor& image) const {
    auto [smiling, conf] = mouth_score(image);
    return {smiling ? "smiling" : "not-smiling", conf};
}

std::pair<std::string, double> ToyExpressionOracle::classify(const Tensor& image) const {
    auto [smiling, conf] = mouth_score(image);
    return {smiling ? "happy" : "neutral", conf};
}

}  // namespace fading
