#pragma once

#include "toy_data.hpp"

namespace fading {

// Handcrafted features of the procedural renderer: stripe-frequency and
// contour-thickness statistics plus global intensity moments. Independent
// of the diffusion model by construction.
inline constexpr int kToyFeatureDim = 8;
std::vector<double> toy_image_features(const Tensor& image);

// Generic feature extractor plugged into the KID metric.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string descriptor() const = 0;
    virtual int dim() const = 0;
    virtual std::vector<double> extract(const Tensor& image) const = 0;
};

class ToyFeatureExtractor : public FeatureExtractor {
public:
    std::string descriptor() const override { return "toy-features"; }
    int dim() const override { return kToyFeatureDim; }
    std::vector<double> extract(const Tensor& image) const override { return toy_image_features(image); }
};

// Ridge regression age -> features, fit once on a seeded calibration set.
class ToyAgeRegressor : public AgeEstimatorAdapter {
public:
    static ToyAgeRegressor fit(const ToyDataset& dataset, double ridge_lambda = 1e-3);
    // The frozen oracle used by prompts/metrics; fit on an internal
    // calibration dataset with a fixed seed, cached per process.
    static const ToyAgeRegressor& frozen();

    std::string descriptor() const override { return "toy-oracle"; }
    double estimate_raw(const Tensor& image) const override;

    const std::vector<double>& coefficients() const { return coef_; }

private:
    std::vector<double> coef_;  // kToyFeatureDim weights + bias
};

class ToyGenderOracle : public LabelClassifierAdapter {
public:
    std::string descriptor() const override { return "toy-oracle"; }
    std::pair<std::string, double> classify(const Tensor& image) const override;
};

class ToySmileOracle : public LabelClassifierAdapter {
public:
    std::string descriptor() const override { return "toy-oracle"; }
    std::pair<std::string, double> classify(const Tensor& image) const override;  // smiling / not-smiling
};

class ToyExpressionOracle : public LabelClassifierAdapter {
public:
    std::string descriptor() const override { return "toy-oracle"; }
    std::pair<std::string, double> classify(const Tensor& image) const override;  // happy / neutral
};

// Fixed-output stubs for tests.
class ConstantAgeStub : public AgeEstimatorAdapter {
public:
    explicit ConstantAgeStub(double value) : value_(value) {}
    std::string descriptor() const override { return "stub"; }
    double estimate_raw(const Tensor&) const override { return value_; }

private:
    double value_;
};

class ConstantLabelStub : public LabelClassifierAdapter {
public:
    ConstantLabelStub(std::string label, double confidence) : label_(std::move(label)), conf_(confidence) {}
    std::string descriptor() const override { return "stub"; }
    std::pair<std::string, double> classify(const Tensor&) const override { return {label_, conf_}; }

private:
    std::string label_;
    double conf_;
};

}  // namespace fading
