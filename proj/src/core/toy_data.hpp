#pragma once

#include <filesystem>

#include "prompt.hpp"
#include "tensor.hpp"

namespace fading {

// Procedural 32x32 face stand-in. Age drives two monotone attributes:
// background stripe frequency and face contour thickness. Identity
// (phase, radius, brightness, eye spacing) comes from the per-sample RNG,
// as do the binary "gender" and "smile" attributes.
struct ToyDatasetSpec {
    int image_size = 32;
    int num_samples = 150;
    int age_lo = 1;
    int age_hi = kMaxAge;
    std::uint64_t rng_seed = 0;
};

struct ToySample {
    Tensor image;  // (1,S,S) in [0,1]
    int age = 0;
    Gender gender = Gender::male;
    bool smile = false;
};

struct ToyDataset {
    ToyDatasetSpec spec;
    std::vector<ToySample> samples;
};

// Deterministic per (spec.rng_seed, index). Ages sweep age_lo..age_hi
// uniformly across the dataset.
ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec);

// Single-sample renderer, exposed for oracles and tests.
ToySample render_toy_sample(const ToyDatasetSpec& spec, int index, int age_override = -1);

// Pixels whose rendering depends on age for this sample's identity
// (computed by differencing extreme-age renders). 1 = age feature.
Tensor age_feature_mask(const ToyDatasetSpec& spec, int index);

// PNG images + index.csv (filename, age)
void save_toy_dataset(const ToyDataset& ds, const std::filesystem::path& dir);
ToyDataset load_toy_dataset(const std::filesystem::path& dir);

}  // namespace fading
