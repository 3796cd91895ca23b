#pragma once

#include "core/train.hpp"

namespace fading::testfix {

inline const ToyDataset& small_dataset() {
    static const ToyDataset ds = [] {
        ToyDatasetSpec spec;
        spec.num_samples = 64;
        spec.rng_seed = 11;
        return generate_toy_dataset(spec);
    }();
    return ds;
}

// Briefly trained backbone shared across test cases: enough optimization
// for non-degenerate predictions and attention, small enough to keep the
// suite fast. Trained once per process.
inline const ToyBackbone& small_trained_backbone() {
    static const std::unique_ptr<ToyBackbone> model = [] {
        ToyTrainConfig cfg;
        cfg.steps = 250;
        cfg.batch_size = 4;
        cfg.seed = 3;
        return train_toy_backbone(small_dataset(), cfg);
    }();
    return *model;
}

}  // namespace fading::testfix
