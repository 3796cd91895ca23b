#pragma once

#include "toy_backbone.hpp"
#include "toy_data.hpp"

namespace fading {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a ParamSet; state rows are keyed by parameter name so a
// subset of parameters (frozen text tables) can simply never appear in
// the gradient map.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void step(ParamSet& params, const std::map<std::string, Tensor>& grads);

private:
    struct State {
        Tensor m;
        Tensor v;
    };
    AdamConfig cfg_;
    std::map<std::string, State> state_;
    long t_ = 0;
};

struct ToyTrainConfig {
    int steps = 4000;
    int batch_size = 4;
    double lr = 2e-3;
    double cond_dropout = 0.1;        // fraction of samples trained against the null embedding
    double enhanced_prompt_frac = 0.5;  // fraction using man/woman/boy/girl nouns
    std::uint64_t seed = 0;
};

// Trains the toy noise predictor (and its text tables) from scratch with
// the standard denoising reconstruction loss. Deterministic for a fixed
// seed; throws a compute error if the loss goes non-finite.
std::unique_ptr<ToyBackbone> train_toy_backbone(const ToyDataset& dataset, const ToyTrainConfig& config,
                                                std::vector<double>* loss_log = nullptr);

// Mean denoising loss over a fixed held-out draw; shared by tests and the
// specialization quality checks.
double heldout_denoise_loss(const ToyBackbone& backbone, const ToyDataset& dataset, std::uint64_t seed,
                            int draws = 64);

}  // namespace fading
