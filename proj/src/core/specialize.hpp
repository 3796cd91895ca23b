#pragma once

#include <filesystem>

#include "train.hpp"

namespace fading {

struct SpecializationConfig {
    int steps = 150;
    int batch_size = 2;
    double learning_rate = 5e-6;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    bool double_prompt = true;
    std::uint64_t rng_seed = 0;
};

// (P, P_alpha): the age-agnostic prompt and the age-specific prompt with
// the age written as numerals.
std::pair<PromptSpec, PromptSpec> build_training_prompts(int age);

// Double-prompt reconstruction objective for one image:
// ||eps - eps_theta(z_t, t, P)||^2 + ||eps' - eps_theta(z'_t, t', P_alpha)||^2
// (squared L2 norms, i.e. sums over elements). With double_prompt = false
// only the P_alpha term is computed.
double double_prompt_loss(const ToyBackbone& backbone, const Tensor& z0, int age, const Tensor& eps,
                          const Tensor& eps_prime, int t, int t_prime, bool double_prompt = true);

struct FinetuneStepLog {
    int step = 0;
    double loss_p = 0.0;        // age-agnostic term (mean per element)
    double loss_p_alpha = 0.0;  // age-specific term
};

// Age-aware fine-tuning. Returns a specialized copy; the input backbone
// is untouched. Only noise-predictor parameters update; the text tables
// are frozen. The prompt age is the central age of the sample's label
// group.
std::unique_ptr<ToyBackbone> finetune(const ToyBackbone& backbone, const ToyDataset& dataset,
                                      const SpecializationConfig& config,
                                      std::vector<FinetuneStepLog>* log = nullptr);

// Run log as CSV (step, loss_P, loss_Palpha).
void write_finetune_log(const std::vector<FinetuneStepLog>& log, const std::filesystem::path& path);

// Mean held-out double-prompt loss over fixed draws; used to compare a
// specialized backbone against its base.
double heldout_double_prompt_loss(const ToyBackbone& backbone, const ToyDataset& dataset, std::uint64_t seed,
                                  int draws = 32);

}  // namespace fading
