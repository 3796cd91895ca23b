#pragma once

#include <filesystem>
#include <functional>

#include "backbone.hpp"
#include "schedule.hpp"

namespace fading {

// Ordered inversion latents. latents[0] is the encoded input; latents[k]
// sits at timestep plan.timestep_list[T-k], so latents[T] is the fully
// inverted z_T at the largest timestep.
struct DiffusionTrajectory {
    std::vector<Tensor> latents;
    PromptSpec prompt;
    double guidance_w_inv = 1.0;
    std::uint64_t z0_hash = 0;
};

struct NullTextSchedule {
    std::vector<Tensor> embeddings;          // one per sampling step, index 0 = largest timestep
    std::vector<double> per_step_initial_loss;  // loss with the warm-started embedding, before inner iterations
    std::vector<double> per_step_final_loss;
};

struct NullOptConfig {
    int inner_iterations = 10;
    double inner_lr = 1e-2;
    double early_stop_loss = 1e-5;
    double guidance_w = 7.5;
};

struct InversionBundle {
    Tensor z_T;
    NullTextSchedule null_schedule;
    PromptSpec prompt;
    int estimated_age = 0;
    NullOptConfig config;
    int inference_steps = 0;
    double reconstruction_psnr = 0.0;
    std::uint64_t z0_hash = 0;
    Tensor original_image;  // kept in memory for PSNR; not serialized
};

// Probe hookup for a sampling pass: the probe is applied to the
// conditional branch only, with the mode chosen per sampling step.
struct ProbePlan {
    AttentionProbe* probe = nullptr;
    std::function<AttentionProbe::Mode(int step)> mode_for_step;
};

// Deterministic guided DDIM sampling from z at the largest timestep down
// to z_0. null_embeddings may be null (backbone default null embedding at
// every step); w = 1 short-circuits to the conditional branch and w = 0
// to the unconditional one.
Tensor guided_sample(const Backbone& backbone, Tensor z, const StepPlan& plan, const NoiseSchedule& schedule,
                     const Tensor& cond_embedding, const std::vector<Tensor>* null_embeddings, double w,
                     const ProbePlan* probes = nullptr);

// DDIM inversion of an image to the pivot trajectory (w = guidance_w_inv,
// conditional-only by default).
DiffusionTrajectory ddim_invert(const Backbone& backbone, const Tensor& image, const PromptSpec& prompt,
                                const StepPlan& plan, const NoiseSchedule& schedule, double guidance_w_inv = 1.0);

// Sequential per-step null-text optimization against the pivot
// trajectory. Per-step final loss never exceeds the initial loss (the
// best-seen embedding is kept).
NullTextSchedule optimize_null_text(const Backbone& backbone, const DiffusionTrajectory& trajectory,
                                    const PromptSpec& prompt, const NullOptConfig& config, const StepPlan& plan,
                                    const NoiseSchedule& schedule);

// Replays sampling from the bundle; returns the decoded image.
Tensor reconstruct(const Backbone& backbone, const InversionBundle& bundle, const StepPlan& plan,
                   const NoiseSchedule& schedule, const ProbePlan* probes = nullptr);

// estimate -> invert -> optimize -> bundle (PSNR stamped). A non-negative
// age_override bypasses the estimator.
InversionBundle invert_image(const Backbone& backbone, const Tensor& image, const PromptSpec& prompt,
                             int estimated_age, const NullOptConfig& config, const StepPlan& plan,
                             const NoiseSchedule& schedule);

void save_bundle(const InversionBundle& bundle, const std::filesystem::path& dir);
InversionBundle load_bundle(const std::filesystem::path& dir, const Backbone& backbone);

}  // namespace fading
