#pragma once

#include "invert.hpp"

namespace fading {

struct EditConfig {
    double replace_ratio = 0.8;  // fraction of early sampling steps with injected attention
    double guidance_w = 7.5;
    bool use_initial_age = true;     // source prompt carries the estimated age
    bool use_enhanced_prompts = true;  // gender/age-dependent subject noun
};

// Column mapping from target-prompt token positions to source-prompt token
// positions. Identity alignments skip re-normalization so same-prompt
// injection stays bitwise exact.
struct TokenAlignment {
    // Marks a target column whose slot kind is absent from the source
    // prompt; such columns get zero injected attention mass.
    static constexpr int kNoSource = -1;

    std::vector<int> source_for_target;  // size max_tokens, kNoSource allowed
    bool identity = true;
    bool duplicated = false;
};

// Word-level greedy alignment expanded to token columns. Target tokens
// without a source counterpart reuse the nearest preceding aligned column
// (duplicating it); trailing pads align pad-to-pad.
TokenAlignment align_tokens(const PromptSpec& source, const PromptSpec& target, int max_tokens);

// Re-indexes a (heads, pixels, tokens) probability map through the
// alignment; rows are re-normalized unless the alignment is the identity.
Tensor remap_attention(const Tensor& map, const TokenAlignment& alignment);

// Reconstruction pass with a passive recording probe. The by-product image
// (if requested) equals reconstruct() exactly.
AttentionRecord record_reference_attention(const Backbone& backbone, const InversionBundle& bundle,
                                           const StepPlan& plan, const NoiseSchedule& schedule,
                                           Tensor* reconstruction = nullptr);

// Resamples from the bundle with the target prompt, injecting the
// re-indexed reference maps for the first round(replace_ratio * T) steps.
Tensor edit_with_injection(const Backbone& backbone, const InversionBundle& bundle, const AttentionRecord& record,
                           const PromptSpec& target_prompt, const EditConfig& config, const StepPlan& plan,
                           const NoiseSchedule& schedule);

struct EditResult {
    Tensor image;
    InversionBundle bundle;
    AttentionRecord record;
    PromptSpec source_prompt;
    PromptSpec target_prompt;
    int estimated_age = 0;  // 0 when age estimation is disabled
};

// Full pipeline for one image: estimate age (unless disabled), build the
// source/target prompts, invert with null-text optimization, record
// reference attention, then resample with injection.
EditResult edit_age(const Backbone& backbone, const Tensor& image, int target_age, const EditConfig& config,
                    const AgeEstimatorAdapter& age_estimator, const LabelClassifierAdapter& gender_classifier,
                    const NullOptConfig& null_config, const StepPlan& plan, const NoiseSchedule& schedule);

}  // namespace fading
