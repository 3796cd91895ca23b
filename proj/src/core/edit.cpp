#include "edit.hpp"

#include <cmath>

#include "common.hpp"

namespace fading {

TokenAlignment align_tokens(const PromptSpec& source, const PromptSpec& target, int max_tokens) {
    if (source.words.empty() || target.words.empty())
        throw_usage("align_tokens: prompts must carry their word structure");
    if (static_cast<int>(source.words.size()) > max_tokens || static_cast<int>(target.words.size()) > max_tokens)
        throw_usage("align_tokens: prompt longer than the token window");

    TokenAlignment out;
    out.source_for_target.assign(static_cast<std::size_t>(max_tokens), 0);
    const int ns = static_cast<int>(source.words.size());
    const int nt = static_cast<int>(target.words.size());

    // Greedy in-order word matching: fixed words match by text, slot words
    // by slot kind. Unmatched target words fall back to the last aligned
    // source column.
    int sp = 0;
    int last = 0;
    for (int j = 0; j < nt; ++j) {
        int found = -1;
        for (int k = sp; k < ns; ++k) {
            if (target.slots[static_cast<std::size_t>(j)] != source.slots[static_cast<std::size_t>(k)]) continue;
            if (target.slots[static_cast<std::size_t>(j)] == WordSlot::fixed &&
                target.words[static_cast<std::size_t>(j)] != source.words[static_cast<std::size_t>(k)])
                continue;
            found = k;
            break;
        }
        if (found >= 0) {
            out.source_for_target[static_cast<std::size_t>(j)] = found;
            sp = found + 1;
            last = found;
        } else {
            // A slot word whose kind also occurs in the source (a longer
            // numeral span) duplicates the last aligned column. Any other
            // unmatched word — the whole age phrase when the source prompt
            // is age-agnostic — has no reference column; it receives zero
            // injected mass so the injected steps reproduce the source
            // prompt's attention layout exactly.
            bool duplicate_slot = false;
            if (target.slots[static_cast<std::size_t>(j)] != WordSlot::fixed)
                for (int k = 0; k < ns; ++k)
                    if (source.slots[static_cast<std::size_t>(k)] == target.slots[static_cast<std::size_t>(j)]) {
                        duplicate_slot = true;
                        break;
                    }
            out.source_for_target[static_cast<std::size_t>(j)] =
                duplicate_slot ? last : TokenAlignment::kNoSource;
            out.duplicated = true;
        }
    }
    // Trailing pads align pad-to-pad.
    for (int p = nt; p < max_tokens; ++p) {
        int q = ns + (p - nt);
        if (q >= max_tokens) {
            q = max_tokens - 1;
            out.duplicated = true;
        }
        out.source_for_target[static_cast<std::size_t>(p)] = q;
    }
    out.identity = true;
    for (int j = 0; j < max_tokens; ++j)
        if (out.source_for_target[static_cast<std::size_t>(j)] != j) out.identity = false;
    return out;
}

Tensor remap_attention(const Tensor& map, const TokenAlignment& alignment) {
    if (map.shape.size() != 3) throw_usage("remap_attention: expected a (heads, pixels, tokens) map");
    const int heads = map.shape[0], pixels = map.shape[1], tokens = map.shape[2];
    if (tokens != static_cast<int>(alignment.source_for_target.size()))
        throw_usage("remap_attention: alignment width does not match the token axis");
    if (alignment.identity) return map;

    Tensor out(map.shape);
    for (int h = 0; h < heads; ++h) {
        for (int p = 0; p < pixels; ++p) {
            const float* row = map.data.data() + (static_cast<std::size_t>(h) * pixels + p) * tokens;
            float* dst = out.data.data() + (static_cast<std::size_t>(h) * pixels + p) * tokens;
            float sum = 0.0f;
            for (int j = 0; j < tokens; ++j) {
                int src = alignment.source_for_target[static_cast<std::size_t>(j)];
                dst[j] = src == TokenAlignment::kNoSource ? 0.0f : row[src];
                sum += dst[j];
            }
            if (sum <= 0.0f) throw_compute("remap_attention: degenerate attention row");
            for (int j = 0; j < tokens; ++j) dst[j] /= sum;
        }
    }
    return out;
}

AttentionRecord record_reference_attention(const Backbone& backbone, const InversionBundle& bundle,
                                           const StepPlan& plan, const NoiseSchedule& schedule,
                                           Tensor* reconstruction) {
    AttentionRecord rec;
    rec.prompt_tokens = backbone.encode_prompt(bundle.prompt).tokens;
    rec.step_count = static_cast<int>(plan.timestep_list.size());

    AttentionProbe probe;
    probe.store = &rec;
    probe.layer_filter = backbone.default_layer_filter();
    ProbePlan plan_probe{&probe, [](int) { return AttentionProbe::Mode::record; }};

    Tensor image = reconstruct(backbone, bundle, plan, schedule, &plan_probe);
    if (reconstruction) *reconstruction = image;
    return rec;
}

Tensor edit_with_injection(const Backbone& backbone, const InversionBundle& bundle, const AttentionRecord& record,
                           const PromptSpec& target_prompt, const EditConfig& config, const StepPlan& plan,
                           const NoiseSchedule& schedule) {
    if (config.replace_ratio < 0.0 || config.replace_ratio > 1.0)
        throw_usage("edit_with_injection: replace ratio must lie in [0, 1]");
    const int steps = static_cast<int>(plan.timestep_list.size());
    const int n_inject = static_cast<int>(std::lround(config.replace_ratio * steps));

    Tensor cond = backbone.encode_prompt(target_prompt).embedding;
    if (n_inject == 0) {
        Tensor z0 = guided_sample(backbone, bundle.z_T, plan, schedule, cond, &bundle.null_schedule.embeddings,
                                  config.guidance_w);
        return backbone.decode_latent(z0);
    }

    TokenAlignment alignment =
        align_tokens(bundle.prompt, target_prompt, backbone.text_embedding_shape()[0]);

    AttentionRecord remapped;
    remapped.prompt_tokens = backbone.encode_prompt(target_prompt).tokens;
    remapped.step_count = record.step_count;
    for (const auto& [key, map] : record.maps)
        if (key.first < n_inject) remapped.maps[key] = remap_attention(map, alignment);

    AttentionProbe probe;
    probe.store = &remapped;
    probe.layer_filter = backbone.default_layer_filter();
    ProbePlan plan_probe{&probe, [n_inject](int step) {
                             return step < n_inject ? AttentionProbe::Mode::inject : AttentionProbe::Mode::off;
                         }};

    Tensor z0 = guided_sample(backbone, bundle.z_T, plan, schedule, cond, &bundle.null_schedule.embeddings,
                              config.guidance_w, &plan_probe);
    return backbone.decode_latent(z0);
}

namespace {

template <typename F>
auto run_stage(const char* stage, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string(stage) + ": " + e.what());
    }
}

}  // namespace

EditResult edit_age(const Backbone& backbone, const Tensor& image, int target_age, const EditConfig& config,
                    const AgeEstimatorAdapter& age_estimator, const LabelClassifierAdapter& gender_classifier,
                    const NullOptConfig& null_config, const StepPlan& plan, const NoiseSchedule& schedule) {
    if (target_age < 1 || target_age > kMaxAge)
        throw_usage("edit_age: target age " + std::to_string(target_age) + " outside [1, " +
                    std::to_string(kMaxAge) + "]");

    EditResult result;
    std::optional<Gender> gender;
    if (config.use_enhanced_prompts)
        gender = run_stage("classify", [&] { return classify_gender(gender_classifier, image); });

    if (config.use_initial_age) {
        result.estimated_age = run_stage("estimate", [&] { return estimate_age(age_estimator, image); });
        result.source_prompt = build_prompt(result.estimated_age, gender, config.use_enhanced_prompts);
    } else {
        result.source_prompt = build_prompt(std::nullopt, gender, config.use_enhanced_prompts);
    }
    result.target_prompt = build_prompt(target_age, gender, config.use_enhanced_prompts);

    result.bundle = run_stage("invert", [&] {
        return invert_image(backbone, image, result.source_prompt, result.estimated_age, null_config, plan, schedule);
    });
    result.record = run_stage("record", [&] {
        return record_reference_attention(backbone, result.bundle, plan, schedule);
    });
    result.image = run_stage("edit", [&] {
        return edit_with_injection(backbone, result.bundle, result.record, result.target_prompt, config, plan,
                                   schedule);
    });
    return result;
}

}  // namespace fading
