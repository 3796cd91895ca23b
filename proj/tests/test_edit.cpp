#include "doctest.h"

#include <cmath>

#include "core/blob_io.hpp"
#include "core/edit.hpp"
#include "core/regressor.hpp"
#include "fixtures.hpp"

using namespace fading;

namespace {

constexpr int kMaxTokens = 8;

InversionBundle quick_bundle(const ToyBackbone& model, const Tensor& image, const PromptSpec& prompt, int age,
                             const StepPlan& plan, const NoiseSchedule& schedule, int inner_iterations = 2) {
    NullOptConfig cfg;
    cfg.inner_iterations = inner_iterations;
    return invert_image(model, image, prompt, age, cfg, plan, schedule);
}

}  // namespace

TEST_CASE("token alignment between same-shape prompts is positional") {
    PromptSpec src = build_prompt(30, std::nullopt, false);   // photo of a 30 year old person
    PromptSpec dst = build_prompt(80, std::nullopt, false);   // photo of a 80 year old person
    TokenAlignment a = align_tokens(src, dst, kMaxTokens);
    CHECK(a.identity);
    CHECK_FALSE(a.duplicated);
    REQUIRE(a.source_for_target.size() == kMaxTokens);
    for (int i = 0; i < kMaxTokens; ++i) CHECK(a.source_for_target[i] == i);
}

TEST_CASE("token alignment from the short age-agnostic prompt leaves the age span unsourced") {
    PromptSpec src = build_prompt(std::nullopt, std::nullopt, false);  // photo of a person
    PromptSpec dst = build_prompt(80, std::nullopt, false);            // photo of a 80 year old person
    TokenAlignment a = align_tokens(src, dst, kMaxTokens);
    CHECK_FALSE(a.identity);
    CHECK(a.duplicated);
    const int no_src = TokenAlignment::kNoSource;
    CHECK(a.source_for_target == std::vector<int>{0, 1, 2, no_src, no_src, no_src, 3, 4});
}

TEST_CASE("token alignment into the short prompt maps trailing pads to pads") {
    PromptSpec src = build_prompt(80, std::nullopt, false);
    PromptSpec dst = build_prompt(std::nullopt, std::nullopt, false);
    TokenAlignment a = align_tokens(src, dst, kMaxTokens);
    CHECK_FALSE(a.identity);
    CHECK(a.source_for_target == std::vector<int>{0, 1, 2, 6, 7, 7, 7, 7});
}

TEST_CASE("subject-noun changes still align column for column") {
    PromptSpec src = build_prompt(40, Gender::male, true);   // ... 40 year old man
    PromptSpec dst = build_prompt(10, Gender::male, true);   // ... 10 year old boy
    TokenAlignment a = align_tokens(src, dst, kMaxTokens);
    CHECK(a.identity);
}

TEST_CASE("remapped attention rows stay probability distributions") {
    Tensor map({2, 3, kMaxTokens});
    Rng rng(9);
    for (float& v : map.data) v = static_cast<float>(rng.uniform()) + 0.05f;
    for (int h = 0; h < 2; ++h)
        for (int p = 0; p < 3; ++p) {
            float* row = map.ptr() + (h * 3 + p) * kMaxTokens;
            float s = 0.0f;
            for (int t = 0; t < kMaxTokens; ++t) s += row[t];
            for (int t = 0; t < kMaxTokens; ++t) row[t] /= s;
        }

    TokenAlignment dup = align_tokens(build_prompt(std::nullopt, std::nullopt, false),
                                      build_prompt(80, std::nullopt, false), kMaxTokens);
    Tensor out = remap_attention(map, dup);
    REQUIRE(out.shape == map.shape);
    for (int h = 0; h < 2; ++h)
        for (int p = 0; p < 3; ++p) {
            double s = 0.0;
            for (int t = 0; t < kMaxTokens; ++t) s += out[(h * 3 + p) * kMaxTokens + t];
            CHECK(std::abs(s - 1.0) <= 1e-5);
        }

    TokenAlignment ident;
    ident.source_for_target.resize(kMaxTokens);
    for (int i = 0; i < kMaxTokens; ++i) ident.source_for_target[i] = i;
    Tensor same = remap_attention(map, ident);
    CHECK(tensor_hash(same) == tensor_hash(map));
}

TEST_CASE("recording reference attention leaves the reconstruction untouched") {
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 5);
    Tensor image = testfix::small_dataset().samples[11].image;
    PromptSpec prompt = build_prompt(45, std::nullopt, false);
    InversionBundle bundle = quick_bundle(model, image, prompt, 45, plan, schedule);

    Tensor plain = reconstruct(model, bundle, plan, schedule);
    Tensor by_product;
    AttentionRecord rec = record_reference_attention(model, bundle, plan, schedule, &by_product);
    CHECK(tensor_hash(plain) == tensor_hash(by_product));
    CHECK(rec.step_count == plan.inference_steps);
    CHECK(rec.maps.size() == plan.inference_steps * model.default_layer_filter().size());
}

TEST_CASE("injecting the recorded maps with the source prompt reproduces the reconstruction") {
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 5);
    Tensor image = testfix::small_dataset().samples[13].image;
    PromptSpec prompt = build_prompt(33, std::nullopt, false);
    InversionBundle bundle = quick_bundle(model, image, prompt, 33, plan, schedule);

    Tensor plain = reconstruct(model, bundle, plan, schedule);
    AttentionRecord rec = record_reference_attention(model, bundle, plan, schedule);

    EditConfig cfg;
    cfg.replace_ratio = 1.0;  // inject at every step
    Tensor self_edit = edit_with_injection(model, bundle, rec, prompt, cfg, plan, schedule);
    CHECK(tensor_hash(self_edit) == tensor_hash(plain));

    cfg.replace_ratio = 0.0;  // no injection at all
    Tensor no_inject = edit_with_injection(model, bundle, rec, prompt, cfg, plan, schedule);
    CHECK(tensor_hash(no_inject) == tensor_hash(plain));
}

TEST_CASE("the injection horizon rounds the step count") {
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 20);
    Tensor image = testfix::small_dataset().samples[17].image;
    PromptSpec src = build_prompt(30, std::nullopt, false);
    PromptSpec dst = build_prompt(80, std::nullopt, false);
    InversionBundle bundle = quick_bundle(model, image, src, 30, plan, schedule, 0);
    AttentionRecord rec = record_reference_attention(model, bundle, plan, schedule);

    // 0.5 * 20 and 0.52 * 20 both round to 10 injected steps; 0.55 * 20
    // rounds to 11 and must change the output.
    EditConfig cfg;
    cfg.replace_ratio = 0.5;
    Tensor at_half = edit_with_injection(model, bundle, rec, dst, cfg, plan, schedule);
    cfg.replace_ratio = 0.52;
    Tensor at_052 = edit_with_injection(model, bundle, rec, dst, cfg, plan, schedule);
    cfg.replace_ratio = 0.55;
    Tensor at_055 = edit_with_injection(model, bundle, rec, dst, cfg, plan, schedule);

    CHECK(tensor_hash(at_half) == tensor_hash(at_052));
    CHECK(tensor_hash(at_half) != tensor_hash(at_055));
}

TEST_CASE("changing the target prompt changes the sample") {
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 5);
    Tensor image = testfix::small_dataset().samples[19].image;
    PromptSpec src = build_prompt(25, std::nullopt, false);
    InversionBundle bundle = quick_bundle(model, image, src, 25, plan, schedule);
    AttentionRecord rec = record_reference_attention(model, bundle, plan, schedule);

    EditConfig cfg;
    Tensor young = edit_with_injection(model, bundle, rec, src, cfg, plan, schedule);
    Tensor old = edit_with_injection(model, bundle, rec, build_prompt(90, std::nullopt, false), cfg, plan, schedule);
    CHECK(tensor_hash(young) != tensor_hash(old));
}

TEST_CASE("end-to-end edit validates the target age and fills its record") {
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 4);
    Tensor image = testfix::small_dataset().samples[21].image;

    ConstantAgeStub ages(36.0);
    ConstantLabelStub genders("female", 0.9);
    NullOptConfig null_cfg;
    null_cfg.inner_iterations = 1;

    EditConfig cfg;
    CHECK_THROWS_AS((void)edit_age(model, image, 0, cfg, ages, genders, null_cfg, plan, schedule), Error);
    CHECK_THROWS_AS((void)edit_age(model, image, 101, cfg, ages, genders, null_cfg, plan, schedule), Error);

    EditResult res = edit_age(model, image, 80, cfg, ages, genders, null_cfg, plan, schedule);
    CHECK(res.estimated_age == 36);
    CHECK(res.source_prompt.rendered == "photo of a 36 year old woman");
    CHECK(res.target_prompt.rendered == "photo of a 80 year old woman");
    CHECK(res.image.shape == model.latent_shape());
    CHECK(res.record.step_count == plan.inference_steps);

    // Disabling the initial age produces the age-agnostic source prompt.
    EditConfig plain_cfg;
    plain_cfg.use_initial_age = false;
    plain_cfg.use_enhanced_prompts = false;
    EditResult plain = edit_age(model, image, 12, plain_cfg, ages, genders, null_cfg, plan, schedule);
    CHECK(plain.source_prompt.rendered == "photo of a person");
    CHECK(plain.target_prompt.rendered == "photo of a 12 year old person");
    CHECK(plain.estimated_age == 0);
}
