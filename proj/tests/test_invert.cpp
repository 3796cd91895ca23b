#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "core/blob_io.hpp"
#include "core/invert.hpp"
#include "fixtures.hpp"

using namespace fading;

namespace {

Tensor random_image(const Backbone& b, std::uint64_t seed) {
    Tensor img(b.latent_shape());
    Rng rng(seed);
    for (float& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

}  // namespace

TEST_CASE("zero-predictor inversion follows the closed form sqrt(abar_t) * z0") {
    auto stub = StubBackbone::zero({1, 8, 8});
    NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::linear, 100, 1e-4, 2e-2);
    StepPlan plan = StepPlan::make(schedule, 10);

    Tensor z0 = random_image(*stub, 1);
    PromptSpec prompt = build_prompt(30, std::nullopt, false);
    DiffusionTrajectory traj = ddim_invert(*stub, z0, prompt, plan, schedule);

    REQUIRE(traj.latents.size() == plan.timestep_list.size() + 1);
    CHECK(traj.z0_hash == tensor_hash(z0));
    CHECK(max_abs_diff(traj.latents[0], z0) == 0.0);
    for (std::size_t k = 1; k < traj.latents.size(); ++k) {
        int t = plan.timestep_list[plan.timestep_list.size() - k];
        double scale = std::sqrt(schedule.alpha_bar(t));
        double worst = 0.0;
        for (std::size_t i = 0; i < z0.numel(); ++i)
            worst = std::max(worst, std::abs(traj.latents[k][i] - scale * z0[i]));
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("zero-predictor reconstruction returns the input") {
    auto stub = StubBackbone::zero({1, 8, 8});
    NoiseSchedule schedule = NoiseSchedule::make(ScheduleKind::linear, 100, 1e-4, 2e-2);
    StepPlan plan = StepPlan::make(schedule, 10);

    Tensor z0 = random_image(*stub, 2);
    PromptSpec prompt = build_prompt(30, std::nullopt, false);
    NullOptConfig cfg;
    InversionBundle bundle = invert_image(*stub, z0, prompt, 30, cfg, plan, schedule);

    Tensor back = reconstruct(*stub, bundle, plan, schedule);
    CHECK(max_abs_diff(back, z0) <= 1e-5);
    CHECK(bundle.reconstruction_psnr > 80.0);
    CHECK(bundle.inference_steps == 10);
    CHECK(bundle.estimated_age == 30);
    REQUIRE(bundle.null_schedule.embeddings.size() == 10);
}

TEST_CASE("null-text optimization never worsens the per-step loss") {
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 6);

    Tensor image = testfix::small_dataset().samples[3].image;
    PromptSpec prompt = build_prompt(40, std::nullopt, false);
    DiffusionTrajectory traj = ddim_invert(model, image, prompt, plan, schedule);

    NullOptConfig baseline_cfg;
    baseline_cfg.inner_iterations = 0;
    NullTextSchedule baseline = optimize_null_text(model, traj, prompt, baseline_cfg, plan, schedule);

    NullOptConfig cfg;
    cfg.inner_iterations = 10;
    NullTextSchedule tuned = optimize_null_text(model, traj, prompt, cfg, plan, schedule);

    REQUIRE(tuned.per_step_final_loss.size() == baseline.per_step_final_loss.size());
    // The first step starts from the same state in both runs, so its
    // optimized loss can only improve on the untouched one. Later steps
    // see different carried latents; compare them in aggregate.
    CHECK(tuned.per_step_final_loss[0] <= baseline.per_step_final_loss[0] + 1e-12);
    double base_total = 0.0, tuned_total = 0.0;
    for (std::size_t i = 0; i < tuned.per_step_final_loss.size(); ++i) {
        base_total += baseline.per_step_final_loss[i];
        tuned_total += tuned.per_step_final_loss[i];
    }
    CHECK(tuned_total < base_total);
}

TEST_CASE("with zero inner iterations reconstruction equals plain guided resampling") {
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 5);

    Tensor image = testfix::small_dataset().samples[5].image;
    PromptSpec prompt = build_prompt(55, std::nullopt, false);
    NullOptConfig cfg;
    cfg.inner_iterations = 0;
    InversionBundle bundle = invert_image(model, image, prompt, 55, cfg, plan, schedule);

    Tensor via_bundle = reconstruct(model, bundle, plan, schedule);
    Tensor cond = model.encode_prompt(prompt).embedding;
    Tensor plain = model.decode_latent(
        guided_sample(model, bundle.z_T, plan, schedule, cond, nullptr, cfg.guidance_w));
    CHECK(tensor_hash(via_bundle) == tensor_hash(plain));
}

TEST_CASE("inversion and null optimization are deterministic") {
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 4);
    Tensor image = testfix::small_dataset().samples[7].image;
    PromptSpec prompt = build_prompt(22, std::nullopt, false);
    NullOptConfig cfg;
    cfg.inner_iterations = 3;

    InversionBundle a = invert_image(model, image, prompt, 22, cfg, plan, schedule);
    InversionBundle b = invert_image(model, image, prompt, 22, cfg, plan, schedule);
    CHECK(tensor_hash(a.z_T) == tensor_hash(b.z_T));
    REQUIRE(a.null_schedule.embeddings.size() == b.null_schedule.embeddings.size());
    for (std::size_t i = 0; i < a.null_schedule.embeddings.size(); ++i)
        CHECK(tensor_hash(a.null_schedule.embeddings[i]) == tensor_hash(b.null_schedule.embeddings[i]));
}

TEST_CASE("bundles round-trip through disk") {
    namespace fs = std::filesystem;
    const ToyBackbone& model = testfix::small_trained_backbone();
    NoiseSchedule schedule = model.schedule();
    StepPlan plan = StepPlan::make(schedule, 4);
    Tensor image = testfix::small_dataset().samples[9].image;
    PromptSpec prompt = build_prompt(68, std::nullopt, false);
    NullOptConfig cfg;
    cfg.inner_iterations = 2;
    InversionBundle bundle = invert_image(model, image, prompt, 68, cfg, plan, schedule);

    fs::path dir = fs::temp_directory_path() / "fading_bundle_rt";
    fs::remove_all(dir);
    save_bundle(bundle, dir);
    InversionBundle back = load_bundle(dir, model);

    CHECK(tensor_hash(back.z_T) == tensor_hash(bundle.z_T));
    CHECK(back.prompt == bundle.prompt);
    CHECK(back.estimated_age == bundle.estimated_age);
    CHECK(back.inference_steps == bundle.inference_steps);
    CHECK(back.z0_hash == bundle.z0_hash);
    CHECK(back.reconstruction_psnr == doctest::Approx(bundle.reconstruction_psnr).epsilon(1e-9));
    REQUIRE(back.null_schedule.embeddings.size() == bundle.null_schedule.embeddings.size());
    for (std::size_t i = 0; i < back.null_schedule.embeddings.size(); ++i) {
        CHECK(tensor_hash(back.null_schedule.embeddings[i]) == tensor_hash(bundle.null_schedule.embeddings[i]));
        CHECK(back.null_schedule.per_step_final_loss[i] ==
              doctest::Approx(bundle.null_schedule.per_step_final_loss[i]).epsilon(1e-9));
    }
    fs::remove_all(dir);

    CHECK_THROWS_AS((void)load_bundle(dir, model), Error);
}
