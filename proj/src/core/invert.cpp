#include "invert.hpp"

#include <fstream>

#include "blob_io.hpp"
#include "common.hpp"
#include "tape.hpp"
#include "toy_backbone.hpp"
#include "json.hpp"

namespace fading {
namespace {

// Guided noise prediction with the w = 1 / w = 0 short circuits so those
// settings are bitwise identical to single-branch evaluation.
Tensor guided_eps(const Backbone& backbone, const Tensor& z, int t, const Tensor& cond, const Tensor& null_emb,
                  double w, AttentionProbe* probe) {
    if (w == 1.0) return backbone.predict_noise(z, t, cond, probe);
    if (w == 0.0) return backbone.predict_noise(z, t, null_emb);
    Tensor eps_u = backbone.predict_noise(z, t, null_emb);
    Tensor eps_c = backbone.predict_noise(z, t, cond, probe);
    return cfg_combine(eps_u, eps_c, w);
}

}  // namespace

Tensor guided_sample(const Backbone& backbone, Tensor z, const StepPlan& plan, const NoiseSchedule& schedule,
                     const Tensor& cond_embedding, const std::vector<Tensor>* null_embeddings, double w,
                     const ProbePlan* probes) {
    if (null_embeddings && null_embeddings->size() != plan.timestep_list.size())
        throw_usage("guided_sample: null embedding schedule length " + std::to_string(null_embeddings->size()) +
                    " does not match " + std::to_string(plan.timestep_list.size()) + " sampling steps");
    Tensor default_null = backbone.null_embedding();
    for (std::size_t i = 0; i < plan.timestep_list.size(); ++i) {
        int t = plan.timestep_list[i];
        int s = plan.prev_timestep(i);
        AttentionProbe* probe = nullptr;
        if (probes && probes->probe) {
            probes->probe->mode = probes->mode_for_step ? probes->mode_for_step(static_cast<int>(i))
                                                        : probes->probe->mode;
            probes->probe->step_cursor = static_cast<int>(i);
            if (probes->probe->mode != AttentionProbe::Mode::off) probe = probes->probe;
        }
        const Tensor& null_emb = null_embeddings ? (*null_embeddings)[i] : default_null;
        Tensor eps = guided_eps(backbone, z, t, cond_embedding, null_emb, w, probe);
        z = ddim_step(z, eps, t, s, schedule);
    }
    return z;
}

DiffusionTrajectory ddim_invert(const Backbone& backbone, const Tensor& image, const PromptSpec& prompt,
                                const StepPlan& plan, const NoiseSchedule& schedule, double guidance_w_inv) {
    DiffusionTrajectory traj;
    traj.prompt = prompt;
    traj.guidance_w_inv = guidance_w_inv;

    Tensor z = backbone.encode_image(image);
    traj.z0_hash = tensor_hash(z);
    traj.latents.push_back(z);

    Tensor cond = backbone.encode_prompt(prompt).embedding;
    Tensor null_emb = backbone.null_embedding();
    const int n = static_cast<int>(plan.timestep_list.size());
    // Walk the sampling timesteps in reverse (lowest first); the noise
    // prediction is evaluated at the step's target timestep.
    for (int i = n - 1; i >= 0; --i) {
        int from = plan.prev_timestep(static_cast<std::size_t>(i));
        int to = plan.timestep_list[static_cast<std::size_t>(i)];
        Tensor eps = guided_eps(backbone, z, to, cond, null_emb, guidance_w_inv, nullptr);
        z = ddim_invert_step(z, eps, from, to, schedule);
        traj.latents.push_back(z);
    }
    return traj;
}

NullTextSchedule optimize_null_text(const Backbone& backbone, const DiffusionTrajectory& trajectory,
                                    const PromptSpec& prompt, const NullOptConfig& config, const StepPlan& plan,
                                    const NoiseSchedule& schedule) {
    const int n = static_cast<int>(plan.timestep_list.size());
    if (static_cast<int>(trajectory.latents.size()) != n + 1)
        throw_usage("optimize_null_text: trajectory has " + std::to_string(trajectory.latents.size()) +
                    " latents for " + std::to_string(n) + " sampling steps");
    if (config.inner_iterations < 0) throw_usage("optimize_null_text: negative inner iteration count");

    const auto* toy = dynamic_cast<const ToyBackbone*>(&backbone);
    Tensor cond = backbone.encode_prompt(prompt).embedding;

    NullTextSchedule out;
    Tensor null_emb = backbone.null_embedding();  // warm-started across steps
    Tensor z_bar = trajectory.latents[static_cast<std::size_t>(n)];
    const double w = config.guidance_w;

    for (int i = 0; i < n; ++i) {
        int t = plan.timestep_list[static_cast<std::size_t>(i)];
        int s = plan.prev_timestep(static_cast<std::size_t>(i));
        // Pivot target one level below the current trajectory position.
        const Tensor& target = trajectory.latents[static_cast<std::size_t>(n - 1 - i)];
        // The prompt branch is frozen, so its prediction is constant
        // across the inner iterations.
        Tensor eps_c = backbone.predict_noise(z_bar, t, cond);

        auto step_loss = [&](const Tensor& emb) {
            Tensor eps_u = backbone.predict_noise(z_bar, t, emb);
            Tensor z_prev = ddim_step(z_bar, cfg_combine(eps_u, eps_c, w), t, s, schedule);
            return mse(z_prev, target);
        };

        Tensor best_emb = null_emb;
        double best_loss = step_loss(null_emb);
        out.per_step_initial_loss.push_back(best_loss);

        if (toy && best_loss > config.early_stop_loss) {
            // Adam over the step's unconditional embedding.
            Tensor m(null_emb.shape), v(null_emb.shape);
            const double b1 = 0.9, b2 = 0.999, eps_adam = 1e-8;
            for (int it = 0; it < config.inner_iterations; ++it) {
                Tape tape;
                auto bind = toy->bind(tape, [](const std::string&) { return false; });
                Tape::NodeId emb_id = tape.input(null_emb, /*requires_grad=*/true);
                Tape::NodeId z_id = tape.input(z_bar);
                Tape::NodeId eps_u = toy->forward(tape, z_id, t, emb_id, bind);
                Tape::NodeId eps_c_id = tape.input(eps_c);
                auto c = ddim_coeffs<float>(static_cast<float>(schedule.alpha_bar(t)),
                                            static_cast<float>(schedule.alpha_bar(s)));
                Tape::NodeId eps_cfg = tape.axpby(static_cast<float>(1.0 - w), eps_u, static_cast<float>(w), eps_c_id);
                Tape::NodeId z_prev = tape.axpby(c.c_z, z_id, c.c_eps, eps_cfg);
                Tape::NodeId loss = tape.mse_loss(z_prev, tape.input(target));
                tape.backward(loss);

                const Tensor& g = tape.grad(emb_id);
                double bc1 = 1.0 - std::pow(b1, it + 1);
                double bc2 = 1.0 - std::pow(b2, it + 1);
                for (std::size_t k = 0; k < null_emb.data.size(); ++k) {
                    m.data[k] = static_cast<float>(b1 * m.data[k] + (1.0 - b1) * g.data[k]);
                    v.data[k] = static_cast<float>(b2 * v.data[k] + (1.0 - b2) * g.data[k] * g.data[k]);
                    double mh = m.data[k] / bc1, vh = v.data[k] / bc2;
                    null_emb.data[k] -= static_cast<float>(config.inner_lr * mh / (std::sqrt(vh) + eps_adam));
                }
                double loss_now = step_loss(null_emb);
                if (loss_now < best_loss) {
                    best_loss = loss_now;
                    best_emb = null_emb;
                }
                if (loss_now < config.early_stop_loss) break;
            }
        }

        null_emb = best_emb;  // warm start for the next step
        out.embeddings.push_back(best_emb);
        out.per_step_final_loss.push_back(best_loss);

        // Advance along the optimized path, not the pivot.
        Tensor eps_u = backbone.predict_noise(z_bar, t, best_emb);
        z_bar = ddim_step(z_bar, cfg_combine(eps_u, eps_c, w), t, s, schedule);
    }
    return out;
}

Tensor reconstruct(const Backbone& backbone, const InversionBundle& bundle, const StepPlan& plan,
                   const NoiseSchedule& schedule, const ProbePlan* probes) {
    Tensor cond = backbone.encode_prompt(bundle.prompt).embedding;
    Tensor z0 = guided_sample(backbone, bundle.z_T, plan, schedule, cond, &bundle.null_schedule.embeddings,
                              bundle.config.guidance_w, probes);
    return backbone.decode_latent(z0);
}

InversionBundle invert_image(const Backbone& backbone, const Tensor& image, const PromptSpec& prompt,
                             int estimated_age, const NullOptConfig& config, const StepPlan& plan,
                             const NoiseSchedule& schedule) {
    InversionBundle bundle;
    bundle.prompt = prompt;
    bundle.estimated_age = estimated_age;
    bundle.config = config;
    bundle.inference_steps = plan.inference_steps;
    bundle.original_image = image;

    DiffusionTrajectory traj = ddim_invert(backbone, image, prompt, plan, schedule);
    bundle.z_T = traj.latents.back();
    bundle.z0_hash = traj.z0_hash;
    bundle.null_schedule = optimize_null_text(backbone, traj, prompt, config, plan, schedule);
    bundle.reconstruction_psnr = psnr(reconstruct(backbone, bundle, plan, schedule), image);
    return bundle;
}

void save_bundle(const InversionBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["prompt"] = bundle.prompt.rendered;
    j["estimated_age"] = bundle.estimated_age;
    j["inference_steps"] = bundle.inference_steps;
    j["guidance_w"] = bundle.config.guidance_w;
    j["inner_iterations"] = bundle.config.inner_iterations;
    j["inner_lr"] = bundle.config.inner_lr;
    j["early_stop_loss"] = bundle.config.early_stop_loss;
    j["reconstruction_psnr"] = bundle.reconstruction_psnr;
    j["z0_hash"] = bundle.z0_hash;
    j["per_step_final_loss"] = bundle.null_schedule.per_step_final_loss;
    std::ofstream f(dir / "manifest.json");
    if (!f) throw_data("save_bundle: cannot write " + (dir / "manifest.json").string());
    f << j.dump(2) << "\n";

    write_f32_blob(dir / "z_T.bin", bundle.z_T);
    for (std::size_t i = 0; i < bundle.null_schedule.embeddings.size(); ++i)
        write_f32_blob(dir / ("null_" + std::to_string(i) + ".bin"), bundle.null_schedule.embeddings[i]);
}

InversionBundle load_bundle(const std::filesystem::path& dir, const Backbone& backbone) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw_data("load_bundle: cannot read " + (dir / "manifest.json").string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw_data("load_bundle: bad manifest: " + std::string(e.what()));
    }

    InversionBundle bundle;
    bundle.prompt = parse_prompt(j.at("prompt").get<std::string>());
    bundle.estimated_age = j.at("estimated_age").get<int>();
    bundle.inference_steps = j.at("inference_steps").get<int>();
    bundle.config.guidance_w = j.at("guidance_w").get<double>();
    bundle.config.inner_iterations = j.at("inner_iterations").get<int>();
    bundle.config.inner_lr = j.at("inner_lr").get<double>();
    bundle.config.early_stop_loss = j.at("early_stop_loss").get<double>();
    bundle.reconstruction_psnr = j.at("reconstruction_psnr").get<double>();
    bundle.z0_hash = j.at("z0_hash").get<std::uint64_t>();
    bundle.null_schedule.per_step_final_loss = j.at("per_step_final_loss").get<std::vector<double>>();

    bundle.z_T = read_f32_blob(dir / "z_T.bin", backbone.latent_shape());
    auto emb_shape = backbone.text_embedding_shape();
    for (int i = 0; i < bundle.inference_steps; ++i)
        bundle.null_schedule.embeddings.push_back(
            read_f32_blob(dir / ("null_" + std::to_string(i) + ".bin"), emb_shape));
    return bundle;
}

}  // namespace fading
