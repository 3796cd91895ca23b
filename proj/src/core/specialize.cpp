#include "specialize.hpp"

#include <fstream>

namespace fading {

std::pair<PromptSpec, PromptSpec> build_training_prompts(int age) {
    return {build_prompt(std::nullopt, std::nullopt, false), build_prompt(age, std::nullopt, false)};
}

static double sq_norm_err(const Tensor& pred, const Tensor& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc;
}

double double_prompt_loss(const ToyBackbone& backbone, const Tensor& z0, int age, const Tensor& eps,
                          const Tensor& eps_prime, int t, int t_prime, bool double_prompt) {
    NoiseSchedule schedule = backbone.schedule();
    auto [prompt_p, prompt_pa] = build_training_prompts(age);
    double loss = 0.0;
    if (double_prompt) {
        Tensor z_t = q_sample(z0, eps, t, schedule);
        Tensor pred = backbone.predict_noise(z_t, t, backbone.encode_prompt(prompt_p).embedding);
        loss += sq_norm_err(pred, eps);
    }
    Tensor z_tp = q_sample(z0, eps_prime, t_prime, schedule);
    Tensor pred = backbone.predict_noise(z_tp, t_prime, backbone.encode_prompt(prompt_pa).embedding);
    loss += sq_norm_err(pred, eps_prime);
    if (!std::isfinite(loss)) throw_compute("double_prompt_loss: non-finite loss");
    return loss;
}

std::unique_ptr<ToyBackbone> finetune(const ToyBackbone& backbone, const ToyDataset& dataset,
                                      const SpecializationConfig& config, std::vector<FinetuneStepLog>* log) {
    if (dataset.samples.empty()) throw_data("finetune: empty dataset");
    if (config.steps < 0 || config.batch_size < 1 || !(config.learning_rate > 0.0))
        throw_usage("finetune: bad config");

    auto model = backbone.clone();
    if (config.steps == 0) return model;

    NoiseSchedule schedule = model->schedule();
    Rng rng(config.rng_seed * 0x9E3779B97F4A7C15ull + 17);
    Adam opt({config.learning_rate, config.adam_beta1, config.adam_beta2});
    auto trainable = [](const std::string& name) { return !ToyBackbone::is_text_param(name); };

    for (int step = 0; step < config.steps; ++step) {
        std::map<std::string, Tensor> grads;
        FinetuneStepLog entry;
        entry.step = step;
        for (int bi = 0; bi < config.batch_size; ++bi) {
            int idx = rng.uniform_int(0, static_cast<int>(dataset.samples.size()) - 1);
            const ToySample& sample = dataset.samples[static_cast<std::size_t>(idx)];
            int alpha = central_age(age_group_of(sample.age));
            auto [prompt_p, prompt_pa] = build_training_prompts(alpha);
            Tensor z0 = model->encode_image(sample.image);

            // both loss terms share z0 but draw independent (eps, t)
            struct Term {
                const PromptSpec* prompt;
                double* log_slot;
            };
            std::vector<Term> terms;
            if (config.double_prompt) terms.push_back({&prompt_p, &entry.loss_p});
            terms.push_back({&prompt_pa, &entry.loss_p_alpha});

            for (const Term& term : terms) {
                int t = rng.uniform_int(1, schedule.total_train_steps);
                Tensor eps(model->latent_shape());
                rng.fill_normal(eps);
                Tensor z_t = q_sample(z0, eps, t, schedule);
                Tape tape;
                auto bind = model->bind(tape, trainable);
                Tape::NodeId pred = tape.input(std::move(z_t), false);
                pred = model->forward(tape, pred, t, tape.input(model->encode_prompt(*term.prompt).embedding, false),
                                      bind);
                Tape::NodeId loss = tape.mse_loss(pred, tape.input(std::move(eps), false));
                double lv = tape.value(loss)[0];
                if (!std::isfinite(lv)) throw_compute("finetune: non-finite loss at step " + std::to_string(step));
                *term.log_slot += lv / config.batch_size;
                tape.backward(loss);
                for (const auto& [name, id] : bind.ids) {
                    if (!trainable(name)) continue;
                    const Tensor& g = tape.grad(id);
                    auto [it, fresh] = grads.try_emplace(name, g.shape);
                    for (std::size_t i = 0; i < g.numel(); ++i) it->second[i] += g[i] / config.batch_size;
                }
            }
        }
        opt.step(model->params(), grads);
        if (log) log->push_back(entry);
    }
    return model;
}

void write_finetune_log(const std::vector<FinetuneStepLog>& log, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw_data("cannot write finetune log: " + path.string());
    os << "step,loss_P,loss_Palpha\n";
    for (const auto& e : log) os << e.step << "," << e.loss_p << "," << e.loss_p_alpha << "\n";
}

double heldout_double_prompt_loss(const ToyBackbone& backbone, const ToyDataset& dataset, std::uint64_t seed,
                                  int draws) {
    NoiseSchedule schedule = backbone.schedule();
    Rng rng(seed);
    double acc = 0.0;
    for (int k = 0; k < draws; ++k) {
        const ToySample& sample = dataset.samples[static_cast<std::size_t>(k) % dataset.samples.size()];
        Tensor z0 = backbone.encode_image(sample.image);
        int alpha = central_age(age_group_of(sample.age));
        Tensor eps(backbone.latent_shape()), eps_prime(backbone.latent_shape());
        rng.fill_normal(eps);
        rng.fill_normal(eps_prime);
        int t = rng.uniform_int(1, schedule.total_train_steps);
        int tp = rng.uniform_int(1, schedule.total_train_steps);
        acc += double_prompt_loss(backbone, z0, alpha, eps, eps_prime, t, tp);
    }
    return acc / draws;
}

}  // namespace fading
