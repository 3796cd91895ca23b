#include "train.hpp"

#include "regressor.hpp"

namespace fading {

void Adam::step(ParamSet& params, const std::map<std::string, Tensor>& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params.tensors) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        State& s = state_[name];
        if (s.m.numel() == 0) {
            s.m = Tensor(p.shape);
            s.v = Tensor(p.shape);
        }
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double gi = g[i];
            double m = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
            double v = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            s.m[i] = static_cast<float>(m);
            s.v[i] = static_cast<float>(v);
            p[i] -= static_cast<float>(cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps));
        }
    }
}

// Training prompt for one sample; the base model learns all noun words.
static PromptSpec training_prompt(const ToySample& s, Gender gender, bool enhanced) {
    return build_prompt(s.age, enhanced ? std::optional<Gender>(gender) : std::nullopt, enhanced);
}

std::unique_ptr<ToyBackbone> train_toy_backbone(const ToyDataset& dataset, const ToyTrainConfig& config,
                                                std::vector<double>* loss_log) {
    if (dataset.samples.empty()) throw_data("train: empty dataset");
    if (config.steps < 0 || config.batch_size < 1) throw_usage("train: bad config");

    ToyBackboneConfig bc;
    bc.seed = config.seed;
    Rng init_rng(config.seed ^ 0xC0FFEEull);
    auto backbone = std::make_unique<ToyBackbone>(bc, init_rng);
    NoiseSchedule schedule = backbone->schedule();

    ToyGenderOracle gender_oracle;
    std::vector<Gender> genders;
    genders.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) genders.push_back(classify_gender(gender_oracle, s.image));

    Rng rng(config.seed * 0x9E3779B97F4A7C15ull + 1);
    Adam opt({config.lr});

    for (int step = 0; step < config.steps; ++step) {
        std::map<std::string, Tensor> grads;
        double batch_loss = 0.0;
        for (int bi = 0; bi < config.batch_size; ++bi) {
            int idx = rng.uniform_int(0, static_cast<int>(dataset.samples.size()) - 1);
            const ToySample& sample = dataset.samples[static_cast<std::size_t>(idx)];
            int t = rng.uniform_int(1, schedule.total_train_steps);
            Tensor eps(backbone->latent_shape());
            rng.fill_normal(eps);
            Tensor z0 = backbone->encode_image(sample.image);
            Tensor z_t = q_sample(z0, eps, t, schedule);

            Tensor cond;
            if (rng.uniform() < config.cond_dropout) {
                cond = backbone->null_embedding();
            } else {
                bool enhanced = rng.uniform() < config.enhanced_prompt_frac;
                cond = backbone->encode_prompt(training_prompt(sample, genders[static_cast<std::size_t>(idx)], enhanced))
                           .embedding;
            }

            Tape tape;
            auto bind = backbone->bind(tape, [](const std::string&) { return true; });
            Tape::NodeId z_in = tape.input(std::move(z_t), false);
            Tape::NodeId c_in = tape.input(std::move(cond), false);
            Tape::NodeId pred = backbone->forward(tape, z_in, t, c_in, bind);
            Tape::NodeId loss = tape.mse_loss(pred, tape.input(std::move(eps), false));
            double lv = tape.value(loss)[0];
            if (!std::isfinite(lv))
                throw_compute("train: non-finite loss at step " + std::to_string(step));
            batch_loss += lv;
            tape.backward(loss);
            for (const auto& [name, id] : bind.ids) {
                const Tensor& g = tape.grad(id);
                auto [it, fresh] = grads.try_emplace(name, g.shape);
                for (std::size_t i = 0; i < g.numel(); ++i) it->second[i] += g[i] / config.batch_size;
            }
        }
        opt.step(backbone->params(), grads);
        if (loss_log) loss_log->push_back(batch_loss / config.batch_size);
    }
    return backbone;
}

double heldout_denoise_loss(const ToyBackbone& backbone, const ToyDataset& dataset, std::uint64_t seed, int draws) {
    NoiseSchedule schedule = backbone.schedule();
    Rng rng(seed);
    double acc = 0.0;
    for (int k = 0; k < draws; ++k) {
        const ToySample& sample = dataset.samples[static_cast<std::size_t>(k) % dataset.samples.size()];
        int t = rng.uniform_int(1, schedule.total_train_steps);
        Tensor eps(backbone.latent_shape());
        rng.fill_normal(eps);
        Tensor z_t = q_sample(backbone.encode_image(sample.image), eps, t, schedule);
        Tensor cond = backbone.encode_prompt(build_prompt(sample.age, std::nullopt, false)).embedding;
        Tensor pred = backbone.predict_noise(z_t, t, cond);
        acc += mse(pred, eps);
    }
    return acc / draws;
}

}  // namespace fading
