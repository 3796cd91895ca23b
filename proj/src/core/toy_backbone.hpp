#pragma once

#include <filesystem>
#include <functional>

#include "backbone.hpp"
#include "schedule.hpp"
#include "tape.hpp"

namespace fading {

struct ToyBackboneConfig {
    int image_size = 32;
    int channels = 1;
    int base_channels = 16;   // F; levels carry F and 2F channels
    int embed_dim = 16;       // text embedding width
    int attn_dim = 16;        // query/key width
    int max_tokens = 8;
    int time_embed_dim = 16;  // sinusoidal feature width (hidden is 2x)
    ScheduleKind schedule_kind = ScheduleKind::linear;
    int train_timesteps = 1000;
    double beta_min = 1e-4;
    double beta_max = 2e-2;
    std::uint64_t seed = 0;
};

// Named, ordered parameter set; ordering fixes checkpoint layout and the
// optimizer's update order.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
    std::uint64_t hash() const;
    std::uint64_t hash_matching(const std::function<bool(const std::string&)>& pred) const;
};

// Pixel-space toy diffusion backbone: identity autoencoder on
// (1, 32, 32) images, a two-level U-shaped noise predictor with
// cross-attention at 16x16 and 8x8, and an embedding-table text encoder.
class ToyBackbone : public Backbone {
public:
    ToyBackbone(ToyBackboneConfig cfg, Rng& init_rng);
    ToyBackbone(ToyBackboneConfig cfg, TextCodec codec, ParamSet params);

    std::vector<int> latent_shape() const override { return {cfg_.channels, cfg_.image_size, cfg_.image_size}; }
    std::vector<int> text_embedding_shape() const override { return {cfg_.max_tokens, cfg_.embed_dim}; }
    std::vector<CrossAttentionLayerInfo> cross_attention_layers() const override;

    Tensor encode_image(const Tensor& image) const override;
    Tensor decode_latent(const Tensor& z) const override;
    TextEmbedding encode_prompt(const PromptSpec& prompt) const override;
    Tensor null_embedding() const override;
    Tensor predict_noise(const Tensor& z_t, int t, const Tensor& conditioning,
                         AttentionProbe* probe = nullptr) const override;

    const ToyBackboneConfig& config() const { return cfg_; }
    const TextCodec& codec() const { return codec_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    NoiseSchedule schedule() const {
        return NoiseSchedule::make(cfg_.schedule_kind, cfg_.train_timesteps, cfg_.beta_min, cfg_.beta_max);
    }

    // Gradient-path API. bind() registers every parameter on the tape;
    // `trainable` decides which ones carry gradients.
    struct GraphBind {
        std::map<std::string, Tape::NodeId> ids;
        Tape::NodeId at(const std::string& name) const;
    };
    GraphBind bind(Tape& tape, const std::function<bool(const std::string&)>& trainable) const;
    Tape::NodeId forward(Tape& tape, Tape::NodeId z, int t, Tape::NodeId cond, const GraphBind& bind,
                         AttentionProbe* probe = nullptr) const;

    void save(const std::filesystem::path& dir) const;
    static std::unique_ptr<ToyBackbone> load(const std::filesystem::path& dir);

    std::unique_ptr<ToyBackbone> clone() const {
        return std::make_unique<ToyBackbone>(cfg_, codec_, params_);
    }

    // Parameters frozen during specialization (text encoder tables).
    static bool is_text_param(const std::string& name) { return name.rfind("text.", 0) == 0; }

private:
    Tensor time_features(int t) const;

    ToyBackboneConfig cfg_;
    TextCodec codec_;
    ParamSet params_;
};

}  // namespace fading
