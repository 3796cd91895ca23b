#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "text.hpp"

namespace fading {

struct CrossAttentionLayerInfo {
    std::string id;
    int resolution = 0;  // spatial side length of the query grid
    int heads = 1;
};

// Per-step, per-layer cross-attention probability maps captured during a
// sampling pass. Step indices count sampling steps from the start of
// sampling (largest timestep first), 0-based.
struct AttentionRecord {
    std::map<std::pair<int, std::string>, Tensor> maps;  // (step, layer) -> (heads, pixels, tokens)
    std::vector<int> prompt_tokens;
    int step_count = 0;

    bool has(int step, const std::string& layer) const {
        return maps.count({step, layer}) != 0;
    }
};

// Probe context owned by exactly one running pass. The pass owner advances
// step_cursor; the backbone records or injects at every cross-attention
// layer in layer_filter.
struct AttentionProbe {
    enum class Mode { off, record, inject };

    Mode mode = Mode::off;
    AttentionRecord* store = nullptr;
    int step_cursor = 0;
    std::set<std::string> layer_filter;

    bool active_for(const std::string& layer) const {
        return mode != Mode::off && layer_filter.count(layer) != 0;
    }
};

// Diffusion backbone abstraction: noise predictor, autoencoder pair and
// text encoder, with cross-attention probing.
class Backbone {
public:
    virtual ~Backbone() = default;

    virtual std::vector<int> latent_shape() const = 0;
    virtual std::vector<int> text_embedding_shape() const = 0;  // (max_tokens, embed_dim)
    virtual std::vector<CrossAttentionLayerInfo> cross_attention_layers() const = 0;

    virtual Tensor encode_image(const Tensor& image) const = 0;
    virtual Tensor decode_latent(const Tensor& z) const = 0;
    virtual TextEmbedding encode_prompt(const PromptSpec& prompt) const = 0;
    virtual Tensor null_embedding() const = 0;

    // conditioning: (max_tokens, embed_dim), either a prompt embedding or a
    // (possibly optimized) null embedding.
    virtual Tensor predict_noise(const Tensor& z_t, int t, const Tensor& conditioning,
                                 AttentionProbe* probe = nullptr) const = 0;

    // Default layer filter for probing: every cross-attention layer at
    // resolution <= 32.
    std::set<std::string> default_layer_filter() const {
        std::set<std::string> f;
        for (const auto& l : cross_attention_layers())
            if (l.resolution <= 32) f.insert(l.id);
        return f;
    }
};

// Fixed-predictor stub used by tests and closed-form checks.
class StubBackbone : public Backbone {
public:
    StubBackbone(std::vector<int> latent_shape, Tensor fixed_eps)
        : latent_shape_(std::move(latent_shape)), eps_(std::move(fixed_eps)) {}

    static std::unique_ptr<StubBackbone> zero(std::vector<int> latent_shape) {
        Tensor eps(latent_shape);
        return std::make_unique<StubBackbone>(latent_shape, std::move(eps));
    }

    std::vector<int> latent_shape() const override { return latent_shape_; }
    std::vector<int> text_embedding_shape() const override { return {8, 16}; }
    std::vector<CrossAttentionLayerInfo> cross_attention_layers() const override { return {}; }

    Tensor encode_image(const Tensor& image) const override { return image; }
    Tensor decode_latent(const Tensor& z) const override { return z; }
    TextEmbedding encode_prompt(const PromptSpec& prompt) const override {
        TextEmbedding e;
        e.embedding = Tensor(text_embedding_shape());
        for (std::size_t i = 0; i < prompt.words.size(); ++i)
            e.token_spans.push_back({static_cast<int>(i), static_cast<int>(i) + 1});
        e.tokens.assign(static_cast<std::size_t>(text_embedding_shape()[0]), 0);
        return e;
    }
    Tensor null_embedding() const override { return Tensor(text_embedding_shape()); }

    Tensor predict_noise(const Tensor& z_t, int, const Tensor&, AttentionProbe*) const override {
        require_same_shape(z_t, eps_, "stub predict_noise");
        return eps_;
    }

private:
    std::vector<int> latent_shape_;
    Tensor eps_;
};

}  // namespace fading
