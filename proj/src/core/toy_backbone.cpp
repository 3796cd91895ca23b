#include "toy_backbone.hpp"

#include <fstream>

#include "blob_io.hpp"
#include "json.hpp"

namespace fading {

using nlohmann::json;

Tensor& ParamSet::at(const std::string& name) {
    for (auto& [n, t] : tensors)
        if (n == name) return t;
    throw_data("parameter not found: " + name);
}

const Tensor& ParamSet::at(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw_data("parameter not found: " + name);
}

bool ParamSet::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

std::uint64_t ParamSet::hash() const {
    return hash_matching([](const std::string&) { return true; });
}

std::uint64_t ParamSet::hash_matching(const std::function<bool(const std::string&)>& pred) const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [n, t] : tensors) {
        if (!pred(n)) continue;
        h ^= tensor_hash(t);
        h *= 1099511628211ull;
    }
    return h;
}

static Tensor randn(Rng& rng, std::vector<int> shape, float stddev) {
    Tensor t(std::move(shape));
    rng.fill_normal(t, stddev);
    return t;
}

static Tensor conv_init(Rng& rng, int cout, int cin, float gain = 1.0f) {
    float std = gain / std::sqrt(static_cast<float>(cin * 9));
    return randn(rng, {cout, cin, 3, 3}, std);
}

static Tensor mat_init(Rng& rng, int in, int out, float gain = 1.0f) {
    float std = gain / std::sqrt(static_cast<float>(in));
    return randn(rng, {in, out}, std);
}

ToyBackbone::ToyBackbone(ToyBackboneConfig cfg, Rng& rng) : cfg_(cfg) {
    const int F = cfg_.base_channels, C = cfg_.channels, E = cfg_.embed_dim, D = cfg_.attn_dim;
    const int Tt = cfg_.time_embed_dim, Th = 2 * cfg_.time_embed_dim;
    auto& p = params_.tensors;

    // Text tables. Numeral embeddings are initialized along a shared age
    // direction so nearby ages start out nearby in embedding space.
    Tensor tok = randn(rng, {codec_.vocab_size(), E}, 0.3f);
    {
        Tensor base = randn(rng, {E}, 0.5f);
        Tensor dir = randn(rng, {E}, 0.5f);
        int first = codec_.token_id("1");
        for (int k = 1; k <= kMaxAge; ++k) {
            float a = static_cast<float>(k) / kMaxAge;
            for (int e = 0; e < E; ++e)
                tok[static_cast<std::size_t>(first + k - 1) * E + e] =
                    base[static_cast<std::size_t>(e)] + a * dir[static_cast<std::size_t>(e)] +
                    0.05f * static_cast<float>(rng.normal());
        }
    }
    // Deliberately no positional table: conditioning is driven by token
    // identity alone, so a word contributes the same value vector wherever
    // it sits. Prompt templates place each word in its own column, and
    // position-independence keeps edits between templates of different
    // lengths well-behaved (a matched word's value does not drift just
    // because its column moved).
    p.push_back({"text.tok", std::move(tok)});

    p.push_back({"time.w1", mat_init(rng, Tt, Th)});
    p.push_back({"time.b1", Tensor({Th})});
    p.push_back({"time.w2", mat_init(rng, Th, Th)});
    p.push_back({"time.b2", Tensor({Th})});

    p.push_back({"enc1.conv1.w", conv_init(rng, F, C)});
    p.push_back({"enc1.conv1.b", Tensor({F})});
    p.push_back({"enc1.conv2.w", conv_init(rng, F, F)});
    p.push_back({"enc1.conv2.b", Tensor({F})});
    p.push_back({"enc1.time.w", mat_init(rng, Th, F)});
    p.push_back({"enc1.time.b", Tensor({F})});

    p.push_back({"down1.w", conv_init(rng, 2 * F, F)});
    p.push_back({"down1.b", Tensor({2 * F})});
    for (const char* layer : {"att16", "att8"}) {
        std::string l = layer;
        p.push_back({l + ".wq", mat_init(rng, 2 * F, D)});
        p.push_back({l + ".wk", mat_init(rng, E, D)});
        p.push_back({l + ".wv", mat_init(rng, E, D)});
        p.push_back({l + ".wo", Tensor({D, 2 * F})});  // zero start: attention fades in
    }
    p.push_back({"down2.w", conv_init(rng, 2 * F, 2 * F)});
    p.push_back({"down2.b", Tensor({2 * F})});
    p.push_back({"mid.time.w", mat_init(rng, Th, 2 * F)});
    p.push_back({"mid.time.b", Tensor({2 * F})});
    p.push_back({"mid.conv.w", conv_init(rng, 2 * F, 2 * F)});
    p.push_back({"mid.conv.b", Tensor({2 * F})});

    p.push_back({"up1.w", conv_init(rng, 2 * F, 2 * F)});
    p.push_back({"up1.b", Tensor({2 * F})});
    p.push_back({"up2.w", conv_init(rng, F, 2 * F)});
    p.push_back({"up2.b", Tensor({F})});
    p.push_back({"up2.time.w", mat_init(rng, Th, F)});
    p.push_back({"up2.time.b", Tensor({F})});

    p.push_back({"out.w", Tensor({C, F, 3, 3})});  // zero start: initial prediction is 0
    p.push_back({"out.b", Tensor({C})});
}

ToyBackbone::ToyBackbone(ToyBackboneConfig cfg, TextCodec codec, ParamSet params)
    : cfg_(cfg), codec_(std::move(codec)), params_(std::move(params)) {}

std::vector<CrossAttentionLayerInfo> ToyBackbone::cross_attention_layers() const {
    return {{"att16", cfg_.image_size / 2, 1}, {"att8", cfg_.image_size / 4, 1}};
}

Tensor ToyBackbone::encode_image(const Tensor& image) const {
    if (image.shape != latent_shape()) throw_data("encode_image: unexpected image shape");
    return image;  // pixel-space diffusion
}

Tensor ToyBackbone::decode_latent(const Tensor& z) const {
    if (z.shape != latent_shape()) throw_data("decode_latent: unexpected latent shape");
    Tensor out = z;
    for (auto& v : out.data) v = std::min(1.0f, std::max(0.0f, v));
    return out;
}

TextEmbedding ToyBackbone::encode_prompt(const PromptSpec& prompt) const {
    TextEmbedding e;
    e.tokens = codec_.tokenize(prompt.words, cfg_.max_tokens);
    const Tensor& tok = params_.at("text.tok");
    const int E = cfg_.embed_dim;
    e.embedding = Tensor({cfg_.max_tokens, E});
    for (int i = 0; i < cfg_.max_tokens; ++i)
        for (int c = 0; c < E; ++c)
            e.embedding[static_cast<std::size_t>(i) * E + c] =
                tok[static_cast<std::size_t>(e.tokens[static_cast<std::size_t>(i)]) * E + c];
    for (std::size_t w = 0; w < prompt.words.size(); ++w)
        e.token_spans.push_back({static_cast<int>(w), static_cast<int>(w) + 1});
    return e;
}

Tensor ToyBackbone::null_embedding() const {
    const Tensor& tok = params_.at("text.tok");
    const int E = cfg_.embed_dim;
    Tensor emb({cfg_.max_tokens, E});
    // Every column starts from the null token, plus a small fixed
    // per-column offset. Without the offset all columns are identical and
    // receive identical gradients during null-text optimization, so they
    // can never differentiate and the optimization loses almost all of
    // its capacity.
    Rng tie_break(0x6e756c6cu);
    for (int i = 0; i < cfg_.max_tokens; ++i)
        for (int c = 0; c < E; ++c)
            emb[static_cast<std::size_t>(i) * E + c] =
                tok[static_cast<std::size_t>(TextCodec::kNullId) * E + c] +
                0.01f * static_cast<float>(tie_break.normal());
    return emb;
}

Tensor ToyBackbone::time_features(int t) const {
    const int Tt = cfg_.time_embed_dim;
    const int half = Tt / 2;
    Tensor f({1, Tt});
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        f[static_cast<std::size_t>(i)] = static_cast<float>(std::sin(t * freq));
        f[static_cast<std::size_t>(half + i)] = static_cast<float>(std::cos(t * freq));
    }
    return f;
}

ToyBackbone::GraphBind ToyBackbone::bind(Tape& tape, const std::function<bool(const std::string&)>& trainable) const {
    GraphBind b;
    for (const auto& [name, t] : params_.tensors) b.ids[name] = tape.input(t, trainable(name));
    return b;
}

Tape::NodeId ToyBackbone::GraphBind::at(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw_data("graph bind: unknown parameter " + name);
    return it->second;
}

Tape::NodeId ToyBackbone::forward(Tape& tape, Tape::NodeId z, int t, Tape::NodeId cond, const GraphBind& b,
                                  AttentionProbe* probe) const {
    const int S = cfg_.image_size;
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(cfg_.attn_dim));

    const int Th = 2 * cfg_.time_embed_dim;

    // time embedding MLP
    Tape::NodeId tf = tape.input(time_features(t), false);
    Tape::NodeId th = tape.silu(tape.add(tape.matmul(tf, b.at("time.w1")), tape.reshape(b.at("time.b1"), {1, Th})));
    Tape::NodeId temb = tape.add(tape.matmul(th, b.at("time.w2")), tape.reshape(b.at("time.b2"), {1, Th}));

    auto time_bias = [&](const std::string& prefix, int width) {
        Tape::NodeId row =
            tape.add(tape.matmul(temb, b.at(prefix + ".w")), tape.reshape(b.at(prefix + ".b"), {1, width}));
        return tape.reshape(row, {width});
    };

    auto cross_attention = [&](Tape::NodeId x, const std::string& layer, int res) {
        Tape::NodeId att;
        bool probed = probe && probe->active_for(layer);
        if (probed && probe->mode == AttentionProbe::Mode::inject) {
            if (!probe->store || !probe->store->has(probe->step_cursor, layer))
                throw_compute("attention probe underflow: no stored map for step " +
                              std::to_string(probe->step_cursor) + " layer " + layer);
            const Tensor& m = probe->store->maps.at({probe->step_cursor, layer});
            Tensor flat({res * res, cfg_.max_tokens});
            if (m.numel() != flat.numel()) throw_data("injected attention map has wrong shape for " + layer);
            flat.data = m.data;
            att = tape.input(std::move(flat), false);
        } else {
            Tape::NodeId xp = tape.chw_to_pixc(x);
            Tape::NodeId q = tape.matmul(xp, b.at(layer + ".wq"));
            Tape::NodeId k = tape.matmul(cond, b.at(layer + ".wk"));
            Tape::NodeId scores = tape.scale(tape.matmul_nt(q, k), inv_sqrt_d);
            att = tape.softmax_rows(scores);
            if (probed && probe->mode == AttentionProbe::Mode::record) {
                Tensor m({1, res * res, cfg_.max_tokens});
                m.data = tape.value(att).data;
                probe->store->maps[{probe->step_cursor, layer}] = std::move(m);
            }
        }
        Tape::NodeId v = tape.matmul(cond, b.at(layer + ".wv"));
        Tape::NodeId o = tape.matmul(tape.matmul(att, v), b.at(layer + ".wo"));
        return tape.add(x, tape.pixc_to_chw(o, res, res));
    };

    // encoder, level 1 (C,S,S)
    Tape::NodeId h1 = tape.silu(tape.conv3x3(z, b.at("enc1.conv1.w"), b.at("enc1.conv1.b")));
    h1 = tape.conv3x3(h1, b.at("enc1.conv2.w"), b.at("enc1.conv2.b"));
    h1 = tape.silu(tape.add_channel_bias(h1, time_bias("enc1.time", cfg_.base_channels)));

    // level 2 (2F, S/2, S/2) with cross-attention
    Tape::NodeId d1 = tape.silu(tape.conv3x3(h1, b.at("down1.w"), b.at("down1.b"), 2));
    d1 = cross_attention(d1, "att16", S / 2);

    // bottleneck (2F, S/4, S/4)
    Tape::NodeId d2 = tape.conv3x3(d1, b.at("down2.w"), b.at("down2.b"), 2);
    d2 = tape.silu(tape.add_channel_bias(d2, time_bias("mid.time", 2 * cfg_.base_channels)));
    d2 = tape.silu(tape.conv3x3(d2, b.at("mid.conv.w"), b.at("mid.conv.b")));
    d2 = cross_attention(d2, "att8", S / 4);

    // decoder with skip connections
    Tape::NodeId u1 = tape.conv3x3(tape.upsample_nearest2(d2), b.at("up1.w"), b.at("up1.b"));
    u1 = tape.silu(tape.add(u1, d1));
    Tape::NodeId u2 = tape.conv3x3(tape.upsample_nearest2(u1), b.at("up2.w"), b.at("up2.b"));
    u2 = tape.add(u2, h1);
    u2 = tape.silu(tape.add_channel_bias(u2, time_bias("up2.time", cfg_.base_channels)));

    return tape.conv3x3(u2, b.at("out.w"), b.at("out.b"));
}

Tensor ToyBackbone::predict_noise(const Tensor& z_t, int t, const Tensor& conditioning, AttentionProbe* probe) const {
    if (z_t.shape != latent_shape()) throw_data("predict_noise: latent shape mismatch");
    if (conditioning.shape != text_embedding_shape()) throw_data("predict_noise: conditioning shape mismatch");
    if (t < 1 || t > cfg_.train_timesteps) throw_usage("predict_noise: timestep out of range");
    Tape tape;
    GraphBind b = bind(tape, [](const std::string&) { return false; });
    Tape::NodeId z = tape.input(z_t, false);
    Tape::NodeId c = tape.input(conditioning, false);
    Tape::NodeId out = forward(tape, z, t, c, b, probe);
    return tape.value(out);
}

void ToyBackbone::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "fading-toy-backbone";
    manifest["version"] = 1;
    manifest["config"] = {
        {"image_size", cfg_.image_size},     {"channels", cfg_.channels},
        {"base_channels", cfg_.base_channels}, {"embed_dim", cfg_.embed_dim},
        {"attn_dim", cfg_.attn_dim},         {"max_tokens", cfg_.max_tokens},
        {"time_embed_dim", cfg_.time_embed_dim},
        {"schedule_kind", to_string(cfg_.schedule_kind)},
        {"train_timesteps", cfg_.train_timesteps},
        {"beta_min", cfg_.beta_min},         {"beta_max", cfg_.beta_max},
        {"seed", cfg_.seed},
    };
    manifest["vocab"] = codec_.vocab();
    json tensors = json::array();
    for (const auto& [name, t] : params_.tensors) {
        std::string file = name + ".bin";
        tensors.push_back({{"name", name}, {"shape", t.shape}, {"file", file}});
        write_f32_blob(dir / file, t);
    }
    manifest["tensors"] = tensors;
    std::ofstream os(dir / "manifest.json");
    if (!os) throw_data("cannot write manifest: " + (dir / "manifest.json").string());
    os << manifest.dump(2) << "\n";
}

std::unique_ptr<ToyBackbone> ToyBackbone::load(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw_data("cannot open backbone manifest: " + (dir / "manifest.json").string());
    json manifest = json::parse(is);
    if (manifest.value("format", "") != "fading-toy-backbone")
        throw_data("not a toy backbone checkpoint: " + dir.string());
    const json& c = manifest.at("config");
    ToyBackboneConfig cfg;
    cfg.image_size = c.at("image_size");
    cfg.channels = c.at("channels");
    cfg.base_channels = c.at("base_channels");
    cfg.embed_dim = c.at("embed_dim");
    cfg.attn_dim = c.at("attn_dim");
    cfg.max_tokens = c.at("max_tokens");
    cfg.time_embed_dim = c.at("time_embed_dim");
    cfg.schedule_kind = schedule_kind_from_string(c.at("schedule_kind"));
    cfg.train_timesteps = c.at("train_timesteps");
    cfg.beta_min = c.at("beta_min");
    cfg.beta_max = c.at("beta_max");
    cfg.seed = c.at("seed");
    TextCodec codec(manifest.at("vocab").get<std::vector<std::string>>());
    ParamSet params;
    for (const auto& t : manifest.at("tensors")) {
        std::vector<int> shape = t.at("shape").get<std::vector<int>>();
        params.tensors.push_back({t.at("name"), read_f32_blob(dir / t.at("file").get<std::string>(), shape)});
    }
    return std::make_unique<ToyBackbone>(cfg, std::move(codec), std::move(params));
}

}  // namespace fading
