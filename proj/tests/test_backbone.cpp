#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "core/blob_io.hpp"
#include "fixtures.hpp"

using namespace fading;

namespace {

Tensor sample_latent(const Backbone& b, std::uint64_t seed) {
    Tensor z(b.latent_shape());
    Rng rng(seed);
    rng.fill_normal(z);
    return z;
}

}  // namespace

TEST_CASE("toy encoder and decoder are an identity pair with clamping") {
    const ToyBackbone& b = testfix::small_trained_backbone();
    const ToySample& s = testfix::small_dataset().samples[0];
    Tensor z = b.encode_image(s.image);
    CHECK(max_abs_diff(z, s.image) == 0.0);
    CHECK(max_abs_diff(b.decode_latent(z), s.image) == 0.0);

    Tensor wild(b.latent_shape());
    wild.fill(3.0f);
    Tensor clamped = b.decode_latent(wild);
    for (float v : clamped.data) CHECK(v == 1.0f);

    Tensor bad({1, 7, 7});
    CHECK_THROWS_AS((void)b.encode_image(bad), Error);
}

TEST_CASE("prompt encoding is deterministic with one span per word") {
    const ToyBackbone& b = testfix::small_trained_backbone();
    PromptSpec p = build_prompt(25, std::nullopt, false);
    TextEmbedding e1 = b.encode_prompt(p);
    TextEmbedding e2 = b.encode_prompt(p);
    CHECK(tensor_hash(e1.embedding) == tensor_hash(e2.embedding));
    REQUIRE(e1.token_spans.size() == p.words.size());
    for (std::size_t w = 0; w < p.words.size(); ++w) {
        CHECK(e1.token_spans[w].first == static_cast<int>(w));
        CHECK(e1.token_spans[w].second == static_cast<int>(w) + 1);
    }
    CHECK(e1.embedding.shape == b.text_embedding_shape());

    PromptSpec alien = p;
    alien.words[0] = "painting";
    CHECK_THROWS_AS((void)b.encode_prompt(alien), Error);
}

TEST_CASE("noise prediction validates shapes and timestep range") {
    const ToyBackbone& b = testfix::small_trained_backbone();
    Tensor z = sample_latent(b, 1);
    Tensor cond = b.null_embedding();
    CHECK_THROWS_AS((void)b.predict_noise(z, 0, cond), Error);
    CHECK_THROWS_AS((void)b.predict_noise(z, 1001, cond), Error);
    Tensor bad({1, 7, 7});
    CHECK_THROWS_AS((void)b.predict_noise(bad, 10, cond), Error);
    CHECK(b.predict_noise(z, 10, cond).shape == b.latent_shape());
}

TEST_CASE("recording attention never perturbs the prediction") {
    const ToyBackbone& b = testfix::small_trained_backbone();
    Tensor z = sample_latent(b, 2);
    Tensor cond = b.encode_prompt(build_prompt(60, std::nullopt, false)).embedding;

    Tensor plain = b.predict_noise(z, 400, cond);

    AttentionRecord rec;
    AttentionProbe probe;
    probe.mode = AttentionProbe::Mode::record;
    probe.store = &rec;
    probe.step_cursor = 0;
    probe.layer_filter = b.default_layer_filter();
    Tensor recorded = b.predict_noise(z, 400, cond, &probe);

    CHECK(tensor_hash(plain) == tensor_hash(recorded));
    REQUIRE(rec.maps.size() == b.default_layer_filter().size());

    // Every recorded map is a probability distribution over the tokens.
    for (const auto& [key, m] : rec.maps) {
        REQUIRE(m.shape.size() == 3);
        const int pixels = m.shape[1], tokens = m.shape[2];
        for (int p = 0; p < pixels; ++p) {
            double sum = 0.0;
            for (int t = 0; t < tokens; ++t) sum += m[static_cast<std::size_t>(p) * tokens + t];
            CHECK(std::abs(sum - 1.0) <= 1e-5);
        }
    }
}

TEST_CASE("injecting a pass's own maps reproduces it bitwise") {
    const ToyBackbone& b = testfix::small_trained_backbone();
    Tensor z = sample_latent(b, 3);
    Tensor cond = b.encode_prompt(build_prompt(30, std::nullopt, false)).embedding;

    AttentionRecord rec;
    AttentionProbe record_probe;
    record_probe.mode = AttentionProbe::Mode::record;
    record_probe.store = &rec;
    record_probe.layer_filter = b.default_layer_filter();
    Tensor base = b.predict_noise(z, 200, cond, &record_probe);

    AttentionProbe inject_probe;
    inject_probe.mode = AttentionProbe::Mode::inject;
    inject_probe.store = &rec;
    inject_probe.layer_filter = b.default_layer_filter();
    Tensor injected = b.predict_noise(z, 200, cond, &inject_probe);

    CHECK(tensor_hash(base) == tensor_hash(injected));
}

TEST_CASE("injecting with a missing stored map fails loudly") {
    const ToyBackbone& b = testfix::small_trained_backbone();
    Tensor z = sample_latent(b, 4);
    AttentionRecord empty;
    AttentionProbe probe;
    probe.mode = AttentionProbe::Mode::inject;
    probe.store = &empty;
    probe.layer_filter = b.default_layer_filter();
    CHECK_THROWS_AS((void)b.predict_noise(z, 100, b.null_embedding(), &probe), Error);
}

TEST_CASE("checkpoints round-trip bit-for-bit") {
    namespace fs = std::filesystem;
    const ToyBackbone& b = testfix::small_trained_backbone();
    fs::path dir = fs::temp_directory_path() / "fading_ckpt_rt";
    fs::remove_all(dir);
    b.save(dir);
    auto back = ToyBackbone::load(dir);
    CHECK(back->params().hash() == b.params().hash());
    CHECK(back->codec().vocab() == b.codec().vocab());

    Tensor z = sample_latent(b, 5);
    Tensor cond = b.null_embedding();
    CHECK(tensor_hash(b.predict_noise(z, 321, cond)) == tensor_hash(back->predict_noise(z, 321, cond)));
    fs::remove_all(dir);

    CHECK_THROWS_AS((void)ToyBackbone::load(dir / "missing"), Error);
}

TEST_CASE("training beats the zero predictor on held-out denoising") {
    const ToyBackbone& trained = testfix::small_trained_backbone();
    const ToyDataset& ds = testfix::small_dataset();

    double trained_loss = heldout_denoise_loss(trained, ds, 99);

    // Zero-predictor baseline evaluated on the same draws.
    NoiseSchedule schedule = trained.schedule();
    Rng rng(99);
    double zero_loss = 0.0;
    int draws = 64;
    for (int k = 0; k < draws; ++k) {
        (void)rng.uniform_int(1, schedule.total_train_steps);
        Tensor eps(trained.latent_shape());
        rng.fill_normal(eps);
        double acc = 0.0;
        for (float v : eps.data) acc += static_cast<double>(v) * v;
        zero_loss += acc / static_cast<double>(eps.numel());
    }
    zero_loss /= draws;

    CHECK(trained_loss < 0.5 * zero_loss);
}

TEST_CASE("training is reproducible and rejects bad configs") {
    ToyTrainConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 2;
    cfg.seed = 17;
    auto a = train_toy_backbone(testfix::small_dataset(), cfg);
    auto b = train_toy_backbone(testfix::small_dataset(), cfg);
    CHECK(a->params().hash() == b->params().hash());

    std::vector<double> losses;
    cfg.steps = 2;
    auto logged = train_toy_backbone(testfix::small_dataset(), cfg, &losses);
    REQUIRE(losses.size() == 2);
    for (double l : losses) CHECK(std::isfinite(l));

    cfg.batch_size = 0;
    CHECK_THROWS_AS((void)train_toy_backbone(testfix::small_dataset(), cfg), Error);
}
