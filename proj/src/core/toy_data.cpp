#include "toy_data.hpp"

#include <fstream>

#include "image_io.hpp"

namespace fading {

static Rng sample_rng(const ToyDatasetSpec& spec, int index) {
    std::uint64_t s = spec.rng_seed * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull * (static_cast<std::uint64_t>(index) + 1);
    return Rng(s ^ (s >> 31));
}

static int age_for_index(const ToyDatasetSpec& spec, int index) {
    if (spec.num_samples <= 1) return spec.age_lo;
    double frac = static_cast<double>(index % spec.num_samples) / (spec.num_samples - 1);
    return spec.age_lo + static_cast<int>(std::lround(frac * (spec.age_hi - spec.age_lo)));
}

ToySample render_toy_sample(const ToyDatasetSpec& spec, int index, int age_override) {
    if (spec.image_size != 32) throw_usage("toy renderer: image_size must be 32");
    if (spec.age_lo < 1 || spec.age_hi > kMaxAge || spec.age_lo > spec.age_hi)
        throw_usage("toy renderer: bad age range");
    const int S = spec.image_size;
    Rng rng = sample_rng(spec, index);

    ToySample s;
    s.age = age_override > 0 ? age_override : age_for_index(spec, index);
    double phase = rng.uniform(0.0, 6.283185307179586);
    double radius = rng.uniform(9.0, 11.0);
    double bright = rng.uniform(0.50, 0.60);
    int eye_dx = rng.uniform() < 0.5 ? 2 : 3;
    s.gender = rng.uniform() < 0.5 ? Gender::male : Gender::female;
    s.smile = rng.uniform() < 0.5;

    double a = static_cast<double>(s.age) / kMaxAge;
    double freq = 2.0 + 10.0 * a;       // stripe cycles across the image
    double thick = 0.6 + 3.4 * a;       // contour thickness in pixels

    s.image = Tensor({1, S, S});
    auto px = [&](int y, int x) -> float& { return s.image[static_cast<std::size_t>(y) * S + x]; };

    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            px(y, x) = static_cast<float>(bright + 0.18 * std::sin(6.283185307179586 * freq * x / S + phase));

    const double cx = S / 2.0, cy = S / 2.0;
    // soft 0.5 px edges keep pixel statistics continuous in age
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
            double disc = std::clamp(radius - thick * 0.5 + 0.5 - d, 0.0, 1.0);
            double ring = std::clamp(thick * 0.5 + 0.5 - std::abs(d - radius), 0.0, 1.0);
            double v = px(y, x);
            v = v + disc * (0.82 - v);
            v = v + ring * (0.08 - v);
            px(y, x) = static_cast<float>(v);
        }

    // eyes
    px(12, 16 - eye_dx) = 0.10f;
    px(12, 16 + eye_dx) = 0.10f;
    // mouth: neutral bar vs smile arc
    if (s.smile) {
        px(19, 13) = 0.15f;
        px(19, 19) = 0.15f;
        px(20, 14) = 0.15f;
        px(20, 18) = 0.15f;
        for (int x = 15; x <= 17; ++x) px(21, x) = 0.15f;
    } else {
        for (int x = 13; x <= 19; ++x) px(20, x) = 0.15f;
    }
    // gender marker in a top corner
    int x0 = s.gender == Gender::male ? 0 : S - 3;
    for (int y = 0; y < 3; ++y)
        for (int x = x0; x < x0 + 3; ++x) px(y, x) = 0.12f;

    for (auto& v : s.image.data) v = std::min(1.0f, std::max(0.0f, v));
    return s;
}

ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec) {
    if (spec.num_samples < 1) throw_usage("toy dataset: num_samples must be >= 1");
    ToyDataset ds;
    ds.spec = spec;
    ds.samples.reserve(static_cast<std::size_t>(spec.num_samples));
    for (int i = 0; i < spec.num_samples; ++i) ds.samples.push_back(render_toy_sample(spec, i));
    return ds;
}

Tensor age_feature_mask(const ToyDatasetSpec& spec, int index) {
    ToySample young = render_toy_sample(spec, index, spec.age_lo);
    ToySample old = render_toy_sample(spec, index, spec.age_hi);
    Tensor mask(young.image.shape);
    for (std::size_t i = 0; i < mask.numel(); ++i)
        mask[i] = std::abs(young.image[i] - old.image[i]) > 0.02f ? 1.0f : 0.0f;
    return mask;
}

void save_toy_dataset(const ToyDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "index.csv");
    if (!csv) throw_data("cannot write dataset index: " + (dir / "index.csv").string());
    csv << "filename,age\n";
    char name[32];
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        std::snprintf(name, sizeof(name), "img_%04zu.png", i);
        write_png_gray(dir / name, ds.samples[i].image);
        csv << name << "," << ds.samples[i].age << "\n";
    }
}

ToyDataset load_toy_dataset(const std::filesystem::path& dir) {
    std::ifstream csv(dir / "index.csv");
    if (!csv) throw_data("cannot open dataset index: " + (dir / "index.csv").string());
    std::string line;
    if (!std::getline(csv, line) || line != "filename,age")
        throw_data("unexpected dataset index header in " + dir.string());
    ToyDataset ds;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw_data("malformed index row: " + line);
        ToySample s;
        s.image = read_png_gray(dir / line.substr(0, comma));
        s.age = std::stoi(line.substr(comma + 1));
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw_data("dataset is empty: " + dir.string());
    ds.spec.num_samples = static_cast<int>(ds.samples.size());
    return ds;
}

}  // namespace fading
