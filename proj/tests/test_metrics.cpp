#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/metrics.hpp"
#include "core/toy_data.hpp"

using namespace fading;

TEST_CASE("mean absolute age error") {
    CHECK(age_mae({30, 50}, {40, 45}) == doctest::Approx(7.5));
    CHECK(age_mae({20, 20, 20}, {20, 20, 20}) == 0.0);
    CHECK(age_mae({1, 99, 13.47}, {5, 90, 20}) == doctest::Approx((4 + 9 + 6.53) / 3.0));
    CHECK_THROWS_AS((void)age_mae({}, {}), Error);
    CHECK_THROWS_AS((void)age_mae({1, 2}, {1}), Error);
    // Shifting both series leaves the error unchanged.
    CHECK(age_mae({35, 55}, {45, 50}) == age_mae({30, 50}, {40, 45}));
}

TEST_CASE("attribute preservation percentage") {
    CHECK(attribute_preservation({"male", "female"}, {"male", "female"}) == 100.0);
    CHECK(attribute_preservation({"male", "female"}, {"male", "male"}) == 50.0);
    CHECK(attribute_preservation({"a", "b", "c", "d"}, {"x", "y", "z", "w"}) == 0.0);
    CHECK_THROWS_AS((void)attribute_preservation({}, {}), Error);
    CHECK_THROWS_AS((void)attribute_preservation({"a"}, {}), Error);
}

TEST_CASE("Laplacian-variance blur score") {
    Tensor flat({1, 8, 8}, 0.37f);
    CHECK(blur_score(flat) == 0.0);

    // A checkerboard has maximal high-frequency content.
    Tensor checker({8, 8});
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) checker[r * 8 + c] = static_cast<float>((r + c) % 2);
    Tensor gradient({8, 8});
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) gradient[r * 8 + c] = static_cast<float>(c) / 7.0f;
    CHECK(blur_score(checker) > blur_score(gradient));

    // Box-blurring an image lowers its score.
    Tensor img({16, 16});
    Rng rng(123);
    for (float& v : img.data) v = static_cast<float>(rng.uniform());
    Tensor blurred({16, 16});
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            double acc = 0.0;
            int cnt = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= 16 || cc < 0 || cc >= 16) continue;
                    acc += img[rr * 16 + cc];
                    ++cnt;
                }
            blurred[r * 16 + c] = static_cast<float>(acc / cnt);
        }
    CHECK(blur_score(img) > blur_score(blurred));

    Tensor tiny({2, 2});
    CHECK_THROWS_AS((void)blur_score(tiny), Error);
}

namespace {

// Direct unbiased MMD^2 over full sets with the same polynomial kernel.
double mmd2_reference(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
    auto k = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
        double v = dot / static_cast<double>(a.size()) + 1.0;
        return v * v * v;
    };
    const std::size_t n = x.size(), m = y.size();
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) xx += k(x[i], x[j]);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) yy += k(y[i], y[j]);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) xy += k(x[i], y[j]);
    return xx / (n * (n - 1.0)) + yy / (m * (m - 1.0)) - 2.0 * xy / (n * m);
}

std::vector<std::vector<double>> gaussian_features(int n, int d, std::uint64_t seed, double shift = 0.0) {
    Rng rng(seed);
    std::vector<std::vector<double>> out(n, std::vector<double>(d));
    for (auto& row : out)
        for (double& v : row) v = rng.normal() + shift;
    return out;
}

}  // namespace

TEST_CASE("kernel distance hand case: d=1, X={0,0}, Y={1,1} gives exactly 7") {
    KidConfig cfg;
    cfg.subset_size = 2;
    cfg.num_subsets = 1;
    std::vector<std::vector<double>> x = {{0.0}, {0.0}};
    std::vector<std::vector<double>> y = {{1.0}, {1.0}};
    // k(0,0)=1, k(1,1)=8, k(0,1)=1 -> 1 + 8 - 2 = 7.
    CHECK(kid(x, y, cfg) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("kernel distance matches a brute-force evaluation on full subsets") {
    auto x = gaussian_features(40, 8, 1);
    auto y = gaussian_features(40, 8, 2, 0.5);
    KidConfig cfg;
    cfg.subset_size = 40;
    cfg.num_subsets = 1;
    CHECK(kid(x, y, cfg) == doctest::Approx(mmd2_reference(x, y)).epsilon(1e-10));
}

TEST_CASE("kernel distance is symmetric and near zero for matching distributions") {
    auto x = gaussian_features(120, 8, 3);
    auto y = gaussian_features(120, 8, 4);
    KidConfig cfg;
    cfg.subset_size = 60;
    cfg.num_subsets = 20;
    cfg.seed = 5;
    double xy = kid(x, y, cfg);
    double yx = kid(y, x, cfg);
    // The same subsets are drawn for both orders; only the floating-point
    // summation order differs.
    CHECK(xy == doctest::Approx(yx).epsilon(1e-12));
    CHECK(std::abs(xy) < 0.5);

    // A mean shift separates the sets by far more than the null spread.
    auto shifted = gaussian_features(120, 8, 6, 1.5);
    CHECK(kid(x, shifted, cfg) > 5.0);

    cfg.subset_size = 0;
    CHECK_THROWS_AS((void)kid(x, y, cfg), Error);
}

TEST_CASE("kernel distance is deterministic in the seed") {
    auto x = gaussian_features(50, 4, 7);
    auto y = gaussian_features(50, 4, 8);
    KidConfig cfg;
    cfg.subset_size = 20;
    cfg.num_subsets = 5;
    cfg.seed = 9;
    CHECK(kid(x, y, cfg) == kid(x, y, cfg));
    KidConfig other = cfg;
    other.seed = 10;
    CHECK(kid(x, y, cfg) != kid(x, y, other));
}

TEST_CASE("run evaluation over identity edits reports perfect preservation") {
    ToyDatasetSpec spec;
    spec.num_samples = 24;
    spec.rng_seed = 88;
    ToyDataset ds = generate_toy_dataset(spec);

    std::vector<EvalSample> samples;
    for (const auto& s : ds.samples) {
        EvalSample e;
        e.original = s.image;
        e.edited = s.image;
        e.target_age = s.age;
        samples.push_back(std::move(e));
    }

    const ToyAgeRegressor& age = ToyAgeRegressor::frozen();
    ToyGenderOracle gender;
    ToySmileOracle smile;
    ToyExpressionOracle expression;
    ToyFeatureExtractor extractor;
    EvalAdapters adapters{&age, &gender, &smile, &expression, &extractor};

    KidConfig kcfg;
    kcfg.subset_size = 8;
    kcfg.num_subsets = 4;
    EvalReport report = evaluate_run(samples, adapters, kcfg);

    CHECK(report.aggregate.group == "all");
    CHECK(report.aggregate.n == 24);
    CHECK(*report.aggregate.gender_preservation == 100.0);
    CHECK(*report.aggregate.smile_preservation == 100.0);
    CHECK(*report.aggregate.expression_preservation == 100.0);
    // Identity edits: the edited-image age error equals the frozen
    // estimator's own error, small but nonzero.
    CHECK(*report.aggregate.mae < 5.0);
    // Identical sets: the unbiased estimator's cross term still covers the
    // self pairs, so the value is small and non-positive, never positive.
    CHECK(*report.aggregate.kid_x100 <= 1e-9);
    // Only observed age groups appear, in table order.
    CHECK(report.groups.size() <= 10);
    CHECK(report.groups.size() >= 5);

    int grouped_n = 0;
    for (const auto& g : report.groups) {
        grouped_n += g.n;
        if (g.n > 0 && g.n < kcfg.subset_size) CHECK_FALSE(g.kid_x100.has_value());
    }
    CHECK(grouped_n == 24);
}

TEST_CASE("evaluation reports round-trip through JSON and render to CSV") {
    namespace fs = std::filesystem;
    EvalReport report;
    EvalCell cell;
    cell.group = "30-39";
    cell.mae = 3.25;
    cell.gender_preservation = 95.0;
    cell.blur = 12.5;
    cell.n = 7;
    report.groups.push_back(cell);
    report.aggregate = cell;
    report.aggregate.group = "all";
    report.extractor_descriptor = "toy-features";
    report.estimator_descriptor = "toy-age";

    fs::path dir = fs::temp_directory_path() / "fading_report_rt";
    fs::create_directories(dir);
    write_report_json(report, dir / "report.json");
    EvalReport back = read_report_json(dir / "report.json");
    REQUIRE(back.groups.size() == 1);
    CHECK(back.groups[0].group == "30-39");
    CHECK(*back.groups[0].mae == doctest::Approx(3.25));
    CHECK_FALSE(back.groups[0].kid_x100.has_value());
    CHECK(back.aggregate.n == 7);
    CHECK(back.extractor_descriptor == "toy-features");

    write_report_csv(report, dir / "report.csv");
    std::ifstream is(dir / "report.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == "group,mae,gender,smile,expression,blur,kid_x100,n");
    fs::remove_all(dir);
}
