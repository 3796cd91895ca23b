#include "metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace fading {
namespace {

const float* image_plane(const Tensor& image, int& h, int& w) {
    if (image.shape.size() == 3 && image.shape[0] == 1) {
        h = image.shape[1];
        w = image.shape[2];
    } else if (image.shape.size() == 2) {
        h = image.shape[0];
        w = image.shape[1];
    } else {
        throw_usage("blur_score: expected a single-channel image");
    }
    return image.ptr();
}

double poly3_kernel(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    double v = dot / static_cast<double>(a.size()) + 1.0;
    return v * v * v;
}

// First `count` positions of a seeded Fisher-Yates shuffle of 0..n-1. The
// seed mixes only the subset index and the set size, so swapping the two
// feature sets reproduces the same subsets.
std::vector<int> subset_indices(int n, int count, std::uint64_t seed, int subset_idx) {
    Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(subset_idx + 1)) ^
            (static_cast<std::uint64_t>(n) << 32));
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < count; ++i) {
        int j = rng.uniform_int(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(count));
    return idx;
}

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double age_mae(const std::vector<double>& predictions, const std::vector<double>& targets) {
    if (predictions.empty() || predictions.size() != targets.size())
        throw_usage("age_mae: prediction and target lists must be equal-length and non-empty");
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) acc += std::abs(predictions[i] - targets[i]);
    return acc / static_cast<double>(predictions.size());
}

double attribute_preservation(const std::vector<std::string>& orig_labels,
                              const std::vector<std::string>& edited_labels) {
    if (orig_labels.empty() || orig_labels.size() != edited_labels.size())
        throw_usage("attribute_preservation: label lists must be equal-length and non-empty");
    std::size_t matches = 0;
    for (std::size_t i = 0; i < orig_labels.size(); ++i)
        if (orig_labels[i] == edited_labels[i]) ++matches;
    return 100.0 * static_cast<double>(matches) / static_cast<double>(orig_labels.size());
}

double blur_score(const Tensor& image) {
    int h = 0, w = 0;
    const float* px = image_plane(image, h, w);
    if (h < 3 || w < 3) throw_usage("blur_score: image too small for a 3x3 Laplacian");

    std::vector<double> resp;
    resp.reserve(static_cast<std::size_t>((h - 2) * (w - 2)));
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            double c = px[y * w + x];
            double lap = px[(y - 1) * w + x] + px[(y + 1) * w + x] + px[y * w + x - 1] + px[y * w + x + 1] - 4.0 * c;
            resp.push_back(lap);
        }
    }
    double mean = std::accumulate(resp.begin(), resp.end(), 0.0) / static_cast<double>(resp.size());
    double var = 0.0;
    for (double r : resp) var += (r - mean) * (r - mean);
    return var / static_cast<double>(resp.size());
}

double kid(const std::vector<std::vector<double>>& features_x, const std::vector<std::vector<double>>& features_y,
           const KidConfig& config) {
    const int n = static_cast<int>(features_x.size());
    const int m = static_cast<int>(features_y.size());
    if (config.subset_size < 2) throw_usage("kid: subset size must be at least 2");
    if (config.num_subsets < 1) throw_usage("kid: need at least one subset");
    if (n < config.subset_size || m < config.subset_size)
        throw_usage("kid: subset size " + std::to_string(config.subset_size) + " exceeds a sample count (" +
                    std::to_string(n) + ", " + std::to_string(m) + ")");
    for (const auto& f : features_x)
        if (f.size() != features_x[0].size()) throw_data("kid: ragged feature rows");
    for (const auto& f : features_y)
        if (f.size() != features_x[0].size()) throw_data("kid: feature dimension mismatch between sets");

    const int s = config.subset_size;
    double total = 0.0;
    for (int rep = 0; rep < config.num_subsets; ++rep) {
        std::vector<int> ix = subset_indices(n, s, config.seed, rep);
        std::vector<int> iy = subset_indices(m, s, config.seed, rep);

        double xx = 0.0, yy = 0.0, xy = 0.0;
        for (int i = 0; i < s; ++i) {
            for (int j = 0; j < s; ++j) {
                if (i != j) {
                    xx += poly3_kernel(features_x[static_cast<std::size_t>(ix[static_cast<std::size_t>(i)])],
                                       features_x[static_cast<std::size_t>(ix[static_cast<std::size_t>(j)])]);
                    yy += poly3_kernel(features_y[static_cast<std::size_t>(iy[static_cast<std::size_t>(i)])],
                                       features_y[static_cast<std::size_t>(iy[static_cast<std::size_t>(j)])]);
                }
                xy += poly3_kernel(features_x[static_cast<std::size_t>(ix[static_cast<std::size_t>(i)])],
                                   features_y[static_cast<std::size_t>(iy[static_cast<std::size_t>(j)])]);
            }
        }
        double denom_pairs = static_cast<double>(s) * (s - 1);
        total += xx / denom_pairs + yy / denom_pairs - 2.0 * xy / (static_cast<double>(s) * s);
    }
    return total / static_cast<double>(config.num_subsets);
}

EvalReport evaluate_run(const std::vector<EvalSample>& samples, const EvalAdapters& adapters,
                        const KidConfig& kid_config) {
    if (samples.empty()) throw_usage("evaluate_run: no samples");
    if (!adapters.age || !adapters.extractor) throw_usage("evaluate_run: age estimator and feature extractor required");

    struct GroupAcc {
        std::vector<double> preds, targets, blurs;
        std::vector<std::string> orig_gender, edit_gender, orig_smile, edit_smile, orig_expr, edit_expr;
        std::vector<std::vector<double>> feats_orig, feats_edit;
    };
    std::map<std::string, GroupAcc> acc;
    GroupAcc all;

    auto add = [&](GroupAcc& g, const EvalSample& s) {
        g.preds.push_back(adapters.age->estimate_raw(s.edited));
        g.targets.push_back(static_cast<double>(s.target_age));
        g.blurs.push_back(blur_score(s.edited));
        if (adapters.gender) {
            g.orig_gender.push_back(adapters.gender->classify(s.original).first);
            g.edit_gender.push_back(adapters.gender->classify(s.edited).first);
        }
        if (adapters.smile) {
            g.orig_smile.push_back(adapters.smile->classify(s.original).first);
            g.edit_smile.push_back(adapters.smile->classify(s.edited).first);
        }
        if (adapters.expression) {
            g.orig_expr.push_back(adapters.expression->classify(s.original).first);
            g.edit_expr.push_back(adapters.expression->classify(s.edited).first);
        }
        g.feats_orig.push_back(adapters.extractor->extract(s.original));
        g.feats_edit.push_back(adapters.extractor->extract(s.edited));
    };

    for (const auto& s : samples) {
        if (s.target_age < 1 || s.target_age > kMaxAge)
            throw_data("evaluate_run: target age " + std::to_string(s.target_age) + " outside [1, " +
                       std::to_string(kMaxAge) + "]");
        add(acc[age_group_of(s.target_age).label], s);
        add(all, s);
    }

    auto fill_cell = [&](const std::string& label, const GroupAcc& g) {
        EvalCell cell;
        cell.group = label;
        cell.n = static_cast<int>(g.preds.size());
        cell.mae = age_mae(g.preds, g.targets);
        cell.blur = mean_of(g.blurs);
        if (!g.orig_gender.empty()) cell.gender_preservation = attribute_preservation(g.orig_gender, g.edit_gender);
        if (!g.orig_smile.empty()) cell.smile_preservation = attribute_preservation(g.orig_smile, g.edit_smile);
        if (!g.orig_expr.empty())
            cell.expression_preservation = attribute_preservation(g.orig_expr, g.edit_expr);
        if (cell.n >= kid_config.subset_size) cell.kid_x100 = 100.0 * kid(g.feats_orig, g.feats_edit, kid_config);
        return cell;
    };

    EvalReport report;
    report.kid_config = kid_config;
    report.extractor_descriptor = adapters.extractor->descriptor();
    report.estimator_descriptor = adapters.age->descriptor();
    for (const auto& group : age_groups()) {
        auto it = acc.find(group.label);
        if (it != acc.end()) report.groups.push_back(fill_cell(group.label, it->second));
    }
    report.aggregate = fill_cell("all", all);
    return report;
}

namespace {

nlohmann::json cell_to_json(const EvalCell& c) {
    nlohmann::json j;
    j["group"] = c.group;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
        else j[key] = nullptr;
    };
    put("mae", c.mae);
    put("gender", c.gender_preservation);
    put("smile", c.smile_preservation);
    put("expression", c.expression_preservation);
    put("blur", c.blur);
    put("kid_x100", c.kid_x100);
    j["n"] = c.n;
    return j;
}

EvalCell cell_from_json(const nlohmann::json& j) {
    EvalCell c;
    c.group = j.at("group").get<std::string>();
    auto get = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return j.at(key).get<double>();
    };
    c.mae = get("mae");
    c.gender_preservation = get("gender");
    c.smile_preservation = get("smile");
    c.expression_preservation = get("expression");
    c.blur = get("blur");
    c.kid_x100 = get("kid_x100");
    c.n = j.at("n").get<int>();
    return c;
}

}  // namespace

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    j["groups"] = nlohmann::json::array();
    for (const auto& c : report.groups) j["groups"].push_back(cell_to_json(c));
    j["aggregate"] = cell_to_json(report.aggregate);
    j["kid"] = {{"subset_size", report.kid_config.subset_size},
                {"num_subsets", report.kid_config.num_subsets},
                {"seed", report.kid_config.seed}};
    j["extractor"] = report.extractor_descriptor;
    j["estimator"] = report.estimator_descriptor;
    std::ofstream f(path);
    if (!f) throw_data("write_report_json: cannot write " + path.string());
    f << j.dump(2) << "\n";
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw_data("write_report_csv: cannot write " + path.string());
    f << "group,mae,gender,smile,expression,blur,kid_x100,n\n";
    auto row = [&](const EvalCell& c) {
        auto num = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
        f << c.group << ',' << num(c.mae) << ',' << num(c.gender_preservation) << ',' << num(c.smile_preservation)
          << ',' << num(c.expression_preservation) << ',' << num(c.blur) << ',' << num(c.kid_x100) << ',' << c.n
          << '\n';
    };
    for (const auto& c : report.groups) row(c);
    row(report.aggregate);
}

EvalReport read_report_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw_data("read_report_json: cannot read " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw_data("read_report_json: bad JSON: " + std::string(e.what()));
    }
    EvalReport report;
    for (const auto& c : j.at("groups")) report.groups.push_back(cell_from_json(c));
    report.aggregate = cell_from_json(j.at("aggregate"));
    report.kid_config.subset_size = j.at("kid").at("subset_size").get<int>();
    report.kid_config.num_subsets = j.at("kid").at("num_subsets").get<int>();
    report.kid_config.seed = j.at("kid").at("seed").get<std::uint64_t>();
    report.extractor_descriptor = j.at("extractor").get<std::string>();
    report.estimator_descriptor = j.at("estimator").get<std::string>();
    return report;
}

}  // namespace fading
