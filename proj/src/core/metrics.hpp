#pragma once

#include <filesystem>
#include <optional>

#include "regressor.hpp"

namespace fading {

double age_mae(const std::vector<double>& predictions, const std::vector<double>& targets);

// 100 * matches / total over categorical label pairs.
double attribute_preservation(const std::vector<std::string>& orig_labels,
                              const std::vector<std::string>& edited_labels);

// Variance of the 3x3 Laplacian response; higher means sharper. This is a
// stand-in for proprietary blur scores, so absolute values are not
// comparable across backends.
double blur_score(const Tensor& image);

struct KidConfig {
    int subset_size = 100;
    int num_subsets = 100;
    std::uint64_t seed = 0;
};

// Unbiased MMD^2 with polynomial kernel (a.b/d + 1)^3, averaged over
// seeded random subsets; may be slightly negative. Reported x100 in
// tables.
double kid(const std::vector<std::vector<double>>& features_x, const std::vector<std::vector<double>>& features_y,
           const KidConfig& config);

struct EvalCell {
    std::string group;  // age-group label or "all"
    std::optional<double> mae;
    std::optional<double> gender_preservation;
    std::optional<double> smile_preservation;
    std::optional<double> expression_preservation;
    std::optional<double> blur;
    std::optional<double> kid_x100;  // absent when the group has too few samples
    int n = 0;
};

struct EvalReport {
    std::vector<EvalCell> groups;  // one per age group, in table order
    EvalCell aggregate;            // group == "all"
    KidConfig kid_config;
    std::string extractor_descriptor;
    std::string estimator_descriptor;
};

struct EvalSample {
    Tensor original;
    Tensor edited;
    int target_age = 0;
};

struct EvalAdapters {
    const AgeEstimatorAdapter* age = nullptr;
    const LabelClassifierAdapter* gender = nullptr;
    const LabelClassifierAdapter* smile = nullptr;
    const LabelClassifierAdapter* expression = nullptr;
    const FeatureExtractor* extractor = nullptr;
};

// Per-age-group (by target age) and aggregate metrics; KID is computed
// between originals and edits within the same group and skipped when the
// group is smaller than the subset size.
EvalReport evaluate_run(const std::vector<EvalSample>& samples, const EvalAdapters& adapters,
                        const KidConfig& kid_config);

void write_report_json(const EvalReport& report, const std::filesystem::path& path);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report_json(const std::filesystem::path& path);

}  // namespace fading
