#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace fading {

inline constexpr int kMaxAge = 100;  // K

enum class Gender { male, female };

inline std::string to_string(Gender g) { return g == Gender::male ? "male" : "female"; }

enum class WordSlot { fixed, age, noun };

// Structured prompt: template with an optional age slot and a subject-noun
// slot. `rendered` is exactly the template with slots substituted and can
// be re-parsed back into the slots.
struct PromptSpec {
    std::string template_id;              // "aged" | "agnostic"
    std::optional<std::string> age_word;  // numeral string
    std::string subject_noun;             // person | man | woman | boy | girl
    std::string rendered;
    std::vector<std::string> words;
    std::vector<WordSlot> slots;

    bool operator==(const PromptSpec& o) const { return rendered == o.rendered; }
};

// Noun precedence with enhancement: age < 15 -> girl/boy, else woman/man;
// without enhancement the noun is always "person".
PromptSpec build_prompt(std::optional<int> age, std::optional<Gender> gender, bool enhanced);

// Inverse of build_prompt over rendered strings.
PromptSpec parse_prompt(const std::string& rendered);

struct AgeGroup {
    std::string label;
    int lo = 0;
    int hi = 0;  // inclusive; hi < 0 means open-ended (70+)
    int central = 0;
};

const std::vector<AgeGroup>& age_groups();
const AgeGroup& age_group_of(int age);
const AgeGroup& age_group_by_label(const std::string& label);
int central_age(const AgeGroup& group);

// Pluggable classifier adapters. Implementations must be deterministic
// for a fixed input and backend version.
class AgeEstimatorAdapter {
public:
    virtual ~AgeEstimatorAdapter() = default;
    virtual std::string descriptor() const = 0;
    virtual double estimate_raw(const Tensor& image) const = 0;
};

class LabelClassifierAdapter {
public:
    virtual ~LabelClassifierAdapter() = default;
    virtual std::string descriptor() const = 0;
    virtual std::pair<std::string, double> classify(const Tensor& image) const = 0;  // (label, confidence)
};

// Raw estimate clamped into [1, K].
int estimate_age(const AgeEstimatorAdapter& adapter, const Tensor& image);

// Argmax label regardless of confidence; confidences below 0.6 log a
// warning to stderr.
Gender classify_gender(const LabelClassifierAdapter& adapter, const Tensor& image, double* confidence = nullptr);

}  // namespace fading
