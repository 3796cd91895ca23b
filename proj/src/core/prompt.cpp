#include "prompt.hpp"

#include <iostream>
#include <sstream>

namespace fading {

static PromptSpec assemble(std::optional<std::string> age_word, std::string noun) {
    PromptSpec p;
    p.subject_noun = std::move(noun);
    if (age_word) {
        p.template_id = "aged";
        p.age_word = age_word;
        p.words = {"photo", "of", "a", *age_word, "year", "old", p.subject_noun};
        p.slots = {WordSlot::fixed, WordSlot::fixed, WordSlot::fixed, WordSlot::age,
                   WordSlot::fixed, WordSlot::fixed, WordSlot::noun};
    } else {
        p.template_id = "agnostic";
        p.words = {"photo", "of", "a", p.subject_noun};
        p.slots = {WordSlot::fixed, WordSlot::fixed, WordSlot::fixed, WordSlot::noun};
    }
    std::ostringstream os;
    for (std::size_t i = 0; i < p.words.size(); ++i) {
        if (i) os << ' ';
        os << p.words[i];
    }
    p.rendered = os.str();
    return p;
}

PromptSpec build_prompt(std::optional<int> age, std::optional<Gender> gender, bool enhanced) {
    if (age && (*age < 1 || *age > kMaxAge)) throw_usage("build_prompt: age out of [1, K]");
    std::string noun = "person";
    if (enhanced) {
        if (!gender) throw_usage("build_prompt: enhanced prompts require a gender");
        bool young = age && *age < 15;
        if (young)
            noun = *gender == Gender::male ? "boy" : "girl";
        else
            noun = *gender == Gender::male ? "man" : "woman";
    }
    std::optional<std::string> age_word;
    if (age) age_word = std::to_string(*age);
    return assemble(age_word, noun);
}

PromptSpec parse_prompt(const std::string& rendered) {
    std::istringstream is(rendered);
    std::vector<std::string> words;
    std::string w;
    while (is >> w) words.push_back(w);
    auto is_noun = [](const std::string& s) {
        return s == "person" || s == "man" || s == "woman" || s == "boy" || s == "girl";
    };
    if (words.size() == 4 && words[0] == "photo" && words[1] == "of" && words[2] == "a" && is_noun(words[3]))
        return assemble(std::nullopt, words[3]);
    if (words.size() == 7 && words[0] == "photo" && words[1] == "of" && words[2] == "a" &&
        words[4] == "year" && words[5] == "old" && is_noun(words[6]))
        return assemble(words[3], words[6]);
    throw_data("parse_prompt: not a recognized prompt template: '" + rendered + "'");
}

const std::vector<AgeGroup>& age_groups() {
    static const std::vector<AgeGroup> groups = {
        {"0-2", 0, 2, 1},    {"3-6", 3, 6, 5},    {"7-9", 7, 9, 8},     {"10-14", 10, 14, 12},
        {"15-19", 15, 19, 17}, {"20-29", 20, 29, 25}, {"30-39", 30, 39, 35}, {"40-49", 40, 49, 45},
        {"50-69", 50, 69, 60}, {"70+", 70, -1, 80},
    };
    return groups;
}

const AgeGroup& age_group_of(int age) {
    if (age < 0) throw_usage("age_group_of: negative age");
    for (const auto& g : age_groups())
        if (age >= g.lo && (g.hi < 0 || age <= g.hi)) return g;
    return age_groups().back();
}

const AgeGroup& age_group_by_label(const std::string& label) {
    for (const auto& g : age_groups())
        if (g.label == label) return g;
    throw_data("unknown age group label: " + label);
}

int central_age(const AgeGroup& group) { return group.central; }

int estimate_age(const AgeEstimatorAdapter& adapter, const Tensor& image) {
    double raw = adapter.estimate_raw(image);
    int years = static_cast<int>(std::lround(raw));
    return std::max(1, std::min(kMaxAge, years));
}

Gender classify_gender(const LabelClassifierAdapter& adapter, const Tensor& image, double* confidence) {
    auto [label, conf] = adapter.classify(image);
    if (conf < 0.6)
        std::cerr << "[fading] warning: gender classifier confidence " << conf << " below 0.6; using argmax\n";
    if (confidence) *confidence = conf;
    if (label == "male") return Gender::male;
    if (label == "female") return Gender::female;
    throw_data("gender classifier returned unknown label: " + label);
}

}  // namespace fading
