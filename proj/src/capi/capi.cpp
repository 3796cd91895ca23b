#include "fading/fading.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "core/edit.hpp"
#include "core/image_io.hpp"
#include "core/metrics.hpp"
#include "core/specialize.hpp"
#include "core/train.hpp"

using namespace fading;

struct fading_model {
    std::unique_ptr<ToyBackbone> backbone;
};

namespace {

void set_err(char* err, size_t err_len, const std::string& msg) {
    if (!err || err_len == 0) return;
    std::size_t n = std::min(msg.size(), err_len - 1);
    std::memcpy(err, msg.data(), n);
    err[n] = '\0';
}

template <typename F>
int guard(char* err, size_t err_len, F&& f) {
    try {
        f();
        set_err(err, err_len, "");
        return FADING_OK;
    } catch (const Error& e) {
        set_err(err, err_len, e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        set_err(err, err_len, e.what());
        return FADING_ERR_COMPUTE;
    }
}

const ToyBackbone& model_ref(const fading_model* model) {
    if (!model || !model->backbone) throw_usage("null model handle");
    return *model->backbone;
}

std::optional<Gender> gender_from_noun(const std::string& noun) {
    if (noun == "man" || noun == "boy") return Gender::male;
    if (noun == "woman" || noun == "girl") return Gender::female;
    return std::nullopt;
}

Gender classify_toy_gender(const Tensor& image) {
    ToyGenderOracle oracle;
    return classify_gender(oracle, image);
}

}  // namespace

extern "C" {

const char* fading_version(void) { return "0.1.0"; }

int fading_toy_prepare(const char* out_dir, int num_samples, uint64_t seed, char* err, size_t err_len) {
    return guard(err, err_len, [&] {
        if (!out_dir) throw_usage("toy prepare: output directory required");
        ToyDatasetSpec spec;
        spec.num_samples = num_samples;
        spec.rng_seed = seed;
        if (num_samples < 1) throw_usage("toy prepare: sample count must be positive");
        save_toy_dataset(generate_toy_dataset(spec), out_dir);
    });
}

int fading_toy_train(const char* data_dir, const char* ckpt_dir, int steps, int batch_size, double lr,
                     uint64_t seed, char* err, size_t err_len) {
    return guard(err, err_len, [&] {
        if (!data_dir || !ckpt_dir) throw_usage("toy train: data and checkpoint directories required");
        ToyDataset ds = load_toy_dataset(data_dir);
        ToyTrainConfig cfg;
        cfg.steps = steps;
        cfg.batch_size = batch_size;
        cfg.lr = lr;
        cfg.seed = seed;
        if (steps < 0 || batch_size < 1) throw_usage("toy train: bad steps/batch");
        std::vector<double> losses;
        auto model = train_toy_backbone(ds, cfg, &losses);
        model->save(ckpt_dir);
        std::ofstream log(std::filesystem::path(ckpt_dir) / "train_loss.csv");
        log << "step,loss\n";
        for (std::size_t i = 0; i < losses.size(); ++i) log << i << ',' << losses[i] << '\n';
    });
}

int fading_model_open(const char* ckpt_dir, fading_model** out, char* err, size_t err_len) {
    return guard(err, err_len, [&] {
        if (!ckpt_dir || !out) throw_usage("model open: checkpoint directory and out handle required");
        auto model = std::make_unique<fading_model>();
        model->backbone = ToyBackbone::load(ckpt_dir);
        *out = model.release();
    });
}

void fading_model_close(fading_model* model) { delete model; }

int fading_model_hash(const fading_model* model, uint64_t* out_hash, char* err, size_t err_len) {
    return guard(err, err_len, [&] {
        if (!out_hash) throw_usage("model hash: null output");
        *out_hash = model_ref(model).params().hash();
    });
}

int fading_specialize(const fading_model* model, const char* data_dir, const char* out_ckpt_dir, int steps,
                      int batch_size, double lr, int double_prompt, uint64_t seed, char* err, size_t err_len) {
    return guard(err, err_len, [&] {
        if (!data_dir || !out_ckpt_dir) throw_usage("specialize: data and output directories required");
        ToyDataset ds = load_toy_dataset(data_dir);
        SpecializationConfig cfg;
        cfg.steps = steps;
        cfg.batch_size = batch_size;
        cfg.learning_rate = lr;
        cfg.double_prompt = double_prompt != 0;
        cfg.rng_seed = seed;
        if (steps < 0 || batch_size < 1) throw_usage("specialize: bad steps/batch");
        std::vector<FinetuneStepLog> log;
        auto tuned = finetune(model_ref(model), ds, cfg, &log);
        tuned->save(out_ckpt_dir);
        write_finetune_log(log, std::filesystem::path(out_ckpt_dir) / "finetune_loss.csv");
    });
}

int fading_invert(const fading_model* model, const char* image_png, int age_override, int use_initial_age,
                  int use_enhanced_prompts, int inference_steps, int null_opt_iterations, double guidance_w,
                  const char* bundle_dir, char* err, size_t err_len) {
    return guard(err, err_len, [&] {
        if (!image_png || !bundle_dir) throw_usage("invert: image path and bundle directory required");
        if (inference_steps < 1) throw_usage("invert: need at least one sampling step");
        const ToyBackbone& backbone = model_ref(model);
        Tensor image = read_png_gray(image_png);

        std::optional<Gender> gender;
        if (use_enhanced_prompts) gender = classify_toy_gender(image);

        int age = 0;
        PromptSpec prompt;
        if (use_initial_age) {
            age = age_override > 0 ? std::min(age_override, kMaxAge)
                                   : estimate_age(ToyAgeRegressor::frozen(), image);
            prompt = build_prompt(age, gender, use_enhanced_prompts != 0);
        } else {
            prompt = build_prompt(std::nullopt, gender, use_enhanced_prompts != 0);
        }

        NullOptConfig cfg;
        cfg.inner_iterations = null_opt_iterations;
        cfg.guidance_w = guidance_w;
        NoiseSchedule schedule = backbone.schedule();
        StepPlan plan = StepPlan::make(schedule, inference_steps);
        InversionBundle bundle = invert_image(backbone, image, prompt, age, cfg, plan, schedule);
        save_bundle(bundle, bundle_dir);
    });
}

int fading_edit(const fading_model* model, const char* bundle_dir, int target_age, double replace_ratio,
                double guidance_w, int use_enhanced_prompts, const char* out_png, char* err, size_t err_len) {
    return guard(err, err_len, [&] {
        if (!bundle_dir || !out_png) throw_usage("edit: bundle directory and output path required");
        if (target_age < 1 || target_age > kMaxAge)
            throw_usage("edit: target age " + std::to_string(target_age) + " outside [1, " +
                        std::to_string(kMaxAge) + "]");
        const ToyBackbone& backbone = model_ref(model);
        NoiseSchedule schedule = backbone.schedule();
        InversionBundle bundle = load_bundle(bundle_dir, backbone);
        StepPlan plan = StepPlan::make(schedule, bundle.inference_steps);

        Tensor reconstruction;
        AttentionRecord record = record_reference_attention(backbone, bundle, plan, schedule, &reconstruction);

        std::optional<Gender> gender;
        if (use_enhanced_prompts) {
            gender = gender_from_noun(bundle.prompt.subject_noun);
            if (!gender) gender = classify_toy_gender(reconstruction);
        }
        PromptSpec target_prompt = build_prompt(target_age, gender, use_enhanced_prompts != 0);

        EditConfig cfg;
        cfg.replace_ratio = replace_ratio;
        cfg.guidance_w = guidance_w;
        cfg.use_enhanced_prompts = use_enhanced_prompts != 0;
        Tensor edited = edit_with_injection(backbone, bundle, record, target_prompt, cfg, plan, schedule);
        write_png_gray(out_png, edited);
    });
}

int fading_eval(const char* orig_dir, const char* edited_dir, const char* targets_csv, const char* out_dir,
                int kid_subset_size, int kid_num_subsets, uint64_t seed, char* err, size_t err_len) {
    return guard(err, err_len, [&] {
        if (!orig_dir || !edited_dir || !targets_csv || !out_dir)
            throw_usage("eval: original/edited directories, targets CSV and output directory required");

        std::map<std::string, int> targets;
        {
            std::ifstream f(targets_csv);
            if (!f) throw_data("eval: cannot read " + std::string(targets_csv));
            std::string line;
            std::getline(f, line);  // header
            while (std::getline(f, line)) {
                if (line.empty()) continue;
                auto comma = line.find(',');
                if (comma == std::string::npos) throw_data("eval: bad targets row: " + line);
                targets[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
            }
        }

        auto list_pngs = [](const std::filesystem::path& dir) {
            std::vector<std::string> names;
            if (!std::filesystem::is_directory(dir)) throw_data("eval: not a directory: " + dir.string());
            for (const auto& e : std::filesystem::directory_iterator(dir))
                if (e.path().extension() == ".png") names.push_back(e.path().filename().string());
            std::sort(names.begin(), names.end());
            return names;
        };
        std::vector<std::string> orig_names = list_pngs(orig_dir);
        if (orig_names != list_pngs(edited_dir))
            throw_data("eval: original and edited directories list different files");

        std::vector<EvalSample> samples;
        for (const auto& name : orig_names) {
            auto it = targets.find(name);
            if (it == targets.end()) throw_data("eval: no target age for " + name);
            EvalSample s;
            s.original = read_png_gray(std::filesystem::path(orig_dir) / name);
            s.edited = read_png_gray(std::filesystem::path(edited_dir) / name);
            s.target_age = it->second;
            samples.push_back(std::move(s));
        }

        ToyGenderOracle gender;
        ToySmileOracle smile;
        ToyExpressionOracle expression;
        ToyFeatureExtractor extractor;
        EvalAdapters adapters;
        adapters.age = &ToyAgeRegressor::frozen();
        adapters.gender = &gender;
        adapters.smile = &smile;
        adapters.expression = &expression;
        adapters.extractor = &extractor;

        KidConfig kid_cfg;
        kid_cfg.subset_size = kid_subset_size;
        kid_cfg.num_subsets = kid_num_subsets;
        kid_cfg.seed = seed;

        EvalReport report = evaluate_run(samples, adapters, kid_cfg);
        std::filesystem::create_directories(out_dir);
        write_report_json(report, std::filesystem::path(out_dir) / "report.json");
        write_report_csv(report, std::filesystem::path(out_dir) / "report.csv");
    });
}

}  // extern "C"
