// Command-line front end. Talks to the library exclusively through the C
// API; JSON config files are strict (unknown keys abort) and command-line
// flags override config values.
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <variant>

#include "CLI11.hpp"
#include "fading/fading.h"
#include "json.hpp"

namespace {

constexpr std::size_t kErrLen = 1024;

int fail(const char* err) {
    std::cerr << "error: " << err << "\n";
    return FADING_ERR_COMPUTE;
}

// Binds config keys to already-registered CLI11 options so a config value
// applies only when the flag was not given on the command line.
struct ConfigBinder {
    using Setter = std::function<void(const nlohmann::json&)>;
    std::map<std::string, std::pair<CLI::Option*, Setter>> keys;

    template <typename T>
    void bind(const std::string& key, CLI::Option* opt, T& target) {
        keys[key] = {opt, [&target](const nlohmann::json& v) { target = v.get<T>(); }};
    }

    // Returns an exit code (0 = ok, 2 = bad config).
    int apply(const std::string& path, const std::string& section) const {
        if (path.empty()) return 0;
        std::ifstream f(path);
        if (!f) {
            std::cerr << "error: cannot read config " << path << "\n";
            return FADING_ERR_DATA;
        }
        nlohmann::json j;
        try {
            f >> j;
        } catch (const std::exception& e) {
            std::cerr << "error: bad config JSON: " << e.what() << "\n";
            return FADING_ERR_DATA;
        }
        for (const auto& [sec, body] : j.items()) {
            if (!body.is_object()) {
                std::cerr << "error: config section '" << sec << "' must be an object\n";
                return FADING_ERR_USAGE;
            }
            if (sec != section) continue;
            for (const auto& [key, value] : body.items()) {
                auto it = keys.find(key);
                if (it == keys.end()) {
                    std::cerr << "error: unknown config key '" << sec << "." << key << "'\n";
                    return FADING_ERR_USAGE;
                }
                if (it->second.first->count() == 0) {
                    try {
                        it->second.second(value);
                    } catch (const std::exception& e) {
                        std::cerr << "error: config key '" << sec << "." << key << "': " << e.what() << "\n";
                        return FADING_ERR_USAGE;
                    }
                }
            }
        }
        return 0;
    }
};

void write_provenance(const std::string& out_dir, const std::string& command, const nlohmann::json& args) {
    if (out_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    nlohmann::json j;
    j["command"] = command;
    j["version"] = fading_version();
    j["args"] = args;
    j["wall_clock_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
    std::ofstream f(std::filesystem::path(out_dir) / "run.json");
    if (f) f << j.dump(2) << "\n";
}

struct ModelGuard {
    fading_model* model = nullptr;
    ~ModelGuard() { fading_model_close(model); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Face age editing via diffusion inversion and attention-controlled resampling"};
    app.require_subcommand(1);
    app.set_version_flag("--version", fading_version());

    char err[kErrLen] = {0};
    int rc = 0;

    // --- toy prepare / toy train -------------------------------------
    auto* toy = app.add_subcommand("toy", "Toy dataset and backbone workflows");
    toy->require_subcommand(1);

    {
        auto* prep = toy->add_subcommand("prepare", "Render the procedural toy dataset");
        auto state = std::make_shared<std::tuple<std::string, std::string, int, std::uint64_t>>("", "", 150, 0);
        auto binder = std::make_shared<ConfigBinder>();
        auto* cfg_opt = prep->add_option("--config", std::get<0>(*state), "JSON config file");
        binder->bind("out", prep->add_option("--out", std::get<1>(*state), "output directory"), std::get<1>(*state));
        binder->bind("n", prep->add_option("--n", std::get<2>(*state), "sample count"), std::get<2>(*state));
        binder->bind("seed", prep->add_option("--seed", std::get<3>(*state), "RNG seed"), std::get<3>(*state));
        (void)cfg_opt;
        prep->callback([state, binder, &rc, &err] {
            auto& [cfg, out, n, seed] = *state;
            if ((rc = binder->apply(cfg, "toy_prepare"))) return;
            if (out.empty()) {
                std::cerr << "error: --out is required\n";
                rc = FADING_ERR_USAGE;
                return;
            }
            rc = fading_toy_prepare(out.c_str(), n, seed, err, kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            write_provenance(out, "toy prepare", {{"n", n}, {"seed", seed}});
        });
    }

    struct ToyTrainArgs {
        std::string cfg, data, ckpt;
        int steps = 4000, batch = 4;
        double lr = 2e-3;
        std::uint64_t seed = 0;
    };
    {
        auto* tr = toy->add_subcommand("train", "Train the toy diffusion backbone");
        auto a = std::make_shared<ToyTrainArgs>();
        auto binder = std::make_shared<ConfigBinder>();
        tr->add_option("--config", a->cfg, "JSON config file");
        binder->bind("data", tr->add_option("--data", a->data, "prepared dataset directory"), a->data);
        binder->bind("ckpt", tr->add_option("--ckpt", a->ckpt, "output checkpoint directory"), a->ckpt);
        binder->bind("steps", tr->add_option("--steps", a->steps, "optimizer steps"), a->steps);
        binder->bind("batch", tr->add_option("--batch", a->batch, "batch size"), a->batch);
        binder->bind("lr", tr->add_option("--lr", a->lr, "learning rate"), a->lr);
        binder->bind("seed", tr->add_option("--seed", a->seed, "RNG seed"), a->seed);
        tr->callback([a, binder, &rc, &err] {
            if ((rc = binder->apply(a->cfg, "toy_train"))) return;
            if (a->data.empty() || a->ckpt.empty()) {
                std::cerr << "error: --data and --ckpt are required\n";
                rc = FADING_ERR_USAGE;
                return;
            }
            rc = fading_toy_train(a->data.c_str(), a->ckpt.c_str(), a->steps, a->batch, a->lr, a->seed, err,
                                  kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            write_provenance(a->ckpt, "toy train",
                             {{"data", a->data}, {"steps", a->steps}, {"batch", a->batch}, {"lr", a->lr},
                              {"seed", a->seed}});
        });
    }

    // --- specialize ---------------------------------------------------
    struct SpecArgs {
        std::string cfg, ckpt, data, out;
        int steps = 150, batch = 2;
        double lr = 5e-6;
        bool no_double_prompt = false;
        std::uint64_t seed = 0;
    };
    {
        auto* sp = app.add_subcommand("specialize", "Age-aware fine-tuning of a checkpoint");
        auto a = std::make_shared<SpecArgs>();
        auto binder = std::make_shared<ConfigBinder>();
        sp->add_option("--config", a->cfg, "JSON config file");
        binder->bind("ckpt", sp->add_option("--ckpt", a->ckpt, "input checkpoint directory"), a->ckpt);
        binder->bind("data", sp->add_option("--data", a->data, "dataset directory"), a->data);
        binder->bind("out", sp->add_option("--out", a->out, "output checkpoint directory"), a->out);
        binder->bind("steps", sp->add_option("--steps", a->steps, "optimizer steps"), a->steps);
        binder->bind("batch", sp->add_option("--batch", a->batch, "batch size"), a->batch);
        binder->bind("lr", sp->add_option("--lr", a->lr, "learning rate"), a->lr);
        binder->bind("no_double_prompt",
                     sp->add_flag("--no-double-prompt", a->no_double_prompt,
                                  "train with the age-specific prompt only"),
                     a->no_double_prompt);
        binder->bind("seed", sp->add_option("--seed", a->seed, "RNG seed"), a->seed);
        sp->callback([a, binder, &rc, &err] {
            if ((rc = binder->apply(a->cfg, "specialize"))) return;
            if (a->ckpt.empty() || a->data.empty() || a->out.empty()) {
                std::cerr << "error: --ckpt, --data and --out are required\n";
                rc = FADING_ERR_USAGE;
                return;
            }
            ModelGuard m;
            rc = fading_model_open(a->ckpt.c_str(), &m.model, err, kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            rc = fading_specialize(m.model, a->data.c_str(), a->out.c_str(), a->steps, a->batch, a->lr,
                                   a->no_double_prompt ? 0 : 1, a->seed, err, kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            write_provenance(a->out, "specialize",
                             {{"ckpt", a->ckpt}, {"data", a->data}, {"steps", a->steps}, {"batch", a->batch},
                              {"lr", a->lr}, {"double_prompt", !a->no_double_prompt}, {"seed", a->seed}});
        });
    }

    // --- invert -------------------------------------------------------
    struct InvertArgs {
        std::string cfg, ckpt, image, out;
        int age = 0, steps = 50, null_iters = 10;
        double w = 7.5;
        bool no_ep = false, no_ia = false;
    };
    {
        auto* iv = app.add_subcommand("invert", "Invert an image to a reusable bundle");
        auto a = std::make_shared<InvertArgs>();
        auto binder = std::make_shared<ConfigBinder>();
        iv->add_option("--config", a->cfg, "JSON config file");
        binder->bind("ckpt", iv->add_option("--ckpt", a->ckpt, "checkpoint directory"), a->ckpt);
        binder->bind("image", iv->add_option("--image", a->image, "input PNG"), a->image);
        binder->bind("out", iv->add_option("--out", a->out, "output bundle directory"), a->out);
        binder->bind("age", iv->add_option("--age", a->age, "age override (0 = run the estimator)"), a->age);
        binder->bind("steps", iv->add_option("--steps", a->steps, "sampling steps"), a->steps);
        binder->bind("null_iters",
                     iv->add_option("--null-iters", a->null_iters, "inner iterations per sampling step"),
                     a->null_iters);
        binder->bind("w", iv->add_option("--w", a->w, "guidance scale for replay"), a->w);
        binder->bind("no_ep", iv->add_flag("--no-ep", a->no_ep, "disable gendered subject nouns"), a->no_ep);
        binder->bind("no_ia", iv->add_flag("--no-ia", a->no_ia, "invert under the age-agnostic prompt"),
                     a->no_ia);
        iv->callback([a, binder, &rc, &err] {
            if ((rc = binder->apply(a->cfg, "invert"))) return;
            if (a->ckpt.empty() || a->image.empty() || a->out.empty()) {
                std::cerr << "error: --ckpt, --image and --out are required\n";
                rc = FADING_ERR_USAGE;
                return;
            }
            ModelGuard m;
            rc = fading_model_open(a->ckpt.c_str(), &m.model, err, kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            rc = fading_invert(m.model, a->image.c_str(), a->age, a->no_ia ? 0 : 1, a->no_ep ? 0 : 1, a->steps,
                               a->null_iters, a->w, a->out.c_str(), err, kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            write_provenance(a->out, "invert",
                             {{"ckpt", a->ckpt}, {"image", a->image}, {"age", a->age}, {"steps", a->steps},
                              {"null_iters", a->null_iters}, {"w", a->w}, {"enhanced", !a->no_ep},
                              {"initial_age", !a->no_ia}});
        });
    }

    // --- edit ---------------------------------------------------------
    struct EditArgs {
        std::string cfg, ckpt, bundle, out;
        int target_age = 0;
        double ratio = 0.8, w = 7.5;
        bool no_ep = false;
    };
    {
        auto* ed = app.add_subcommand("edit", "Resample a bundle toward a target age");
        auto a = std::make_shared<EditArgs>();
        auto binder = std::make_shared<ConfigBinder>();
        ed->add_option("--config", a->cfg, "JSON config file");
        binder->bind("ckpt", ed->add_option("--ckpt", a->ckpt, "checkpoint directory"), a->ckpt);
        binder->bind("bundle", ed->add_option("--bundle", a->bundle, "inversion bundle directory"), a->bundle);
        binder->bind("target_age", ed->add_option("--target-age", a->target_age, "target age in years"),
                     a->target_age);
        binder->bind("ratio", ed->add_option("--ratio", a->ratio, "fraction of steps with injected attention"),
                     a->ratio);
        binder->bind("w", ed->add_option("--w", a->w, "guidance scale"), a->w);
        binder->bind("no_ep", ed->add_flag("--no-ep", a->no_ep, "disable gendered subject nouns"), a->no_ep);
        binder->bind("out", ed->add_option("--out", a->out, "output PNG"), a->out);
        ed->callback([a, binder, &rc, &err] {
            if ((rc = binder->apply(a->cfg, "edit"))) return;
            if (a->ckpt.empty() || a->bundle.empty() || a->out.empty() || a->target_age == 0) {
                std::cerr << "error: --ckpt, --bundle, --target-age and --out are required\n";
                rc = FADING_ERR_USAGE;
                return;
            }
            ModelGuard m;
            rc = fading_model_open(a->ckpt.c_str(), &m.model, err, kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            rc = fading_edit(m.model, a->bundle.c_str(), a->target_age, a->ratio, a->w, a->no_ep ? 0 : 1,
                             a->out.c_str(), err, kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            write_provenance(std::filesystem::path(a->out).parent_path().string(), "edit",
                             {{"ckpt", a->ckpt}, {"bundle", a->bundle}, {"target_age", a->target_age},
                              {"ratio", a->ratio}, {"w", a->w}, {"enhanced", !a->no_ep}});
        });
    }

    // --- eval ---------------------------------------------------------
    struct EvalArgs {
        std::string cfg, orig, edited, targets, out;
        int subset_size = 100, subsets = 100;
        std::uint64_t seed = 0;
    };
    {
        auto* ev = app.add_subcommand("eval", "Metrics over aligned original/edited images");
        auto a = std::make_shared<EvalArgs>();
        auto binder = std::make_shared<ConfigBinder>();
        ev->add_option("--config", a->cfg, "JSON config file");
        binder->bind("orig_dir", ev->add_option("--orig-dir", a->orig, "original images"), a->orig);
        binder->bind("edited_dir", ev->add_option("--edited-dir", a->edited, "edited images"), a->edited);
        binder->bind("targets", ev->add_option("--targets", a->targets, "CSV: filename,target_age"), a->targets);
        binder->bind("out", ev->add_option("--out", a->out, "report directory"), a->out);
        binder->bind("subset_size", ev->add_option("--subset-size", a->subset_size, "KID subset size"),
                     a->subset_size);
        binder->bind("subsets", ev->add_option("--subsets", a->subsets, "KID subset count"), a->subsets);
        binder->bind("seed", ev->add_option("--seed", a->seed, "KID subsampling seed"), a->seed);
        ev->callback([a, binder, &rc, &err] {
            if ((rc = binder->apply(a->cfg, "eval"))) return;
            if (a->orig.empty() || a->edited.empty() || a->targets.empty() || a->out.empty()) {
                std::cerr << "error: --orig-dir, --edited-dir, --targets and --out are required\n";
                rc = FADING_ERR_USAGE;
                return;
            }
            rc = fading_eval(a->orig.c_str(), a->edited.c_str(), a->targets.c_str(), a->out.c_str(),
                             a->subset_size, a->subsets, a->seed, err, kErrLen);
            if (rc) {
                fail(err);
                return;
            }
            write_provenance(a->out, "eval",
                             {{"orig_dir", a->orig}, {"edited_dir", a->edited}, {"targets", a->targets},
                              {"subset_size", a->subset_size}, {"subsets", a->subsets}, {"seed", a->seed}});
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : FADING_ERR_USAGE;
    }
    return rc;
}
