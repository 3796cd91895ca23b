#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "fading/fading.h"

namespace fs = std::filesystem;

namespace {

struct Tmp {
    fs::path dir;
    explicit Tmp(const char* name) : dir(fs::temp_directory_path() / name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Tmp() { fs::remove_all(dir); }
    std::string sub(const char* leaf) const { return (dir / leaf).string(); }
};

}  // namespace

TEST_CASE("version string is present") {
    const char* v = fading_version();
    REQUIRE(v != nullptr);
    CHECK(std::strlen(v) > 0);
}

TEST_CASE("error paths report the usage/data taxonomy") {
    char err[256];

    CHECK(fading_toy_prepare(nullptr, 10, 0, err, sizeof err) == FADING_ERR_USAGE);
    CHECK(fading_toy_prepare("/tmp/fading_capi_x", 0, 0, err, sizeof err) == FADING_ERR_USAGE);
    CHECK(std::strlen(err) > 0);

    fading_model* model = nullptr;
    CHECK(fading_model_open("/nonexistent/fading_ckpt", &model, err, sizeof err) == FADING_ERR_DATA);
    CHECK(model == nullptr);
    CHECK(fading_model_open(nullptr, &model, err, sizeof err) == FADING_ERR_USAGE);

    uint64_t h = 0;
    CHECK(fading_model_hash(nullptr, &h, err, sizeof err) == FADING_ERR_USAGE);

    CHECK(fading_eval("/nope", "/nope", "/nope.csv", "/tmp/fading_capi_out", 2, 1, 0, err, sizeof err) ==
          FADING_ERR_DATA);
}

TEST_CASE("tiny end-to-end run through the shared library") {
    Tmp tmp("fading_capi_e2e");
    char err[512];
    err[0] = '\0';

    REQUIRE(fading_toy_prepare(tmp.sub("data").c_str(), 24, 5, err, sizeof err) == FADING_OK);
    REQUIRE(fs::exists(tmp.dir / "data" / "index.csv"));

    REQUIRE(fading_toy_train(tmp.sub("data").c_str(), tmp.sub("ckpt").c_str(), 40, 4, 2e-3, 5, err, sizeof err) ==
            FADING_OK);

    fading_model* model = nullptr;
    REQUIRE(fading_model_open(tmp.sub("ckpt").c_str(), &model, err, sizeof err) == FADING_OK);
    REQUIRE(model != nullptr);

    uint64_t h1 = 0, h2 = 0;
    CHECK(fading_model_hash(model, &h1, err, sizeof err) == FADING_OK);
    CHECK(fading_model_hash(model, &h2, err, sizeof err) == FADING_OK);
    CHECK(h1 == h2);
    CHECK(h1 != 0);

    REQUIRE(fading_specialize(model, tmp.sub("data").c_str(), tmp.sub("ckpt_spec").c_str(), 2, 2, 1e-4, 1, 5, err,
                              sizeof err) == FADING_OK);
    fading_model* spec = nullptr;
    REQUIRE(fading_model_open(tmp.sub("ckpt_spec").c_str(), &spec, err, sizeof err) == FADING_OK);
    uint64_t hs = 0;
    CHECK(fading_model_hash(spec, &hs, err, sizeof err) == FADING_OK);
    CHECK(hs != h1);

    // Invert the first dataset image and edit it to 80.
    std::string image;
    {
        std::ifstream idx(tmp.dir / "data" / "index.csv");
        std::string header, row;
        std::getline(idx, header);
        REQUIRE(std::getline(idx, row));
        image = (tmp.dir / "data" / row.substr(0, row.find(','))).string();
    }
    REQUIRE(fading_invert(spec, image.c_str(), 30, 1, 0, 4, 1, 7.5, tmp.sub("bundle").c_str(), err, sizeof err) ==
            FADING_OK);
    REQUIRE(fs::exists(tmp.dir / "bundle" / "manifest.json"));

    REQUIRE(fading_edit(spec, tmp.sub("bundle").c_str(), 80, 0.8, 7.5, 0, tmp.sub("edited.png").c_str(), err,
                        sizeof err) == FADING_OK);
    REQUIRE(fs::exists(tmp.dir / "edited.png"));

    CHECK(fading_edit(spec, tmp.sub("bundle").c_str(), 0, 0.8, 7.5, 0, tmp.sub("bad.png").c_str(), err, sizeof err) ==
          FADING_ERR_USAGE);

    // Evaluate a one-image identity "run": original and edited directories
    // both hold the source image.
    fs::create_directories(tmp.dir / "orig");
    fs::create_directories(tmp.dir / "edit");
    fs::copy_file(image, tmp.dir / "orig" / "a.png");
    fs::copy_file(tmp.dir / "edited.png", tmp.dir / "edit" / "a.png");
    {
        std::ofstream csv(tmp.dir / "targets.csv");
        csv << "filename,target_age\na.png,80\n";
    }
    REQUIRE(fading_eval(tmp.sub("orig").c_str(), tmp.sub("edit").c_str(), tmp.sub("targets.csv").c_str(),
                        tmp.sub("report").c_str(), 2, 1, 0, err, sizeof err) == FADING_OK);
    CHECK(fs::exists(tmp.dir / "report" / "report.json"));
    CHECK(fs::exists(tmp.dir / "report" / "report.csv"));

    fading_model_close(spec);
    fading_model_close(model);
}
