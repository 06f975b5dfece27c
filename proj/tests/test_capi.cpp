#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "hdrfuse.h"
#include "hdrfuse/image.hpp"

namespace fs = std::filesystem;

namespace {

std::string workdir() {
    auto dir = fs::temp_directory_path() / "hdrfuse_capi";
    fs::create_directories(dir);
    return dir.string();
}

// Small architecture so the C API paths stay fast.
const char* kMicroConfig =
    "dtype = f64\n"
    "embed_dim = 8\n"
    "shallow_channels = 8\n"
    "num_ctb = 1\n"
    "cavits_per_ctb = 1\n"
    "window_size = 4\n"
    "heads = 2\n"
    "mlp_ratio = 2\n"
    "lce_reduction = 4\n";

}  // namespace

TEST_CASE("version and error strings") {
    CHECK(std::string(hdrfuse_version()).find("hdrfuse") != std::string::npos);
    CHECK(hdrfuse_last_error() != nullptr);
}

TEST_CASE("config presets") {
    char* text = nullptr;
    REQUIRE(hdrfuse_config_preset("tiny", &text) == HDRFUSE_OK);
    std::string tiny = text;
    hdrfuse_string_free(text);
    CHECK(tiny.find("embed_dim = 24") != std::string::npos);

    REQUIRE(hdrfuse_config_preset("full", &text) == HDRFUSE_OK);
    std::string full = text;
    hdrfuse_string_free(text);
    CHECK(full.find("num_ctb = 3") != std::string::npos);

    CHECK(hdrfuse_config_preset("huge", &text) == HDRFUSE_ERR_USAGE);
    CHECK(std::string(hdrfuse_last_error()).find("huge") != std::string::npos);
    CHECK(hdrfuse_config_preset(nullptr, &text) == HDRFUSE_ERR_USAGE);
}

TEST_CASE("model lifecycle through the C API") {
    hdrfuse_model* model = nullptr;
    REQUIRE(hdrfuse_model_create(kMicroConfig, 7, &model) == HDRFUSE_OK);
    REQUIRE(model != nullptr);

    uint64_t params = 0;
    CHECK(hdrfuse_model_param_count(model, &params) == HDRFUSE_OK);
    CHECK(params > 0);

    char* cfg = nullptr;
    CHECK(hdrfuse_model_config(model, &cfg) == HDRFUSE_OK);
    CHECK(std::string(cfg).find("dtype = f64") != std::string::npos);
    hdrfuse_string_free(cfg);

    int64_t step = -1;
    CHECK(hdrfuse_model_step(model, &step) == HDRFUSE_OK);
    CHECK(step == 0);

    std::string path = workdir() + "/micro.hdrt";
    CHECK(hdrfuse_model_save(model, path.c_str()) == HDRFUSE_OK);
    hdrfuse_model_free(model);

    hdrfuse_model* loaded = nullptr;
    REQUIRE(hdrfuse_model_load(path.c_str(), &loaded) == HDRFUSE_OK);
    uint64_t params2 = 0;
    CHECK(hdrfuse_model_param_count(loaded, &params2) == HDRFUSE_OK);
    CHECK(params2 == params);
    hdrfuse_model_free(loaded);

    CHECK(hdrfuse_model_load((workdir() + "/missing.hdrt").c_str(), &loaded) ==
          HDRFUSE_ERR_DATA);
    CHECK(hdrfuse_model_create("embed_dim = not_a_number\n", 0, &loaded) == HDRFUSE_ERR_USAGE);
}

TEST_CASE("synth, bracket, train, fuse, eval workflow") {
    std::string data = workdir() + "/data";
    fs::remove_all(data);
    fs::create_directories(data);
    for (int i = 0; i < 2; ++i) {
        std::string dir = data + "/sample_" + std::to_string(i);
        REQUIRE(hdrfuse_synth_sample(dir.c_str(), static_cast<uint64_t>(i), 32, 2, 0.1) ==
                HDRFUSE_OK);
        CHECK(fs::exists(dir + "/ldr_1.png"));
        CHECK(fs::exists(dir + "/exposure.txt"));
        CHECK(fs::exists(dir + "/gt.pfm"));
    }
    CHECK(hdrfuse_synth_sample((data + "/bad").c_str(), 0, 8, 0, 0.0) == HDRFUSE_ERR_USAGE);

    hdrfuse_model* model = nullptr;
    REQUIRE(hdrfuse_model_create(kMicroConfig, 3, &model) == HDRFUSE_OK);

    hdrfuse_train_options opt;
    hdrfuse_train_options_init(&opt);
    opt.steps = 4;
    opt.batch = 2;
    opt.patch = 16;
    opt.stride = 16;
    opt.probe_interval = 2;
    opt.use_perceptual = 1;
    std::string log = workdir() + "/train.csv";
    opt.log_csv = log.c_str();
    REQUIRE(hdrfuse_train(model, data.c_str(), &opt) == HDRFUSE_OK);
    {
        std::ifstream in(log);
        std::string header;
        std::getline(in, header);
        CHECK(header == "step,l_r,l_p,total,psnr_mu_probe");
        int lines = 0;
        std::string line;
        while (std::getline(in, line)) ++lines;
        CHECK(lines == 4);
    }
    int64_t step = 0;
    CHECK(hdrfuse_model_step(model, &step) == HDRFUSE_OK);
    CHECK(step == 4);

    SUBCASE("augmented training expands the patch orbit") {
        hdrfuse_train_options aug = opt;
        aug.steps = 1;
        aug.augment = 1;
        aug.log_csv = nullptr;
        CHECK(hdrfuse_train(model, data.c_str(), &aug) == HDRFUSE_OK);
    }

    hdrfuse_bracket* bracket = nullptr;
    REQUIRE(hdrfuse_bracket_load((data + "/sample_0").c_str(), &bracket) == HDRFUSE_OK);
    CHECK(hdrfuse_bracket_load((data + "/nope").c_str(), &bracket) == HDRFUSE_ERR_DATA);

    std::string pfm = workdir() + "/fused.pfm";
    std::string png = workdir() + "/fused.png";
    REQUIRE(hdrfuse_fuse(model, bracket, pfm.c_str(), png.c_str()) == HDRFUSE_OK);
    {
        hdrfuse::ImageF out = hdrfuse::read_pfm(pfm);
        CHECK(out.height == 32);
        CHECK(out.width == 32);
        hdrfuse::ImageF preview = hdrfuse::read_png(png);
        CHECK(preview.height == 32);
    }
    std::string base = workdir() + "/baseline.pfm";
    REQUIRE(hdrfuse_baseline_merge(bracket, base.c_str()) == HDRFUSE_OK);
    CHECK(hdrfuse::read_pfm(base).width == 32);
    hdrfuse_bracket_free(bracket);

    std::string report = workdir() + "/report.csv";
    double pl = 0, pm = 0, sl = 0, sm = 0;
    REQUIRE(hdrfuse_eval(model, data.c_str(), report.c_str(), &pl, &pm, &sl, &sm) == HDRFUSE_OK);
    CHECK(pl > 0.0);
    CHECK(pm > 0.0);
    CHECK(sl <= 1.0);
    CHECK(sm <= 1.0);
    {
        std::ifstream in(report);
        std::string header;
        std::getline(in, header);
        CHECK(header == "sample,psnr_l,psnr_mu,ssim_l,ssim_mu");
        std::string line;
        int rows = 0;
        bool has_mean = false;
        while (std::getline(in, line)) {
            ++rows;
            if (line.rfind("mean,", 0) == 0) has_mean = true;
        }
        CHECK(rows == 3);  // two samples + mean
        CHECK(has_mean);
    }
    hdrfuse_model_free(model);
}

TEST_CASE("gradcheck through the C API") {
    char* report = nullptr;
    double worst = 1.0;
    REQUIRE(hdrfuse_gradcheck(kMicroConfig, 1, nullptr, &report, &worst) == HDRFUSE_OK);
    REQUIRE(report != nullptr);
    CHECK(std::string(report).find("all passed") != std::string::npos);
    CHECK(worst < 1e-4);
    hdrfuse_string_free(report);

    // The corruption hook must make the verification fail, naming the op.
    report = nullptr;
    int rc = hdrfuse_gradcheck(kMicroConfig, 1, "sigmoid", &report, &worst);
    CHECK(rc == HDRFUSE_ERR_NUMERIC);
    REQUIRE(report != nullptr);
    CHECK(std::string(report).find("sigmoid") != std::string::npos);
    CHECK(std::string(report).find("FAIL") != std::string::npos);
    hdrfuse_string_free(report);

    // And the hook must not leak into later runs.
    REQUIRE(hdrfuse_gradcheck(kMicroConfig, 1, nullptr, nullptr, &worst) == HDRFUSE_OK);
}

TEST_CASE("null arguments are usage errors") {
    CHECK(hdrfuse_model_create(nullptr, 0, nullptr) == HDRFUSE_ERR_USAGE);
    CHECK(hdrfuse_model_save(nullptr, "x") == HDRFUSE_ERR_USAGE);
    CHECK(hdrfuse_train(nullptr, nullptr, nullptr) == HDRFUSE_ERR_USAGE);
    CHECK(hdrfuse_fuse(nullptr, nullptr, nullptr, nullptr) == HDRFUSE_ERR_USAGE);
    CHECK(hdrfuse_bracket_load(nullptr, nullptr) == HDRFUSE_ERR_USAGE);
}
