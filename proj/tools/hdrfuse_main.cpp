// hdrfuse command-line tool. All functionality goes through the C API in
// hdrfuse.h; this binary only adds flag parsing and run manifests.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdrfuse.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int fail(int status, const std::string& context) {
    std::cerr << "hdrfuse: " << context << ": " << hdrfuse_last_error() << "\n";
    return status;
}

// Every command records how its outputs were produced, next to the output.
class Manifest {
public:
    Manifest(std::string command) : start_(std::chrono::steady_clock::now()) {
        doc_["command"] = std::move(command);
        doc_["version"] = hdrfuse_version();
    }

    json& config() { return doc_["config"]; }
    void set_seed(std::uint64_t seed) { doc_["seed"] = seed; }
    void add_input(const std::string& path) { doc_["inputs"].push_back(path); }
    void add_output(const std::string& path) { doc_["outputs"].push_back(path); }

    void write(const std::string& next_to) {
        auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_);
        doc_["wall_clock_sec"] = elapsed.count();
        std::string path = next_to + ".manifest.json";
        std::string tmp = path + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << doc_.dump(2) << "\n";
        }
        fs::rename(tmp, path);
    }

private:
    json doc_;
    std::chrono::steady_clock::time_point start_;
};

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw CLI::ValidationError("--config", "cannot open config file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct ScopedString {
    char* ptr = nullptr;
    ~ScopedString() { hdrfuse_string_free(ptr); }
};

struct ScopedModel {
    hdrfuse_model* ptr = nullptr;
    ~ScopedModel() { hdrfuse_model_free(ptr); }
};

struct ScopedBracket {
    hdrfuse_bracket* ptr = nullptr;
    ~ScopedBracket() { hdrfuse_bracket_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hdrfuse: ghost-free multi-exposure HDR fusion"};
    app.require_subcommand(1);

    // ----- synth -----
    auto* synth = app.add_subcommand("synth", "generate synthetic bracket samples");
    std::string synth_out;
    int synth_count = 8, synth_size = 64, synth_motion = 8;
    double synth_sat = 0.2;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--count", synth_count, "number of samples");
    synth->add_option("--size", synth_size, "square image size (>= 32)");
    synth->add_option("--motion", synth_motion, "foreground displacement in pixels");
    synth->add_option("--saturation", synth_sat, "clipped fraction of the long exposure");
    synth->add_option("--seed", synth_seed, "base RNG seed");

    // ----- train -----
    auto* train = app.add_subcommand("train", "train a model on a sample directory");
    std::string train_data, train_out, train_config, train_log, train_resume, train_dtype;
    bool train_tiny = false, train_augment = false, train_no_perceptual = false;
    hdrfuse_train_options topt;
    hdrfuse_train_options_init(&topt);
    std::int64_t train_steps = topt.steps;
    int train_batch = topt.batch, train_patch = topt.patch, train_stride = topt.stride;
    int train_probe = topt.probe_interval;
    double train_lr = topt.lr, train_lambda_p = topt.lambda_p;
    std::uint64_t train_seed = 0, train_fn_seed = 0;
    train->add_option("--data", train_data, "training sample directory")->required();
    train->add_option("--out", train_out, "checkpoint output path")->required();
    train->add_option("--config", train_config, "architecture config file (key = value)");
    train->add_flag("--tiny", train_tiny, "use the desk-scale architecture preset");
    train->add_option("--resume", train_resume, "continue from an existing checkpoint");
    train->add_option("--steps", train_steps, "optimizer steps");
    train->add_option("--batch", train_batch, "batch size");
    train->add_option("--seed", train_seed, "training seed");
    train->add_option("--lr", train_lr, "learning rate");
    train->add_flag("--augment", train_augment, "expand patches by rotation/flip");
    train->add_option("--patch", train_patch, "training patch size");
    train->add_option("--stride", train_stride, "patch grid stride");
    train->add_flag("--no-perceptual", train_no_perceptual, "train with the l1 term only");
    train->add_option("--lambda-p", train_lambda_p, "perceptual loss weight");
    train->add_option("--probe-interval", train_probe, "PSNR probe cadence (0 = off)");
    train->add_option("--featurenet-seed", train_fn_seed, "feature net init seed");
    train->add_option("--log", train_log, "per-step CSV log path");
    train->add_option("--dtype", train_dtype, "override compute dtype (f32|f64)")
        ->check(CLI::IsMember({"f32", "f64"}));

    // ----- fuse -----
    auto* fuse = app.add_subcommand("fuse", "merge one bracket into an HDR image");
    std::string fuse_ckpt, fuse_bracket, fuse_out, fuse_png;
    fuse->add_option("--ckpt", fuse_ckpt, "model checkpoint")->required();
    fuse->add_option("--bracket", fuse_bracket, "sample directory")->required();
    fuse->add_option("--out", fuse_out, "output PFM path")->required();
    fuse->add_option("--tonemapped", fuse_png, "optional 8-bit mu-law preview PNG");

    // ----- eval -----
    auto* eval = app.add_subcommand("eval", "evaluate a model over a sample directory");
    std::string eval_ckpt, eval_data, eval_report;
    eval->add_option("--ckpt", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--data", eval_data, "evaluation sample directory")->required();
    eval->add_option("--report", eval_report, "CSV report path")->required();

    // ----- gradcheck -----
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_config, gc_corrupt;
    std::uint64_t gc_seed = 0;
    gradcheck->add_option("--config", gc_config, "architecture config file");
    gradcheck->add_option("--seed", gc_seed, "verification seed");
    gradcheck->add_option("--corrupt", gc_corrupt, "test hook: corrupt the named adjoint")
        ->group("");  // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : HDRFUSE_ERR_USAGE;
    }

    try {
        if (synth->parsed()) {
            Manifest manifest("synth");
            manifest.set_seed(synth_seed);
            manifest.config() = {{"count", synth_count},
                                 {"size", synth_size},
                                 {"motion", synth_motion},
                                 {"saturation", synth_sat}};
            fs::create_directories(synth_out);
            for (int i = 0; i < synth_count; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "sample_%03d", i);
                std::string dir = (fs::path(synth_out) / name).string();
                int rc = hdrfuse_synth_sample(dir.c_str(), synth_seed + static_cast<std::uint64_t>(i),
                                              synth_size, synth_motion, synth_sat);
                if (rc != HDRFUSE_OK) return fail(rc, "synth " + dir);
                manifest.add_output(dir);
            }
            manifest.write((fs::path(synth_out) / "dataset").string());
            std::cout << "wrote " << synth_count << " samples to " << synth_out << "\n";
            return 0;
        }

        if (train->parsed()) {
            Manifest manifest("train");
            manifest.set_seed(train_seed);
            ScopedModel model;
            std::string config_text;
            if (!train_resume.empty()) {
                int rc = hdrfuse_model_load(train_resume.c_str(), &model.ptr);
                if (rc != HDRFUSE_OK) return fail(rc, "loading " + train_resume);
                manifest.add_input(train_resume);
            } else {
                if (!train_config.empty() && train_tiny) {
                    std::cerr << "hdrfuse: --config and --tiny are mutually exclusive\n";
                    return HDRFUSE_ERR_USAGE;
                }
                if (!train_config.empty()) {
                    config_text = read_text_file(train_config);
                } else {
                    ScopedString preset;
                    int rc = hdrfuse_config_preset(train_tiny ? "tiny" : "full", &preset.ptr);
                    if (rc != HDRFUSE_OK) return fail(rc, "config preset");
                    config_text = preset.ptr;
                }
                if (!train_dtype.empty()) {
                    config_text += "dtype = " + train_dtype + "\n";  // flags override the file
                }
                int rc = hdrfuse_model_create(config_text.c_str(), train_seed, &model.ptr);
                if (rc != HDRFUSE_OK) return fail(rc, "creating model");
            }
            hdrfuse_train_options o;
            hdrfuse_train_options_init(&o);
            o.steps = train_steps;
            o.batch = train_batch;
            o.seed = train_seed;
            o.lr = train_lr;
            o.augment = train_augment ? 1 : 0;
            o.patch = train_patch;
            o.stride = train_stride;
            o.use_perceptual = train_no_perceptual ? 0 : 1;
            o.lambda_p = train_lambda_p;
            o.probe_interval = train_probe;
            o.featurenet_seed = train_fn_seed;
            o.log_csv = train_log.empty() ? nullptr : train_log.c_str();

            int rc = hdrfuse_train(model.ptr, train_data.c_str(), &o);
            if (rc != HDRFUSE_OK) return fail(rc, "training");
            rc = hdrfuse_model_save(model.ptr, train_out.c_str());
            if (rc != HDRFUSE_OK) return fail(rc, "saving " + train_out);

            ScopedString cfg_out;
            hdrfuse_model_config(model.ptr, &cfg_out.ptr);
            std::int64_t step = 0;
            hdrfuse_model_step(model.ptr, &step);
            manifest.add_input(train_data);
            manifest.add_output(train_out);
            if (!train_log.empty()) manifest.add_output(train_log);
            manifest.config() = {{"architecture", cfg_out.ptr ? cfg_out.ptr : ""},
                                 {"steps", train_steps},
                                 {"batch", train_batch},
                                 {"lr", train_lr},
                                 {"augment", train_augment},
                                 {"patch", train_patch},
                                 {"stride", train_stride},
                                 {"perceptual", !train_no_perceptual},
                                 {"lambda_p", train_lambda_p},
                                 {"final_step", step}};
            manifest.write(train_out);
            std::cout << "trained to step " << step << ", checkpoint at " << train_out << "\n";
            return 0;
        }

        if (fuse->parsed()) {
            Manifest manifest("fuse");
            ScopedModel model;
            int rc = hdrfuse_model_load(fuse_ckpt.c_str(), &model.ptr);
            if (rc != HDRFUSE_OK) return fail(rc, "loading " + fuse_ckpt);
            ScopedBracket bracket;
            rc = hdrfuse_bracket_load(fuse_bracket.c_str(), &bracket.ptr);
            if (rc != HDRFUSE_OK) return fail(rc, "loading bracket " + fuse_bracket);
            rc = hdrfuse_fuse(model.ptr, bracket.ptr, fuse_out.c_str(),
                              fuse_png.empty() ? nullptr : fuse_png.c_str());
            if (rc != HDRFUSE_OK) return fail(rc, "fusing");
            manifest.add_input(fuse_ckpt);
            manifest.add_input(fuse_bracket);
            manifest.add_output(fuse_out);
            if (!fuse_png.empty()) manifest.add_output(fuse_png);
            manifest.write(fuse_out);
            std::cout << "wrote " << fuse_out << "\n";
            return 0;
        }

        if (eval->parsed()) {
            Manifest manifest("eval");
            ScopedModel model;
            int rc = hdrfuse_model_load(eval_ckpt.c_str(), &model.ptr);
            if (rc != HDRFUSE_OK) return fail(rc, "loading " + eval_ckpt);
            double pl = 0, pm = 0, sl = 0, sm = 0;
            rc = hdrfuse_eval(model.ptr, eval_data.c_str(), eval_report.c_str(), &pl, &pm, &sl,
                              &sm);
            if (rc != HDRFUSE_OK) return fail(rc, "evaluating");
            manifest.add_input(eval_ckpt);
            manifest.add_input(eval_data);
            manifest.add_output(eval_report);
            manifest.config() = {{"mean_psnr_l", pl},
                                 {"mean_psnr_mu", pm},
                                 {"mean_ssim_l", sl},
                                 {"mean_ssim_mu", sm}};
            manifest.write(eval_report);
            std::printf("mean PSNR-l %.4f  PSNR-mu %.4f  SSIM-l %.6f  SSIM-mu %.6f\n", pl, pm, sl,
                        sm);
            std::cout << "report at " << eval_report << "\n";
            return 0;
        }

        if (gradcheck->parsed()) {
            std::string config_text;
            if (!gc_config.empty()) config_text = read_text_file(gc_config);
            ScopedString report;
            double worst = 0.0;
            int rc = hdrfuse_gradcheck(config_text.empty() ? nullptr : config_text.c_str(),
                                       gc_seed, gc_corrupt.empty() ? nullptr : gc_corrupt.c_str(),
                                       &report.ptr, &worst);
            if (report.ptr) std::cout << report.ptr;
            if (rc != HDRFUSE_OK) return fail(rc, "gradient verification");
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "hdrfuse: " << e.what() << "\n";
        return HDRFUSE_ERR_USAGE;
    }
    return HDRFUSE_ERR_USAGE;
}
