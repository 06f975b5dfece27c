#include "hdrfuse.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <variant>

#include "hdrfuse/debug.hpp"
#include "hdrfuse/gradcheck_suite.hpp"
#include "hdrfuse/parallel.hpp"
#include "hdrfuse/synth.hpp"
#include "hdrfuse/trainer.hpp"

namespace fs = std::filesystem;
using namespace hdrfuse;

namespace {

thread_local std::string g_last_error;

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return HDRFUSE_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return HDRFUSE_ERR_DATA;
    }
}

int usage_error(const std::string& msg) {
    g_last_error = msg;
    return HDRFUSE_ERR_USAGE;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

// Model bundle for one precision.
template <typename T>
struct Bundle {
    HdrTransformer<T> model;
    AdamState<T> optim;
    std::uint64_t seed;
    Bundle(const NetworkConfig& cfg, std::uint64_t s) : model(cfg, s), seed(s) {}
};

}  // namespace

struct hdrfuse_model {
    std::variant<Bundle<float>, Bundle<double>> bundle;

    template <typename Fn>
    decltype(auto) visit(Fn&& fn) {
        return std::visit(std::forward<Fn>(fn), bundle);
    }

    hdrfuse_model(const NetworkConfig& cfg, std::uint64_t seed)
        : bundle(cfg.dtype == "f64" ? std::variant<Bundle<float>, Bundle<double>>(
                                          std::in_place_type<Bundle<double>>, cfg, seed)
                                    : std::variant<Bundle<float>, Bundle<double>>(
                                          std::in_place_type<Bundle<float>>, cfg, seed)) {}
};

struct hdrfuse_bracket {
    ExposureBracket bracket;
};

namespace {

// Sample directories: every subdirectory holding ldr_1.png, else the root
// itself when it is a single sample. Sorted for determinism.
std::vector<std::string> find_samples(const std::string& data_dir) {
    std::vector<std::string> dirs;
    if (!fs::exists(data_dir)) throw DataError("data directory does not exist: " + data_dir);
    if (fs::exists(fs::path(data_dir) / "ldr_1.png")) {
        dirs.push_back(data_dir);
        return dirs;
    }
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "ldr_1.png")) {
            dirs.push_back(entry.path().string());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw DataError("no sample directories under " + data_dir);
    return dirs;
}

template <typename T>
void train_bundle(Bundle<T>& b, const std::string& data_dir, const hdrfuse_train_options& o) {
    std::vector<std::pair<NetworkInputF, ImageF>> samples;
    for (const auto& dir : find_samples(data_dir)) {
        ExposureBracket bracket = load_bracket(dir);
        if (!bracket.gt_hdr) throw DataError("training sample has no ground truth: " + dir);
        samples.emplace_back(assemble_input(bracket), *bracket.gt_hdr);
    }
    PatchSet patches = crop_patches(samples, o.patch, o.stride);
    for (const auto& w : patches.warnings) std::cerr << "crop_patches: " << w << "\n";
    if (o.augment) patches = expand_augmentations(patches);

    TrainOptions opt;
    opt.steps = o.steps;
    opt.batch = o.batch;
    opt.seed = o.seed;
    opt.lr = o.lr;
    opt.lambda_p = o.lambda_p;
    opt.use_perceptual = o.use_perceptual != 0;
    opt.featurenet_seed = o.featurenet_seed;
    opt.probe_interval = o.probe_interval;

    FeatureNet<T> fn(o.featurenet_seed);
    if (o.featurenet_weights) load_featurenet(o.featurenet_weights, fn);

    std::ofstream log;
    std::ostream* log_ptr = nullptr;
    if (o.log_csv) {
        log.open(o.log_csv, std::ios::trunc);
        if (!log) throw DataError(std::string("cannot open training log: ") + o.log_csv);
        log_ptr = &log;
    }
    b.seed = o.seed;
    train(b.model, patches, b.optim, opt, opt.use_perceptual ? &fn : nullptr, log_ptr);
}

}  // namespace

extern "C" {

const char* hdrfuse_version(void) { return "hdrfuse 1.0.0"; }

const char* hdrfuse_last_error(void) { return g_last_error.c_str(); }

void hdrfuse_set_threads(int n) { set_thread_count(n); }

void hdrfuse_string_free(char* s) { std::free(s); }

int hdrfuse_config_preset(const char* name, char** out_text) {
    if (!name || !out_text) return usage_error("config_preset: null argument");
    return guarded([&] {
        NetworkConfig cfg;
        std::string key = name;
        if (key == "full") {
            cfg = NetworkConfig::full_default();
        } else if (key == "tiny") {
            cfg = NetworkConfig::tiny();
        } else {
            throw UsageError("unknown config preset: " + key + " (expected full or tiny)");
        }
        *out_text = dup_string(serialize_network_config(cfg));
    });
}

int hdrfuse_model_create(const char* config_text, uint64_t seed, hdrfuse_model** out) {
    if (!config_text || !out) return usage_error("model_create: null argument");
    return guarded([&] {
        NetworkConfig cfg = parse_network_config(config_text);
        *out = new hdrfuse_model(cfg, seed);
    });
}

int hdrfuse_model_load(const char* path, hdrfuse_model** out) {
    if (!path || !out) return usage_error("model_load: null argument");
    return guarded([&] {
        Container c = read_container(path);
        CheckpointInfo info = checkpoint_info(c);
        auto* m = new hdrfuse_model(info.cfg, info.seed);
        try {
            m->visit([&](auto& b) {
                load_checkpoint_into(c, b.model, b.optim);
                b.seed = info.seed;
            });
        } catch (...) {
            delete m;
            throw;
        }
        *out = m;
    });
}

int hdrfuse_model_save(hdrfuse_model* m, const char* path) {
    if (!m || !path) return usage_error("model_save: null argument");
    return guarded([&] {
        m->visit([&](auto& b) { save_checkpoint(path, b.model, b.optim, b.seed); });
    });
}

void hdrfuse_model_free(hdrfuse_model* m) { delete m; }

int hdrfuse_model_param_count(const hdrfuse_model* m, uint64_t* out) {
    if (!m || !out) return usage_error("param_count: null argument");
    return guarded([&] {
        *out = static_cast<uint64_t>(const_cast<hdrfuse_model*>(m)->visit(
            [](auto& b) { return b.model.param_count(); }));
    });
}

int hdrfuse_model_config(const hdrfuse_model* m, char** out_text) {
    if (!m || !out_text) return usage_error("model_config: null argument");
    return guarded([&] {
        *out_text = dup_string(const_cast<hdrfuse_model*>(m)->visit(
            [](auto& b) { return serialize_network_config(b.model.config()); }));
    });
}

int hdrfuse_model_step(const hdrfuse_model* m, int64_t* out) {
    if (!m || !out) return usage_error("model_step: null argument");
    return guarded([&] {
        *out = const_cast<hdrfuse_model*>(m)->visit([](auto& b) { return b.optim.step; });
    });
}

int hdrfuse_synth_sample(const char* out_dir, uint64_t seed, int size, int motion_px,
                         double saturation_frac) {
    if (!out_dir) return usage_error("synth_sample: null out_dir");
    return guarded([&] {
        SynthScene scene = synth_scene(
            {.seed = seed, .size = size, .motion_px = motion_px, .saturation_frac = saturation_frac});
        save_bracket(out_dir, scene.bracket);
    });
}

int hdrfuse_bracket_load(const char* dir, hdrfuse_bracket** out) {
    if (!dir || !out) return usage_error("bracket_load: null argument");
    return guarded([&] { *out = new hdrfuse_bracket{load_bracket(dir)}; });
}

void hdrfuse_bracket_free(hdrfuse_bracket* b) { delete b; }

void hdrfuse_train_options_init(hdrfuse_train_options* o) {
    if (!o) return;
    o->steps = 2000;
    o->batch = 16;
    o->seed = 0;
    o->lr = 2e-4;
    o->augment = 0;
    o->patch = 128;
    o->stride = 64;
    o->use_perceptual = 1;
    o->lambda_p = kDefaultPerceptualWeight;
    o->probe_interval = 50;
    o->featurenet_seed = 0;
    o->featurenet_weights = nullptr;
    o->log_csv = nullptr;
}


int hdrfuse_train(hdrfuse_model* m, const char* data_dir, const hdrfuse_train_options* o) {
    if (!m || !data_dir || !o) return usage_error("train: null argument");
    return guarded([&] {
        m->visit([&](auto& b) { train_bundle(b, data_dir, *o); });
    });
}

int hdrfuse_fuse(hdrfuse_model* m, const hdrfuse_bracket* b, const char* out_pfm,
                 const char* out_png) {
    if (!m || !b || !out_pfm) return usage_error("fuse: null argument");
    return guarded([&] {
        ImageF hdr = m->visit(
            [&](auto& bundle) { return fuse_bracket(bundle.model, b->bracket); });
        write_pfm(out_pfm, hdr);
        if (out_png) write_png8(out_png, mu_tonemap_image(hdr));
    });
}

int hdrfuse_baseline_merge(const hdrfuse_bracket* b, const char* out_pfm) {
    if (!b || !out_pfm) return usage_error("baseline_merge: null argument");
    return guarded([&] { write_pfm(out_pfm, exposure_weighted_merge(b->bracket)); });
}

int hdrfuse_eval(hdrfuse_model* m, const char* data_dir, const char* report_csv,
                 double* mean_psnr_l, double* mean_psnr_mu, double* mean_ssim_l,
                 double* mean_ssim_mu) {
    if (!m || !data_dir) return usage_error("eval: null argument");
    return guarded([&] {
        std::vector<std::pair<std::string, ExposureBracket>> samples;
        for (const auto& dir : find_samples(data_dir)) {
            samples.emplace_back(fs::path(dir).filename().string(), load_bracket(dir));
        }
        EvalResult res = m->visit([&](auto& b) { return evaluate(b.model, samples); });
        if (report_csv) {
            std::ofstream out(report_csv, std::ios::trunc);
            if (!out) throw DataError(std::string("cannot open report: ") + report_csv);
            out << "sample,psnr_l,psnr_mu,ssim_l,ssim_mu\n";
            char line[256];
            for (const auto& row : res.rows) {
                std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%.6f\n", row.name.c_str(),
                              row.psnr_l, row.psnr_mu, row.ssim_l, row.ssim_mu);
                out << line;
            }
            std::snprintf(line, sizeof line, "mean,%.6f,%.6f,%.6f,%.6f\n", res.mean.psnr_l,
                          res.mean.psnr_mu, res.mean.ssim_l, res.mean.ssim_mu);
            out << line;
        }
        if (mean_psnr_l) *mean_psnr_l = res.mean.psnr_l;
        if (mean_psnr_mu) *mean_psnr_mu = res.mean.psnr_mu;
        if (mean_ssim_l) *mean_ssim_l = res.mean.ssim_l;
        if (mean_ssim_mu) *mean_ssim_mu = res.mean.ssim_mu;
    });
}

int hdrfuse_gradcheck(const char* config_text, uint64_t seed, const char* corrupt_primitive,
                      char** report_out, double* worst_out) {
    return guarded([&] {
        NetworkConfig cfg = NetworkConfig::tiny();
        if (config_text) cfg = parse_network_config(config_text);
        if (corrupt_primitive) debug::set_adjoint_corruption(corrupt_primitive);
        GradCheckSuiteResult res;
        try {
            res = run_gradcheck_suite(seed, &cfg);
        } catch (...) {
            debug::clear_adjoint_corruption();
            throw;
        }
        debug::clear_adjoint_corruption();
        if (report_out) *report_out = dup_string(format_gradcheck_report(res));
        if (worst_out) *worst_out = res.worst;
        if (!res.all_passed) {
            throw NumericError("gradient verification failed, worst offender: " + res.worst_name);
        }
    });
}

}  // extern "C"
