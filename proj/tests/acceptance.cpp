// Acceptance suite: one line per criterion, strict tolerances pinned in code.
// Runs the desk-scale training recipe in full, so expect roughly half an hour
// wall-clock on two laptop cores.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hdrfuse.h"
#include "hdrfuse/gradcheck_suite.hpp"
#include "hdrfuse/metrics.hpp"
#include "hdrfuse/patches.hpp"
#include "hdrfuse/synth.hpp"
#include "hdrfuse/trainer.hpp"
#include "oracles.hpp"

using namespace hdrfuse;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("criterion %d: %s — %s (%s)\n", criterion, pass ? "PASS" : "FAIL", what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string temp_root() {
    auto dir = fs::temp_directory_path() / "hdrfuse_acceptance";
    fs::create_directories(dir);
    return dir.string();
}

// --- criterion 1: gradient integrity --------------------------------------

void criterion_gradient_integrity() {
    auto t0 = Clock::now();
    NetworkConfig tiny = NetworkConfig::tiny();
    GradCheckSuiteResult res = run_gradcheck_suite(0, &tiny);
    double elapsed = seconds_since(t0);
    char detail[160];
    std::snprintf(detail, sizeof detail, "worst %.3e at %s over %zu checks, %.1f s", res.worst,
                  res.worst_name.c_str(), res.cases.size(), elapsed);
    report(1, res.all_passed && elapsed < 300.0,
           "gradcheck: primitives, CA-ViT, spatial attention, CTB, end-to-end tiny model < 1e-4",
           detail);
}

// --- criterion 2: structural round-trips -----------------------------------

void criterion_round_trips() {
    Rng rng(1);
    long runs = 0;
    bool ok = true;
    for (int H = 5; H <= 33 && ok; ++H) {
        for (int W = 5; W <= 33 && ok; ++W) {
            for (int ws : {4, 8}) {
                for (int shift : {0, ws / 2}) {
                    TensorD t = TensorD::uniform({H, W, 3}, rng, -1.0, 1.0);
                    WindowSet<double> w = window_partition(t, ws, shift);
                    TensorD back = window_reverse(w);
                    ++runs;
                    if (back.values() != t.values()) {
                        ok = false;
                        break;
                    }
                }
            }
        }
    }
    bool aug_ok = true;
    ImageF img(9, 9, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    for (int id = 0; id < 8; ++id) {
        ImageF round = transform_dihedral(transform_dihedral(img, id), dihedral_inverse(id));
        aug_ok = aug_ok && round.data == img.data;
    }
    {
        ImageF r = img;
        for (int i = 0; i < 4; ++i) r = transform_dihedral(r, 1);
        aug_ok = aug_ok && r.data == img.data;
        ImageF f = transform_dihedral(transform_dihedral(img, 4), 4);
        aug_ok = aug_ok && f.data == img.data;
    }
    char detail[120];
    std::snprintf(detail, sizeof detail, "%ld bit-exact partition/reverse cases, 8/8 group laws",
                  runs);
    report(2, ok && aug_ok, "window partition/reverse fuzz + dihedral group laws", detail);
}

// --- criterion 3: analytic values -------------------------------------------

void criterion_analytic_values() {
    bool ok = true;
    std::ostringstream detail;

    TensorD ends = mu_tonemap(TensorD::from({2}, {0.0, 1.0}));
    ok = ok && ends.values()[0] == 0.0 && ends.values()[1] == 1.0;

    // Closed form log(1+mu*x)/log(1+mu) at x=0.5, mu=5000 (the published
    // 0.91862 rounds the same expression).
    double mid = mu_tonemap(TensorD::scalar(0.5)).item();
    double mid_expect = std::log(2501.0) / std::log(5001.0);
    ok = ok && std::abs(mid - mid_expect) < 1e-5;
    detail << "mu(0.5)=" << mid;

    ImageF half(1, 1, 1);
    half.at(0, 0, 0) = 0.5f;
    double gamma_val = gamma_correct(half, 4.0, 2.2).at(0, 0, 0);
    double gamma_expect = std::pow(0.5, 2.2) / 4.0;
    ok = ok && std::abs(gamma_val - gamma_expect) < 1e-5 && std::abs(gamma_val - 0.05440) < 1e-4;
    detail << ", gamma(0.5,4)=" << gamma_val;

    Weights<double> w;
    w.add("p", TensorD::full({4}, 1.0));
    for (auto& g : w.at("p").grad_acc()) g = 0.5;
    AdamState<double> adam;
    adam_step(w, adam);
    double step_mag = std::abs(w.at("p").values()[0] - 1.0);
    ok = ok && std::abs(step_mag - adam.lr) < 1e-7;
    detail << ", |adam step|=" << step_mag;

    report(3, ok, "mu-law endpoints/midpoint, gamma closed form, first Adam step = lr",
           detail.str());
}

// --- criterion 4: identity initialization -----------------------------------

void criterion_identity_init() {
    NetworkConfig cfg = NetworkConfig::tiny();
    cfg.dtype = "f64";
    HdrTransformer<double> model(cfg, 11);
    model.zero_residual_tails();
    Rng rng(13);
    std::array<TensorD, 3> x;
    for (auto& p : x) p = TensorD::uniform({32, 32, 6}, rng, 0.0, 1.0);
    ForwardTrace<double> trace;
    model.forward(x, &trace);
    bool ok = trace.recon_out.values() == trace.f_att.values();
    report(4, ok, "zeroed residual tails: reconstruction stack is bitwise identity at 32x32",
           ok ? "bit-exact" : "mismatch");
}

// --- criteria 5 and 6: desk-scale training ----------------------------------

struct TrainingOutcome {
    bool trained = false;
    double first_loss = 0.0;
    double last_loss = 0.0;
    double train_psnr_mu = 0.0;
    double runtime = 0.0;
    hdrfuse_model* model = nullptr;
    std::string data_dir;
};

TrainingOutcome run_desk_scale_training() {
    TrainingOutcome out;
    std::string root = temp_root();
    out.data_dir = root + "/train_data";
    fs::remove_all(out.data_dir);
    fs::create_directories(out.data_dir);
    for (int i = 0; i < 8; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "/sample_%03d", i);
        if (hdrfuse_synth_sample((out.data_dir + name).c_str(), static_cast<uint64_t>(i), 64, 8,
                                 0.2) != HDRFUSE_OK) {
            std::fprintf(stderr, "synth failed: %s\n", hdrfuse_last_error());
            return out;
        }
    }
    char* cfg = nullptr;
    if (hdrfuse_config_preset("tiny", &cfg) != HDRFUSE_OK) return out;
    std::string config = cfg;
    hdrfuse_string_free(cfg);
    if (hdrfuse_model_create(config.c_str(), 0, &out.model) != HDRFUSE_OK) return out;

    hdrfuse_train_options opt;
    hdrfuse_train_options_init(&opt);
    opt.steps = 2000;
    opt.batch = 4;
    opt.seed = 0;
    opt.patch = 64;
    opt.stride = 64;
    opt.augment = 0;
    opt.use_perceptual = 1;
    opt.probe_interval = 250;
    std::string log = root + "/train_log.csv";
    opt.log_csv = log.c_str();

    auto t0 = Clock::now();
    if (hdrfuse_train(out.model, out.data_dir.c_str(), &opt) != HDRFUSE_OK) {
        std::fprintf(stderr, "train failed: %s\n", hdrfuse_last_error());
        return out;
    }
    out.runtime = seconds_since(t0);

    // First and last total loss from the step log.
    std::ifstream in(log);
    std::string line;
    std::getline(in, line);  // header
    bool first = true;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string step, lr, lp, total;
        std::getline(ls, step, ',');
        std::getline(ls, lr, ',');
        std::getline(ls, lp, ',');
        std::getline(ls, total, ',');
        double t = std::stod(total);
        if (first) {
            out.first_loss = t;
            first = false;
        }
        out.last_loss = t;
    }
    double pm = 0.0;
    if (hdrfuse_eval(out.model, out.data_dir.c_str(), nullptr, nullptr, &pm, nullptr, nullptr) !=
        HDRFUSE_OK) {
        return out;
    }
    out.train_psnr_mu = pm;
    out.trained = true;
    return out;
}

void criterion_overfit(const TrainingOutcome& t) {
    char detail[200];
    std::snprintf(detail, sizeof detail,
                  "train PSNR-mu %.2f dB, loss %.5f -> %.5f (%.1f%% of step 1), %.0f s",
                  t.train_psnr_mu, t.first_loss, t.last_loss,
                  t.first_loss > 0 ? 100.0 * t.last_loss / t.first_loss : 0.0, t.runtime);
    bool ok = t.trained && t.train_psnr_mu >= 35.0 && t.last_loss < 0.1 * t.first_loss &&
              t.runtime < 1800.0;
    report(5, ok, "tiny config, 2000 steps on 8 synthetic brackets: PSNR-mu >= 35 dB, loss < 10%",
           detail);
}

void criterion_deghosting(const TrainingOutcome& t) {
    if (!t.trained) {
        report(6, false, "deghosting margin over the exposure-weighted baseline", "training failed");
        return;
    }
    std::string root = temp_root();
    std::string held_out = root + "/held_out";
    fs::remove_all(held_out);
    if (hdrfuse_synth_sample(held_out.c_str(), 1234, 64, 16, 0.2) != HDRFUSE_OK) {
        report(6, false, "deghosting margin over the exposure-weighted baseline", "synth failed");
        return;
    }
    ExposureBracket bracket = load_bracket(held_out);
    ImageF baseline = exposure_weighted_merge(bracket);
    double baseline_psnr = psnr(baseline, *bracket.gt_hdr, MetricDomain::mu);

    hdrfuse_bracket* cb = nullptr;
    if (hdrfuse_bracket_load(held_out.c_str(), &cb) != HDRFUSE_OK) {
        report(6, false, "deghosting margin over the exposure-weighted baseline", "load failed");
        return;
    }
    std::string fused_path = root + "/held_out_fused.pfm";
    int rc = hdrfuse_fuse(t.model, cb, fused_path.c_str(), nullptr);
    hdrfuse_bracket_free(cb);
    if (rc != HDRFUSE_OK) {
        report(6, false, "deghosting margin over the exposure-weighted baseline", "fuse failed");
        return;
    }
    double model_psnr = psnr(read_pfm(fused_path), *bracket.gt_hdr, MetricDomain::mu);
    char detail[160];
    std::snprintf(detail, sizeof detail, "model %.2f dB vs baseline %.2f dB on motion-16 bracket",
                  model_psnr, baseline_psnr);
    report(6, model_psnr >= baseline_psnr + 3.0,
           "trained tiny model beats the exposure-weighted baseline by >= 3 dB", detail);
}

// --- criterion 7: metric oracles ---------------------------------------------

void criterion_metric_oracles() {
    Rng rng(17);
    bool ok = true;
    double worst_psnr = 0.0, worst_ssim = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        ImageF a(8, 8, 3), b(8, 8, 3);
        for (auto& v : a.data) v = static_cast<float>(rng.uniform());
        for (auto& v : b.data) v = static_cast<float>(rng.uniform());
        std::vector<double> av(a.data.begin(), a.data.end());
        std::vector<double> bv(b.data.begin(), b.data.end());
        double dp = std::abs(psnr(a, b, MetricDomain::linear) - oracle::psnr(av, bv));
        std::vector<double> ga(a.pixel_count()), gb(b.pixel_count());
        for (std::size_t p = 0; p < ga.size(); ++p) {
            ga[p] = (a.data[p * 3] + a.data[p * 3 + 1] + a.data[p * 3 + 2]) / 3.0;
            gb[p] = (b.data[p * 3] + b.data[p * 3 + 1] + b.data[p * 3 + 2]) / 3.0;
        }
        double ds = std::abs(ssim(a, b, MetricDomain::linear) - oracle::ssim(ga, gb, 8, 8));
        worst_psnr = std::max(worst_psnr, dp);
        worst_ssim = std::max(worst_ssim, ds);
        ok = ok && dp < 1e-9 && ds < 1e-6;
    }
    ImageF same(16, 16, 3);
    for (auto& v : same.data) v = static_cast<float>(rng.uniform());
    bool exact_one = ssim(same, same, MetricDomain::linear) == 1.0;
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "worst |dPSNR| %.2e dB, worst |dSSIM| %.2e, SSIM(identical) %s", worst_psnr,
                  worst_ssim, exact_one ? "== 1.0" : "!= 1.0");
    report(7, ok && exact_one, "PSNR/SSIM match naive oracles on 20 random 8x8 pairs", detail);
}

// --- criterion 8: parameter budget --------------------------------------------

std::int64_t closed_form_params(const NetworkConfig& c) {
    auto D = static_cast<std::int64_t>(c.embed_dim);
    auto C = static_cast<std::int64_t>(c.shallow_channels);
    std::int64_t ws = c.window_size;
    std::int64_t squeeze = std::max<std::int64_t>(1, D / c.lce_reduction);
    std::int64_t cavit = 4 * D + (D * 3 * D + 3 * D) + (2 * ws - 1) * (2 * ws - 1) * c.heads +
                         (D * D + D) + (D * c.mlp_ratio * D + c.mlp_ratio * D) +
                         (c.mlp_ratio * D * D + D) + (9 * D * D + D) + (D * squeeze + squeeze) +
                         (squeeze * D + D);
    return 3 * (9 * 6 * C + C) + 2 * ((9 * 2 * C * C + C) + (9 * C * C + C)) +
           (9 * 3 * C * D + D) + c.num_ctb * (c.cavits_per_ctb * cavit + 9 * D * D + D) +
           (9 * D * D + D) + (9 * D * 3 + 3);
}

void criterion_param_budget() {
    NetworkConfig full = NetworkConfig::full_default();
    HdrTransformer<float> model(full, 0);
    std::int64_t count = model.param_count();

    NetworkConfig toy;
    toy.embed_dim = 12;
    toy.shallow_channels = 12;
    toy.num_ctb = 1;
    toy.cavits_per_ctb = 2;
    toy.window_size = 4;
    toy.heads = 2;
    HdrTransformer<float> toy_model(toy, 0);
    bool toy_exact = toy_model.param_count() == closed_form_params(toy);
    bool full_exact = count == closed_form_params(full);

    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "default config %.3fM parameters (target 1.22M), toy count %s closed form",
                  static_cast<double>(count) / 1e6, toy_exact ? "matches" : "mismatches");
    report(8, count >= 1000000 && count <= 1500000 && toy_exact && full_exact,
           "full-scale parameter count in [1.0M, 1.5M]", detail);
}

// --- criterion 9: determinism & persistence ------------------------------------

void criterion_determinism() {
    NetworkConfig cfg;
    cfg.dtype = "f64";
    cfg.embed_dim = 8;
    cfg.shallow_channels = 8;
    cfg.num_ctb = 1;
    cfg.cavits_per_ctb = 1;
    cfg.window_size = 4;
    cfg.heads = 2;
    cfg.lce_reduction = 4;

    std::vector<std::pair<NetworkInputF, ImageF>> samples;
    for (int i = 0; i < 3; ++i) {
        SynthScene sc = synth_scene({.seed = static_cast<std::uint64_t>(40 + i), .size = 32,
                                     .motion_px = 2, .saturation_frac = 0.1});
        samples.emplace_back(assemble_input(sc.bracket), *sc.bracket.gt_hdr);
    }
    PatchSet data = crop_patches(samples, 16, 16);

    TrainOptions opt;
    opt.steps = 50;
    opt.batch = 4;
    opt.seed = 7;
    opt.probe_interval = 0;
    opt.use_perceptual = false;
    const FeatureNet<double>* no_fn = nullptr;

    auto run_full = [&]() {
        HdrTransformer<double> model(cfg, 21);
        AdamState<double> optim;
        return std::make_pair(train(model, data, optim, opt, no_fn), std::move(model));
    };
    auto [rec_a, model_a] = run_full();
    auto [rec_b, model_b] = run_full();
    bool identical = rec_a.size() == rec_b.size();
    for (std::size_t i = 0; identical && i < rec_a.size(); ++i) {
        identical = rec_a[i].total == rec_b[i].total && rec_a[i].l_r == rec_b[i].l_r;
    }
    for (auto& [path, t] : model_a.weights()) {
        identical = identical && t.values() == model_b.weights().at(path).values();
    }

    // Interrupted at step 25, checkpointed, resumed.
    HdrTransformer<double> half(cfg, 21);
    AdamState<double> half_optim;
    TrainOptions first_half = opt;
    first_half.steps = 25;
    auto rec_h1 = train(half, data, half_optim, first_half, no_fn);
    std::string ckpt = temp_root() + "/resume.hdrt";
    save_checkpoint(ckpt, half, half_optim, opt.seed);

    Container c = read_container(ckpt);
    CheckpointInfo info = checkpoint_info(c);
    HdrTransformer<double> resumed(info.cfg, 0);
    AdamState<double> resumed_optim;
    load_checkpoint_into(c, resumed, resumed_optim);
    TrainOptions second_half = opt;
    second_half.steps = 25;
    second_half.seed = info.seed;
    auto rec_h2 = train(resumed, data, resumed_optim, second_half, no_fn);

    bool resume_ok = rec_h1.size() == 25 && rec_h2.size() == 25;
    for (int i = 0; resume_ok && i < 25; ++i) {
        resume_ok = rec_a[static_cast<std::size_t>(i)].total ==
                        rec_h1[static_cast<std::size_t>(i)].total &&
                    rec_a[static_cast<std::size_t>(i + 25)].total ==
                        rec_h2[static_cast<std::size_t>(i)].total;
    }
    for (auto& [path, t] : model_a.weights()) {
        resume_ok = resume_ok && t.values() == resumed.weights().at(path).values();
    }
    char detail[120];
    std::snprintf(detail, sizeof detail, "two 50-step runs %s; resume-at-25 %s",
                  identical ? "bit-identical" : "DIVERGED",
                  resume_ok ? "bit-identical" : "DIVERGED");
    report(9, identical && resume_ok, "fixed-seed determinism and checkpoint resume (64-bit)",
           detail);
}

}  // namespace

int main() {
    std::printf("hdrfuse acceptance suite (%s)\n", hdrfuse_version());
    auto t0 = Clock::now();

    criterion_gradient_integrity();
    criterion_round_trips();
    criterion_analytic_values();
    criterion_identity_init();
    TrainingOutcome trained = run_desk_scale_training();
    criterion_overfit(trained);
    criterion_deghosting(trained);
    if (trained.model) hdrfuse_model_free(trained.model);
    criterion_metric_oracles();
    criterion_param_budget();
    criterion_determinism();

    std::printf("acceptance: %d criterion(s) failing, total wall clock %.0f s\n", g_failures,
                seconds_since(t0));
    return g_failures == 0 ? 0 : 1;
}
