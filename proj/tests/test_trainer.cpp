#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hdrfuse/synth.hpp"
#include "hdrfuse/trainer.hpp"
#include "oracles.hpp"

using namespace hdrfuse;
namespace op = hdrfuse::ops;
namespace fs = std::filesystem;

namespace {

NetworkConfig micro_config() {
    NetworkConfig cfg;
    cfg.dtype = "f64";
    cfg.embed_dim = 8;
    cfg.shallow_channels = 8;
    cfg.num_ctb = 1;
    cfg.cavits_per_ctb = 1;
    cfg.window_size = 4;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    cfg.lce_reduction = 4;
    return cfg;
}

// `count` synthetic 32x32 scenes, cropped into 16x16 patches (4 per scene).
PatchSet micro_dataset(int count) {
    std::vector<std::pair<NetworkInputF, ImageF>> samples;
    for (int i = 0; i < count; ++i) {
        SynthScene scene = synth_scene(
            {.seed = static_cast<std::uint64_t>(100 + i), .size = 32, .motion_px = 2,
             .saturation_frac = 0.1});
        samples.emplace_back(assemble_input(scene.bracket), *scene.bracket.gt_hdr);
    }
    return crop_patches(samples, 16, 16);
}

const FeatureNet<double>* kNoFeatureNet = nullptr;

std::string temp_path(const char* name) {
    auto dir = fs::temp_directory_path() / "hdrfuse_trainer";
    fs::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_CASE("adam: first-step magnitude equals the learning rate") {
    Weights<double> w;
    w.add("p", TensorD::full({5}, 1.0));
    auto& t = w.at("p");
    auto& g = t.grad_acc();
    for (auto& v : g) v = 0.5;  // constant nonzero gradient
    AdamState<double> s;
    adam_step(w, s);
    for (double v : t.values()) {
        CHECK(std::abs(std::abs(v - 1.0) - s.lr) < 1e-7);
    }
    CHECK(s.step == 1);
}

TEST_CASE("adam: zero gradients leave weights unchanged and decay the moments") {
    Weights<double> w;
    w.add("p", TensorD::full({3}, 2.0));
    AdamState<double> s;

    // One real step to put mass in the moments.
    for (auto& v : w.at("p").grad_acc()) v = 1.0;
    adam_step(w, s);
    double m_after_first = s.m.at("p").values()[0];
    std::vector<double> weights_after_first = w.at("p").values();

    // Fresh optimizer, zero gradient: nothing moves.
    Weights<double> w2;
    w2.add("p", TensorD::full({3}, 2.0));
    AdamState<double> s2;
    w2.at("p").grad_acc();  // allocated, all zero
    adam_step(w2, s2);
    for (double v : w2.at("p").values()) CHECK(v == 2.0);

    // Warm optimizer, zero gradient: moments decay by beta factors.
    w.at("p").zero_grad();
    adam_step(w, s);
    CHECK(s.m.at("p").values()[0] == doctest::Approx(m_after_first * s.beta1).epsilon(1e-12));
    (void)weights_after_first;
}

TEST_CASE("adam matches the scalar oracle on f(w) = w^2") {
    Weights<double> w;
    w.add("w", TensorD::scalar(1.0));
    AdamState<double> s;

    oracle::ScalarAdam ref;
    double wref = 1.0;
    for (int step = 0; step < 3; ++step) {
        auto& t = w.at("w");
        t.drop_grad();
        {
            TapeScope<double> scope;
            scope.tape().backward(op::mul(t, t));
        }
        adam_step(w, s);
        wref = ref.step(wref, 2.0 * wref);
        // Oracle sees the same gradient stream because updates match exactly.
        CHECK(std::abs(w.at("w").item() - wref) < 1e-12);
    }
}

TEST_CASE("adam names the parameter when a gradient is missing") {
    Weights<double> w;
    w.add("stale.param", TensorD::full({2}, 1.0));
    AdamState<double> s;
    CHECK_THROWS_WITH_AS(adam_step(w, s), doctest::Contains("stale.param"), UsageError);
}

TEST_CASE("batch schedule is a seeded permutation with wrap-around padding") {
    // 5 items, batch 2 -> 3 slots per epoch; every epoch covers all items.
    std::vector<int> seen(5, 0);
    for (std::int64_t step = 0; step < 3; ++step) {
        auto idx = detail_train::batch_indices(5, 2, 7, step);
        REQUIRE(idx.size() == 2);
        for (auto i : idx) seen[i] += 1;
    }
    int total = 0;
    for (int i = 0; i < 5; ++i) {
        CHECK(seen[static_cast<std::size_t>(i)] >= 1);
        total += seen[static_cast<std::size_t>(i)];
    }
    CHECK(total == 6);  // one wrapped duplicate
    // Deterministic in (seed, step).
    CHECK(detail_train::batch_indices(5, 2, 7, 2) == detail_train::batch_indices(5, 2, 7, 2));
    CHECK(detail_train::batch_indices(5, 2, 7, 0) != detail_train::batch_indices(5, 2, 8, 0));
}

TEST_CASE("fixed seeds give bit-identical training trajectories") {
    PatchSet data = micro_dataset(3);
    TrainOptions opt;
    opt.steps = 8;
    opt.batch = 2;
    opt.seed = 5;
    opt.probe_interval = 4;
    opt.use_perceptual = true;
    FeatureNet<double> fn(opt.featurenet_seed);

    auto run = [&]() {
        HdrTransformer<double> model(micro_config(), 11);
        AdamState<double> optim;
        return train(model, data, optim, opt, &fn);
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].total == b[i].total);  // bit-exact
        CHECK(a[i].l_r == b[i].l_r);
        CHECK(a[i].l_p == b[i].l_p);
    }
}

TEST_CASE("checkpoint round-trip: save -> load -> save is byte-identical") {
    PatchSet data = micro_dataset(2);
    HdrTransformer<double> model(micro_config(), 3);
    AdamState<double> optim;
    TrainOptions opt;
    opt.steps = 3;
    opt.batch = 2;
    opt.seed = 1;
    opt.probe_interval = 0;
    train(model, data, optim, opt, kNoFeatureNet);

    std::string p1 = temp_path("a.hdrt");
    std::string p2 = temp_path("b.hdrt");
    save_checkpoint(p1, model, optim, opt.seed);

    Container c = read_container(p1);
    CheckpointInfo info = checkpoint_info(c);
    REQUIRE(info.cfg.dtype == "f64");
    HdrTransformer<double> loaded(info.cfg, 0);
    AdamState<double> loaded_optim;
    load_checkpoint_into(c, loaded, loaded_optim);
    save_checkpoint(p2, loaded, loaded_optim, info.seed);

    CHECK(read_file_bytes(p1) == read_file_bytes(p2));
}

TEST_CASE("resume from a checkpoint continues the trajectory bit-exactly") {
    PatchSet data = micro_dataset(3);
    TrainOptions opt;
    opt.steps = 6;
    opt.batch = 2;
    opt.seed = 9;
    opt.probe_interval = 0;

    HdrTransformer<double> full(micro_config(), 21);
    AdamState<double> full_optim;
    auto full_records = train(full, data, full_optim, opt, kNoFeatureNet);

    HdrTransformer<double> half(micro_config(), 21);
    AdamState<double> half_optim;
    TrainOptions first_half = opt;
    first_half.steps = 3;
    auto rec_a = train(half, data, half_optim, first_half, kNoFeatureNet);

    std::string path = temp_path("resume.hdrt");
    save_checkpoint(path, half, half_optim, opt.seed);
    Container c = read_container(path);
    CheckpointInfo info = checkpoint_info(c);
    HdrTransformer<double> resumed(info.cfg, 0);
    AdamState<double> resumed_optim;
    load_checkpoint_into(c, resumed, resumed_optim);
    CHECK(resumed_optim.step == 3);

    TrainOptions second_half = opt;
    second_half.steps = 3;
    second_half.seed = info.seed;
    auto rec_b = train(resumed, data, resumed_optim, second_half, kNoFeatureNet);

    REQUIRE(full_records.size() == 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(full_records[static_cast<std::size_t>(i)].total == rec_a[static_cast<std::size_t>(i)].total);
        CHECK(full_records[static_cast<std::size_t>(i + 3)].total == rec_b[static_cast<std::size_t>(i)].total);
    }
    for (auto& [p, t] : full.weights()) {
        CHECK(t.values() == resumed.weights().at(p).values());
    }
}

TEST_CASE("checkpoint loader rejects tampering and mismatches") {
    HdrTransformer<double> model(micro_config(), 3);
    AdamState<double> optim;
    std::string path = temp_path("victim.hdrt");
    save_checkpoint(path, model, optim, 0);

    SUBCASE("corrupted byte fails the CRC") {
        auto bytes = read_file_bytes(path);
        bytes[bytes.size() / 2] ^= 0xff;
        std::string bad = temp_path("bad.hdrt");
        write_file_bytes_atomic(bad, bytes);
        CHECK_THROWS_WITH_AS(read_container(bad), doctest::Contains("CRC"), DataError);
    }
    SUBCASE("truncated file is rejected") {
        auto bytes = read_file_bytes(path);
        bytes.resize(bytes.size() / 2);
        std::string bad = temp_path("short.hdrt");
        write_file_bytes_atomic(bad, bytes);
        CHECK_THROWS_AS(read_container(bad), DataError);
    }
    SUBCASE("unknown parameter path is rejected") {
        Container c = read_container(path);
        c.records.push_back(tensor_record<double>("ctb.9.unknown", TensorD::zeros({2})));
        std::string bad = temp_path("unknown.hdrt");
        write_container(bad, c);
        Container c2 = read_container(bad);
        HdrTransformer<double> target(micro_config(), 0);
        AdamState<double> target_optim;
        CHECK_THROWS_WITH_AS(load_checkpoint_into(c2, target, target_optim),
                             doctest::Contains("ctb.9.unknown"), DataError);
    }
    SUBCASE("missing parameter is rejected") {
        Container c = read_container(path);
        c.records.erase(c.records.begin());  // drop the first weight record
        std::string bad = temp_path("missing.hdrt");
        write_container(bad, c);
        Container c2 = read_container(bad);
        HdrTransformer<double> target(micro_config(), 0);
        AdamState<double> target_optim;
        CHECK_THROWS_WITH_AS(load_checkpoint_into(c2, target, target_optim),
                             doctest::Contains("missing"), DataError);
    }
    SUBCASE("wrong magic is rejected") {
        auto bytes = read_file_bytes(path);
        bytes[0] = 'X';
        std::string bad = temp_path("magic.hdrt");
        write_file_bytes_atomic(bad, bytes);
        CHECK_THROWS_WITH_AS(read_container(bad), doctest::Contains("magic"), DataError);
    }
}

TEST_CASE("training leaves the feature net untouched") {
    PatchSet data = micro_dataset(2);
    HdrTransformer<double> model(micro_config(), 3);
    AdamState<double> optim;
    FeatureNet<double> fn(0);
    std::vector<std::vector<double>> before;
    fn.for_each_param([&](const std::string&, TensorD& t) { before.push_back(t.values()); });
    TrainOptions opt;
    opt.steps = 2;
    opt.batch = 2;
    opt.probe_interval = 0;
    train(model, data, optim, opt, &fn);
    std::size_t i = 0;
    fn.for_each_param([&](const std::string&, TensorD& t) {
        CHECK(t.values() == before[i++]);
    });
}

TEST_CASE("training aborts on a non-finite loss with a diagnostic") {
    PatchSet data = micro_dataset(2);
    HdrTransformer<double> model(micro_config(), 3);
    // Poison one weight so the forward pass emits NaN.
    auto& w = model.weights().at("head.conv1.w");
    w.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
    AdamState<double> optim;
    TrainOptions opt;
    opt.steps = 1;
    opt.batch = 1;
    opt.probe_interval = 0;
    CHECK_THROWS_WITH_AS(train(model, data, optim, opt, kNoFeatureNet), doctest::Contains("step 1"),
                         NumericError);
}

TEST_CASE("evaluate produces per-sample rows and a mean") {
    HdrTransformer<double> model(micro_config(), 3);
    std::vector<std::pair<std::string, ExposureBracket>> samples;
    for (int i = 0; i < 2; ++i) {
        SynthScene scene = synth_scene({.seed = static_cast<std::uint64_t>(i), .size = 32,
                                        .motion_px = 0, .saturation_frac = 0.0});
        samples.emplace_back("sample_" + std::to_string(i), scene.bracket);
    }
    EvalResult res = evaluate(model, samples);
    REQUIRE(res.rows.size() == 2);
    double mean_psnr_mu = (res.rows[0].psnr_mu + res.rows[1].psnr_mu) / 2.0;
    CHECK(res.mean.psnr_mu == doctest::Approx(mean_psnr_mu).epsilon(1e-12));
    for (const auto& row : res.rows) {
        CHECK(row.ssim_l <= 1.0);
        CHECK(row.ssim_mu <= 1.0);
        CHECK(row.psnr_l > 0.0);
    }

    SUBCASE("missing ground truth is an error") {
        samples[0].second.gt_hdr.reset();
        CHECK_THROWS_AS(evaluate(model, samples), DataError);
    }
}

TEST_CASE("loss decreases on a tiny overfit task") {
    PatchSet data = micro_dataset(2);
    HdrTransformer<double> model(micro_config(), 5);
    AdamState<double> optim;
    TrainOptions opt;
    opt.steps = 60;
    opt.batch = 2;
    opt.seed = 0;
    opt.lr = 1e-3;
    opt.probe_interval = 0;
    opt.use_perceptual = false;
    auto records = train(model, data, optim, opt, kNoFeatureNet);
    CHECK(records.back().total < records.front().total);
}
