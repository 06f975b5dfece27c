#include "hdrfuse/gradcheck_suite.hpp"

#include <functional>
#include <map>
#include <sstream>

#include "hdrfuse/gradcheck.hpp"
#include "hdrfuse/metrics.hpp"
#include "hdrfuse/network.hpp"

namespace hdrfuse {

namespace {

namespace op = hdrfuse::ops;

struct Runner {
    GradCheckSuiteResult result;
    Rng rng;

    explicit Runner(std::uint64_t seed) : rng(seed ^ 0x6772616463686bull) {}

    void run(const std::string& group, const std::string& name,
             const std::function<TensorD()>& forward, TensorD target,
             std::vector<std::int64_t> coords = {}, double eps = 1e-5) {
        GradCheckCase c;
        c.group = group;
        c.name = name;
        GradCheckReport rep;
        c.max_rel_err = grad_check<double>(forward, std::move(target), eps, std::move(coords), &rep);
        c.coords_checked = rep.coords_checked;
        c.passed = c.max_rel_err < kGradCheckTolerance;
        result.all_passed = result.all_passed && c.passed;
        if (c.max_rel_err >= result.worst) {
            result.worst = c.max_rel_err;
            result.worst_name = c.name;
        }
        result.cases.push_back(std::move(c));
    }

    TensorD uniform(Shape shape, double lo, double hi) {
        return TensorD::uniform(std::move(shape), rng, lo, hi);
    }
};

}  // namespace

GradCheckSuiteResult run_gradcheck_suite(std::uint64_t seed, const NetworkConfig* cfg_in) {
    Runner r(seed);

    // --- primitives ---------------------------------------------------------
    {
        TensorD x = r.uniform({4, 6}, -1.0, 1.0);
        TensorD y = r.uniform({6}, -1.0, 1.0);
        r.run("primitive", "add", [&] { return op::mean_all(op::mul(op::add(x, y), op::add(x, y))); }, x);
        r.run("primitive", "sub", [&] { return op::mean_all(op::mul(op::sub(x, y), op::sub(x, y))); }, x);
        r.run("primitive", "mul", [&] { return op::sum_all(op::mul(x, y)); }, x);
        r.run("primitive", "mul_rhs", [&] { return op::sum_all(op::mul(x, y)); }, y);
        r.run("primitive", "scale", [&] { return op::sum_all(op::scale(x, -1.7)); }, x);
        r.run("primitive", "div_scalar", [&] { return op::sum_all(op::div_scalar(x, 2.3)); }, x);
        r.run("primitive", "add_scalar", [&] { return op::sum_all(op::mul(op::add_scalar(x, 0.4), x)); }, x);
        r.run("primitive", "neg", [&] { return op::sum_all(op::mul(op::neg(x), x)); }, x);
    }
    {
        TensorD safe = r.uniform({3, 5}, 0.25, 1.5);
        r.run("primitive", "abs", [&] { return op::sum_all(op::abs(safe)); }, safe);
        r.run("primitive", "log", [&] { return op::sum_all(op::log(safe)); }, safe);
        r.run("primitive", "relu", [&] { return op::sum_all(op::mul(op::relu(safe), safe)); }, safe);
        r.run("primitive", "leaky_relu", [&] { return op::sum_all(op::leaky_relu(safe, 0.1)); }, safe);
        r.run("primitive", "clamp", [&] { return op::sum_all(op::clamp(safe, 0.3, 1.2)); }, safe);
    }
    {
        TensorD x = r.uniform({4, 5}, -2.0, 2.0);
        r.run("primitive", "sigmoid", [&] { return op::sum_all(op::sigmoid(x)); }, x);
        r.run("primitive", "gelu", [&] { return op::sum_all(op::gelu(x)); }, x);
        TensorD w = r.uniform({5}, -1.0, 1.0);
        r.run("primitive", "softmax", [&] { return op::sum_all(op::mul(op::softmax(x), w)); }, x);
        r.run("primitive", "mean_all", [&] { return op::mean_all(op::mul(x, x)); }, x);
        r.run("primitive", "sum_all", [&] { return op::sum_all(op::mul(x, x)); }, x);
        r.run("primitive", "mean_spatial",
              [&] { return op::sum_all(op::mul(op::mean_spatial(x), op::mean_spatial(x))); }, x);
    }
    {
        TensorD x = r.uniform({3, 8}, -1.0, 1.0);
        TensorD gamma = r.uniform({8}, 0.5, 1.5);
        TensorD beta = r.uniform({8}, -0.5, 0.5);
        TensorD w = r.uniform({8}, -1.0, 1.0);
        auto f = [&] { return op::sum_all(op::mul(op::layernorm(x, gamma, beta), w)); };
        r.run("primitive", "layernorm", f, x);
        r.run("primitive", "layernorm_gamma", f, gamma);
        r.run("primitive", "layernorm_beta", f, beta);
    }
    {
        TensorD x = r.uniform({5, 4}, -1.0, 1.0);
        TensorD w = r.uniform({4, 3}, -1.0, 1.0);
        TensorD b = r.uniform({3}, -0.5, 0.5);
        auto f = [&] {
            TensorD y = op::linear(x, w, b);
            return op::mean_all(op::mul(y, y));
        };
        r.run("primitive", "linear", f, x);
        r.run("primitive", "linear_w", f, w);
        r.run("primitive", "linear_b", f, b);
    }
    {
        TensorD a = r.uniform({2, 3, 4}, -1.0, 1.0);
        TensorD b = r.uniform({4, 5}, -1.0, 1.0);
        auto f = [&] {
            TensorD y = op::matmul(a, b);
            return op::mean_all(op::mul(y, y));
        };
        r.run("primitive", "matmul", f, a);
        r.run("primitive", "matmul_rhs", f, b);
    }
    {
        TensorD x = r.uniform({6, 7, 2}, -1.0, 1.0);
        TensorD k = r.uniform({3, 3, 2, 3}, -0.6, 0.6);
        auto f = [&] {
            TensorD y = op::conv2d(x, k, {.stride = 1, .dilation = 1, .padding = 1});
            return op::mean_all(op::mul(y, y));
        };
        r.run("primitive", "conv2d", f, x);
        r.run("primitive", "conv2d_kernel", f, k);
        auto g = [&] {
            return op::sum_all(op::conv2d(x, k, {.stride = 2, .dilation = 2, .padding = 2}));
        };
        r.run("primitive", "conv2d_strided_dilated", g, x);
    }
    {
        TensorD x = r.uniform({4, 6}, -1.0, 1.0);
        TensorD w = r.uniform({4, 6}, -1.0, 1.0);
        r.run("primitive", "reshape_permute", [&] {
            TensorD y = op::permute(op::reshape(x, {2, 2, 6}), {2, 1, 0});
            return op::sum_all(op::mul(y, op::permute(op::reshape(w, {2, 2, 6}), {2, 1, 0})));
        }, x);
        r.run("primitive", "slice_pad", [&] {
            TensorD s = op::slice(x, {1, 2}, {2, 3});
            TensorD padded = op::pad(s, {1, 0}, {0, 1});
            return op::sum_all(op::mul(padded, padded));
        }, x);
        r.run("primitive", "roll", [&] {
            return op::sum_all(op::mul(op::roll(x, {2, -1}, {0, 1}), w));
        }, x);
        r.run("primitive", "concat", [&] {
            TensorD c = op::concat(std::vector<TensorD>{x, w}, 1);
            return op::mean_all(op::mul(c, c));
        }, x);
    }
    {
        TensorD x = r.uniform({3, 4}, 0.05, 0.95);
        r.run("primitive", "mu_tonemap", [&] { return op::sum_all(mu_tonemap(x)); }, x, {}, 1e-7);
    }
    {
        // Fused attention core, including the relative-position table.
        int ws = 2, heads = 2, D = 4, n = 4;
        TensorD qkv = r.uniform({2, n, 3 * D}, -1.0, 1.0);
        TensorD relpos = r.uniform({9, heads}, -0.3, 0.3);
        std::vector<std::uint8_t> valid = {1, 1, 1, 0, 1, 1, 1, 1};
        TensorD probe = r.uniform({2, n, D}, -1.0, 1.0);
        auto g = [&] {
            return op::sum_all(
                op::mul(detail_attn::window_msa_core(qkv, relpos, heads, ws, valid), probe));
        };
        r.run("attention", "window_msa", g, qkv);
        r.run("attention", "window_msa_relpos", g, relpos);
    }

    // --- blocks ---------------------------------------------------------------
    {
        int D = 8;
        Rng prng(seed ^ 0xb10cull);
        CaVitParams<double> p = random_cavit_params<double>(D, 2, 4, 2, 4, prng);
        TensorD e = r.uniform({5, 6, D}, -1.0, 1.0);
        auto f_step = [&] { return op::sum_all(transformer_step(e, p, 4, 2)); };
        r.run("attention", "transformer_step", f_step, e);
        r.run("attention", "transformer_step_qkv_w", f_step, p.qkv_w);
        auto f_lce = [&] { return op::sum_all(lce(e, p)); };
        r.run("attention", "lce", f_lce, e);
        Rng c1(seed ^ 1);
        r.run("attention", "lce_conv_w", f_lce, p.lce_conv_w,
              sample_coords(p.lce_conv_w.numel(), 32, c1));
        auto f_block = [&] { return op::sum_all(ca_vit(e, p, 4, 0)); };
        r.run("attention", "ca_vit", f_block, e);
        r.run("attention", "ca_vit_fc", f_block, p.lce_fc2_w);
    }
    {
        // Spatial attention gate.
        Rng prng(seed ^ 0x5a5aull);
        int C = 6;
        TensorD fi = r.uniform({6, 6, C}, -1.0, 1.0);
        TensorD fr = r.uniform({6, 6, C}, -1.0, 1.0);
        TensorD c1w = kaiming_uniform<double>({3, 3, 2 * C, C}, 9 * 2 * C, prng);
        TensorD c1b = TensorD::zeros({C});
        TensorD c2w = kaiming_uniform<double>({3, 3, C, C}, 9 * C, prng);
        TensorD c2b = TensorD::zeros({C});
        auto f = [&] {
            return op::sum_all(op::mul(fi, spatial_attention(fi, fr, c1w, c1b, c2w, c2b)));
        };
        r.run("network", "spatial_attention", f, fi);
        Rng c2(seed ^ 2);
        r.run("network", "spatial_attention_conv1", f, c1w, sample_coords(c1w.numel(), 32, c2));
    }

    // --- network-scale checks -------------------------------------------------
    NetworkConfig cfg = cfg_in ? *cfg_in : NetworkConfig::tiny();
    cfg.dtype = "f64";
    {
        HdrTransformer<double> model(cfg, seed ^ 0xC7B);
        TensorD f0 = r.uniform({16, 16, cfg.embed_dim}, -1.0, 1.0);
        auto f = [&] { return op::sum_all(model.ctb_forward(f0, 0)); };
        r.run("network", "ctb", f, f0, sample_coords(f0.numel(), 48, r.rng));

        std::array<TensorD, 3> x;
        for (auto& plane : x) plane = r.uniform({16, 16, 6}, 0.0, 1.0);
        TensorD gt = r.uniform({16, 16, 3}, 0.0, 1.0);
        auto f_model = [&] { return l1_recon(model.forward(x), gt); };
        auto& slice = model.weights().at("ctb.0.cavit.0.msa.qkv.w");
        Rng c3(seed ^ 3);
        r.run("network", "end_to_end_weights", f_model, slice,
              sample_coords(slice.numel(), 6, c3));
        Rng c4(seed ^ 4);
        r.run("network", "end_to_end_input", f_model, x[0], sample_coords(x[0].numel(), 6, c4));
    }

    // --- losses ----------------------------------------------------------------
    {
        TensorD pred = r.uniform({12, 12, 3}, 0.02, 0.98);
        TensorD gt = r.uniform({12, 12, 3}, 0.02, 0.98);
        r.run("loss", "l1_recon", [&] { return l1_recon(pred, gt); }, pred, {}, 1e-6);
        FeatureNet<double> fn(seed);
        Rng c5(seed ^ 5);
        r.run("loss", "perceptual", [&] { return perceptual(pred, gt, fn); }, pred,
              sample_coords(pred.numel(), 48, c5), 1e-6);
        r.run("loss", "total_loss", [&] { return total_loss(pred, gt, &fn); }, pred,
              sample_coords(pred.numel(), 48, c5), 1e-6);
    }

    return r.result;
}

std::string format_gradcheck_report(const GradCheckSuiteResult& r) {
    std::ostringstream os;
    std::map<std::string, const GradCheckCase*> worst_per_group;
    for (const auto& c : r.cases) {
        char line[160];
        std::snprintf(line, sizeof line, "%-8s %-28s max_rel_err %.3e  coords %-4lld %s\n",
                      c.group.c_str(), c.name.c_str(), c.max_rel_err,
                      static_cast<long long>(c.coords_checked), c.passed ? "ok" : "FAIL");
        os << line;
        auto it = worst_per_group.find(c.group);
        if (it == worst_per_group.end() || c.max_rel_err > it->second->max_rel_err) {
            worst_per_group[c.group] = &c;
        }
    }
    os << "--\n";
    for (const auto& [group, c] : worst_per_group) {
        char line[160];
        std::snprintf(line, sizeof line, "worst in %-9s %-28s %.3e\n", group.c_str(),
                      c->name.c_str(), c->max_rel_err);
        os << line;
    }
    os << (r.all_passed ? "gradcheck: all passed" : "gradcheck: FAILURES present") << " (worst "
       << r.worst_name << ")\n";
    return os.str();
}

}  // namespace hdrfuse
