#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hdrfuse/attention.hpp"
#include "hdrfuse/gradcheck.hpp"
#include "oracles.hpp"

using namespace hdrfuse;
namespace op = hdrfuse::ops;

namespace {

TensorD random_map(int H, int W, int D, Rng& rng) {
    return TensorD::uniform({H, W, D}, rng, -1.0, 1.0);
}

}  // namespace

TEST_CASE("window partition: degenerate single window") {
    Rng rng(1);
    TensorD t = random_map(4, 4, 3, rng);
    WindowSet<double> w = window_partition(t, 4, 0);
    CHECK(w.tokens.shape() == Shape{1, 16, 3});
    CHECK(std::all_of(w.valid.begin(), w.valid.end(), [](auto v) { return v == 1; }));
    CHECK(w.tokens.values() == t.values());  // row-major tiling of one window
}

TEST_CASE("window partition matches index arithmetic") {
    // 4x4 map, ws=2: token (y,x) lands in window (y/2)*2+(x/2), slot (y%2)*2+(x%2).
    TensorD t = TensorD::zeros({4, 4, 1});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            t.mutable_values()[static_cast<std::size_t>(y * 4 + x)] = y * 4 + x;
        }
    }
    WindowSet<double> w = window_partition(t, 2, 0);
    REQUIRE(w.tokens.shape() == Shape{4, 4, 1});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            int win = (y / 2) * 2 + (x / 2);
            int slot = (y % 2) * 2 + (x % 2);
            CHECK(w.tokens.values()[static_cast<std::size_t>(win * 4 + slot)] == y * 4 + x);
        }
    }
}

TEST_CASE("window partition/reverse round-trip is bit-exact") {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        int H = 5 + static_cast<int>(rng.below(29));
        int W = 5 + static_cast<int>(rng.below(29));
        int ws = rng.below(2) ? 4 : 8;
        int shift = rng.below(2) ? ws / 2 : 0;
        TensorD t = random_map(H, W, 3, rng);
        WindowSet<double> w = window_partition(t, ws, shift);
        TensorD back = window_reverse(w);
        REQUIRE(back.shape() == t.shape());
        CHECK(back.values() == t.values());
    }
}

TEST_CASE("window attention: single valid token returns its value row") {
    // 1x1 token map in a 2x2 window: three padding tokens are masked out, so
    // the lone valid token attends only to itself.
    Rng rng(3);
    int D = 6, heads = 2;
    TensorD t = random_map(1, 1, D, rng);
    CaVitParams<double> p = random_cavit_params<double>(D, heads, 2, 2, 2, rng);
    WindowSet<double> w = window_partition(t, 2, 0);
    TensorD qkv = op::linear(w.tokens, p.qkv_w, p.qkv_b);
    TensorD ctx = detail_attn::window_msa_core(qkv, p.relpos, heads, 2, w.valid);
    // Expected: the V block of the valid token (slot 0).
    for (int c = 0; c < D; ++c) {
        CHECK(ctx.values()[static_cast<std::size_t>(c)] ==
              doctest::Approx(qkv.values()[static_cast<std::size_t>(2 * D + c)]).epsilon(1e-12));
    }
}

TEST_CASE("window attention: zero scores give the mean of value rows") {
    Rng rng(5);
    int D = 4, heads = 1, ws = 2, n = 4;
    // Hand-built qkv: Q and K zero, V arbitrary -> uniform attention.
    TensorD qkv = TensorD::zeros({1, n, 3 * D});
    for (int j = 0; j < n; ++j) {
        for (int c = 0; c < D; ++c) {
            qkv.mutable_values()[static_cast<std::size_t>(j * 3 * D + 2 * D + c)] =
                rng.uniform(-1.0, 1.0);
        }
    }
    TensorD relpos = TensorD::zeros({9, 1});
    std::vector<std::uint8_t> valid(4, 1);
    TensorD ctx = detail_attn::window_msa_core(qkv, relpos, heads, ws, valid);
    for (int c = 0; c < D; ++c) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) {
            mean += qkv.values()[static_cast<std::size_t>(j * 3 * D + 2 * D + c)];
        }
        mean /= n;
        for (int i = 0; i < n; ++i) {
            CHECK(ctx.values()[static_cast<std::size_t>(i * D + c)] ==
                  doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("window attention matches the quadratic-form oracle") {
    Rng rng(11);
    int D = 4, heads = 1, ws = 2, n = 4;
    TensorD qkv = TensorD::uniform({1, n, 3 * D}, rng, -1.0, 1.0);
    TensorD relpos = TensorD::uniform({9, 1}, rng, -0.5, 0.5);
    std::vector<std::uint8_t> valid = {1, 1, 1, 0};  // one padded slot
    TensorD ctx = detail_attn::window_msa_core(qkv, relpos, heads, ws, valid);

    auto relidx = relative_position_index(ws);
    std::vector<double> q, k, v, bias(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < D; ++c) {
            q.push_back(qkv.values()[static_cast<std::size_t>(i * 3 * D + c)]);
            k.push_back(qkv.values()[static_cast<std::size_t>(i * 3 * D + D + c)]);
            v.push_back(qkv.values()[static_cast<std::size_t>(i * 3 * D + 2 * D + c)]);
        }
        for (int j = 0; j < n; ++j) {
            bias[static_cast<std::size_t>(i * n + j)] =
                relpos.values()[static_cast<std::size_t>(relidx[static_cast<std::size_t>(i * n + j)])];
        }
    }
    std::vector<bool> mask = {true, true, true, false};
    auto expect = oracle::attention(q, k, v, bias, mask, n, D);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(std::abs(ctx.values()[i] - expect[i]) < 1e-10);
    }
}

TEST_CASE("attention rows over valid keys sum to one; padded keys get no mass") {
    Rng rng(13);
    int D = 8, heads = 2, ws = 4;
    TensorD t = random_map(6, 5, D, rng);  // forces padding
    CaVitParams<double> p = random_cavit_params<double>(D, heads, ws, 2, 2, rng);
    WindowSet<double> w = window_partition(t, ws, 0);
    TensorD qkv = op::linear(w.tokens, p.qkv_w, p.qkv_b);
    detail_attn::AttnTrace<double> trace;
    detail_attn::window_msa_core(qkv, p.relpos, heads, ws, w.valid, &trace);
    std::int64_t nw = w.tokens.dim(0), n = w.tokens.dim(1);
    for (std::int64_t win = 0; win < nw; ++win) {
        for (int h = 0; h < heads; ++h) {
            for (std::int64_t i = 0; i < n; ++i) {
                double sum = 0.0;
                for (std::int64_t j = 0; j < n; ++j) {
                    double pij = trace.probs[static_cast<std::size_t>(((win * heads + h) * n + i) * n + j)];
                    if (!w.valid[static_cast<std::size_t>(win * n + j)]) {
                        CHECK(pij == 0.0);
                    }
                    sum += pij;
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("transformer_step with zeroed branch tails is the identity") {
    Rng rng(17);
    int D = 6;
    TensorD e = random_map(5, 7, D, rng);
    CaVitParams<double> p = random_cavit_params<double>(D, 2, 4, 2, 2, rng);
    p.proj_w = TensorD::zeros(p.proj_w.shape());
    p.proj_b = TensorD::zeros(p.proj_b.shape());
    p.mlp2_w = TensorD::zeros(p.mlp2_w.shape());
    p.mlp2_b = TensorD::zeros(p.mlp2_b.shape());
    TensorD out = transformer_step(e, p, 4, 0);
    CHECK(out.values() == e.values());
}

TEST_CASE("transformer_step preserves shape and passes grad_check") {
    Rng rng(19);
    int D = 6;
    TensorD e = random_map(5, 6, D, rng);  // padding on both axes for ws=4
    CaVitParams<double> p = random_cavit_params<double>(D, 2, 4, 2, 2, rng);
    for (int shift : {0, 2}) {
        TensorD out = transformer_step(e, p, 4, shift);
        CHECK(out.shape() == e.shape());
    }
    auto f = [&]() { return op::sum_all(transformer_step(e, p, 4, 2)); };
    CHECK(grad_check<double>(f, e, 1e-5) < 1e-4);
    CHECK(grad_check<double>(f, p.qkv_w, 1e-5) < 1e-4);
    CHECK(grad_check<double>(f, p.relpos, 1e-5) < 1e-4);
}

TEST_CASE("lce channel gate") {
    Rng rng(23);
    int D = 8;
    TensorD e = random_map(6, 6, D, rng);
    CaVitParams<double> p = random_cavit_params<double>(D, 2, 4, 2, 4, rng);

    SUBCASE("zero FC stack forces omega = 0.5") {
        p.lce_fc1_w = TensorD::zeros(p.lce_fc1_w.shape());
        p.lce_fc1_b = TensorD::zeros(p.lce_fc1_b.shape());
        p.lce_fc2_w = TensorD::zeros(p.lce_fc2_w.shape());
        p.lce_fc2_b = TensorD::zeros(p.lce_fc2_b.shape());
        TensorD omega;
        TensorD out = lce(e, p, &omega);
        for (double w : omega.values()) CHECK(w == 0.5);
        // out must be exactly 0.5 * f_local; recompute f_local.
        TensorD a = op::layernorm(e, p.norm1_g, p.norm1_b);
        TensorD f_local = op::conv2d_bias(a, p.lce_conv_w, p.lce_conv_b, {1, 1, 1});
        for (std::size_t i = 0; i < out.values().size(); ++i) {
            CHECK(out.values()[i] == 0.5 * f_local.values()[i]);
        }
    }
    SUBCASE("constant input pools to that constant") {
        TensorD c = TensorD::zeros({4, 4, 3});
        for (int i = 0; i < 48; ++i) c.mutable_values()[static_cast<std::size_t>(i)] = (i % 3) + 1.0;
        TensorD pooled = op::mean_spatial(c);
        CHECK(pooled.values() == std::vector<double>{1.0, 2.0, 3.0});
    }
    SUBCASE("omega is strictly inside (0,1) and output is omega * f_local") {
        TensorD omega;
        TensorD out = lce(e, p, &omega);
        for (double w : omega.values()) {
            CHECK(w > 0.0);
            CHECK(w < 1.0);
        }
        TensorD a = op::layernorm(e, p.norm1_g, p.norm1_b);
        TensorD f_local = op::conv2d_bias(a, p.lce_conv_w, p.lce_conv_b, {1, 1, 1});
        for (int y = 0; y < 6; ++y) {
            for (int x = 0; x < 6; ++x) {
                for (int c = 0; c < D; ++c) {
                    std::size_t i = static_cast<std::size_t>((y * 6 + x) * D + c);
                    CHECK(out.values()[i] ==
                          doctest::Approx(omega.values()[static_cast<std::size_t>(c)] *
                                          f_local.values()[i]).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("ca_vit zero-initialized branches reduce to the input") {
    Rng rng(29);
    int D = 6;
    TensorD e = random_map(4, 4, D, rng);
    CaVitParams<double> p = random_cavit_params<double>(D, 2, 4, 2, 2, rng);
    p.proj_w = TensorD::zeros(p.proj_w.shape());
    p.proj_b = TensorD::zeros(p.proj_b.shape());
    p.mlp2_w = TensorD::zeros(p.mlp2_w.shape());
    p.mlp2_b = TensorD::zeros(p.mlp2_b.shape());
    p.lce_conv_w = TensorD::zeros(p.lce_conv_w.shape());
    p.lce_conv_b = TensorD::zeros(p.lce_conv_b.shape());
    TensorD out = ca_vit(e, p, 4, 0);
    // global branch: e; local branch: omega * 0 = 0.
    CHECK(out.values() == e.values());
}

TEST_CASE("ca_vit preserves shape and passes a full-block grad_check") {
    Rng rng(31);
    int D = 6;
    TensorD e = random_map(5, 6, D, rng);
    CaVitParams<double> p = random_cavit_params<double>(D, 2, 4, 2, 2, rng);
    TensorD out = ca_vit(e, p, 4, 2);
    CHECK(out.shape() == e.shape());

    auto f = [&]() { return op::sum_all(ca_vit(e, p, 4, 2)); };
    CHECK(grad_check<double>(f, e, 1e-5) < 1e-4);
    CHECK(grad_check<double>(f, p.lce_conv_w, 1e-5,
                             sample_coords(p.lce_conv_w.numel(), 40, rng)) < 1e-4);
    CHECK(grad_check<double>(f, p.mlp1_w, 1e-5, sample_coords(p.mlp1_w.numel(), 40, rng)) < 1e-4);
}

TEST_CASE("shift-0 windowed attention commutes with whole-window translation") {
    Rng rng(37);
    int D = 4, ws = 4;
    TensorD e = random_map(8, 8, D, rng);
    CaVitParams<double> p = random_cavit_params<double>(D, 2, ws, 2, 2, rng);

    auto run = [&](const TensorD& x) {
        WindowSet<double> w = window_partition(x, ws, 0);
        w = msa(w, p);
        return window_reverse(w);
    };
    TensorD base = run(e);
    TensorD rolled_in = op::roll(e, {ws, ws}, {0, 1});
    TensorD out_rolled = run(rolled_in);
    TensorD expect = op::roll(base, {ws, ws}, {0, 1});
    CHECK(out_rolled.values() == expect.values());
}
