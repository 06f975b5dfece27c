#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hdrfuse/gradcheck.hpp"
#include "hdrfuse/metrics.hpp"
#include "hdrfuse/trainer.hpp"
#include "oracles.hpp"

using namespace hdrfuse;
namespace op = hdrfuse::ops;

namespace {

ImageF random_image(int h, int w, int c, Rng& rng) {
    ImageF img(h, w, c);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

std::vector<double> gray_of(const ImageF& img) {
    std::vector<double> g(img.pixel_count());
    for (std::size_t p = 0; p < g.size(); ++p) {
        double acc = 0.0;
        for (int k = 0; k < img.channels; ++k) {
            acc += img.data[p * static_cast<std::size_t>(img.channels) + static_cast<std::size_t>(k)];
        }
        g[p] = acc / img.channels;
    }
    return g;
}

}  // namespace

TEST_CASE("mu-law endpoints are exact") {
    TensorD x = TensorD::from({2}, {0.0, 1.0});
    TensorD y = mu_tonemap(x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[1] == 1.0);

    ImageF img(1, 2, 1);
    img.at(0, 0, 0) = 0.0f;
    img.at(0, 1, 0) = 1.0f;
    ImageF t = mu_tonemap_image(img);
    CHECK(t.at(0, 0, 0) == 0.0f);
    CHECK(t.at(0, 1, 0) == 1.0f);
}

TEST_CASE("mu-law midpoint matches the closed form") {
    // log(1 + 5000*0.5) / log(1 + 5000), evaluated independently.
    double expect = std::log(2501.0) / std::log(5001.0);
    CHECK(expect == doctest::Approx(0.9186433).epsilon(1e-6));
    TensorD y = mu_tonemap(TensorD::scalar(0.5));
    CHECK(std::abs(y.item() - expect) < 1e-12);
}

TEST_CASE("mu-law rejects non-positive mu") {
    CHECK_THROWS_AS(mu_tonemap(TensorD::scalar(0.5), 0.0), UsageError);
    CHECK_THROWS_AS(mu_tonemap_image(ImageF(1, 1, 1), -3.0), UsageError);
}

TEST_CASE("mu-law gradient matches the analytic derivative") {
    const double mu = kDefaultMu;
    Rng rng(3);
    TensorD x = TensorD::uniform({16}, rng, 0.01, 0.99);
    x.set_requires_grad(true);
    {
        TapeScope<double> scope;
        scope.tape().backward(op::sum_all(mu_tonemap(x)));
    }
    for (std::size_t i = 0; i < 16; ++i) {
        double xi = x.values()[i];
        double analytic = mu / ((1.0 + mu * xi) * std::log(1.0 + mu));
        CHECK(std::abs(x.grad()[i] - analytic) < 1e-8);
    }
    auto f = [&]() { return op::sum_all(mu_tonemap(x)); };
    CHECK(grad_check<double>(f, x, 1e-7) < 1e-6);
}

TEST_CASE("mu-law is strictly increasing and analytically invertible") {
    const double mu = kDefaultMu;
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
        double xi = i / 100.0;
        double y = mu_tonemap(TensorD::scalar(xi)).item();
        CHECK(y > prev);
        prev = y;
        double inv = (std::exp(y * std::log(1.0 + mu)) - 1.0) / mu;
        CHECK(std::abs(inv - xi) < 1e-6);
    }
}

TEST_CASE("l1 reconstruction loss") {
    Rng rng(5);
    TensorD a = TensorD::uniform({4, 4, 3}, rng, 0.0, 1.0);
    SUBCASE("zero on identical inputs") { CHECK(l1_recon(a, a).item() == 0.0); }
    SUBCASE("constant offset closed form") {
        TensorD x = TensorD::full({8}, 0.4);
        TensorD y = TensorD::full({8}, 0.5);
        double expect = std::abs(mu_tonemap(TensorD::scalar(0.4)).item() -
                                 mu_tonemap(TensorD::scalar(0.5)).item());
        CHECK(l1_recon(x, y).item() == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("symmetry") {
        TensorD b = TensorD::uniform({4, 4, 3}, rng, 0.0, 1.0);
        CHECK(l1_recon(a, b).item() == l1_recon(b, a).item());
    }
    SUBCASE("positive for different inputs") {
        TensorD b = op::clamp(op::add_scalar(a, 0.05), 0.0, 1.0);
        CHECK(l1_recon(a, b).item() > 0.0);
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(l1_recon(a, TensorD::zeros({4, 4, 1})), UsageError);
    }
}

TEST_CASE("feature net determinism and persistence") {
    Rng rng(7);
    TensorD img = TensorD::uniform({16, 16, 3}, rng, 0.0, 1.0);
    FeatureNet<double> fa(11), fb(11), fc(12);
    auto ta = fa.features(img), tb = fb.features(img), tc = fc.features(img);
    REQUIRE(ta.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(ta[j].values() == tb[j].values());
    }
    CHECK(ta[0].values() != tc[0].values());

    auto dir = std::filesystem::temp_directory_path() / "hdrfuse_featurenet";
    std::filesystem::create_directories(dir);
    std::string path = (dir / "fn.hdrt").string();
    save_featurenet(path, fa);
    FeatureNet<double> loaded(99);  // different seed, then overwritten from file
    load_featurenet(path, loaded);
    auto tl = loaded.features(img);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(tl[j].values() == ta[j].values());
    }
}

TEST_CASE("perceptual loss") {
    Rng rng(13);
    FeatureNet<double> fn(0);
    TensorD a = TensorD::uniform({16, 16, 3}, rng, 0.0, 1.0);
    TensorD b = TensorD::uniform({16, 16, 3}, rng, 0.0, 1.0);

    SUBCASE("zero on identical inputs, non-negative in general") {
        CHECK(perceptual(a, a, fn).item() == 0.0);
        CHECK(perceptual(a, b, fn).item() >= 0.0);
    }
    SUBCASE("tap order does not change the value") {
        auto fa = fn.features(mu_tonemap(a));
        auto fb = fn.features(mu_tonemap(b));
        double fwd = 0.0, rev = 0.0;
        for (std::size_t j = 0; j < fa.size(); ++j) {
            fwd += op::mean_all(op::abs(op::sub(fa[j], fb[j]))).item();
        }
        for (std::size_t j = fa.size(); j-- > 0;) {
            rev += op::mean_all(op::abs(op::sub(fa[j], fb[j]))).item();
        }
        CHECK(fwd == doctest::Approx(rev).epsilon(1e-12));
        CHECK(perceptual(a, b, fn).item() == doctest::Approx(fwd).epsilon(1e-12));
    }
    SUBCASE("gradients flow to the prediction only") {
        a.set_requires_grad(true);
        {
            TapeScope<double> scope;
            scope.tape().backward(perceptual(a, b, fn));
        }
        CHECK(a.has_grad());
        CHECK_FALSE(b.has_grad());
        bool any_param_grad = false;
        fn.for_each_param([&](const std::string&, TensorD& t) {
            any_param_grad = any_param_grad || t.has_grad();
        });
        CHECK_FALSE(any_param_grad);
        a.set_requires_grad(false);
    }
}

TEST_CASE("loss report total is recomputable") {
    Rng rng(17);
    FeatureNet<double> fn(1);
    TensorD pred = TensorD::uniform({16, 16, 3}, rng, 0.0, 1.0);
    TensorD gt = TensorD::uniform({16, 16, 3}, rng, 0.0, 1.0);
    LossReport rep;
    TensorD total = total_loss(pred, gt, &fn, 0.01, kDefaultMu, &rep);
    CHECK(std::abs(rep.total - (rep.l_r + rep.lambda_p * rep.l_p)) < 1e-12);
    CHECK(std::abs(total.item() - rep.total) < 1e-12);
    CHECK(rep.l_r >= 0.0);
    CHECK(rep.l_p >= 0.0);
}

TEST_CASE("PSNR analytic values") {
    SUBCASE("identical images report the 99 dB cap") {
        Rng rng(19);
        ImageF a = random_image(8, 8, 3, rng);
        CHECK(psnr(a, a, MetricDomain::linear) == kPsnrCap);
        CHECK(psnr(a, a, MetricDomain::mu) == kPsnrCap);
    }
    SUBCASE("MSE 1e-4 is 40 dB") {
        ImageF a(8, 8, 3), b(8, 8, 3);
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            a.data[i] = 0.5f;
            b.data[i] = 0.51f;
        }
        CHECK(psnr(a, b, MetricDomain::linear) == doctest::Approx(40.0).epsilon(1e-6));
    }
    SUBCASE("PSNR-mu equals PSNR-l of the tonemapped images") {
        Rng rng(23);
        ImageF a = random_image(8, 8, 3, rng);
        ImageF b = random_image(8, 8, 3, rng);
        CHECK(psnr(a, b, MetricDomain::mu) ==
              psnr(mu_tonemap_image(a), mu_tonemap_image(b), MetricDomain::linear));
    }
}

TEST_CASE("SSIM analytic values") {
    SUBCASE("identical images give exactly 1.0") {
        Rng rng(29);
        ImageF a = random_image(16, 16, 3, rng);
        CHECK(ssim(a, a, MetricDomain::linear) == 1.0);
        CHECK(ssim(a, a, MetricDomain::mu) == 1.0);
    }
    SUBCASE("inverted checkerboard is strongly anti-correlated") {
        ImageF a(16, 16, 1), b(16, 16, 1);
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                float v = static_cast<float>((x + y) % 2);
                a.at(y, x, 0) = v;
                b.at(y, x, 0) = 1.0f - v;
            }
        }
        CHECK(ssim(a, b, MetricDomain::linear) < 0.0);
    }
    SUBCASE("constant images reduce to the luminance term") {
        ImageF a(16, 16, 3), b(16, 16, 3);
        for (auto& v : a.data) v = 0.25f;
        for (auto& v : b.data) v = 0.75f;
        double ma = 0.25, mb = 0.75, c1 = 1e-4;
        double expect = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        CHECK(ssim(a, b, MetricDomain::linear) == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("PSNR and SSIM agree with the naive oracles on random 8x8 pairs") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        ImageF a = random_image(8, 8, 3, rng);
        ImageF b = random_image(8, 8, 3, rng);
        std::vector<double> av(a.data.begin(), a.data.end());
        std::vector<double> bv(b.data.begin(), b.data.end());
        CHECK(std::abs(psnr(a, b, MetricDomain::linear) - oracle::psnr(av, bv)) < 1e-9);
        CHECK(std::abs(ssim(a, b, MetricDomain::linear) -
                       oracle::ssim(gray_of(a), gray_of(b), 8, 8)) < 1e-6);
    }
}
