#pragma once

#include <cmath>
#include <iostream>
#include <vector>

#include "hdrfuse/conv.hpp"
#include "hdrfuse/image.hpp"
#include "hdrfuse/ops.hpp"

// Tonemapping, training losses, and evaluation metrics. Loss functions run on
// tensors and participate in the tape; evaluation metrics run on plain float
// images with double accumulation.

namespace hdrfuse {

constexpr double kDefaultMu = 5000.0;
constexpr double kDefaultPerceptualWeight = 0.01;
constexpr double kPsnrCap = 99.0;  // reported for identical images

enum class MetricDomain { linear, mu };

// --- differentiable mu-law: log(1 + mu*x) / log(1 + mu) --------------------

template <typename T>
Tensor<T> mu_tonemap(const Tensor<T>& x, double mu = kDefaultMu) {
    if (mu <= 0.0) throw UsageError("mu_tonemap: mu must be positive");
    Tensor<T> clamped = ops::clamp(x, T(0), T(1));
    Tensor<T> scaled = ops::add_scalar(ops::scale(clamped, static_cast<T>(mu)), T(1));
    // Same log expression in numerator and denominator so T(1) == 1 exactly.
    return ops::div_scalar(ops::log(scaled), static_cast<T>(std::log(1.0 + mu)));
}

// Image-domain variant; out-of-range inputs are clamped with one warning.
ImageF mu_tonemap_image(const ImageF& img, double mu = kDefaultMu);

// --- losses -----------------------------------------------------------------

// Mean absolute difference of the mu-law tonemapped images.
template <typename T>
Tensor<T> l1_recon(const Tensor<T>& pred, const Tensor<T>& gt, double mu = kDefaultMu) {
    if (pred.shape() != gt.shape()) {
        throw UsageError("l1_recon: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(gt.shape()));
    }
    return ops::mean_all(ops::abs(ops::sub(mu_tonemap(pred, mu), mu_tonemap(gt, mu))));
}

// Fixed, seeded convolutional feature pyramid standing in for a pretrained
// backbone: five stride-2 stages (widths 16/32/64/128/128, GELU), taps after
// stages 2, 3 and 4. Parameters never train; identical seeds give identical
// features. Weights may also be loaded from a checkpoint container.
template <typename T>
class FeatureNet {
public:
    static constexpr int kStages = 5;
    static constexpr std::array<int, kStages> kWidths = {16, 32, 64, 128, 128};
    static constexpr std::array<int, 3> kTaps = {2, 3, 4};  // 1-based stage index

    explicit FeatureNet(std::uint64_t seed = 0) {
        Rng rng(seed ^ 0xfeedbeadull);
        int cin = 3;
        for (int s = 0; s < kStages; ++s) {
            int cout = kWidths[static_cast<std::size_t>(s)];
            kernels_[static_cast<std::size_t>(s)] =
                kaiming_uniform_local({3, 3, cin, cout}, 9 * cin, rng);
            biases_[static_cast<std::size_t>(s)] = Tensor<T>::zeros({cout});
            cin = cout;
        }
    }

    // Tap activations for a [H,W,3] image, shallowest first.
    std::vector<Tensor<T>> features(const Tensor<T>& img) const {
        std::vector<Tensor<T>> taps;
        Tensor<T> x = img;
        for (int s = 0; s < kStages; ++s) {
            x = ops::conv2d_bias(x, kernels_[static_cast<std::size_t>(s)],
                                 biases_[static_cast<std::size_t>(s)],
                                 {.stride = 2, .dilation = 1, .padding = 1});
            x = ops::gelu(x);
            for (int tap : kTaps) {
                if (tap == s + 1) taps.push_back(x);
            }
        }
        return taps;
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) {
        for (int s = 0; s < kStages; ++s) {
            std::string p = "featurenet.stage" + std::to_string(s) + ".conv.";
            fn(p + "w", kernels_[static_cast<std::size_t>(s)]);
            fn(p + "b", biases_[static_cast<std::size_t>(s)]);
        }
    }

private:
    static Tensor<T> kaiming_uniform_local(Shape shape, std::int64_t fan_in, Rng& rng) {
        T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in)));
        return Tensor<T>::uniform(std::move(shape), rng, -bound, bound);
    }

    std::array<Tensor<T>, kStages> kernels_;
    std::array<Tensor<T>, kStages> biases_;
};

// Sum over taps of the mean absolute feature difference, both images
// tonemapped first. Gradients reach pred only: gt is a leaf without
// requires_grad and the feature net never trains.
template <typename T>
Tensor<T> perceptual(const Tensor<T>& pred, const Tensor<T>& gt, const FeatureNet<T>& fn,
                     double mu = kDefaultMu) {
    if (pred.shape() != gt.shape()) {
        throw UsageError("perceptual: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(gt.shape()));
    }
    auto fp = fn.features(mu_tonemap(pred, mu));
    auto fg = fn.features(mu_tonemap(gt, mu));
    Tensor<T> total = Tensor<T>::scalar(T(0));
    for (std::size_t j = 0; j < fp.size(); ++j) {
        total = ops::add(total, ops::mean_all(ops::abs(ops::sub(fp[j], fg[j]))));
    }
    return total;
}

struct LossReport {
    double l_r = 0.0;
    double l_p = 0.0;
    double lambda_p = kDefaultPerceptualWeight;
    double total = 0.0;  // always l_r + lambda_p * l_p
};

// Composite objective. Pass a null feature net to drop the perceptual term.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, const FeatureNet<T>* fn,
                     double lambda_p = kDefaultPerceptualWeight, double mu = kDefaultMu,
                     LossReport* report = nullptr) {
    Tensor<T> lr = l1_recon(pred, gt, mu);
    Tensor<T> total = lr;
    Tensor<T> lp = Tensor<T>::scalar(T(0));
    if (fn) {
        lp = perceptual(pred, gt, *fn, mu);
        total = ops::add(lr, ops::scale(lp, static_cast<T>(lambda_p)));
    }
    if (report) {
        report->l_r = static_cast<double>(lr.item());
        report->l_p = static_cast<double>(lp.item());
        report->lambda_p = lambda_p;
        report->total = report->l_r + lambda_p * report->l_p;
    }
    return total;
}

// --- evaluation metrics ------------------------------------------------------

// Peak-1 PSNR in dB, capped at 99 (zero MSE reports the cap).
double psnr(const ImageF& pred, const ImageF& gt, MetricDomain domain, double mu = kDefaultMu);

// Single-scale SSIM on the channel-mean grayscale image: Gaussian window
// 11x11 (shrunk to fit small images), sigma 1.5, K1=0.01, K2=0.03, peak 1.
double ssim(const ImageF& pred, const ImageF& gt, MetricDomain domain, double mu = kDefaultMu);

}  // namespace hdrfuse
