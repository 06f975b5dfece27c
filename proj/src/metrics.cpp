#include "hdrfuse/metrics.hpp"

#include <algorithm>

namespace hdrfuse {

ImageF mu_tonemap_image(const ImageF& img, double mu) {
    if (mu <= 0.0) throw UsageError("mu_tonemap: mu must be positive");
    ImageF out(img.height, img.width, img.channels);
    const double log_denom = std::log(1.0 + mu);
    std::size_t out_of_range = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v = img.data[i];
        if (v < 0.0 || v > 1.0) {
            ++out_of_range;
            v = std::min(1.0, std::max(0.0, v));
        }
        out.data[i] = static_cast<float>(std::log(1.0 + mu * v) / log_denom);
    }
    if (out_of_range) {
        std::cerr << "mu_tonemap: clamped " << out_of_range << " values outside [0,1]\n";
    }
    return out;
}

double psnr(const ImageF& pred, const ImageF& gt, MetricDomain domain, double mu) {
    if (!pred.same_size(gt)) throw UsageError("psnr: image sizes differ");
    ImageF ta, tb;
    const ImageF *pa = &pred, *pb = &gt;
    if (domain == MetricDomain::mu) {
        ta = mu_tonemap_image(pred, mu);
        tb = mu_tonemap_image(gt, mu);
        pa = &ta;
        pb = &tb;
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < pa->data.size(); ++i) {
        double d = static_cast<double>(pa->data[i]) - static_cast<double>(pb->data[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(pa->data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> to_gray(const ImageF& img) {
    std::vector<double> g(img.pixel_count());
    const int c = img.channels;
    for (std::size_t p = 0; p < g.size(); ++p) {
        double acc = 0.0;
        for (int k = 0; k < c; ++k) acc += img.data[p * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)];
        g[p] = acc / c;
    }
    return g;
}

}  // namespace

double ssim(const ImageF& pred, const ImageF& gt, MetricDomain domain, double mu) {
    if (!pred.same_size(gt)) throw UsageError("ssim: image sizes differ");
    ImageF ta, tb;
    const ImageF *pa = &pred, *pb = &gt;
    if (domain == MetricDomain::mu) {
        ta = mu_tonemap_image(pred, mu);
        tb = mu_tonemap_image(gt, mu);
        pa = &ta;
        pb = &tb;
    }
    const int H = pred.height, W = pred.width;
    std::vector<double> x = to_gray(*pa);
    std::vector<double> y = to_gray(*pb);

    int win = std::min({11, H, W});
    if (win % 2 == 0) --win;
    if (win < 1) throw UsageError("ssim: image too small");
    const int half = win / 2;
    const double sigma = 1.5;
    std::vector<double> g(static_cast<std::size_t>(win) * win);
    double gsum = 0.0;
    for (int wy = 0; wy < win; ++wy) {
        for (int wx = 0; wx < win; ++wx) {
            double dy = wy - half, dx = wx - half;
            double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            g[static_cast<std::size_t>(wy) * win + wx] = w;
            gsum += w;
        }
    }
    for (auto& w : g) w /= gsum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    long count = 0;
    for (int cy = half; cy < H - half; ++cy) {
        for (int cx = half; cx < W - half; ++cx) {
            double mux = 0.0, muy = 0.0;
            for (int wy = 0; wy < win; ++wy) {
                for (int wx = 0; wx < win; ++wx) {
                    double w = g[static_cast<std::size_t>(wy) * win + wx];
                    std::size_t idx =
                        static_cast<std::size_t>(cy + wy - half) * W + (cx + wx - half);
                    mux += w * x[idx];
                    muy += w * y[idx];
                }
            }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int wy = 0; wy < win; ++wy) {
                for (int wx = 0; wx < win; ++wx) {
                    double w = g[static_cast<std::size_t>(wy) * win + wx];
                    std::size_t idx =
                        static_cast<std::size_t>(cy + wy - half) * W + (cx + wx - half);
                    double dx = x[idx] - mux;
                    double dy = y[idx] - muy;
                    vx += w * dx * dx;
                    vy += w * dy * dy;
                    cov += w * dx * dy;
                }
            }
            double num = (2.0 * mux * muy + c1) * (2.0 * cov + c2);
            double den = (mux * mux + muy * muy + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace hdrfuse
