#pragma once

// Independent reference implementations used to pin expected values. These
// are deliberately naive (plain loops, no shared code with the library) so a
// bug in the fast path cannot hide in its own oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// C[m,n] = A[m,k] * B[k,n], triple loop in the textbook order.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::size_t>(i) * k + p] *
                       b[static_cast<std::size_t>(p) * n + j];
            }
            c[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
    return c;
}

// Sliding-window cross-correlation, NHWC single image.
inline std::vector<double> conv2d(const std::vector<double>& x, int H, int W, int Ci,
                                  const std::vector<double>& k, int kh, int kw, int Co,
                                  int stride, int dilation, int padding, int& Ho, int& Wo) {
    Ho = (H + 2 * padding - dilation * (kh - 1) - 1) / stride + 1;
    Wo = (W + 2 * padding - dilation * (kw - 1) - 1) / stride + 1;
    std::vector<double> y(static_cast<std::size_t>(Ho) * Wo * Co, 0.0);
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            for (int co = 0; co < Co; ++co) {
                double acc = 0.0;
                for (int dy = 0; dy < kh; ++dy) {
                    for (int dx = 0; dx < kw; ++dx) {
                        int iy = oy * stride - padding + dy * dilation;
                        int ix = ox * stride - padding + dx * dilation;
                        if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                        for (int ci = 0; ci < Ci; ++ci) {
                            acc += x[(static_cast<std::size_t>(iy) * W + ix) * Ci + ci] *
                                   k[((static_cast<std::size_t>(dy) * kw + dx) * Ci + ci) * Co +
                                     co];
                        }
                    }
                }
                y[(static_cast<std::size_t>(oy) * Wo + ox) * Co + co] = acc;
            }
        }
    }
    return y;
}

// softmax(Q K^T / sqrt(d) + B) V for one window of n tokens, one head.
// q,k,v are [n,d]; bias is [n,n]; mask[j] = false excludes key j.
inline std::vector<double> attention(const std::vector<double>& q, const std::vector<double>& k,
                                     const std::vector<double>& v, const std::vector<double>& bias,
                                     const std::vector<bool>& mask, int n, int d) {
    std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < n; ++i) {
        std::vector<double> logits(static_cast<std::size_t>(n), -1e300);
        for (int j = 0; j < n; ++j) {
            if (!mask[static_cast<std::size_t>(j)]) continue;
            double acc = 0.0;
            for (int p = 0; p < d; ++p) {
                acc += q[static_cast<std::size_t>(i) * d + p] * k[static_cast<std::size_t>(j) * d + p];
            }
            logits[static_cast<std::size_t>(j)] =
                acc * scale + bias[static_cast<std::size_t>(i) * n + j];
        }
        double m = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        std::vector<double> p(static_cast<std::size_t>(n), 0.0);
        for (int j = 0; j < n; ++j) {
            if (!mask[static_cast<std::size_t>(j)]) continue;
            p[static_cast<std::size_t>(j)] = std::exp(logits[static_cast<std::size_t>(j)] - m);
            z += p[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < n; ++j) {
            double w = p[static_cast<std::size_t>(j)] / z;
            for (int c = 0; c < d; ++c) {
                out[static_cast<std::size_t>(i) * d + c] += w * v[static_cast<std::size_t>(j) * d + c];
            }
        }
    }
    return out;
}

// Peak-1 PSNR with plain accumulation; identical images report the 99 dB cap.
inline double psnr(const std::vector<double>& a, const std::vector<double>& b) {
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// Single-scale SSIM on a grayscale image, Gaussian window, valid region only.
// Window size shrinks to the largest odd extent that fits small images.
inline double ssim(const std::vector<double>& a, const std::vector<double>& b, int H, int W,
                   int window = 11, double sigma = 1.5, double k1 = 0.01, double k2 = 0.03) {
    int win = std::min({window, H, W});
    if (win % 2 == 0) --win;
    int half = win / 2;
    std::vector<double> g(static_cast<std::size_t>(win) * win);
    double gsum = 0.0;
    for (int y = 0; y < win; ++y) {
        for (int x = 0; x < win; ++x) {
            double dy = y - half, dx = x - half;
            double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            g[static_cast<std::size_t>(y) * win + x] = w;
            gsum += w;
        }
    }
    for (auto& w : g) w /= gsum;

    double c1 = k1 * k1, c2 = k2 * k2;
    double total = 0.0;
    int count = 0;
    for (int cy = half; cy < H - half; ++cy) {
        for (int cx = half; cx < W - half; ++cx) {
            double mua = 0.0, mub = 0.0;
            for (int y = 0; y < win; ++y) {
                for (int x = 0; x < win; ++x) {
                    double w = g[static_cast<std::size_t>(y) * win + x];
                    mua += w * a[static_cast<std::size_t>(cy + y - half) * W + (cx + x - half)];
                    mub += w * b[static_cast<std::size_t>(cy + y - half) * W + (cx + x - half)];
                }
            }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int y = 0; y < win; ++y) {
                for (int x = 0; x < win; ++x) {
                    double w = g[static_cast<std::size_t>(y) * win + x];
                    double da = a[static_cast<std::size_t>(cy + y - half) * W + (cx + x - half)] - mua;
                    double db = b[static_cast<std::size_t>(cy + y - half) * W + (cx + x - half)] - mub;
                    va += w * da * da;
                    vb += w * db * db;
                    cov += w * da * db;
                }
            }
            double num = (2.0 * mua * mub + c1) * (2.0 * cov + c2);
            double den = (mua * mua + mub * mub + c1) * (va + vb + c2);
            total += num / den;
            ++count;
        }
    }
    return total / count;
}

// Textbook bias-corrected Adam on a scalar chain.
struct ScalarAdam {
    double lr = 2e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double m = 0.0, v = 0.0;
    long t = 0;

    double step(double w, double g) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        double mhat = m / (1.0 - std::pow(beta1, t));
        double vhat = v / (1.0 - std::pow(beta2, t));
        return w - lr * mhat / (std::sqrt(vhat) + eps);
    }
};

}  // namespace oracle
