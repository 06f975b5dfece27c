#include "hdrfuse/synth.hpp"

#include <algorithm>
#include <cmath>

#include "hdrfuse/rng.hpp"

namespace hdrfuse {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Wave {
    double fy, fx, phase, amp;
};

// Sum of low-frequency plane waves, one phase shift per channel.
struct Texture {
    std::array<Wave, 3> waves;
    std::array<double, 3> channel_phase;
    double base;

    double sample(double y, double x, int c) const {
        double v = base;
        for (const auto& w : waves) {
            v += w.amp * std::sin(2.0 * kPi * (w.fy * y + w.fx * x) + w.phase +
                                  channel_phase[static_cast<std::size_t>(c)]);
        }
        return v;
    }
};

Texture random_texture(Rng& rng, double base, double amp_lo, double amp_hi, double freq_hi) {
    Texture t;
    t.base = base;
    for (auto& w : t.waves) {
        w.fy = rng.uniform(0.3, freq_hi);
        w.fx = rng.uniform(0.3, freq_hi);
        w.phase = rng.uniform(0.0, 2.0 * kPi);
        w.amp = rng.uniform(amp_lo, amp_hi);
    }
    for (auto& p : t.channel_phase) p = rng.uniform(0.0, 2.0 * kPi);
    return t;
}

}  // namespace

SynthScene synth_scene(const SynthParams& params) {
    if (params.size < 32) throw UsageError("synth_scene: size must be >= 32");
    if (params.motion_px < 0) throw UsageError("synth_scene: motion must be >= 0");
    if (params.saturation_frac < 0.0 || params.saturation_frac > 1.0) {
        throw UsageError("synth_scene: saturation fraction must lie in [0,1]");
    }
    const int size = params.size;
    Rng rng(params.seed ^ 0x5b1dfacedeadbeefull);
    // Foreground and background sit in separated luminance bands (polarity
    // seeded) so misaligned merges produce visible ghosts.
    Texture bright = random_texture(rng, 0.62, 0.04, 0.10, 2.2);
    Texture dark = random_texture(rng, 0.20, 0.025, 0.04, 3.5);
    bool dark_foreground = (rng.next_u64() & 1) != 0;
    const Texture& bg = dark_foreground ? bright : dark;
    const Texture& fg = dark_foreground ? dark : bright;

    // Rectangle geometry chosen so every per-frame offset stays in view.
    const int half_travel = params.motion_px / 2;
    std::array<int, 3> offsets = {-half_travel, 0, params.motion_px - half_travel};
    int margin = params.motion_px - half_travel + 2;
    int rw = static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 4))) + size / 4;
    int rh = static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 4))) + size / 4;
    rw = std::min(rw, size - 2 * margin - 2);
    int rx = margin + 1 +
             static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, size - rw - 2 * margin - 1))));
    int ry = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, size - rh - 2))));

    const double inv = 1.0 / size;
    auto radiance = [&](int y, int x, int c, int offset) -> double {
        int lx = x - offset;
        if (y >= ry && y < ry + rh && lx >= rx && lx < rx + rw) {
            // Texture in rectangle-local coordinates so it travels rigidly.
            return fg.sample(y * inv, lx * inv, c);
        }
        return bg.sample(y * inv, x * inv, c);
    };

    // Render all frame radiance fields plus the reference-anchored truth.
    std::array<ImageF, 3> fields;
    for (int i = 0; i < 3; ++i) {
        ImageF f(size, size, 3);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                for (int c = 0; c < 3; ++c) {
                    f.at(y, x, c) = static_cast<float>(radiance(y, x, c, offsets[static_cast<std::size_t>(i)]));
                }
            }
        }
        fields[static_cast<std::size_t>(i)] = std::move(f);
    }

    std::array<double, 3> times;
    for (int i = 0; i < 3; ++i) times[static_cast<std::size_t>(i)] = std::exp2(params.ev[static_cast<std::size_t>(i)]);

    // Radiance scale: the requested fraction of long-exposure pixels clips.
    double alpha;
    if (params.saturation_frac <= 0.0) {
        float mx = 0.0f;
        for (const auto& f : fields) {
            for (float v : f.data) mx = std::max(mx, v);
        }
        alpha = 1.0 / (static_cast<double>(mx) * times[2] * (1.0 + 1e-6));
    } else {
        std::vector<float> vals = fields[2].data;
        std::size_t k = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(vals.size()) - 1.0,
                             (1.0 - params.saturation_frac) * static_cast<double>(vals.size())));
        std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(k), vals.end());
        double q = static_cast<double>(vals[k]);
        alpha = 1.0 / (q * times[2]);
        // Keep the reference-anchored truth inside [0,1].
        float mx = 0.0f;
        for (float v : fields[1].data) mx = std::max(mx, v);
        alpha = std::min(alpha, 1.0 / static_cast<double>(mx));
    }

    SynthScene scene;
    ImageF gt(size, size, 3);
    for (std::size_t j = 0; j < gt.data.size(); ++j) {
        gt.data[j] = static_cast<float>(alpha * fields[1].data[j]);
    }
    scene.bracket.gt_hdr = std::move(gt);

    const double inv_gamma = 1.0 / 2.2;
    for (int i = 0; i < 3; ++i) {
        const ImageF& field = fields[static_cast<std::size_t>(i)];
        ImageF frame(size, size, 3);
        double t = times[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < frame.data.size(); ++j) {
            double sensor = std::min(1.0, alpha * static_cast<double>(field.data[j]) * t);
            frame.data[j] = static_cast<float>(std::pow(sensor, inv_gamma));
        }
        scene.bracket.ldr[static_cast<std::size_t>(i)] = std::move(frame);
        scene.bracket.exposure_times[static_cast<std::size_t>(i)] = t;

        ImageF mask(size, size, 1);
        int off = offsets[static_cast<std::size_t>(i)];
        for (int y = ry; y < ry + rh; ++y) {
            for (int x = rx + off; x < rx + rw + off; ++x) {
                if (x >= 0 && x < size) mask.at(y, x, 0) = 1.0f;
            }
        }
        scene.fg_mask[static_cast<std::size_t>(i)] = std::move(mask);
        scene.fg_offset_x[static_cast<std::size_t>(i)] = off;
    }
    scene.bracket.normalize();
    return scene;
}

}  // namespace hdrfuse
