#pragma once

#include <array>
#include <cstdint>

#include "hdrfuse/bracket.hpp"

namespace hdrfuse {

struct SynthParams {
    std::uint64_t seed = 0;
    int size = 64;
    int motion_px = 0;                       // frame-1 to frame-3 displacement
    double saturation_frac = 0.0;            // fraction of clipped long-exposure pixels
    std::array<double, 3> ev = {-2.0, 0.0, 2.0};
};

// Procedural test scene: a smooth textured background plus a textured
// foreground rectangle that translates horizontally across the bracket. The
// ground truth is the static scene rendered at the reference (middle frame)
// position; LDR frames are the per-frame radiance pushed through exposure,
// clipping and inverse gamma. Deterministic in the seed.
struct SynthScene {
    ExposureBracket bracket;
    std::array<ImageF, 3> fg_mask;   // H x W x 1 indicators, one per frame
    std::array<int, 3> fg_offset_x;  // rectangle displacement per frame
};

SynthScene synth_scene(const SynthParams& params);

}  // namespace hdrfuse
