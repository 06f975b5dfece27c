#pragma once

#include <array>
#include <optional>
#include <string>

#include "hdrfuse/image.hpp"

namespace hdrfuse {

// Three bracketed LDR exposures plus optional ground truth. The middle frame
// (index 1) is the reference the merged output is anchored to.
struct ExposureBracket {
    std::array<ImageF, 3> ldr;             // each H x W x 3, values in [0,1]
    std::array<double, 3> exposure_times;  // linear scale, t = 2^EV
    std::optional<ImageF> gt_hdr;          // H x W x 3 in [0,1]

    static constexpr int reference_index = 1;

    int height() const { return ldr[0].height; }
    int width() const { return ldr[0].width; }

    // Enforces: equal sizes, strictly increasing exposure times, pixel values
    // clamped into [0,1]. Returns the number of clamped samples.
    std::size_t normalize();
};

// Maps an LDR image to the linear HDR domain: I^gamma / t.
ImageF gamma_correct(const ImageF& img, double exposure_time, double gamma = 2.2);

// The three 6-channel network input planes: channels 0-2 carry the LDR image,
// channels 3-5 its gamma-corrected linear version.
struct NetworkInputF {
    std::array<ImageF, 3> planes;  // each H x W x 6
    int height() const { return planes[0].height; }
    int width() const { return planes[0].width; }
};

NetworkInputF assemble_input(const ExposureBracket& bracket);

// Directory layout: ldr_1.png ldr_2.png ldr_3.png exposure.txt [gt.pfm|gt.hdr]
// exposure.txt holds one EV stop per line; t = 2^EV.
ExposureBracket load_bracket(const std::string& dir);
void save_bracket(const std::string& dir, const ExposureBracket& bracket);

// Naive fusion baseline: average of the gamma-corrected frames weighted by
// exposure time. Exact on static, unsaturated scenes; ghosts under motion.
ImageF exposure_weighted_merge(const ExposureBracket& bracket);

}  // namespace hdrfuse
