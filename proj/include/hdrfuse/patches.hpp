#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hdrfuse/bracket.hpp"

namespace hdrfuse {

// One training example: the three 6-channel planes plus ground truth, all
// P x P, with provenance back to the source sample.
struct PatchPair {
    std::array<ImageF, 3> x;
    ImageF gt;
    int sample_id = 0;
    int y0 = 0;
    int x0 = 0;
    int aug_id = 0;  // dihedral-8 element, 0 = identity
};

struct PatchSet {
    std::vector<PatchPair> patches;
    std::vector<std::string> warnings;  // skipped undersized samples
};

// Grid anchors: 0, stride, 2*stride, ... plus a final anchor flush with the
// far border when (extent - patch) is not a stride multiple, so every pixel
// is covered.
std::vector<int> patch_anchors(int extent, int patch, int stride);

PatchSet crop_patches(const std::vector<std::pair<NetworkInputF, ImageF>>& samples,
                      int patch = 128, int stride = 64);

// Dihedral-8: id = k + 4*f applies k quarter-turns then an optional
// horizontal flip. id 0 is the identity.
ImageF transform_dihedral(const ImageF& img, int id);
PatchPair augment(const PatchPair& p, int id);
int dihedral_inverse(int id);

// Expands every patch into its full dihedral orbit (the rotation+flip
// augmentation used to grow the training set).
PatchSet expand_augmentations(const PatchSet& base);

}  // namespace hdrfuse
