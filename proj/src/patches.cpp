#include "hdrfuse/patches.hpp"

namespace hdrfuse {

std::vector<int> patch_anchors(int extent, int patch, int stride) {
    if (extent < patch) return {};
    std::vector<int> anchors;
    for (int a = 0; a + patch <= extent; a += stride) anchors.push_back(a);
    int flush = extent - patch;
    if (anchors.back() != flush) anchors.push_back(flush);
    return anchors;
}

namespace {

ImageF crop(const ImageF& img, int y0, int x0, int size) {
    ImageF out(size, size, img.channels);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
            }
        }
    }
    return out;
}

}  // namespace

PatchSet crop_patches(const std::vector<std::pair<NetworkInputF, ImageF>>& samples, int patch,
                      int stride) {
    if (patch < 1 || stride < 1) throw UsageError("crop_patches: patch and stride must be >= 1");
    PatchSet set;
    for (std::size_t si = 0; si < samples.size(); ++si) {
        const auto& [input, gt] = samples[si];
        int H = input.height(), W = input.width();
        if (H < patch || W < patch) {
            set.warnings.push_back("sample " + std::to_string(si) + " (" + std::to_string(H) +
                                   "x" + std::to_string(W) + ") smaller than patch " +
                                   std::to_string(patch) + ", skipped");
            continue;
        }
        for (int y0 : patch_anchors(H, patch, stride)) {
            for (int x0 : patch_anchors(W, patch, stride)) {
                PatchPair p;
                for (int i = 0; i < 3; ++i) {
                    p.x[static_cast<std::size_t>(i)] =
                        crop(input.planes[static_cast<std::size_t>(i)], y0, x0, patch);
                }
                p.gt = crop(gt, y0, x0, patch);
                p.sample_id = static_cast<int>(si);
                p.y0 = y0;
                p.x0 = x0;
                p.aug_id = 0;
                set.patches.push_back(std::move(p));
            }
        }
    }
    return set;
}

ImageF transform_dihedral(const ImageF& img, int id) {
    if (id < 0 || id > 7) throw UsageError("dihedral id must be in 0..7");
    int k = id & 3;
    bool flip = id >= 4;
    ImageF cur = img;
    for (int r = 0; r < k; ++r) {
        // Quarter turn clockwise: out(y, x) = in(H-1-x, y).
        ImageF next(cur.width, cur.height, cur.channels);
        for (int y = 0; y < next.height; ++y) {
            for (int x = 0; x < next.width; ++x) {
                for (int c = 0; c < cur.channels; ++c) {
                    next.at(y, x, c) = cur.at(cur.height - 1 - x, y, c);
                }
            }
        }
        cur = std::move(next);
    }
    if (flip) {
        ImageF next(cur.height, cur.width, cur.channels);
        for (int y = 0; y < next.height; ++y) {
            for (int x = 0; x < next.width; ++x) {
                for (int c = 0; c < cur.channels; ++c) {
                    next.at(y, x, c) = cur.at(y, cur.width - 1 - x, c);
                }
            }
        }
        cur = std::move(next);
    }
    return cur;
}

PatchPair augment(const PatchPair& p, int id) {
    PatchPair out;
    for (int i = 0; i < 3; ++i) {
        out.x[static_cast<std::size_t>(i)] = transform_dihedral(p.x[static_cast<std::size_t>(i)], id);
    }
    out.gt = transform_dihedral(p.gt, id);
    out.sample_id = p.sample_id;
    out.y0 = p.y0;
    out.x0 = p.x0;
    out.aug_id = id;
    return out;
}

int dihedral_inverse(int id) {
    if (id < 0 || id > 7) throw UsageError("dihedral id must be in 0..7");
    // Rotations invert to the complementary turn; flipped elements are
    // involutions (flip . rot_k . flip . rot_k = identity).
    return id < 4 ? (4 - id) & 3 : id;
}

PatchSet expand_augmentations(const PatchSet& base) {
    PatchSet out;
    out.warnings = base.warnings;
    out.patches.reserve(base.patches.size() * 8);
    for (const auto& p : base.patches) {
        for (int id = 0; id < 8; ++id) out.patches.push_back(augment(p, id));
    }
    return out;
}

}  // namespace hdrfuse
