#include "hdrfuse/bracket.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hdrfuse {

std::size_t ExposureBracket::normalize() {
    for (int i = 1; i < 3; ++i) {
        if (!ldr[static_cast<std::size_t>(i)].same_size(ldr[0])) {
            throw DataError("bracket frames disagree on size");
        }
    }
    if (gt_hdr && (gt_hdr->height != ldr[0].height || gt_hdr->width != ldr[0].width)) {
        throw DataError("ground truth size does not match the bracket");
    }
    if (!(exposure_times[0] > 0.0) || !(exposure_times[0] < exposure_times[1]) ||
        !(exposure_times[1] < exposure_times[2])) {
        throw DataError("exposure times must be positive and strictly increasing");
    }
    std::size_t clamped = 0;
    auto clamp_img = [&clamped](ImageF& img) {
        for (auto& v : img.data) {
            if (v < 0.0f || v > 1.0f || !std::isfinite(v)) {
                v = std::isfinite(v) ? std::min(1.0f, std::max(0.0f, v)) : 0.0f;
                ++clamped;
            }
        }
    };
    for (auto& img : ldr) clamp_img(img);
    if (gt_hdr) clamp_img(*gt_hdr);
    return clamped;
}

ImageF gamma_correct(const ImageF& img, double exposure_time, double gamma) {
    if (exposure_time <= 0.0) {
        throw UsageError("gamma_correct: exposure time must be positive");
    }
    ImageF out(img.height, img.width, img.channels);
    const float inv_t = static_cast<float>(1.0 / exposure_time);
    const float g = static_cast<float>(gamma);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        out.data[i] = std::pow(img.data[i], g) * inv_t;
    }
    return out;
}

NetworkInputF assemble_input(const ExposureBracket& bracket) {
    NetworkInputF input;
    for (int i = 0; i < 3; ++i) {
        const ImageF& im = bracket.ldr[static_cast<std::size_t>(i)];
        ImageF lin = gamma_correct(im, bracket.exposure_times[static_cast<std::size_t>(i)]);
        ImageF plane(im.height, im.width, 6);
        for (int y = 0; y < im.height; ++y) {
            for (int x = 0; x < im.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    plane.at(y, x, c) = im.at(y, x, c);
                    plane.at(y, x, c + 3) = lin.at(y, x, c);
                }
            }
        }
        input.planes[static_cast<std::size_t>(i)] = std::move(plane);
    }
    return input;
}

namespace {

std::array<double, 3> read_exposures(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open exposure file: " + path);
    std::array<double, 3> ev{};
    int count = 0;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        double v;
        if (ls >> v) {
            if (count >= 3) throw DataError("exposure file has more than 3 stops: " + path);
            ev[static_cast<std::size_t>(count++)] = v;
        }
    }
    if (count != 3) {
        throw DataError("exposure file must list exactly 3 EV stops, got " +
                        std::to_string(count) + ": " + path);
    }
    return ev;
}

}  // namespace

ExposureBracket load_bracket(const std::string& dir) {
    namespace fs = std::filesystem;
    ExposureBracket b;
    for (int i = 0; i < 3; ++i) {
        std::string path = dir + "/ldr_" + std::to_string(i + 1) + ".png";
        if (!fs::exists(path)) throw DataError("missing bracket frame: " + path);
        b.ldr[static_cast<std::size_t>(i)] = read_png(path);
    }
    auto ev = read_exposures(dir + "/exposure.txt");
    for (int i = 0; i < 3; ++i) {
        b.exposure_times[static_cast<std::size_t>(i)] = std::exp2(ev[static_cast<std::size_t>(i)]);
    }
    std::string pfm = dir + "/gt.pfm";
    std::string hdr = dir + "/gt.hdr";
    if (fs::exists(pfm)) {
        b.gt_hdr = read_pfm(pfm);
    } else if (fs::exists(hdr)) {
        b.gt_hdr = read_hdr(hdr);
    }
    b.normalize();
    return b;
}

void save_bracket(const std::string& dir, const ExposureBracket& bracket) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create sample directory: " + dir);
    for (int i = 0; i < 3; ++i) {
        write_png16(dir + "/ldr_" + std::to_string(i + 1) + ".png",
                    bracket.ldr[static_cast<std::size_t>(i)]);
    }
    {
        std::ostringstream ev;
        for (int i = 0; i < 3; ++i) {
            ev << std::log2(bracket.exposure_times[static_cast<std::size_t>(i)]) << "\n";
        }
        std::string s = ev.str();
        write_file_bytes_atomic(dir + "/exposure.txt",
                                std::vector<std::uint8_t>(s.begin(), s.end()));
    }
    if (bracket.gt_hdr) write_pfm(dir + "/gt.pfm", *bracket.gt_hdr);
}

ImageF exposure_weighted_merge(const ExposureBracket& bracket) {
    double wsum = bracket.exposure_times[0] + bracket.exposure_times[1] + bracket.exposure_times[2];
    ImageF out(bracket.height(), bracket.width(), 3);
    for (int i = 0; i < 3; ++i) {
        ImageF lin = gamma_correct(bracket.ldr[static_cast<std::size_t>(i)],
                                   bracket.exposure_times[static_cast<std::size_t>(i)]);
        float w = static_cast<float>(bracket.exposure_times[static_cast<std::size_t>(i)] / wsum);
        for (std::size_t j = 0; j < out.data.size(); ++j) out.data[j] += w * lin.data[j];
    }
    return out;
}

}  // namespace hdrfuse
