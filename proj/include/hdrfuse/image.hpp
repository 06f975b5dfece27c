#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdrfuse/errors.hpp"

namespace hdrfuse {

// Planar-free float image, row-major H x W x C, channels innermost.
struct ImageF {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    ImageF() = default;
    ImageF(int h, int w, int c) : height(h), width(w), channels(c) {
        data.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
    }

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    bool same_size(const ImageF& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

// --- PNG (8- or 16-bit, gray/RGB/RGBA in; 16-bit RGB out) ------------------
// Values map to [0,1] on read. Writing quantizes with round-half-even.
ImageF read_png(const std::string& path);
void write_png16(const std::string& path, const ImageF& img);
void write_png8(const std::string& path, const ImageF& img);

// --- PFM (32-bit float RGB, little-endian, bottom-up rows) -----------------
ImageF read_pfm(const std::string& path);
void write_pfm(const std::string& path, const ImageF& img);

// --- Radiance RGBE (.hdr), read-only ---------------------------------------
ImageF read_hdr(const std::string& path);

// Dispatch on extension: .pfm or .hdr.
ImageF read_hdr_image(const std::string& path);

// Raw helpers shared with the checkpoint container.
std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0);
std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* data, std::size_t len,
                                       std::size_t expected_size_hint = 0);
std::vector<std::uint8_t> zlib_deflate_stored(const std::uint8_t* data, std::size_t len);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace hdrfuse
