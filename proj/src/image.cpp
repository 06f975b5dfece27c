#include "hdrfuse/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hdrfuse {

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    in.seekg(0, std::ios::end);
    std::streamoff len = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(len));
    if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!in) throw DataError("failed reading file: " + path);
    return bytes;
}

void write_file_bytes_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open file for writing: " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("failed writing file: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("failed to move " + tmp + " into place: " + ec.message());
}

// ---------------------------------------------------------------------------
// CRC32 (IEEE) and Adler-32
// ---------------------------------------------------------------------------

namespace {

const std::array<std::uint32_t, 256>& crc_table() {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
    std::uint32_t a = 1, b = 0;
    for (std::size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed) {
    std::uint32_t c = seed ^ 0xffffffffu;
    const auto& t = crc_table();
    for (std::size_t i = 0; i < len; ++i) c = t[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

// ---------------------------------------------------------------------------
// DEFLATE decoder (RFC 1951) + zlib wrapper (RFC 1950)
// ---------------------------------------------------------------------------

namespace {

struct BitReader {
    const std::uint8_t* data;
    std::size_t len;
    std::size_t pos = 0;
    std::uint32_t bitbuf = 0;
    int bitcount = 0;

    std::uint32_t bits(int n) {
        while (bitcount < n) {
            if (pos >= len) throw DataError("deflate stream truncated");
            bitbuf |= static_cast<std::uint32_t>(data[pos++]) << bitcount;
            bitcount += 8;
        }
        std::uint32_t v = bitbuf & ((1u << n) - 1u);
        bitbuf >>= n;
        bitcount -= n;
        return v;
    }

    void align_byte() {
        bitbuf = 0;
        bitcount = 0;
    }
};

// Canonical Huffman decoder: per-length first code + symbol offsets.
struct Huffman {
    std::array<std::uint16_t, 16> count{};   // codes per bit length
    std::vector<std::uint16_t> symbols;      // symbols sorted by (length, symbol)

    void build(const std::uint8_t* lengths, int n) {
        count.fill(0);
        for (int i = 0; i < n; ++i) ++count[lengths[i]];
        count[0] = 0;
        symbols.assign(static_cast<std::size_t>(n), 0);
        std::array<std::uint16_t, 16> offsets{};
        for (int len = 1; len < 16; ++len) offsets[len] = offsets[len - 1] + count[len - 1];
        for (int i = 0; i < n; ++i) {
            if (lengths[i]) symbols[offsets[lengths[i]]++] = static_cast<std::uint16_t>(i);
        }
    }

    int decode(BitReader& br) const {
        int code = 0, first = 0, index = 0;
        for (int len = 1; len < 16; ++len) {
            code |= static_cast<int>(br.bits(1));
            int cnt = count[len];
            if (code - first < cnt) return symbols[static_cast<std::size_t>(index + code - first)];
            index += cnt;
            first = (first + cnt) << 1;
            code <<= 1;
        }
        throw DataError("invalid huffman code in deflate stream");
    }
};

constexpr std::uint16_t kLenBase[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19, 23, 27,
                                        31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
constexpr std::uint8_t kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                        2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
constexpr std::uint16_t kDistBase[30] = {1,    2,    3,    4,    5,    7,     9,     13,   17,   25,
                                         33,   49,   65,   97,   129,  193,   257,   385,  513,  769,
                                         1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
constexpr std::uint8_t kDistExtra[30] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                         6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

void inflate_block(BitReader& br, const Huffman& lit, const Huffman& dist,
                   std::vector<std::uint8_t>& out) {
    for (;;) {
        int sym = lit.decode(br);
        if (sym < 256) {
            out.push_back(static_cast<std::uint8_t>(sym));
        } else if (sym == 256) {
            return;
        } else {
            sym -= 257;
            if (sym >= 29) throw DataError("invalid length symbol in deflate stream");
            std::size_t length = kLenBase[sym] + br.bits(kLenExtra[sym]);
            int dsym = dist.decode(br);
            if (dsym >= 30) throw DataError("invalid distance symbol in deflate stream");
            std::size_t distance = kDistBase[dsym] + br.bits(kDistExtra[dsym]);
            if (distance > out.size()) throw DataError("deflate back-reference before start");
            std::size_t from = out.size() - distance;
            for (std::size_t i = 0; i < length; ++i) out.push_back(out[from + i]);
        }
    }
}

std::vector<std::uint8_t> inflate_raw(const std::uint8_t* data, std::size_t len,
                                      std::size_t hint) {
    BitReader br{data, len};
    std::vector<std::uint8_t> out;
    if (hint) out.reserve(hint);
    bool final_block = false;
    while (!final_block) {
        final_block = br.bits(1) != 0;
        std::uint32_t type = br.bits(2);
        if (type == 0) {
            br.align_byte();
            if (br.pos + 4 > br.len) throw DataError("deflate stored block truncated");
            std::uint32_t blen = data[br.pos] | (static_cast<std::uint32_t>(data[br.pos + 1]) << 8);
            std::uint32_t nlen =
                data[br.pos + 2] | (static_cast<std::uint32_t>(data[br.pos + 3]) << 8);
            if ((blen ^ 0xffffu) != nlen) throw DataError("deflate stored block length mismatch");
            br.pos += 4;
            if (br.pos + blen > br.len) throw DataError("deflate stored block truncated");
            out.insert(out.end(), data + br.pos, data + br.pos + blen);
            br.pos += blen;
        } else if (type == 1) {
            static const Huffman fixed_lit = [] {
                std::array<std::uint8_t, 288> l{};
                for (int i = 0; i < 144; ++i) l[i] = 8;
                for (int i = 144; i < 256; ++i) l[i] = 9;
                for (int i = 256; i < 280; ++i) l[i] = 7;
                for (int i = 280; i < 288; ++i) l[i] = 8;
                Huffman h;
                h.build(l.data(), 288);
                return h;
            }();
            static const Huffman fixed_dist = [] {
                std::array<std::uint8_t, 30> l{};
                l.fill(5);
                Huffman h;
                h.build(l.data(), 30);
                return h;
            }();
            inflate_block(br, fixed_lit, fixed_dist, out);
        } else if (type == 2) {
            int hlit = static_cast<int>(br.bits(5)) + 257;
            int hdist = static_cast<int>(br.bits(5)) + 1;
            int hclen = static_cast<int>(br.bits(4)) + 4;
            static const int order[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                          11, 4,  12, 3, 13, 2, 14, 1, 15};
            std::array<std::uint8_t, 19> clen{};
            for (int i = 0; i < hclen; ++i) clen[order[i]] = static_cast<std::uint8_t>(br.bits(3));
            Huffman cl;
            cl.build(clen.data(), 19);
            std::vector<std::uint8_t> lengths(static_cast<std::size_t>(hlit + hdist), 0);
            for (int i = 0; i < hlit + hdist;) {
                int sym = cl.decode(br);
                if (sym < 16) {
                    lengths[static_cast<std::size_t>(i++)] = static_cast<std::uint8_t>(sym);
                } else if (sym == 16) {
                    if (i == 0) throw DataError("deflate: repeat with no previous length");
                    int rep = 3 + static_cast<int>(br.bits(2));
                    std::uint8_t prev = lengths[static_cast<std::size_t>(i - 1)];
                    while (rep-- && i < hlit + hdist) lengths[static_cast<std::size_t>(i++)] = prev;
                } else if (sym == 17) {
                    int rep = 3 + static_cast<int>(br.bits(3));
                    while (rep-- && i < hlit + hdist) lengths[static_cast<std::size_t>(i++)] = 0;
                } else {
                    int rep = 11 + static_cast<int>(br.bits(7));
                    while (rep-- && i < hlit + hdist) lengths[static_cast<std::size_t>(i++)] = 0;
                }
            }
            Huffman lit, dist;
            lit.build(lengths.data(), hlit);
            dist.build(lengths.data() + hlit, hdist);
            inflate_block(br, lit, dist, out);
        } else {
            throw DataError("invalid deflate block type");
        }
    }
    return out;
}

}  // namespace

std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* data, std::size_t len,
                                       std::size_t expected_size_hint) {
    if (len < 6) throw DataError("zlib stream too short");
    if ((data[0] & 0x0f) != 8) throw DataError("unsupported zlib compression method");
    if (((static_cast<unsigned>(data[0]) << 8) | data[1]) % 31 != 0) {
        throw DataError("corrupt zlib header");
    }
    if (data[1] & 0x20) throw DataError("zlib preset dictionaries unsupported");
    auto out = inflate_raw(data + 2, len - 6, expected_size_hint);
    std::uint32_t expect = (static_cast<std::uint32_t>(data[len - 4]) << 24) |
                           (static_cast<std::uint32_t>(data[len - 3]) << 16) |
                           (static_cast<std::uint32_t>(data[len - 2]) << 8) |
                           static_cast<std::uint32_t>(data[len - 1]);
    if (adler32(out.data(), out.size()) != expect) throw DataError("zlib checksum mismatch");
    return out;
}

// Stored (uncompressed) deflate blocks inside a zlib wrapper. Fine for our
// purposes: PNGs we emit are intermediate artifacts, not archives.
std::vector<std::uint8_t> zlib_deflate_stored(const std::uint8_t* data, std::size_t len) {
    std::vector<std::uint8_t> out;
    out.reserve(len + len / 65535 * 5 + 16);
    out.push_back(0x78);
    out.push_back(0x01);
    std::size_t off = 0;
    do {
        std::size_t chunk = std::min<std::size_t>(65535, len - off);
        bool last = off + chunk == len;
        out.push_back(last ? 1 : 0);
        out.push_back(static_cast<std::uint8_t>(chunk & 0xff));
        out.push_back(static_cast<std::uint8_t>(chunk >> 8));
        out.push_back(static_cast<std::uint8_t>(~chunk & 0xff));
        out.push_back(static_cast<std::uint8_t>((~chunk >> 8) & 0xff));
        out.insert(out.end(), data + off, data + off + chunk);
        off += chunk;
    } while (off < len);
    std::uint32_t a = adler32(data, len);
    out.push_back(static_cast<std::uint8_t>(a >> 24));
    out.push_back(static_cast<std::uint8_t>(a >> 16));
    out.push_back(static_cast<std::uint8_t>(a >> 8));
    out.push_back(static_cast<std::uint8_t>(a));
    return out;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    put_u32(out, crc32(out.data() + start, out.size() - start));
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

// Banker's rounding of v*max to an integer grid.
std::uint32_t quantize(float v, std::uint32_t max) {
    double x = static_cast<double>(std::min(1.0f, std::max(0.0f, v))) * max;
    double r = std::nearbyint(x);  // round-half-even in the default FP mode
    if (r < 0) r = 0;
    if (r > max) r = max;
    return static_cast<std::uint32_t>(r);
}

void write_png_impl(const std::string& path, const ImageF& img, int bit_depth) {
    if (img.channels != 3) throw UsageError("PNG writer expects a 3-channel image");
    const int bytes_per_sample = bit_depth / 8;
    const std::size_t row_bytes =
        static_cast<std::size_t>(img.width) * 3 * static_cast<std::size_t>(bytes_per_sample);
    std::vector<std::uint8_t> raw;
    raw.reserve((row_bytes + 1) * static_cast<std::size_t>(img.height));
    const std::uint32_t maxval = bit_depth == 16 ? 65535u : 255u;
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                std::uint32_t q = quantize(img.at(y, x, c), maxval);
                if (bit_depth == 16) {
                    raw.push_back(static_cast<std::uint8_t>(q >> 8));
                    raw.push_back(static_cast<std::uint8_t>(q & 0xff));
                } else {
                    raw.push_back(static_cast<std::uint8_t>(q));
                }
            }
        }
    }
    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(static_cast<std::uint8_t>(bit_depth));
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib_deflate_stored(raw.data(), raw.size()));
    append_chunk(out, "IEND", {});
    write_file_bytes_atomic(path, out);
}

}  // namespace

void write_png16(const std::string& path, const ImageF& img) { write_png_impl(path, img, 16); }
void write_png8(const std::string& path, const ImageF& img) { write_png_impl(path, img, 8); }

ImageF read_png(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0) {
        throw DataError("not a PNG file: " + path);
    }
    std::size_t pos = 8;
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<std::uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        std::uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw DataError("truncated PNG chunk in " + path);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* payload = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("bad IHDR in " + path);
            width = static_cast<int>(get_u32(payload));
            height = static_cast<int>(get_u32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw DataError("interlaced PNG unsupported: " + path);
            if (bit_depth != 8 && bit_depth != 16) {
                throw DataError("unsupported PNG bit depth in " + path);
            }
            if (color_type != 0 && color_type != 2 && color_type != 6) {
                throw DataError("unsupported PNG color type in " + path);
            }
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || width <= 0 || height <= 0) throw DataError("missing PNG header in " + path);
    const int in_channels = color_type == 2 ? 3 : (color_type == 6 ? 4 : 1);
    const int bps = bit_depth / 8;
    const std::size_t row_bytes = static_cast<std::size_t>(width) * in_channels * bps;
    auto raw = zlib_inflate(idat.data(), idat.size(),
                            (row_bytes + 1) * static_cast<std::size_t>(height));
    if (raw.size() != (row_bytes + 1) * static_cast<std::size_t>(height)) {
        throw DataError("PNG pixel payload has wrong size in " + path);
    }
    // Undo per-row filters in place.
    const int fstep = in_channels * bps;
    for (int y = 0; y < height; ++y) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
        std::uint8_t filter = row[0];
        std::uint8_t* cur = row + 1;
        const std::uint8_t* prev =
            y > 0 ? raw.data() + static_cast<std::size_t>(y - 1) * (row_bytes + 1) + 1 : nullptr;
        for (std::size_t i = 0; i < row_bytes; ++i) {
            int a = i >= static_cast<std::size_t>(fstep) ? cur[i - fstep] : 0;
            int b = prev ? prev[i] : 0;
            int c = (prev && i >= static_cast<std::size_t>(fstep)) ? prev[i - fstep] : 0;
            int x = cur[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += paeth(a, b, c); break;
                default: throw DataError("invalid PNG filter in " + path);
            }
            cur[i] = static_cast<std::uint8_t>(x);
        }
    }
    ImageF img(height, width, 3);
    const float maxval = bit_depth == 16 ? 65535.0f : 255.0f;
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1) + 1;
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                int src_c = in_channels == 1 ? 0 : c;
                const std::uint8_t* p = row + (static_cast<std::size_t>(x) * in_channels + src_c) * bps;
                std::uint32_t v = bit_depth == 16
                                      ? (static_cast<std::uint32_t>(p[0]) << 8) | p[1]
                                      : *p;
                img.at(y, x, c) = static_cast<float>(v) / maxval;
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// PFM: "PF\n{W} {H}\n-1.0\n" then bottom-up rows of little-endian RGB floats.
// ---------------------------------------------------------------------------

void write_pfm(const std::string& path, const ImageF& img) {
    if (img.channels != 3) throw UsageError("PFM writer expects a 3-channel image");
    std::ostringstream header;
    header << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
    std::string h = header.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.reserve(out.size() + img.data.size() * 4);
    for (int y = img.height - 1; y >= 0; --y) {
        const float* row = img.data.data() + static_cast<std::size_t>(y) * img.width * 3;
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(row);
        out.insert(out.end(), bytes, bytes + static_cast<std::size_t>(img.width) * 12);
    }
    write_file_bytes_atomic(path, out);
}

ImageF read_pfm(const std::string& path) {
    auto bytes = read_file_bytes(path);
    // Header: three whitespace-delimited tokens after the magic.
    std::size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
        if (pos < bytes.size()) ++pos;  // consume one delimiter
        return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                           bytes.begin() + static_cast<std::ptrdiff_t>(pos > start ? pos - 1 : start));
    };
    std::string magic = token();
    if (magic != "PF") throw DataError("not a color PFM file: " + path);
    int width = 0, height = 0;
    double scale = 0.0;
    try {
        width = std::stoi(token());
        height = std::stoi(token());
        scale = std::stod(token());
    } catch (const std::exception&) {
        throw DataError("malformed PFM header in " + path);
    }
    if (width <= 0 || height <= 0 || scale == 0.0) throw DataError("malformed PFM header in " + path);
    bool little_endian = scale < 0.0;
    float mul = static_cast<float>(std::fabs(scale));
    std::size_t need = static_cast<std::size_t>(width) * height * 12;
    if (bytes.size() - pos < need) throw DataError("PFM pixel data truncated in " + path);
    ImageF img(height, width, 3);
    const std::uint8_t* src = bytes.data() + pos;
    for (int y = height - 1; y >= 0; --y) {
        float* row = img.data.data() + static_cast<std::size_t>(y) * width * 3;
        for (int i = 0; i < width * 3; ++i) {
            std::uint8_t b[4];
            std::memcpy(b, src, 4);
            src += 4;
            if (!little_endian) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
            float v;
            std::memcpy(&v, b, 4);
            row[i] = v * mul;
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Radiance RGBE reader
// ---------------------------------------------------------------------------

namespace {

float rgbe_component(std::uint8_t c, std::uint8_t e) {
    if (e == 0) return 0.0f;
    return static_cast<float>(std::ldexp((c + 0.5) / 256.0, static_cast<int>(e) - 128));
}

}  // namespace

ImageF read_hdr(const std::string& path) {
    auto bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto line = [&]() -> std::string {
        std::string s;
        while (pos < bytes.size() && bytes[pos] != '\n') s.push_back(static_cast<char>(bytes[pos++]));
        if (pos < bytes.size()) ++pos;
        return s;
    };
    std::string magic = line();
    if (magic.rfind("#?", 0) != 0) throw DataError("not a Radiance HDR file: " + path);
    for (;;) {
        if (pos >= bytes.size()) throw DataError("truncated HDR header in " + path);
        std::string l = line();
        if (l.empty()) break;  // header/body separator
    }
    std::string res = line();
    int width = 0, height = 0;
    if (std::sscanf(res.c_str(), "-Y %d +X %d", &height, &width) != 2 || width <= 0 || height <= 0) {
        throw DataError("unsupported HDR resolution line in " + path + ": " + res);
    }
    ImageF img(height, width, 3);
    std::vector<std::uint8_t> scan(static_cast<std::size_t>(width) * 4);
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size()) throw DataError("truncated HDR pixel data in " + path);
    };
    for (int y = 0; y < height; ++y) {
        need(4);
        const std::uint8_t* p = bytes.data() + pos;
        bool new_rle = width >= 8 && width < 32768 && p[0] == 2 && p[1] == 2 &&
                       ((static_cast<int>(p[2]) << 8) | p[3]) == width;
        if (new_rle) {
            pos += 4;
            for (int comp = 0; comp < 4; ++comp) {
                int x = 0;
                while (x < width) {
                    need(1);
                    int run = bytes[pos++];
                    if (run > 128) {
                        run -= 128;
                        need(1);
                        std::uint8_t v = bytes[pos++];
                        if (x + run > width) throw DataError("HDR RLE overrun in " + path);
                        for (int i = 0; i < run; ++i) scan[static_cast<std::size_t>(x++) * 4 + comp] = v;
                    } else {
                        if (run == 0 || x + run > width) throw DataError("HDR RLE overrun in " + path);
                        need(static_cast<std::size_t>(run));
                        for (int i = 0; i < run; ++i) {
                            scan[static_cast<std::size_t>(x++) * 4 + comp] = bytes[pos++];
                        }
                    }
                }
            }
        } else {
            // Flat records, with old-style (1,1,1,count) run repetition.
            int x = 0;
            int repeat_shift = 0;
            while (x < width) {
                need(4);
                std::uint8_t r = bytes[pos], g = bytes[pos + 1], b = bytes[pos + 2],
                             e = bytes[pos + 3];
                pos += 4;
                if (r == 1 && g == 1 && b == 1) {
                    if (x == 0) throw DataError("HDR old-style run at scanline start in " + path);
                    int count = static_cast<int>(e) << repeat_shift;
                    repeat_shift += 8;
                    if (x + count > width) throw DataError("HDR run overrun in " + path);
                    for (int i = 0; i < count; ++i) {
                        std::memcpy(&scan[static_cast<std::size_t>(x) * 4],
                                    &scan[static_cast<std::size_t>(x - 1) * 4], 4);
                        ++x;
                    }
                } else {
                    repeat_shift = 0;
                    scan[static_cast<std::size_t>(x) * 4 + 0] = r;
                    scan[static_cast<std::size_t>(x) * 4 + 1] = g;
                    scan[static_cast<std::size_t>(x) * 4 + 2] = b;
                    scan[static_cast<std::size_t>(x) * 4 + 3] = e;
                    ++x;
                }
            }
        }
        for (int x = 0; x < width; ++x) {
            std::uint8_t e = scan[static_cast<std::size_t>(x) * 4 + 3];
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) = rgbe_component(scan[static_cast<std::size_t>(x) * 4 + c], e);
            }
        }
    }
    return img;
}

ImageF read_hdr_image(const std::string& path) {
    auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".pfm") return read_pfm(path);
    if (ext == ".hdr") return read_hdr(path);
    throw DataError("unsupported HDR image extension: " + path);
}

}  // namespace hdrfuse
