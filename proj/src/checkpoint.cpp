#include "hdrfuse/checkpoint.hpp"

#include <cstring>

#include "hdrfuse/image.hpp"

namespace hdrfuse {

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

template <typename U>
U get_le(const std::vector<std::uint8_t>& in, std::size_t& pos, const std::string& path) {
    if (pos + sizeof(U) > in.size()) throw DataError("truncated checkpoint: " + path);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(in[pos + i]) << (8 * i);
    }
    pos += sizeof(U);
    return v;
}

}  // namespace

void write_container(const std::string& path, const Container& c) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'H', 'D', 'R', 'T'});
    put_le<std::uint32_t>(out, c.version);
    put_le<std::uint64_t>(out, c.config_text.size());
    out.insert(out.end(), c.config_text.begin(), c.config_text.end());
    for (const auto& r : c.records) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.path.size()));
        out.insert(out.end(), r.path.begin(), r.path.end());
        out.push_back(r.dtype);
        out.push_back(static_cast<std::uint8_t>(r.shape.size()));
        for (auto e : r.shape) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
        std::size_t scalar = r.dtype == kDtypeF32 ? 4 : 8;
        if (r.payload.size() != static_cast<std::size_t>(r.scalar_count()) * scalar) {
            throw UsageError("checkpoint record " + r.path + " payload size mismatch");
        }
        out.insert(out.end(), r.payload.begin(), r.payload.end());
    }
    put_le<std::uint32_t>(out, crc32(out.data(), out.size()));
    write_file_bytes_atomic(path, out);
}

Container read_container(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 20) throw DataError("checkpoint too short: " + path);
    if (std::memcmp(bytes.data(), "HDRT", 4) != 0) {
        throw DataError("not a checkpoint container (bad magic): " + path);
    }
    std::uint32_t stored_crc = 0;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    std::uint32_t actual = crc32(bytes.data(), bytes.size() - 4);
    if (stored_crc != actual) throw DataError("checkpoint CRC mismatch (truncated or corrupt): " + path);

    Container c;
    std::size_t pos = 4;
    c.version = get_le<std::uint32_t>(bytes, pos, path);
    if (c.version != kContainerVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(c.version) + ": " +
                        path);
    }
    std::uint64_t cfg_len = get_le<std::uint64_t>(bytes, pos, path);
    if (pos + cfg_len > bytes.size() - 4) throw DataError("truncated checkpoint: " + path);
    c.config_text.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + cfg_len));
    pos += cfg_len;

    const std::size_t body_end = bytes.size() - 4;
    while (pos < body_end) {
        ContainerRecord r;
        std::uint32_t plen = get_le<std::uint32_t>(bytes, pos, path);
        if (pos + plen > body_end) throw DataError("truncated checkpoint: " + path);
        r.path.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + plen));
        pos += plen;
        if (pos + 2 > body_end) throw DataError("truncated checkpoint: " + path);
        r.dtype = bytes[pos++];
        if (r.dtype != kDtypeF32 && r.dtype != kDtypeF64) {
            throw DataError("checkpoint record " + r.path + " has unknown dtype tag");
        }
        std::uint8_t rank = bytes[pos++];
        r.shape.resize(rank);
        for (int d = 0; d < rank; ++d) {
            r.shape[static_cast<std::size_t>(d)] =
                static_cast<std::int64_t>(get_le<std::uint64_t>(bytes, pos, path));
        }
        std::size_t payload = static_cast<std::size_t>(r.scalar_count()) *
                              (r.dtype == kDtypeF32 ? 4 : 8);
        if (pos + payload > body_end) throw DataError("truncated checkpoint: " + path);
        r.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + payload));
        pos += payload;
        c.records.push_back(std::move(r));
    }
    return c;
}

}  // namespace hdrfuse
