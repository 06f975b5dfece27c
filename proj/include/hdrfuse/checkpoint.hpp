#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "hdrfuse/errors.hpp"
#include "hdrfuse/tensor.hpp"

namespace hdrfuse {

// Binary container: magic "HDRT", u32 version, length-prefixed UTF-8 config
// (key = value lines), repeated tensor records, trailing CRC32 of everything
// before it. Records are [u32 path length, path, u8 dtype, u8 rank,
// u64 extents..., little-endian payload]. dtype 1 = f32, 2 = f64.
constexpr std::uint32_t kContainerVersion = 1;
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeF64 = 2;

struct ContainerRecord {
    std::string path;
    std::uint8_t dtype = kDtypeF32;
    Shape shape;
    std::vector<std::uint8_t> payload;  // raw little-endian scalars

    std::int64_t scalar_count() const { return shape_numel(shape); }
};

struct Container {
    std::uint32_t version = kContainerVersion;
    std::string config_text;
    std::vector<ContainerRecord> records;

    const ContainerRecord* find(const std::string& path) const {
        for (const auto& r : records) {
            if (r.path == path) return &r;
        }
        return nullptr;
    }
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

// Tensor <-> record payload conversion. The record dtype follows T.
template <typename T>
ContainerRecord tensor_record(const std::string& path, const Tensor<T>& t) {
    ContainerRecord r;
    r.path = path;
    r.dtype = sizeof(T) == 4 ? kDtypeF32 : kDtypeF64;
    r.shape = t.shape();
    r.payload.resize(t.values().size() * sizeof(T));
    std::memcpy(r.payload.data(), t.values().data(), r.payload.size());
    return r;
}

template <typename T>
void record_into_tensor(const ContainerRecord& r, Tensor<T>& t) {
    if (r.shape != t.shape()) {
        throw DataError("checkpoint record " + r.path + " has shape " + shape_str(r.shape) +
                        ", expected " + shape_str(t.shape()));
    }
    std::uint8_t want = sizeof(T) == 4 ? kDtypeF32 : kDtypeF64;
    if (r.dtype != want) {
        throw DataError("checkpoint record " + r.path + " has the wrong dtype");
    }
    std::memcpy(t.mutable_values().data(), r.payload.data(), r.payload.size());
}

}  // namespace hdrfuse
