#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ganlab/tensor.hpp"

namespace ganlab {

// One tensor in the IDX container format: magic 00 00 <type> <ndim>,
// big-endian u32 extents, then the raw big-endian element payload.
struct IdxTensor {
    std::uint8_t type_code = 0x08;  // 0x08 u8, 0x09 i8, 0x0B i16, 0x0C i32, 0x0D f32, 0x0E f64
    std::vector<std::uint32_t> extents;
    std::vector<std::uint8_t> payload;

    std::size_t element_size() const;
    std::size_t element_count() const;  // product of extents
};

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor& idx);

IdxTensor load_idx(const std::string& path);
void save_idx(const IdxTensor& idx, const std::string& path);

// Decode to doubles: 1-D stays [n], higher ranks flatten to [n, rest].
Tensor idx_to_tensor(const IdxTensor& idx);

// Pixel normalization (x/255 - 0.5) / 0.5, mapping bytes onto [-1, 1].
// Requires an unsigned-byte payload.
Tensor normalize_images(const IdxTensor& images);
// Inverse map back onto the byte grid (rounded, clamped to [0, 255]).
// Extents default to the tensor's own shape.
IdxTensor denormalize_images(const Tensor& values, std::vector<std::uint32_t> extents = {});

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace ganlab
