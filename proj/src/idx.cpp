#include "ganlab/idx.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ganlab/error.hpp"

namespace ganlab {

namespace {

constexpr std::uint64_t kMaxElements = 1ull << 40;

std::string hex_byte(std::uint8_t b) {
    static const char digits[] = "0123456789abcdef";
    return std::string("0x") + digits[b >> 4] + digits[b & 0xf];
}

bool known_type(std::uint8_t code) {
    switch (code) {
        case 0x08:
        case 0x09:
        case 0x0B:
        case 0x0C:
        case 0x0D:
        case 0x0E: return true;
        default: return false;
    }
}

std::uint32_t read_be_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_be_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

}  // namespace

std::size_t IdxTensor::element_size() const {
    switch (type_code) {
        case 0x08:
        case 0x09: return 1;
        case 0x0B: return 2;
        case 0x0C:
        case 0x0D: return 4;
        case 0x0E: return 8;
        default:
            throw DomainError("idx: unknown element type " + hex_byte(type_code));
    }
}

std::size_t IdxTensor::element_count() const {
    std::uint64_t count = 1;
    for (std::uint32_t e : extents) {
        count *= e;
        if (count > kMaxElements)
            throw DomainError("idx: extent product exceeds " + std::to_string(kMaxElements));
    }
    return std::size_t(count);
}

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4)
        throw ParseError("idx: need a 4-byte magic, file has only " +
                         std::to_string(bytes.size()) + " bytes");
    if (bytes[0] != 0 || bytes[1] != 0)
        throw ParseError("idx: bad magic at offset 0, first two bytes must be zero, got " +
                         hex_byte(bytes[0]) + " " + hex_byte(bytes[1]));
    if (!known_type(bytes[2]))
        throw ParseError("idx: unknown element type " + hex_byte(bytes[2]) + " at offset 2");

    IdxTensor idx;
    idx.type_code = bytes[2];
    const std::size_t ndim = bytes[3];
    const std::size_t header = 4 + 4 * ndim;
    if (bytes.size() < header)
        throw ParseError("idx: extent header needs " + std::to_string(header) +
                         " bytes, file ends at offset " + std::to_string(bytes.size()));
    for (std::size_t d = 0; d < ndim; ++d)
        idx.extents.push_back(read_be_u32(bytes.data() + 4 + 4 * d));

    const std::size_t expected = idx.element_count() * idx.element_size();
    const std::size_t data_end = header + expected;
    if (bytes.size() < data_end)
        throw ParseError("idx: truncated payload, file ends at offset " +
                         std::to_string(bytes.size()) + " but elements extend to offset " +
                         std::to_string(data_end));
    if (bytes.size() > data_end)
        throw ParseError("idx: " + std::to_string(bytes.size() - data_end) +
                         " trailing bytes at offset " + std::to_string(data_end));
    idx.payload.assign(bytes.begin() + std::ptrdiff_t(header), bytes.end());
    return idx;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& idx) {
    if (!known_type(idx.type_code))
        throw DomainError("idx: unknown element type " + hex_byte(idx.type_code));
    const std::size_t expected = idx.element_count() * idx.element_size();
    if (idx.payload.size() != expected)
        throw DomainError("idx: payload holds " + std::to_string(idx.payload.size()) +
                          " bytes but extents require " + std::to_string(expected));
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * idx.extents.size() + idx.payload.size());
    out.push_back(0);
    out.push_back(0);
    out.push_back(idx.type_code);
    out.push_back(std::uint8_t(idx.extents.size()));
    for (std::uint32_t e : idx.extents) write_be_u32(out, e);
    out.insert(out.end(), idx.payload.begin(), idx.payload.end());
    return out;
}

IdxTensor load_idx(const std::string& path) {
    try {
        return parse_idx(read_file_bytes(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void save_idx(const IdxTensor& idx, const std::string& path) {
    write_file_bytes(path, serialize_idx(idx));
}

Tensor idx_to_tensor(const IdxTensor& idx) {
    const std::size_t count = idx.element_count();
    const std::size_t elem = idx.element_size();
    Shape shape;
    if (idx.extents.empty()) {
        shape = Shape{1};
    } else if (idx.extents.size() == 1) {
        shape = Shape{idx.extents[0]};
    } else {
        std::size_t rest = 1;
        for (std::size_t d = 1; d < idx.extents.size(); ++d) rest *= idx.extents[d];
        shape = Shape{idx.extents[0], rest};
    }
    Tensor out(std::move(shape));
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t* p = idx.payload.data() + i * elem;
        switch (idx.type_code) {
            case 0x08: out[i] = double(p[0]); break;
            case 0x09: out[i] = double(std::int8_t(p[0])); break;
            case 0x0B: {
                const std::uint16_t u = std::uint16_t((p[0] << 8) | p[1]);
                out[i] = double(std::int16_t(u));
                break;
            }
            case 0x0C: {
                const std::uint32_t u = read_be_u32(p);
                out[i] = double(std::int32_t(u));
                break;
            }
            case 0x0D: {
                const std::uint32_t u = read_be_u32(p);
                out[i] = double(std::bit_cast<float>(u));
                break;
            }
            case 0x0E: {
                std::uint64_t u = 0;
                for (int b = 0; b < 8; ++b) u = (u << 8) | p[b];
                out[i] = std::bit_cast<double>(u);
                break;
            }
            default: throw DomainError("idx: unknown element type " + hex_byte(idx.type_code));
        }
    }
    return out;
}

Tensor normalize_images(const IdxTensor& images) {
    if (images.type_code != 0x08)
        throw DomainError("normalize_images: expected unsigned-byte pixels, got type " +
                          hex_byte(images.type_code));
    const std::size_t n = images.extents.empty() ? 1 : images.extents[0];
    std::size_t d = 1;
    for (std::size_t i = 1; i < images.extents.size(); ++i) d *= images.extents[i];
    Tensor out(Shape{n, d});
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = (double(images.payload[i]) / 255.0 - 0.5) / 0.5;
    return out;
}

IdxTensor denormalize_images(const Tensor& values, std::vector<std::uint32_t> extents) {
    IdxTensor idx;
    idx.type_code = 0x08;
    if (extents.empty())
        for (std::size_t e : values.shape()) extents.push_back(std::uint32_t(e));
    idx.extents = std::move(extents);
    if (idx.element_count() != values.numel())
        throw DomainError("denormalize_images: extents describe " +
                          std::to_string(idx.element_count()) + " elements but tensor has " +
                          std::to_string(values.numel()));
    idx.payload.resize(values.numel());
    for (std::size_t i = 0; i < values.numel(); ++i) {
        const double byte = std::llround((values[i] * 0.5 + 0.5) * 255.0);
        idx.payload[i] = std::uint8_t(std::min(255.0, std::max(0.0, byte)));
    }
    return idx;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes;
    in.seekg(0, std::ios::end);
    bytes.resize(std::size_t(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!in && !bytes.empty()) throw IoError("short read from: " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to: " + path);
}

}  // namespace ganlab
