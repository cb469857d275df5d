#pragma once

// Minimal baseline TIFF reader: single-plane grayscale, 8 or 16 bits per
// sample, uncompressed strips, either byte order. Anything fancier
// (compression, tiles, planar color) is rejected with a clear error.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "asocem/image.hpp"

namespace asocem {

namespace detail {

class TiffBuffer {
public:
    explicit TiffBuffer(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {
        if (bytes_.size() < 8)
            throw std::runtime_error("TIFF file too short");
        if (bytes_[0] == 'I' && bytes_[1] == 'I')
            big_endian_ = false;
        else if (bytes_[0] == 'M' && bytes_[1] == 'M')
            big_endian_ = true;
        else
            throw std::runtime_error("not a TIFF file (bad byte-order mark)");
        if (u16(2) != 42)
            throw std::runtime_error("not a TIFF file (bad magic)");
    }

    std::uint16_t u16(std::size_t off) const {
        check(off, 2);
        return big_endian_ ? static_cast<std::uint16_t>((bytes_[off] << 8) | bytes_[off + 1])
                           : static_cast<std::uint16_t>(bytes_[off] | (bytes_[off + 1] << 8));
    }
    std::uint32_t u32(std::size_t off) const {
        check(off, 4);
        if (big_endian_)
            return (std::uint32_t(bytes_[off]) << 24) | (std::uint32_t(bytes_[off + 1]) << 16) |
                   (std::uint32_t(bytes_[off + 2]) << 8) | std::uint32_t(bytes_[off + 3]);
        return std::uint32_t(bytes_[off]) | (std::uint32_t(bytes_[off + 1]) << 8) |
               (std::uint32_t(bytes_[off + 2]) << 16) | (std::uint32_t(bytes_[off + 3]) << 24);
    }
    std::uint8_t u8(std::size_t off) const {
        check(off, 1);
        return bytes_[off];
    }
    std::size_t size() const { return bytes_.size(); }

private:
    void check(std::size_t off, std::size_t n) const {
        if (off + n > bytes_.size())
            throw std::runtime_error("truncated TIFF file");
    }
    std::vector<std::uint8_t> bytes_;
    bool big_endian_ = false;
};

struct TiffEntry {
    std::uint16_t tag = 0;
    std::uint16_t type = 0;     // 3 = SHORT, 4 = LONG
    std::uint32_t count = 0;
    std::size_t value_off = 0;  // offset of the value field itself
};

// Reads entry value i as an unsigned integer, following the offset
// indirection when the values do not fit in the 4-byte field.
inline std::uint32_t tiff_value(const TiffBuffer& buf, const TiffEntry& e, std::uint32_t i) {
    if (i >= e.count)
        throw std::runtime_error("TIFF entry index out of range");
    std::size_t elem_size;
    switch (e.type) {
    case 1: elem_size = 1; break;   // BYTE
    case 3: elem_size = 2; break;   // SHORT
    case 4: elem_size = 4; break;   // LONG
    default:
        throw std::runtime_error("unsupported TIFF entry type " + std::to_string(e.type));
    }
    std::size_t base = e.value_off;
    if (elem_size * e.count > 4)
        base = buf.u32(e.value_off);
    const std::size_t off = base + elem_size * i;
    if (elem_size == 1) return buf.u8(off);
    if (elem_size == 2) return buf.u16(off);
    return buf.u32(off);
}

}  // namespace detail

inline Image2D<double> read_tiff(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open TIFF file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    detail::TiffBuffer buf(std::move(bytes));

    const std::uint32_t ifd_off = buf.u32(4);
    const std::uint16_t nentries = buf.u16(ifd_off);

    std::uint32_t width = 0, height = 0, bits = 1, compression = 1, photometric = 0;
    std::uint32_t samples_per_pixel = 1, rows_per_strip = 0xffffffffu, sample_format = 1;
    detail::TiffEntry strip_offsets{}, strip_counts{};
    bool have_offsets = false;

    for (std::uint16_t i = 0; i < nentries; ++i) {
        const std::size_t off = ifd_off + 2 + i * 12u;
        detail::TiffEntry e;
        e.tag = buf.u16(off);
        e.type = buf.u16(off + 2);
        e.count = buf.u32(off + 4);
        e.value_off = off + 8;
        switch (e.tag) {
        case 256: width = detail::tiff_value(buf, e, 0); break;
        case 257: height = detail::tiff_value(buf, e, 0); break;
        case 258: bits = detail::tiff_value(buf, e, 0); break;
        case 259: compression = detail::tiff_value(buf, e, 0); break;
        case 262: photometric = detail::tiff_value(buf, e, 0); break;
        case 273: strip_offsets = e; have_offsets = true; break;
        case 277: samples_per_pixel = detail::tiff_value(buf, e, 0); break;
        case 278: rows_per_strip = detail::tiff_value(buf, e, 0); break;
        case 279: strip_counts = e; break;
        case 339: sample_format = detail::tiff_value(buf, e, 0); break;
        default: break;
        }
    }

    if (width == 0 || height == 0)
        throw std::runtime_error("TIFF file missing dimensions: " + path);
    if (compression != 1)
        throw std::runtime_error("only uncompressed TIFF is supported: " + path);
    if (samples_per_pixel != 1 || photometric > 1)
        throw std::runtime_error("only single-channel grayscale TIFF is supported: " + path);
    if (bits != 8 && bits != 16)
        throw std::runtime_error("only 8/16-bit TIFF is supported: " + path);
    if (sample_format != 1)
        throw std::runtime_error("only unsigned-integer TIFF samples are supported: " + path);
    if (!have_offsets)
        throw std::runtime_error("TIFF file missing strip offsets: " + path);

    Image2D<double> img(static_cast<int>(height), static_cast<int>(width));
    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t row_bytes = width * bytes_per_sample;

    std::uint32_t row = 0;
    for (std::uint32_t s = 0; s < strip_offsets.count && row < height; ++s) {
        const std::size_t strip_off = detail::tiff_value(buf, strip_offsets, s);
        std::uint32_t rows_here = rows_per_strip;
        if (rows_here > height - row) rows_here = height - row;
        for (std::uint32_t r = 0; r < rows_here; ++r, ++row) {
            const std::size_t roff = strip_off + r * row_bytes;
            for (std::uint32_t c = 0; c < width; ++c) {
                double v = bits == 8 ? static_cast<double>(buf.u8(roff + c))
                                     : static_cast<double>(buf.u16(roff + 2 * c));
                if (photometric == 0)   // WhiteIsZero
                    v = (bits == 8 ? 255.0 : 65535.0) - v;
                img(static_cast<int>(row), static_cast<int>(c)) = v;
            }
        }
    }
    if (row != height)
        throw std::runtime_error("TIFF strips do not cover the image: " + path);
    return img;
}

}  // namespace asocem
