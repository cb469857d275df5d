#pragma once

// MRC2014 reader/writer restricted to single-section 2D images.
// Read supports modes 0 (int8), 1 (int16), 2 (float32) and 6 (uint16);
// write emits mode 0 (masks) or mode 2 (float data).
//
// Format reference: Cheng et al., "MRC2014: Extensions to the MRC format
// header for electron cryo-microscopy and tomography", JSB 192:146 (2015).

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asocem/image.hpp"

namespace asocem {

struct MrcHeader {
    std::int32_t nx = 0, ny = 0, nz = 0;
    std::int32_t mode = 2;
    std::int32_t nxstart = 0, nystart = 0, nzstart = 0;
    std::int32_t mx = 0, my = 0, mz = 0;
    float cella[3] = {0.f, 0.f, 0.f};
    float cellb[3] = {90.f, 90.f, 90.f};
    std::int32_t mapc = 1, mapr = 2, maps = 3;
    float dmin = 0.f, dmax = 0.f, dmean = 0.f;
    std::int32_t ispg = 0;
    std::int32_t nsymbt = 0;   // extended header bytes, skipped on read
    float rms = -1.f;
    std::int32_t nlabl = 0;

    static constexpr int kHeaderBytes = 1024;

    // Pixel size in Angstrom from the cell dimensions, when meaningful.
    std::optional<double> pixel_size() const {
        if (nx > 0 && cella[0] > 0.f)
            return static_cast<double>(cella[0]) / nx;
        return std::nullopt;
    }
};

namespace detail {

inline std::uint32_t bswap32(std::uint32_t v) {
    return ((v & 0xff000000u) >> 24) | ((v & 0x00ff0000u) >> 8) |
           ((v & 0x0000ff00u) << 8) | ((v & 0x000000ffu) << 24);
}

struct MrcRawHeader {
    std::array<unsigned char, MrcHeader::kHeaderBytes> bytes{};

    std::int32_t i32(int word) const {
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + 4 * word, 4);
        if (swapped) v = bswap32(v);
        std::int32_t out;
        std::memcpy(&out, &v, 4);
        return out;
    }
    float f32(int word) const {
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + 4 * word, 4);
        if (swapped) v = bswap32(v);
        float out;
        std::memcpy(&out, &v, 4);
        return out;
    }
    bool swapped = false;
};

}  // namespace detail

// Reads the 2D section of an MRC file into a double image (row r = y index,
// column c = x index, matching the file's x-fastest layout). If the file
// holds a stack (nz > 1) the first section is taken with a warning.
inline Image2D<double> read_mrc(const std::string& path, MrcHeader* header_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open MRC file: " + path);

    detail::MrcRawHeader raw;
    in.read(reinterpret_cast<char*>(raw.bytes.data()), MrcHeader::kHeaderBytes);
    if (!in)
        throw std::runtime_error("truncated MRC header: " + path);

    // Machine stamp (word 53): 0x44 little endian, 0x11 big endian. Files
    // with a blank stamp are assumed little endian unless the dimensions
    // only make sense swapped.
    const unsigned char stamp0 = raw.bytes[53 * 4];
    if (stamp0 == 0x11) {
        raw.swapped = (std::endian::native == std::endian::little);
    } else if (stamp0 == 0x44 || stamp0 == 0x41) {
        raw.swapped = (std::endian::native == std::endian::big);
    } else {
        raw.swapped = false;
        const std::int32_t nx = raw.i32(0);
        if (nx <= 0 || nx > (1 << 24)) raw.swapped = true;
    }

    MrcHeader h;
    h.nx = raw.i32(0);
    h.ny = raw.i32(1);
    h.nz = raw.i32(2);
    h.mode = raw.i32(3);
    h.nxstart = raw.i32(4);
    h.nystart = raw.i32(5);
    h.nzstart = raw.i32(6);
    h.mx = raw.i32(7);
    h.my = raw.i32(8);
    h.mz = raw.i32(9);
    for (int i = 0; i < 3; ++i) h.cella[i] = raw.f32(10 + i);
    for (int i = 0; i < 3; ++i) h.cellb[i] = raw.f32(13 + i);
    h.mapc = raw.i32(16);
    h.mapr = raw.i32(17);
    h.maps = raw.i32(18);
    h.dmin = raw.f32(19);
    h.dmax = raw.f32(20);
    h.dmean = raw.f32(21);
    h.ispg = raw.i32(22);
    h.nsymbt = raw.i32(23);
    h.rms = raw.f32(54);
    h.nlabl = raw.i32(55);

    if (h.nx <= 0 || h.ny <= 0 || h.nz <= 0)
        throw std::runtime_error("MRC file has nonpositive dimensions: " + path);
    if (h.mode != 0 && h.mode != 1 && h.mode != 2 && h.mode != 6)
        throw std::runtime_error("unsupported MRC mode " + std::to_string(h.mode) + ": " + path);
    if (h.nz > 1)
        warn("MRC file " + path + " holds " + std::to_string(h.nz) +
             " sections; reading the first one only");

    if (h.nsymbt < 0)
        throw std::runtime_error("negative extended header size in MRC file: " + path);
    in.seekg(MrcHeader::kHeaderBytes + static_cast<std::streamoff>(h.nsymbt), std::ios::beg);

    const std::size_t npix = static_cast<std::size_t>(h.nx) * static_cast<std::size_t>(h.ny);
    Image2D<double> img(h.ny, h.nx);

    auto read_exact = [&](void* dst, std::size_t bytes) {
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
        if (!in) throw std::runtime_error("truncated MRC data section: " + path);
    };

    switch (h.mode) {
    case 0: {
        std::vector<std::int8_t> buf(npix);
        read_exact(buf.data(), npix);
        for (std::size_t i = 0; i < npix; ++i) img.data()[i] = buf[i];
        break;
    }
    case 1: {
        std::vector<std::int16_t> buf(npix);
        read_exact(buf.data(), npix * 2);
        for (std::size_t i = 0; i < npix; ++i) {
            std::uint16_t v;
            std::memcpy(&v, &buf[i], 2);
            if (raw.swapped) v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
            std::int16_t s;
            std::memcpy(&s, &v, 2);
            img.data()[i] = s;
        }
        break;
    }
    case 2: {
        std::vector<std::uint32_t> buf(npix);
        read_exact(buf.data(), npix * 4);
        for (std::size_t i = 0; i < npix; ++i) {
            std::uint32_t v = buf[i];
            if (raw.swapped) v = detail::bswap32(v);
            float f;
            std::memcpy(&f, &v, 4);
            img.data()[i] = f;
        }
        break;
    }
    case 6: {
        std::vector<std::uint16_t> buf(npix);
        read_exact(buf.data(), npix * 2);
        for (std::size_t i = 0; i < npix; ++i) {
            std::uint16_t v = buf[i];
            if (raw.swapped) v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
            img.data()[i] = v;
        }
        break;
    }
    default:
        break;
    }

    if (header_out) *header_out = h;
    return img;
}

namespace detail {

inline void put_i32(std::vector<unsigned char>& buf, int word, std::int32_t v) {
    std::memcpy(buf.data() + 4 * word, &v, 4);
}
inline void put_f32(std::vector<unsigned char>& buf, int word, float v) {
    std::memcpy(buf.data() + 4 * word, &v, 4);
}

inline std::vector<unsigned char> make_mrc_header(int ny, int nx, std::int32_t mode,
                                                  float dmin, float dmax, float dmean,
                                                  std::optional<double> pixel_size) {
    std::vector<unsigned char> buf(MrcHeader::kHeaderBytes, 0);
    put_i32(buf, 0, nx);
    put_i32(buf, 1, ny);
    put_i32(buf, 2, 1);
    put_i32(buf, 3, mode);
    put_i32(buf, 7, nx);
    put_i32(buf, 8, ny);
    put_i32(buf, 9, 1);
    const double px = pixel_size.value_or(1.0);
    put_f32(buf, 10, static_cast<float>(px * nx));
    put_f32(buf, 11, static_cast<float>(px * ny));
    put_f32(buf, 12, static_cast<float>(px));
    put_f32(buf, 13, 90.f);
    put_f32(buf, 14, 90.f);
    put_f32(buf, 15, 90.f);
    put_i32(buf, 16, 1);
    put_i32(buf, 17, 2);
    put_i32(buf, 18, 3);
    put_f32(buf, 19, dmin);
    put_f32(buf, 20, dmax);
    put_f32(buf, 21, dmean);
    put_i32(buf, 22, 0);   // ispg: image stack
    put_i32(buf, 23, 0);   // no extended header
    std::memcpy(buf.data() + 52 * 4, "MAP ", 4);
    if constexpr (std::endian::native == std::endian::little) {
        buf[53 * 4 + 0] = 0x44;
        buf[53 * 4 + 1] = 0x44;
    } else {
        buf[53 * 4 + 0] = 0x11;
        buf[53 * 4 + 1] = 0x11;
    }
    put_f32(buf, 54, -1.f);
    put_i32(buf, 55, 0);
    return buf;
}

}  // namespace detail

// Writes a float image as MRC mode 2.
inline void write_mrc_float(const std::string& path, const Image2D<double>& img,
                            std::optional<double> pixel_size = std::nullopt) {
    if (img.height() < 1 || img.width() < 1)
        throw std::invalid_argument("write_mrc_float: empty image");
    double mn = img.data()[0], mx = img.data()[0], sum = 0.0;
    for (double v : img) {
        mn = v < mn ? v : mn;
        mx = v > mx ? v : mx;
        sum += v;
    }
    auto buf = detail::make_mrc_header(img.height(), img.width(), 2,
                                       static_cast<float>(mn), static_cast<float>(mx),
                                       static_cast<float>(sum / static_cast<double>(img.size())),
                                       pixel_size);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    std::vector<float> data(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) data[i] = static_cast<float>(img.data()[i]);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

// Writes a {0,1} image as MRC mode 0.
inline void write_mrc_mask(const std::string& path, const Image2D<std::uint8_t>& mask) {
    if (mask.height() < 1 || mask.width() < 1)
        throw std::invalid_argument("write_mrc_mask: empty mask");
    double sum = 0.0;
    for (auto v : mask) sum += v;
    auto buf = detail::make_mrc_header(mask.height(), mask.width(), 0, 0.f, 1.f,
                                       static_cast<float>(sum / static_cast<double>(mask.size())),
                                       std::nullopt);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    std::vector<std::int8_t> data(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        data[i] = mask.data()[i] ? 1 : 0;
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

}  // namespace asocem
