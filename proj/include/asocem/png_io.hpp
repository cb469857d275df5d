#pragma once

// Grayscale PNG input (8/16 bit, color converted to luminance) and 8-bit
// grayscale / RGB output, via libpng.

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "asocem/image.hpp"

namespace asocem {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Reads a PNG as a grayscale image. 8-bit samples land in [0,255], 16-bit
// samples in [0,65535]; palette and RGB(A) inputs are converted.
inline Image2D<double> read_png(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp)
        throw std::runtime_error("cannot open PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }

    std::vector<std::uint16_t> samples;
    png_uint_32 width = 0, height = 0;
    int bit_depth = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode PNG file: " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray(png, 1 /* silent */, -1.0, -1.0);
    if (bit_depth == 16)
        png_set_swap(png);   // host-endian 16-bit samples

    png_read_update_info(png, info);
    bit_depth = png_get_bit_depth(png, info);

    const std::size_t npix = static_cast<std::size_t>(width) * height;
    samples.resize(npix);
    std::vector<png_bytep> rows(height);

    std::vector<std::uint8_t> bytes8;
    if (bit_depth == 16) {
        for (png_uint_32 r = 0; r < height; ++r)
            rows[r] = reinterpret_cast<png_bytep>(samples.data() + static_cast<std::size_t>(r) * width);
    } else {
        bytes8.resize(npix);
        for (png_uint_32 r = 0; r < height; ++r)
            rows[r] = bytes8.data() + static_cast<std::size_t>(r) * width;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image2D<double> img(static_cast<int>(height), static_cast<int>(width));
    if (bit_depth == 16) {
        for (std::size_t i = 0; i < npix; ++i) img.data()[i] = samples[i];
    } else {
        for (std::size_t i = 0; i < npix; ++i) img.data()[i] = bytes8[i];
    }
    return img;
}

// Writes an 8-bit grayscale PNG from byte values.
inline void write_png_gray8(const std::string& path, const Image2D<std::uint8_t>& img) {
    if (img.height() < 1 || img.width() < 1)
        throw std::invalid_argument("write_png_gray8: empty image");
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        throw std::runtime_error("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG file: " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < img.height(); ++r)
        png_write_row(png, const_cast<png_bytep>(img.data() + static_cast<std::size_t>(r) * img.width()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Writes an 8-bit RGB PNG from interleaved rgb triples (height*width*3 bytes).
inline void write_png_rgb8(const std::string& path, int height, int width,
                           const std::vector<std::uint8_t>& rgb) {
    if (height < 1 || width < 1 ||
        rgb.size() != static_cast<std::size_t>(height) * width * 3)
        throw std::invalid_argument("write_png_rgb8: bad buffer size");
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        throw std::runtime_error("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG file: " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r)
        png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(r) * width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace asocem
