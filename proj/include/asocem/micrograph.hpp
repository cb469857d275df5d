#pragma once

// Micrograph and mask types plus the disk-facing operations: format
// dispatch on read, block-average downsampling, normalization and mask
// output (PNG / MRC, optionally upsampled back to acquisition size).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asocem/image.hpp"
#include "asocem/mrc.hpp"
#include "asocem/png_io.hpp"
#include "asocem/tiff_io.hpp"

namespace asocem {

struct Micrograph {
    Image2D<double> pixels;
    std::optional<double> pixel_size_angstrom;
    std::string source_path;

    int height() const { return pixels.height(); }
    int width() const { return pixels.width(); }
};

struct SegmentationMask {
    Image2D<std::uint8_t> pixels;   // 1 = contamination

    int height() const { return pixels.height(); }
    int width() const { return pixels.width(); }
};

enum class ImageFormat { Mrc, Png, Tiff, Auto };

namespace detail {

inline std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return {};
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

inline ImageFormat detect_format(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "mrc" || ext == "mrcs" || ext == "rec" || ext == "map") return ImageFormat::Mrc;
    if (ext == "png") return ImageFormat::Png;
    if (ext == "tif" || ext == "tiff") return ImageFormat::Tiff;
    throw std::runtime_error("cannot infer image format from extension: " + path);
}

// Area-overlap weights mapping src samples onto dst bins. Each row is
// normalized to sum to one so constant inputs are preserved exactly.
struct ResampleRow {
    int first;
    std::vector<double> weights;
};

inline std::vector<ResampleRow> resample_weights(int src, int dst) {
    std::vector<ResampleRow> rows(dst);
    const double ratio = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        const double lo = i * ratio;
        const double hi = (i + 1) * ratio;
        int j0 = static_cast<int>(std::floor(lo));
        int j1 = static_cast<int>(std::ceil(hi));
        j0 = std::max(0, j0);
        j1 = std::min(src, j1);
        rows[i].first = j0;
        rows[i].weights.resize(j1 - j0);
        double sum = 0.0;
        for (int j = j0; j < j1; ++j) {
            const double overlap = std::min<double>(hi, j + 1) - std::max<double>(lo, j);
            rows[i].weights[j - j0] = overlap;
            sum += overlap;
        }
        for (double& w : rows[i].weights) w /= sum;
    }
    return rows;
}

}  // namespace detail

inline void check_micrograph(const Micrograph& m) {
    if (m.height() < 2 || m.width() < 2)
        throw std::runtime_error("micrograph smaller than 2x2: " + m.source_path);
    for (double v : m.pixels)
        if (!std::isfinite(v))
            throw std::runtime_error("micrograph contains non-finite pixels: " + m.source_path);
}

inline Micrograph read_micrograph(const std::string& path, ImageFormat format = ImageFormat::Auto) {
    if (format == ImageFormat::Auto)
        format = detail::detect_format(path);
    Micrograph m;
    m.source_path = path;
    switch (format) {
    case ImageFormat::Mrc: {
        MrcHeader h;
        m.pixels = read_mrc(path, &h);
        m.pixel_size_angstrom = h.pixel_size();
        break;
    }
    case ImageFormat::Png:
        m.pixels = read_png(path);
        break;
    case ImageFormat::Tiff:
        m.pixels = read_tiff(path);
        break;
    default:
        throw std::logic_error("unreachable format");
    }
    check_micrograph(m);
    return m;
}

// Downsamples to target x target by area-weighted block averaging.
// Non-square inputs are center-cropped to square first. Inputs already at
// or below the target in both dimensions pass through unchanged.
inline Micrograph downsample(const Micrograph& m, int target) {
    if (target < 2)
        throw std::invalid_argument("downsample: target must be >= 2");
    const int h = m.height(), w = m.width();
    if (h <= target && w <= target) {
        warn("downsample: input " + std::to_string(h) + "x" + std::to_string(w) +
             " already within target " + std::to_string(target) + ", returning unchanged");
        return m;
    }
    const int edge = std::min(h, w);
    const int r0 = (h - edge) / 2;
    const int c0 = (w - edge) / 2;

    if (edge <= target) {
        warn("downsample: cropped edge " + std::to_string(edge) +
             " already within target " + std::to_string(target) + ", returning unchanged");
        return m;
    }

    const auto wrows = detail::resample_weights(edge, target);

    // Rows first: (edge x edge) crop -> (target x edge).
    Image2D<double> tmp(target, edge);
    for (int i = 0; i < target; ++i) {
        const auto& row = wrows[i];
        for (int c = 0; c < edge; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < row.weights.size(); ++k)
                acc += row.weights[k] * m.pixels(r0 + row.first + static_cast<int>(k), c0 + c);
            tmp(i, c) = acc;
        }
    }
    // Then columns: (target x edge) -> (target x target).
    Micrograph out;
    out.pixels = Image2D<double>(target, target);
    for (int j = 0; j < target; ++j) {
        const auto& col = wrows[j];
        for (int i = 0; i < target; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < col.weights.size(); ++k)
                acc += col.weights[k] * tmp(i, col.first + static_cast<int>(k));
            out.pixels(i, j) = acc;
        }
    }
    out.source_path = m.source_path;
    if (m.pixel_size_angstrom)
        out.pixel_size_angstrom = *m.pixel_size_angstrom * edge / target;
    return out;
}

// Zero-mean, unit-sd copy (population sd). A constant image maps to zeros.
inline Micrograph normalize(const Micrograph& m) {
    Micrograph out = m;
    const double n = static_cast<double>(m.pixels.size());
    double mean = 0.0;
    for (double v : m.pixels) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : m.pixels) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = std::sqrt(var);
    if (sd == 0.0) {
        for (double& v : out.pixels) v = 0.0;
        return out;
    }
    for (double& v : out.pixels) v = (v - mean) / sd;
    return out;
}

// Nearest-neighbor upscale of a mask to the acquisition dimensions.
inline Image2D<std::uint8_t> upsample_mask_nearest(const Image2D<std::uint8_t>& mask,
                                                   int out_height, int out_width) {
    if (out_height < mask.height() || out_width < mask.width())
        throw std::invalid_argument("upsample_mask_nearest: output smaller than mask");
    Image2D<std::uint8_t> out(out_height, out_width);
    for (int r = 0; r < out_height; ++r) {
        const int sr = static_cast<int>(static_cast<std::int64_t>(r) * mask.height() / out_height);
        for (int c = 0; c < out_width; ++c) {
            const int sc = static_cast<int>(static_cast<std::int64_t>(c) * mask.width() / out_width);
            out(r, c) = mask(sr, sc);
        }
    }
    return out;
}

enum class MaskFormat { Mrc, Png };

struct MaskDims {
    int height;
    int width;
};

// PNG: 0 -> 0, 1 -> 255 (8-bit gray). MRC: mode 0 with values {0,1}.
inline void write_mask(const SegmentationMask& mask, const std::string& path, MaskFormat format,
                       std::optional<MaskDims> upsample_to = std::nullopt) {
    const Image2D<std::uint8_t>* pix = &mask.pixels;
    Image2D<std::uint8_t> up;
    if (upsample_to) {
        up = upsample_mask_nearest(mask.pixels, upsample_to->height, upsample_to->width);
        pix = &up;
    }
    if (format == MaskFormat::Mrc) {
        write_mrc_mask(path, *pix);
        return;
    }
    Image2D<std::uint8_t> bytes(pix->height(), pix->width());
    for (std::size_t i = 0; i < pix->size(); ++i)
        bytes.data()[i] = pix->data()[i] ? 255 : 0;
    write_png_gray8(path, bytes);
}

// Diagnostic overlay: micrograph as gray background (robust 1..99 percentile
// stretch), contamination tinted red.
inline void write_overlay_png(const Micrograph& m, const SegmentationMask& mask,
                              const std::string& path) {
    if (!m.pixels.same_shape(mask.pixels))
        throw std::invalid_argument("write_overlay_png: shape mismatch");
    std::vector<double> sorted(m.pixels.begin(), m.pixels.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted[static_cast<std::size_t>(0.01 * (sorted.size() - 1))];
    const double hi = sorted[static_cast<std::size_t>(0.99 * (sorted.size() - 1))];
    const double span = hi > lo ? hi - lo : 1.0;

    std::vector<std::uint8_t> rgb(m.pixels.size() * 3);
    for (std::size_t i = 0; i < m.pixels.size(); ++i) {
        double g = (m.pixels.data()[i] - lo) / span;
        g = std::clamp(g, 0.0, 1.0);
        const auto gray = static_cast<std::uint8_t>(std::lround(255.0 * g));
        if (mask.pixels.data()[i]) {
            rgb[3 * i + 0] = static_cast<std::uint8_t>(std::min(255l, std::lround(128 + 0.5 * gray)));
            rgb[3 * i + 1] = static_cast<std::uint8_t>(std::lround(0.35 * gray));
            rgb[3 * i + 2] = static_cast<std::uint8_t>(std::lround(0.35 * gray));
        } else {
            rgb[3 * i + 0] = gray;
            rgb[3 * i + 1] = gray;
            rgb[3 * i + 2] = gray;
        }
    }
    write_png_rgb8(path, m.height(), m.width(), rgb);
}

}  // namespace asocem
