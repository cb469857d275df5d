#pragma once

// Synthetic micrographs drawn from the two-region stationary Gaussian
// model, with the generating geometry returned as ground truth. Each
// region is an independent field: white noise, optionally box-filtered
// (moving average) for exact stationary correlation, scaled to a target
// marginal sd and shifted by a mean offset.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "asocem/image.hpp"
#include "asocem/micrograph.hpp"

namespace asocem {

struct RegionModel {
    double mean_offset = 0.0;
    double sd = 1.0;
    int ma_window = 1;   // 1 = white noise; odd w >= 3 = w x w box moving average
};

struct Disk {
    double cx = 0.5, cy = 0.5, radius = 0.0;   // unit-square coordinates
};

struct SyntheticGeometry {
    enum class Kind { Disk, HalfPlane, DiskUnion };
    Kind kind = Kind::Disk;
    std::vector<Disk> disks;     // Disk uses disks[0]; DiskUnion uses all
    double fraction = 0.0;       // HalfPlane: region 0 is x < fraction
};

struct SyntheticSpec {
    int height = 800, width = 800;
    SyntheticGeometry geometry;
    RegionModel region0;   // inside the geometry (contamination)
    RegionModel region1;   // complement
    std::uint64_t seed = 0;

    void validate() const {
        if (height < 2 || width < 2)
            throw std::invalid_argument("SyntheticSpec: dimensions must be >= 2");
        auto check_model = [](const RegionModel& m) {
            if (m.sd <= 0.0)
                throw std::invalid_argument("SyntheticSpec: sd must be positive");
            if (m.ma_window < 1 || m.ma_window % 2 == 0)
                throw std::invalid_argument("SyntheticSpec: ma_window must be odd and >= 1");
        };
        check_model(region0);
        check_model(region1);
        if (geometry.kind == SyntheticGeometry::Kind::HalfPlane) {
            if (geometry.fraction < 0.0 || geometry.fraction > 1.0)
                throw std::invalid_argument("SyntheticSpec: fraction outside [0,1]");
        } else {
            if (geometry.disks.empty())
                throw std::invalid_argument("SyntheticSpec: no disks given");
            for (const auto& d : geometry.disks)
                if (d.radius < 0.0 || d.cx < 0.0 || d.cx > 1.0 || d.cy < 0.0 || d.cy > 1.0)
                    throw std::invalid_argument("SyntheticSpec: disk outside the unit square");
        }
    }
};

namespace detail {

// Stationary field on the full grid for one region model. For a moving
// average the white noise is generated on an extended grid so every output
// pixel sees a full window (no boundary taper).
inline Image2D<double> region_field(int height, int width, const RegionModel& model,
                                    std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int w = model.ma_window;
    if (w == 1) {
        Image2D<double> out(height, width);
        for (double& v : out)
            v = gauss(rng) * model.sd + model.mean_offset;
        return out;
    }
    const int eh = height + w - 1, ew = width + w - 1;
    Image2D<double> noise(eh, ew);
    for (double& v : noise)
        v = gauss(rng);

    // Summed-area table for O(1) box sums.
    std::vector<double> sat(static_cast<std::size_t>(eh + 1) * (ew + 1), 0.0);
    const auto at = [&](int r, int c) -> double& {
        return sat[static_cast<std::size_t>(r) * (ew + 1) + c];
    };
    for (int r = 1; r <= eh; ++r)
        for (int c = 1; c <= ew; ++c)
            at(r, c) = noise(r - 1, c - 1) + at(r - 1, c) + at(r, c - 1) - at(r - 1, c - 1);

    // Box mean of unit white noise has sd 1/w, so scale by w * sd.
    const double scale = model.sd * static_cast<double>(w) / (static_cast<double>(w) * w);
    Image2D<double> out(height, width);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const double box = at(r + w, c + w) - at(r, c + w) - at(r + w, c) + at(r, c);
            out(r, c) = box * scale + model.mean_offset;
        }
    return out;
}

inline bool inside_geometry(const SyntheticGeometry& g, double x, double y) {
    if (g.kind == SyntheticGeometry::Kind::HalfPlane)
        return x < g.fraction;
    for (const auto& d : g.disks) {
        const double dx = x - d.cx, dy = y - d.cy;
        if (dx * dx + dy * dy < d.radius * d.radius)
            return true;
    }
    return false;
}

}  // namespace detail

// Ground-truth mask by pixel-center containment.
inline SegmentationMask rasterize_geometry(const SyntheticGeometry& g, int height, int width) {
    SegmentationMask mask;
    mask.pixels = Image2D<std::uint8_t>(height, width, 0);
    for (int r = 0; r < height; ++r) {
        const double y = (r + 0.5) / height;
        for (int c = 0; c < width; ++c) {
            const double x = (c + 0.5) / width;
            if (detail::inside_geometry(g, x, y))
                mask.pixels(r, c) = 1;
        }
    }
    return mask;
}

inline std::pair<Micrograph, SegmentationMask> generate(const SyntheticSpec& spec) {
    spec.validate();
    const SegmentationMask gt = rasterize_geometry(spec.geometry, spec.height, spec.width);

    std::seed_seq seq0{spec.seed, std::uint64_t{0}};
    std::seed_seq seq1{spec.seed, std::uint64_t{1}};
    std::mt19937_64 rng0(seq0), rng1(seq1);
    const Image2D<double> f0 = detail::region_field(spec.height, spec.width, spec.region0, rng0);
    const Image2D<double> f1 = detail::region_field(spec.height, spec.width, spec.region1, rng1);

    Micrograph m;
    m.pixels = Image2D<double>(spec.height, spec.width);
    m.source_path = "synthetic(seed=" + std::to_string(spec.seed) + ")";
    for (std::size_t i = 0; i < m.pixels.size(); ++i)
        m.pixels.data()[i] = gt.pixels.data()[i] ? f0.data()[i] : f1.data()[i];
    return {std::move(m), std::move(gt)};
}

}  // namespace asocem
