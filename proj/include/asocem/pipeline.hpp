#pragma once

// Full segmentation pipeline: working-size preparation, alternating
// statistics/level-set rounds, contamination side selection and the
// particle-size area filter.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "asocem/blocks.hpp"
#include "asocem/image.hpp"
#include "asocem/levelset.hpp"
#include "asocem/micrograph.hpp"

namespace asocem {

struct PipelineConfig {
    int particle_size_px = 0;     // at acquisition resolution; the only required knob
    int working_size = 800;
    int block_edge = 25;
    SolverParams solver;
    double area_factor = 4.0;

    void validate() const {
        if (particle_size_px < 1)
            throw std::invalid_argument("PipelineConfig: particle_size_px must be >= 1");
        if (block_edge < 2)
            throw std::invalid_argument("PipelineConfig: block_edge must be >= 2");
        if (working_size < 2 * block_edge)
            throw std::invalid_argument("PipelineConfig: working_size must be >= 2 * block_edge");
        solver.validate();
    }
};

enum class SegmentationStatus {
    Converged,        // outer loop reached the sign-change tolerance
    MaxIterations,    // stopped at solver.max_outer_iters
    NoContamination,  // persistent region degeneracy; all-zeros mask
};

inline const char* to_string(SegmentationStatus s) {
    switch (s) {
    case SegmentationStatus::Converged: return "converged";
    case SegmentationStatus::MaxIterations: return "max_iterations";
    case SegmentationStatus::NoContamination: return "no_contamination";
    }
    return "unknown";
}

struct SegmentationState {
    LevelSet phi;
    RegionStats stats0, stats1;
    int outer_iter = 0;
    bool converged = false;
};

struct SegmentationResult {
    SegmentationMask mask;   // at working resolution
    SegmentationStatus status = SegmentationStatus::Converged;
    int outer_iters = 0;
    double contamination_fraction = 0.0;

    // Geometry linking the working grid back to the input micrograph.
    int input_height = 0, input_width = 0;
    int crop_row0 = 0, crop_col0 = 0, crop_edge = 0;
    double scale = 1.0;   // working edge / cropped edge
};

enum class ContaminationSide { PhiPositive, PhiNegative };

// The side of the zero level set with fewer pixels is declared
// contamination (the smaller-area convention). An exact tie resolves to
// the positive side with a warning.
inline ContaminationSide select_contamination_side(const LevelSet& phi) {
    std::size_t pos = 0, neg = 0;
    for (double v : phi) {
        if (v > 0.0) ++pos;
        else if (v < 0.0) ++neg;
    }
    if (pos == neg) {
        warn("select_contamination_side: exact area tie, taking the positive side");
        return ContaminationSide::PhiPositive;
    }
    return pos < neg ? ContaminationSide::PhiPositive : ContaminationSide::PhiNegative;
}

inline SegmentationMask mask_from_side(const LevelSet& phi, ContaminationSide side) {
    SegmentationMask mask;
    mask.pixels = Image2D<std::uint8_t>(phi.height(), phi.width(), 0);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double v = phi.data()[i];
        const bool hit = side == ContaminationSide::PhiPositive ? v > 0.0 : v < 0.0;
        mask.pixels.data()[i] = hit ? 1 : 0;
    }
    return mask;
}

// Erases 4-connected components smaller than
// area_factor * (pi/4) * particle_size^2 pixels (a disk-equivalent area).
inline SegmentationMask filter_by_particle_size(const SegmentationMask& mask,
                                                double particle_size_working_px,
                                                double area_factor) {
    if (particle_size_working_px < 1.0)
        throw std::invalid_argument("filter_by_particle_size: particle size must be >= 1");
    const double threshold =
        area_factor * (std::numbers::pi / 4.0) * particle_size_working_px * particle_size_working_px;

    const int h = mask.height(), w = mask.width();
    SegmentationMask out = mask;
    Image2D<std::int32_t> comp(h, w, -1);
    std::vector<std::pair<int, int>> stack, members;

    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!mask.pixels(r, c) || comp(r, c) >= 0)
                continue;
            stack.clear();
            members.clear();
            stack.emplace_back(r, c);
            comp(r, c) = 1;
            while (!stack.empty()) {
                const auto [cr, cc] = stack.back();
                stack.pop_back();
                members.emplace_back(cr, cc);
                const int nr[4] = {cr - 1, cr + 1, cr, cr};
                const int nc[4] = {cc, cc, cc - 1, cc + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w)
                        continue;
                    if (mask.pixels(nr[k], nc[k]) && comp(nr[k], nc[k]) < 0) {
                        comp(nr[k], nc[k]) = 1;
                        stack.emplace_back(nr[k], nc[k]);
                    }
                }
            }
            if (static_cast<double>(members.size()) < threshold)
                for (const auto& [mr, mc] : members)
                    out.pixels(mr, mc) = 0;
        }
    return out;
}

namespace detail {

// Shrinkage floor for the region estimator. When the sample count cannot
// comfortably support the block dimension the sample covariance is rank
// deficient or heavily dispersed, and small shrinkage weights yield
// likelihoods dominated by the near-null space rather than by the data;
// half-identity blending keeps the trace (the region's energy scale)
// while bounding that distortion.
inline double shrinkage_floor(int sample_count, int dim) {
    return sample_count <= 4 * dim ? 0.5 : 1e-4;
}

// Sign-preserving renormalization applied between outer rounds. The
// evolution speed through delta_a(phi) decays like 1/phi^2, so pixels that
// drifted far from the zero level set would otherwise take thousands of
// steps to cross back once the statistics turn against them (boundary
// sticking). Pulling phi into a fixed band keeps every pixel responsive
// without touching the sign pattern.
inline constexpr double kPhiRenormBand = 1.0;

inline void renormalize_phi(LevelSet& phi) {
    for (double& v : phi)
        v = v < -kPhiRenormBand ? -kPhiRenormBand : (v > kPhiRenormBand ? kPhiRenormBand : v);
}

struct PreparedInput {
    Micrograph work;
    int crop_row0 = 0, crop_col0 = 0, crop_edge = 0;
    double scale = 1.0;
};

inline PreparedInput prepare_input(const Micrograph& m, const PipelineConfig& cfg) {
    PreparedInput prep;
    const int h = m.height(), w = m.width();
    const int edge = std::min(h, w);
    if (edge < 600)
        warn("micrograph working edge " + std::to_string(edge) +
             " is below 600 px; segmentation quality degrades on small grids");
    if (edge > cfg.working_size) {
        prep.work = normalize(downsample(m, cfg.working_size));
        prep.crop_row0 = (h - edge) / 2;
        prep.crop_col0 = (w - edge) / 2;
        prep.crop_edge = edge;
        prep.scale = static_cast<double>(cfg.working_size) / edge;
    } else {
        prep.work = normalize(m);
        prep.crop_row0 = 0;
        prep.crop_col0 = 0;
        prep.crop_edge = edge;
        prep.scale = 1.0;
    }
    return prep;
}

}  // namespace detail

// The normalized working-resolution image the solver actually sees; also
// useful for overlays.
inline Micrograph prepare_working_micrograph(const Micrograph& m, const PipelineConfig& cfg) {
    return detail::prepare_input(m, cfg).work;
}

// Segments one micrograph. Alternates region-statistics estimation with
// level-set evolution until the mask stops changing, then picks the
// smaller side as contamination and erases components below the
// particle-size area threshold. Deterministic for fixed input and config.
inline SegmentationResult segment_micrograph(const Micrograph& m, const PipelineConfig& cfg) {
    cfg.validate();
    check_micrograph(m);

    const detail::PreparedInput prep = detail::prepare_input(m, cfg);
    const Micrograph& work = prep.work;
    if (work.height() < cfg.block_edge || work.width() < cfg.block_edge)
        throw std::runtime_error("micrograph smaller than one block after preparation");

    const BlockPartition partition = partition_blocks(work.height(), work.width(), cfg.block_edge);
    const int dim = partition.pixels_per_block();

    SegmentationResult result;
    result.input_height = m.height();
    result.input_width = m.width();
    result.crop_row0 = prep.crop_row0;
    result.crop_col0 = prep.crop_col0;
    result.crop_edge = prep.crop_edge;
    result.scale = prep.scale;

    SegmentationState state;
    state.phi = init_phi(work.height(), work.width());

    Image2D<std::uint8_t> prev_sign(work.height(), work.width(), 0);
    for (std::size_t i = 0; i < state.phi.size(); ++i)
        prev_sign.data()[i] = state.phi.data()[i] > 0.0 ? 1 : 0;

    int degenerate_streak = 0;
    while (state.outer_iter < cfg.solver.max_outer_iters) {
        ++state.outer_iter;
        const std::vector<std::uint8_t> labels = classify_blocks(partition, state.phi);

        int count0 = 0;
        for (auto l : labels) count0 += l == 0;
        const int count1 = partition.num_blocks - count0;

        bool degenerate = false;
        if (count0 >= 2) {
            state.stats0 = estimate_region_stats(work, partition, labels, 0,
                                                 detail::shrinkage_floor(count0, dim));
        } else {
            state.stats0 = estimate_global_stats(work, partition,
                                                 detail::shrinkage_floor(partition.num_blocks, dim));
            degenerate = true;
        }
        if (count1 >= 2) {
            state.stats1 = estimate_region_stats(work, partition, labels, 1,
                                                 detail::shrinkage_floor(count1, dim));
        } else {
            state.stats1 = estimate_global_stats(work, partition,
                                                 detail::shrinkage_floor(partition.num_blocks, dim));
            degenerate = true;
        }

        if (degenerate) {
            if (++degenerate_streak >= 3) {
                result.mask.pixels = Image2D<std::uint8_t>(work.height(), work.width(), 0);
                result.status = SegmentationStatus::NoContamination;
                result.outer_iters = state.outer_iter;
                result.contamination_fraction = 0.0;
                return result;
            }
        } else {
            degenerate_streak = 0;
        }

        const RatioField ratio =
            compute_ratio_field(work, partition, state.stats0, state.stats1, &labels);
        detail::renormalize_phi(state.phi);
        auto [phi_next, steps] = run_evolution(std::move(state.phi), ratio.per_pixel_field, cfg.solver);
        (void)steps;
        state.phi = std::move(phi_next);

        std::size_t flipped = 0;
        for (std::size_t i = 0; i < state.phi.size(); ++i) {
            const std::uint8_t s = state.phi.data()[i] > 0.0 ? 1 : 0;
            if (s != prev_sign.data()[i]) ++flipped;
            prev_sign.data()[i] = s;
        }
        if (static_cast<double>(flipped) / static_cast<double>(state.phi.size()) <
            cfg.solver.sign_change_tol) {
            state.converged = true;
            break;
        }
    }

    const ContaminationSide side = select_contamination_side(state.phi);
    SegmentationMask mask = mask_from_side(state.phi, side);

    const double particle_working = std::max(1.0, cfg.particle_size_px * prep.scale);
    mask = filter_by_particle_size(mask, particle_working, cfg.area_factor);

    double ones = 0.0;
    for (auto v : mask.pixels) ones += v;

    result.mask = std::move(mask);
    result.status = state.converged ? SegmentationStatus::Converged
                                    : SegmentationStatus::MaxIterations;
    result.outer_iters = state.outer_iter;
    result.contamination_fraction = ones / static_cast<double>(result.mask.pixels.size());
    return result;
}

// Places a working-resolution mask back into acquisition coordinates:
// nearest-neighbor upscale to the cropped square, embedded at the crop
// offset in an all-zeros canvas.
inline SegmentationMask mask_to_input_resolution(const SegmentationResult& result) {
    SegmentationMask out;
    out.pixels = Image2D<std::uint8_t>(result.input_height, result.input_width, 0);
    const Image2D<std::uint8_t> up =
        upsample_mask_nearest(result.mask.pixels, result.crop_edge, result.crop_edge);
    for (int r = 0; r < result.crop_edge; ++r)
        for (int c = 0; c < result.crop_edge; ++c)
            out.pixels(result.crop_row0 + r, result.crop_col0 + c) = up(r, c);
    return out;
}

}  // namespace asocem
