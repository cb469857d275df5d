#pragma once

// Block tiling of the working grid, per-region Gaussian parameter
// estimation over column-stacked block vectors, and the per-block
// log-density-ratio field that drives the level-set evolution.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "asocem/image.hpp"
#include "asocem/micrograph.hpp"

namespace asocem {

struct BlockPartition {
    int block_edge = 0;
    int grid_height = 0, grid_width = 0;
    int blocks_y = 0, blocks_x = 0;
    int num_blocks = 0;                 // excludes the sentinel margin
    Image2D<std::int32_t> block_index_map;   // kSentinel on the margin strip

    static constexpr std::int32_t kSentinel = -1;

    int block_row0(int id) const { return (id / blocks_x) * block_edge; }
    int block_col0(int id) const { return (id % blocks_x) * block_edge; }
    int pixels_per_block() const { return block_edge * block_edge; }
};

// Tiles the largest block_edge-aligned subgrid; the residual margin gets
// sentinel ids and stays out of estimation and of the ratio field.
inline BlockPartition partition_blocks(int height, int width, int block_edge) {
    if (block_edge < 2)
        throw std::invalid_argument("partition_blocks: block_edge must be >= 2");
    if (height < block_edge || width < block_edge)
        throw std::invalid_argument("partition_blocks: block_edge larger than grid");

    BlockPartition p;
    p.block_edge = block_edge;
    p.grid_height = height;
    p.grid_width = width;
    p.blocks_y = height / block_edge;
    p.blocks_x = width / block_edge;
    p.num_blocks = p.blocks_y * p.blocks_x;
    p.block_index_map = Image2D<std::int32_t>(height, width, BlockPartition::kSentinel);
    for (int r = 0; r < p.blocks_y * block_edge; ++r)
        for (int c = 0; c < p.blocks_x * block_edge; ++c)
            p.block_index_map(r, c) = (r / block_edge) * p.blocks_x + (c / block_edge);
    return p;
}

// Block label in {0,1}: 0 (contamination side) when strictly more than half
// of the block's pixels have phi > 0, else 1. Ties go to 1.
inline std::vector<std::uint8_t> classify_blocks(const BlockPartition& p,
                                                 const Image2D<double>& phi) {
    if (phi.height() != p.grid_height || phi.width() != p.grid_width)
        throw std::invalid_argument("classify_blocks: phi shape mismatch");
    std::vector<int> positive(p.num_blocks, 0);
    for (int r = 0; r < p.grid_height; ++r)
        for (int c = 0; c < p.grid_width; ++c) {
            const std::int32_t id = p.block_index_map(r, c);
            if (id >= 0 && phi(r, c) > 0.0)
                ++positive[id];
        }
    const int half = p.pixels_per_block();
    std::vector<std::uint8_t> labels(p.num_blocks);
    for (int i = 0; i < p.num_blocks; ++i)
        labels[i] = (2 * positive[i] > half) ? 0 : 1;
    return labels;
}

struct RegionStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;      // regularized, SPD
    Eigen::MatrixXd chol_lower;
    double log_det = 0.0;
    double shrinkage_used = 0.0;
    int sample_count = 0;

    // Leave-one-out machinery. Evaluating a sample under statistics it
    // helped estimate carries a large finite-sample advantage (the fitted
    // covariance explains its own samples too well), which stalls the
    // alternating scheme. Removing sample x from the biased covariance is
    // a rank-one downdate,
    //   S_-x = m/(m-1) S - m/(m-1)^2 (x-mu)(x-mu)',
    // so with the shared base A = (1-lambda) m/(m-1) S + lambda iso I the
    // density of x under the model that excludes it follows from one
    // triangular solve via Sherman-Morrison and the determinant lemma.
    // The shrinkage target iso is kept at the full-region value (an
    // O(1/m) approximation in the target only).
    bool loo_valid = false;
    Eigen::MatrixXd loo_chol_lower;  // factor of A
    double loo_log_det = 0.0;        // log det A
    double loo_gamma = 0.0;          // (1-lambda) m/(m-1)^2
    double loo_scale = 0.0;          // (m/(m-1))^2

    int dim() const { return static_cast<int>(mean.size()); }
};

struct RatioField {
    Eigen::VectorXd per_block_log_ratio;    // length num_blocks
    Image2D<double> per_pixel_field;        // log ratio / pixels-per-block; 0 on the margin
};

// Column-stacked n^2-vector of one block.
inline Eigen::VectorXd block_vector(const Micrograph& m, const BlockPartition& p, int block_id) {
    const int n = p.block_edge;
    Eigen::VectorXd v(n * n);
    const int r0 = p.block_row0(block_id);
    const int c0 = p.block_col0(block_id);
    for (int c = 0; c < n; ++c)
        for (int r = 0; r < n; ++r)
            v[c * n + r] = m.pixels(r0 + r, c0 + c);
    return v;
}

namespace detail {

// dim x count matrix whose columns are the selected block vectors, in
// ascending block-id order (fixed reduction order keeps results
// independent of any caller-side parallelism).
inline Eigen::MatrixXd gather_blocks(const Micrograph& m, const BlockPartition& p,
                                     const std::vector<int>& ids) {
    Eigen::MatrixXd X(p.pixels_per_block(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k)
        X.col(static_cast<Eigen::Index>(k)) = block_vector(m, p, ids[k]);
    return X;
}

}  // namespace detail

// Estimator core over raw sample columns (one column per block vector);
// exposed so statistics can also be built from explicit samples.
inline RegionStats estimate_stats_from_columns(const Eigen::MatrixXd& X, double lambda_floor = 1e-4) {
    const Eigen::Index dim = X.rows();
    const Eigen::Index count = X.cols();
    if (count < 2)
        throw std::runtime_error("estimate_region_stats: fewer than 2 blocks in region");
    if (!X.allFinite())
        throw std::runtime_error("estimate_region_stats: non-finite input");

    RegionStats s;
    s.sample_count = static_cast<int>(count);
    s.mean = X.rowwise().mean();
    Eigen::MatrixXd centered = X.colwise() - s.mean;
    Eigen::MatrixXd sample_cov(dim, dim);
    sample_cov.setZero();
    sample_cov.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / static_cast<double>(count));
    sample_cov.triangularView<Eigen::StrictlyUpper>() = sample_cov.transpose();

    const double trace = sample_cov.trace();
    if (trace <= 0.0) {
        // All samples identical: fall back to a fixed small isotropic model.
        s.covariance = 1e-6 * Eigen::MatrixXd::Identity(dim, dim);
        s.chol_lower = std::sqrt(1e-6) * Eigen::MatrixXd::Identity(dim, dim);
        s.log_det = static_cast<double>(dim) * std::log(1e-6);
        s.shrinkage_used = 1.0;
        return s;
    }

    const double iso = trace / static_cast<double>(dim);
    const auto attach_loo = [&](RegionStats& out) {
        const double m = static_cast<double>(count);
        Eigen::MatrixXd base = (1.0 - out.shrinkage_used) * (m / (m - 1.0)) * sample_cov;
        base.diagonal().array() += out.shrinkage_used * iso;
        Eigen::LLT<Eigen::MatrixXd> llt(base);
        if (llt.info() != Eigen::Success)
            return;
        out.loo_chol_lower = llt.matrixL();
        out.loo_log_det = 2.0 * out.loo_chol_lower.diagonal().array().log().sum();
        out.loo_gamma = (1.0 - out.shrinkage_used) * m / ((m - 1.0) * (m - 1.0));
        out.loo_scale = (m / (m - 1.0)) * (m / (m - 1.0));
        out.loo_valid = true;
    };

    static constexpr double kLadder[] = {1e-4, 1e-3, 1e-2, 1e-1, 0.5};
    for (double lambda : kLadder) {
        if (lambda < lambda_floor)
            continue;
        Eigen::MatrixXd reg = (1.0 - lambda) * sample_cov;
        reg.diagonal().array() += lambda * iso;
        Eigen::LLT<Eigen::MatrixXd> llt(reg);
        if (llt.info() == Eigen::Success) {
            s.covariance = std::move(reg);
            s.chol_lower = llt.matrixL();
            s.log_det = 2.0 * s.chol_lower.diagonal().array().log().sum();
            s.shrinkage_used = lambda;
            attach_loo(s);
            return s;
        }
    }
    // A PSD sample covariance plus a positive isotropic term always factors;
    // reaching this point means the inputs were numerically hopeless.
    s.covariance = iso * Eigen::MatrixXd::Identity(dim, dim);
    s.chol_lower = std::sqrt(iso) * Eigen::MatrixXd::Identity(dim, dim);
    s.log_det = static_cast<double>(dim) * std::log(iso);
    s.shrinkage_used = 1.0;
    return s;
}

// Sample mean and biased sample covariance of the column-stacked vectors of
// the blocks labeled `region`, regularized toward a trace-scaled identity.
// The shrinkage weight walks the ladder {1e-4,1e-3,1e-2,1e-1,0.5} from
// lambda_floor upward until the Cholesky factorization succeeds. The floor
// exists because a blindly small lambda turns a rank-deficient sample
// covariance into a degenerate likelihood model; callers raise it whenever
// the sample count cannot support the block dimension.
inline RegionStats estimate_region_stats(const Micrograph& m, const BlockPartition& p,
                                         const std::vector<std::uint8_t>& labels, int region,
                                         double lambda_floor = 1e-4) {
    if (static_cast<int>(labels.size()) != p.num_blocks)
        throw std::invalid_argument("estimate_region_stats: labels size mismatch");
    std::vector<int> ids;
    for (int i = 0; i < p.num_blocks; ++i)
        if (labels[i] == region)
            ids.push_back(i);
    if (ids.size() < 2)
        throw std::runtime_error("estimate_region_stats: fewer than 2 blocks in region");
    return estimate_stats_from_columns(detail::gather_blocks(m, p, ids), lambda_floor);
}

// Stats over every non-sentinel block regardless of label; the pipeline's
// fallback model when one region degenerates.
inline RegionStats estimate_global_stats(const Micrograph& m, const BlockPartition& p,
                                         double lambda_floor = 1e-4) {
    std::vector<int> ids(p.num_blocks);
    for (int i = 0; i < p.num_blocks; ++i) ids[i] = i;
    return estimate_stats_from_columns(detail::gather_blocks(m, p, ids), lambda_floor);
}

// Gaussian log density  -1/2 (x-mu)' Sigma^-1 (x-mu) - 1/2 log det - d/2 log 2pi,
// the quadratic form evaluated through the triangular factor.
inline double block_log_density(const RegionStats& stats, const Eigen::VectorXd& x) {
    if (x.size() != stats.mean.size())
        throw std::invalid_argument("block_log_density: dimension mismatch");
    const Eigen::VectorXd y =
        stats.chol_lower.triangularView<Eigen::Lower>().solve(x - stats.mean);
    const double d = static_cast<double>(x.size());
    return -0.5 * y.squaredNorm() - 0.5 * stats.log_det - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

// Log density of x under the model re-estimated without x (valid only when
// x was one of the samples behind `stats`).
inline double block_log_density_loo(const RegionStats& stats, const Eigen::VectorXd& x) {
    if (!stats.loo_valid)
        throw std::runtime_error("block_log_density_loo: leave-one-out factor unavailable");
    const Eigen::VectorXd y =
        stats.loo_chol_lower.triangularView<Eigen::Lower>().solve(x - stats.mean);
    const double q = y.squaredNorm();
    const double t = std::max(1.0 - stats.loo_gamma * q, 1e-12);
    const double d = static_cast<double>(x.size());
    return -0.5 * stats.loo_scale * q / t - 0.5 * (stats.loo_log_det + std::log(t)) -
           0.5 * d * std::log(2.0 * std::numbers::pi);
}

namespace detail {

// Log densities of all blocks under one region model, solved in one batched
// triangular pass. When `member` marks blocks that belong to the model's
// own sample, those entries are evaluated leave-one-out.
inline Eigen::VectorXd log_densities(const Eigen::MatrixXd& X, const RegionStats& stats,
                                     const std::vector<char>* member = nullptr) {
    const double d = static_cast<double>(X.rows());
    const double norm_const = -0.5 * d * std::log(2.0 * std::numbers::pi);

    Eigen::MatrixXd resid = X.colwise() - stats.mean;
    Eigen::MatrixXd plain = resid;
    stats.chol_lower.triangularView<Eigen::Lower>().solveInPlace(plain);
    Eigen::VectorXd out =
        (-0.5 * plain.colwise().squaredNorm().array() - 0.5 * stats.log_det + norm_const)
            .transpose();

    if (member && stats.loo_valid) {
        stats.loo_chol_lower.triangularView<Eigen::Lower>().solveInPlace(resid);
        const Eigen::VectorXd q = resid.colwise().squaredNorm().transpose();
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            if (!(*member)[static_cast<std::size_t>(i)])
                continue;
            const double t = std::max(1.0 - stats.loo_gamma * q[i], 1e-12);
            out[i] = -0.5 * stats.loo_scale * q[i] / t -
                     0.5 * (stats.loo_log_det + std::log(t)) + norm_const;
        }
    }
    return out;
}

}  // namespace detail

// Per block i: log f0(x_i) - log f1(x_i); per pixel the block value divided
// by the pixels per block. Margin pixels hold 0. When `labels` is given,
// each block's density under its own region is evaluated leave-one-out so
// the comparison between the two models is not biased by self-fitting.
inline RatioField compute_ratio_field(const Micrograph& m, const BlockPartition& p,
                                      const RegionStats& stats0, const RegionStats& stats1,
                                      const std::vector<std::uint8_t>* labels = nullptr) {
    const int dim = p.pixels_per_block();
    if (stats0.dim() != dim || stats1.dim() != dim)
        throw std::invalid_argument("compute_ratio_field: stats dimension mismatch");
    if (labels && static_cast<int>(labels->size()) != p.num_blocks)
        throw std::invalid_argument("compute_ratio_field: labels size mismatch");

    std::vector<int> ids(p.num_blocks);
    for (int i = 0; i < p.num_blocks; ++i) ids[i] = i;
    const Eigen::MatrixXd X = detail::gather_blocks(m, p, ids);

    std::vector<char> member0(p.num_blocks, 0), member1(p.num_blocks, 0);
    if (labels)
        for (int i = 0; i < p.num_blocks; ++i) {
            member0[i] = (*labels)[i] == 0;
            member1[i] = (*labels)[i] == 1;
        }

    RatioField f;
    f.per_block_log_ratio = detail::log_densities(X, stats0, labels ? &member0 : nullptr) -
                            detail::log_densities(X, stats1, labels ? &member1 : nullptr);
    if (!f.per_block_log_ratio.allFinite())
        throw std::runtime_error("compute_ratio_field: non-finite log ratio");

    f.per_pixel_field = Image2D<double>(p.grid_height, p.grid_width, 0.0);
    const double inv_area = 1.0 / static_cast<double>(dim);
    for (int r = 0; r < p.grid_height; ++r)
        for (int c = 0; c < p.grid_width; ++c) {
            const std::int32_t id = p.block_index_map(r, c);
            if (id >= 0)
                f.per_pixel_field(r, c) = f.per_block_log_ratio[id] * inv_area;
        }
    return f;
}

}  // namespace asocem
