#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "asocem/blocks.hpp"
#include "test_helpers.hpp"

using namespace asocem;

namespace {

Micrograph noise_micrograph(int h, int w, std::uint64_t seed, double sd = 1.0, double mean = 0.0) {
    Micrograph m;
    m.pixels = testutil::random_field(h, w, seed, sd, mean);
    return m;
}

// Stats with exact mean mu and exact identity covariance in dimension d:
// samples mu +- sqrt(d) e_k give a biased sample covariance of exactly I.
RegionStats exact_identity_stats(const Eigen::VectorXd& mu) {
    const int d = static_cast<int>(mu.size());
    const double step = std::sqrt(static_cast<double>(d));
    Eigen::MatrixXd X(d, 2 * d);
    for (int k = 0; k < d; ++k) {
        X.col(2 * k) = mu + step * Eigen::VectorXd::Unit(d, k);
        X.col(2 * k + 1) = mu - step * Eigen::VectorXd::Unit(d, k);
    }
    return estimate_stats_from_columns(X);
}

// Independent reference for the Gaussian log density: explicit inverse for
// the quadratic form and an LU log-determinant.
double dense_log_density(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                         const Eigen::VectorXd& x) {
    const Eigen::MatrixXd inv = sigma.inverse();
    const Eigen::VectorXd r = x - mu;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sigma);
    double log_det = 0.0;
    for (int i = 0; i < sigma.rows(); ++i)
        log_det += std::log(std::abs(lu.matrixLU()(i, i)));
    const double d = static_cast<double>(sigma.rows());
    return -0.5 * r.dot(inv * r) - 0.5 * log_det - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

}  // namespace

TEST_CASE("partition_blocks: exact tiling and margins") {
    const BlockPartition p1 = partition_blocks(50, 50, 25);
    CHECK(p1.num_blocks == 4);
    CHECK(p1.block_index_map(0, 0) == 0);
    CHECK(p1.block_index_map(0, 25) == 1);
    CHECK(p1.block_index_map(25, 0) == 2);
    CHECK(p1.block_index_map(49, 49) == 3);

    const BlockPartition p2 = partition_blocks(800, 800, 25);
    CHECK(p2.num_blocks == 1024);

    const BlockPartition p3 = partition_blocks(60, 60, 25);
    CHECK(p3.num_blocks == 4);
    for (int r = 0; r < 60; ++r)
        for (int c = 0; c < 60; ++c) {
            const bool margin = r >= 50 || c >= 50;
            CHECK((p3.block_index_map(r, c) == BlockPartition::kSentinel) == margin);
        }

    CHECK_THROWS(partition_blocks(20, 20, 25));
    CHECK_THROWS(partition_blocks(20, 20, 1));
}

TEST_CASE("classify_blocks: unanimity, majority and tie rule") {
    const BlockPartition p = partition_blocks(25, 25, 25);
    Image2D<double> phi(25, 25, 1.0);
    CHECK(classify_blocks(p, phi)[0] == 0);
    for (double& v : phi) v = -1.0;
    CHECK(classify_blocks(p, phi)[0] == 1);

    // Exactly 312 positive pixels out of 625: less than half, label 1.
    int set = 0;
    for (double& v : phi)
        v = set++ < 312 ? 1.0 : -1.0;
    CHECK(classify_blocks(p, phi)[0] == 1);
    // One more positive pixel crosses the strict majority.
    set = 0;
    for (double& v : phi)
        v = set++ < 313 ? 1.0 : -1.0;
    CHECK(classify_blocks(p, phi)[0] == 0);
}

TEST_CASE("classify_blocks: invariant under positive rescaling of phi") {
    const BlockPartition p = partition_blocks(40, 40, 10);
    Image2D<double> phi = testutil::random_field(40, 40, 5);
    Image2D<double> scaled = phi;
    for (double& v : scaled) v *= 37.5;
    CHECK(classify_blocks(p, phi) == classify_blocks(p, scaled));
}

TEST_CASE("estimate_region_stats: constant blocks fall back to the isotropic floor") {
    Micrograph m;
    m.pixels = Image2D<double>(8, 8, 3.0);
    const BlockPartition p = partition_blocks(8, 8, 4);
    const std::vector<std::uint8_t> labels(p.num_blocks, 0);
    const RegionStats s = estimate_region_stats(m, p, labels, 0);
    const int d = p.pixels_per_block();
    CHECK(s.mean.isApproxToConstant(3.0));
    CHECK(s.log_det == Catch::Approx(d * std::log(1e-6)).epsilon(1e-12));
    CHECK(s.shrinkage_used == 1.0);
}

TEST_CASE("estimate_stats_from_columns: scalar two-sample case") {
    Eigen::MatrixXd X(1, 2);
    X << -1.0, 1.0;
    const RegionStats s = estimate_stats_from_columns(X);
    CHECK(s.mean[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(s.covariance(0, 0) == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(s.sample_count == 2);
}

TEST_CASE("estimate_region_stats: white-noise covariance approaches identity") {
    // 2000 blocks of 5x5 iid unit-variance noise: 250x200 grid.
    const Micrograph m = noise_micrograph(250, 200, 123);
    const BlockPartition p = partition_blocks(250, 200, 5);
    REQUIRE(p.num_blocks == 2000);
    const std::vector<std::uint8_t> labels(p.num_blocks, 1);
    const RegionStats s = estimate_region_stats(m, p, labels, 1);
    const Eigen::MatrixXd err =
        s.covariance - Eigen::MatrixXd::Identity(s.dim(), s.dim());
    CHECK(err.cwiseAbs().maxCoeff() < 0.15);
    CHECK(s.log_det == Catch::Approx(2.0 * s.chol_lower.diagonal().array().log().sum())
                           .epsilon(1e-8));
}

TEST_CASE("estimate_region_stats: fewer than two blocks in a region errors") {
    const Micrograph m = noise_micrograph(8, 8, 9);
    const BlockPartition p = partition_blocks(8, 8, 4);
    std::vector<std::uint8_t> labels = {0, 1, 1, 1};
    CHECK_THROWS(estimate_region_stats(m, p, labels, 0));
    CHECK_NOTHROW(estimate_region_stats(m, p, labels, 1));
}

TEST_CASE("estimate_region_stats: invariant to block ordering") {
    const Micrograph m = noise_micrograph(40, 40, 77);
    const BlockPartition p = partition_blocks(40, 40, 10);
    // Two labelings selecting the same set of blocks; the estimate must not
    // depend on how the selection is interleaved with the other region.
    std::vector<std::uint8_t> a = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    std::vector<std::uint8_t> b = a;
    const RegionStats sa = estimate_region_stats(m, p, a, 0);
    // Re-run with region codes swapped so the same blocks are gathered as
    // region 1 instead.
    for (auto& l : b) l = 1 - l;
    const RegionStats sb = estimate_region_stats(m, p, b, 1);
    CHECK((sa.mean - sb.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sa.covariance - sb.covariance).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("block_log_density: standard normal values") {
    const RegionStats s = exact_identity_stats(Eigen::VectorXd::Zero(1));
    Eigen::VectorXd x(1);
    x << 0.0;
    CHECK(block_log_density(s, x) ==
          Catch::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-9));
    x << 1.0;
    CHECK(block_log_density(s, x) ==
          Catch::Approx(-0.5 - 0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-9));
}

TEST_CASE("block_log_density: matches dense-inverse reference on random SPD models") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + static_cast<int>(rng() % 64);
        Eigen::MatrixXd A(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                A(i, j) = gauss(rng);
        Eigen::MatrixXd sigma = A * A.transpose() + d * Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd mu(d), x(d);
        for (int i = 0; i < d; ++i) {
            mu[i] = gauss(rng);
            x[i] = gauss(rng);
        }

        RegionStats s;
        s.mean = mu;
        s.covariance = sigma;
        const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
        REQUIRE(llt.info() == Eigen::Success);
        s.chol_lower = llt.matrixL();
        s.log_det = 2.0 * s.chol_lower.diagonal().array().log().sum();
        s.sample_count = 2 * d;

        const double got = block_log_density(s, x);
        const double want = dense_log_density(mu, sigma, x);
        CHECK(std::abs(got - want) <= 1e-8 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("block_log_density: maximized at the mean") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> gauss;
    Eigen::VectorXd mu(9);
    for (int i = 0; i < 9; ++i) mu[i] = gauss(rng);
    const RegionStats s = exact_identity_stats(mu);
    const double at_mean = block_log_density(s, s.mean);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd x(9);
        for (int i = 0; i < 9; ++i) x[i] = gauss(rng) * 3.0;
        CHECK(block_log_density(s, x) <= at_mean + 1e-12);
    }
}

TEST_CASE("compute_ratio_field: identical stats give the zero field") {
    const Micrograph m = noise_micrograph(12, 12, 4);
    const BlockPartition p = partition_blocks(12, 12, 4);
    const RegionStats s = exact_identity_stats(Eigen::VectorXd::Zero(16));
    const RatioField f = compute_ratio_field(m, p, s, s);
    CHECK(f.per_block_log_ratio.cwiseAbs().maxCoeff() == 0.0);
    for (double v : f.per_pixel_field)
        CHECK(v == 0.0);
}

TEST_CASE("compute_ratio_field: closed-form Gaussian mean contrast") {
    // Two unit-variance models with means +1 and -1 on every coordinate.
    // For a constant block at 0 the ratio vanishes; at +1 each coordinate
    // contributes (0 - (-2)) / ... = 2, in per-pixel terms exactly 2.
    const int n = 4;
    const BlockPartition p = partition_blocks(n, n, n);
    const RegionStats s0 = exact_identity_stats(Eigen::VectorXd::Constant(n * n, 1.0));
    const RegionStats s1 = exact_identity_stats(Eigen::VectorXd::Constant(n * n, -1.0));

    Micrograph zero;
    zero.pixels = Image2D<double>(n, n, 0.0);
    const RatioField f_zero = compute_ratio_field(zero, p, s0, s1);
    CHECK(f_zero.per_block_log_ratio[0] == Catch::Approx(0.0).margin(1e-9));

    Micrograph ones;
    ones.pixels = Image2D<double>(n, n, 1.0);
    const RatioField f_one = compute_ratio_field(ones, p, s0, s1);
    CHECK(f_one.per_block_log_ratio[0] == Catch::Approx(2.0 * n * n).epsilon(1e-9));
    CHECK(f_one.per_pixel_field(0, 0) == Catch::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("compute_ratio_field: swapping stats negates the field exactly") {
    const Micrograph m = noise_micrograph(20, 20, 31);
    const BlockPartition p = partition_blocks(20, 20, 5);
    std::vector<std::uint8_t> labels(p.num_blocks);
    for (int i = 0; i < p.num_blocks; ++i) labels[i] = i % 2;
    const RegionStats s0 = estimate_region_stats(m, p, labels, 0, 0.5);
    const RegionStats s1 = estimate_region_stats(m, p, labels, 1, 0.5);

    const RatioField f = compute_ratio_field(m, p, s0, s1);
    const RatioField g = compute_ratio_field(m, p, s1, s0);
    for (int i = 0; i < p.num_blocks; ++i)
        CHECK(f.per_block_log_ratio[i] == -g.per_block_log_ratio[i]);
}

TEST_CASE("compute_ratio_field: margin pixels are zero and blocks are constant") {
    const Micrograph m = noise_micrograph(23, 23, 8);
    const BlockPartition p = partition_blocks(23, 23, 10);
    std::vector<std::uint8_t> labels = {0, 1, 1, 0};
    const RegionStats s0 = estimate_region_stats(m, p, labels, 0, 0.5);
    const RegionStats s1 = estimate_region_stats(m, p, labels, 1, 0.5);
    const RatioField f = compute_ratio_field(m, p, s0, s1);

    for (int r = 0; r < 23; ++r)
        for (int c = 0; c < 23; ++c) {
            const auto id = p.block_index_map(r, c);
            if (id == BlockPartition::kSentinel)
                CHECK(f.per_pixel_field(r, c) == 0.0);
            else
                CHECK(f.per_pixel_field(r, c) ==
                      f.per_block_log_ratio[id] / p.pixels_per_block());
        }
}

TEST_CASE("ratio field sign pattern is invariant to affine intensity changes") {
    // Scaling and shifting the micrograph and re-estimating both regions
    // shifts both log densities by the same Jacobian term, so the sign of
    // the per-block ratio is preserved.
    const Micrograph m = noise_micrograph(40, 40, 314);
    const BlockPartition p = partition_blocks(40, 40, 5);
    std::vector<std::uint8_t> labels(p.num_blocks);
    for (int i = 0; i < p.num_blocks; ++i) labels[i] = (i % 3 == 0) ? 0 : 1;

    Micrograph t = m;
    for (double& v : t.pixels) v = 2.5 * v + 3.0;

    const RatioField f = compute_ratio_field(m, p, estimate_region_stats(m, p, labels, 0, 0.5),
                                             estimate_region_stats(m, p, labels, 1, 0.5));
    const RatioField g = compute_ratio_field(t, p, estimate_region_stats(t, p, labels, 0, 0.5),
                                             estimate_region_stats(t, p, labels, 1, 0.5));
    for (int i = 0; i < p.num_blocks; ++i) {
        if (std::abs(f.per_block_log_ratio[i]) > 1e-6)
            CHECK((f.per_block_log_ratio[i] > 0) == (g.per_block_log_ratio[i] > 0));
    }
}
