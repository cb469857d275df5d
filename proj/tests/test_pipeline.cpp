#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "asocem/pipeline.hpp"
#include "asocem/synthetic.hpp"
#include "test_helpers.hpp"

using namespace asocem;

namespace {

// Small, fast configuration for unit-level pipeline runs.
PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.particle_size_px = 6;
    cfg.working_size = 128;
    cfg.block_edge = 8;
    return cfg;
}

SyntheticSpec small_disk_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.height = spec.width = 128;
    spec.geometry.kind = SyntheticGeometry::Kind::Disk;
    spec.geometry.disks = {{0.5, 0.5, 0.22}};
    spec.region0.sd = 2.5;
    spec.region1.sd = 1.0;
    spec.seed = seed;
    return spec;
}

double iou(const SegmentationMask& a, const SegmentationMask& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const bool pa = a.pixels.data()[i], pb = b.pixels.data()[i];
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST_CASE("select_contamination_side: smaller side wins, tie goes positive") {
    LevelSet phi(10, 10, -1.0);
    for (int c = 0; c < 10; ++c) phi(0, c) = 1.0;   // 10% positive
    CHECK(select_contamination_side(phi) == ContaminationSide::PhiPositive);

    for (double& v : phi) v = 1.0;
    for (int c = 0; c < 10; ++c) phi(0, c) = -1.0;   // 90% positive
    CHECK(select_contamination_side(phi) == ContaminationSide::PhiNegative);

    LevelSet half(10, 10, 1.0);
    for (int r = 5; r < 10; ++r)
        for (int c = 0; c < 10; ++c)
            half(r, c) = -1.0;
    int warned = 0;
    auto old = warn_handler();
    warn_handler() = [&](const std::string&) { ++warned; };
    CHECK(select_contamination_side(half) == ContaminationSide::PhiPositive);
    warn_handler() = old;
    CHECK(warned == 1);
}

TEST_CASE("mask_from_side: strict sign sides") {
    LevelSet phi(2, 2, 0.0);
    phi(0, 0) = 2.0;
    phi(0, 1) = -2.0;
    const SegmentationMask pos = mask_from_side(phi, ContaminationSide::PhiPositive);
    CHECK(pos.pixels(0, 0) == 1);
    CHECK(pos.pixels(0, 1) == 0);
    CHECK(pos.pixels(1, 0) == 0);   // phi == 0 is never contamination
    const SegmentationMask neg = mask_from_side(phi, ContaminationSide::PhiNegative);
    CHECK(neg.pixels(0, 0) == 0);
    CHECK(neg.pixels(0, 1) == 1);
    CHECK(neg.pixels(1, 0) == 0);
}

TEST_CASE("filter_by_particle_size: disk-equivalent area threshold") {
    // Threshold with particle size 10, factor 4: 4 * pi/4 * 100 ~ 314.16.
    SegmentationMask big;
    big.pixels = Image2D<std::uint8_t>(100, 100, 0);
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 25; ++c)
            big.pixels(r, c) = 1;   // 1000 px component
    const SegmentationMask kept = filter_by_particle_size(big, 10.0, 4.0);
    CHECK(kept.pixels == big.pixels);

    SegmentationMask small;
    small.pixels = Image2D<std::uint8_t>(100, 100, 0);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c)
            small.pixels(r, c) = 1;   // 100 px component
    const SegmentationMask erased = filter_by_particle_size(small, 10.0, 4.0);
    for (auto v : erased.pixels)
        CHECK(v == 0);
}

TEST_CASE("filter_by_particle_size: empty input, idempotence, monotonicity") {
    SegmentationMask empty;
    empty.pixels = Image2D<std::uint8_t>(20, 20, 0);
    CHECK(filter_by_particle_size(empty, 5.0, 4.0).pixels == empty.pixels);

    SegmentationMask mixed;
    mixed.pixels = Image2D<std::uint8_t>(60, 60, 0);
    for (int r = 0; r < 20; ++r)
        for (int c = 0; c < 20; ++c)
            mixed.pixels(r, c) = 1;   // 400 px, survives
    mixed.pixels(40, 40) = 1;          // isolated pixel, erased
    mixed.pixels(50, 10) = 1;
    mixed.pixels(50, 11) = 1;

    const SegmentationMask once = filter_by_particle_size(mixed, 5.0, 4.0);
    const SegmentationMask twice = filter_by_particle_size(once, 5.0, 4.0);
    CHECK(once.pixels == twice.pixels);
    for (std::size_t i = 0; i < once.pixels.size(); ++i)
        CHECK(once.pixels.data()[i] <= mixed.pixels.data()[i]);
    CHECK(once.pixels(0, 0) == 1);
    CHECK(once.pixels(40, 40) == 0);
}

TEST_CASE("filter_by_particle_size: 4-connectivity does not bridge diagonals") {
    SegmentationMask m;
    m.pixels = Image2D<std::uint8_t>(30, 30, 0);
    // Two 5x5 squares touching only at a corner: each 25 px, threshold ~28.3
    // with particle size 3 / factor 4; both are erased as separate pieces.
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            m.pixels(r, c) = 1;
            m.pixels(r + 5, c + 5) = 1;
        }
    const SegmentationMask f = filter_by_particle_size(m, 3.0, 4.0);
    for (auto v : f.pixels)
        CHECK(v == 0);
}

TEST_CASE("segment_micrograph: variance-contrast disk is recovered at small scale") {
    auto [m, gt] = generate(small_disk_spec(21));
    const SegmentationResult result = segment_micrograph(m, small_config());
    CHECK(result.status != SegmentationStatus::NoContamination);
    CHECK(iou(result.mask, gt) > 0.6);
}

TEST_CASE("segment_micrograph: deterministic and affine invariant") {
    auto [m, gt] = generate(small_disk_spec(22));
    const PipelineConfig cfg = small_config();

    const SegmentationResult a = segment_micrograph(m, cfg);
    const SegmentationResult b = segment_micrograph(m, cfg);
    CHECK(a.mask.pixels == b.mask.pixels);
    CHECK(a.outer_iters == b.outer_iters);

    Micrograph t = m;
    for (double& v : t.pixels) v = 3.0 * v + 7.0;
    const SegmentationResult c = segment_micrograph(t, cfg);
    CHECK(a.mask.pixels == c.mask.pixels);
}

TEST_CASE("segment_micrograph: constant image takes the no-contamination path") {
    Micrograph m;
    m.pixels = Image2D<double>(128, 128, 4.0);
    const SegmentationResult result = segment_micrograph(m, small_config());
    CHECK(result.status == SegmentationStatus::NoContamination);
    CHECK(result.contamination_fraction == 0.0);
    for (auto v : result.mask.pixels)
        CHECK(v == 0);
}

TEST_CASE("segment_micrograph: downsampling path keeps crop geometry") {
    auto [m, gt] = generate(small_disk_spec(23));
    PipelineConfig cfg = small_config();
    cfg.working_size = 64;
    cfg.block_edge = 8;
    const SegmentationResult result = segment_micrograph(m, cfg);
    CHECK(result.mask.height() == 64);
    CHECK(result.scale == Catch::Approx(0.5));
    CHECK(result.crop_edge == 128);

    const SegmentationMask full = mask_to_input_resolution(result);
    CHECK(full.height() == 128);
    CHECK(full.width() == 128);
}

TEST_CASE("mask_to_input_resolution: embeds at the crop offset") {
    SegmentationResult r;
    r.mask.pixels = Image2D<std::uint8_t>(2, 2, 1);
    r.input_height = 8;
    r.input_width = 6;
    r.crop_row0 = 1;
    r.crop_col0 = 0;
    r.crop_edge = 6;
    r.scale = 2.0 / 6.0;
    const SegmentationMask full = mask_to_input_resolution(r);
    REQUIRE(full.height() == 8);
    REQUIRE(full.width() == 6);
    for (int r2 = 0; r2 < 8; ++r2)
        for (int c = 0; c < 6; ++c) {
            const bool in_crop = r2 >= 1 && r2 < 7;
            CHECK(static_cast<bool>(full.pixels(r2, c)) == in_crop);
        }
}

TEST_CASE("PipelineConfig validation") {
    PipelineConfig cfg = small_config();
    cfg.particle_size_px = 0;
    CHECK_THROWS(cfg.validate());
    cfg = small_config();
    cfg.working_size = cfg.block_edge;
    CHECK_THROWS(cfg.validate());
    cfg = small_config();
    cfg.solver.dt = 0.0;
    CHECK_THROWS(cfg.validate());
}
