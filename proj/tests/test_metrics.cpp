#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <fstream>

#include "asocem/metrics.hpp"
#include "test_helpers.hpp"

using namespace asocem;
using testutil::TempDir;

namespace {

SegmentationMask mask_of(int h, int w, const std::vector<int>& vals) {
    SegmentationMask m;
    m.pixels = Image2D<std::uint8_t>(h, w);
    for (std::size_t i = 0; i < vals.size(); ++i)
        m.pixels.data()[i] = static_cast<std::uint8_t>(vals[i]);
    return m;
}

SegmentationMask complement(const SegmentationMask& m) {
    SegmentationMask out = m;
    for (auto& v : out.pixels)
        v = v ? 0 : 1;
    return out;
}

SegmentationMask transpose(const SegmentationMask& m) {
    SegmentationMask out;
    out.pixels = Image2D<std::uint8_t>(m.width(), m.height());
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            out.pixels(c, r) = m.pixels(r, c);
    return out;
}

}  // namespace

TEST_CASE("compute_metrics: perfect agreement") {
    const SegmentationMask gt = mask_of(2, 2, {1, 0, 0, 1});
    const PairMetrics m = compute_metrics(gt, gt);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.specificity == 1.0);
    CHECK(m.sensitivity_defined);
    CHECK(m.specificity_defined);
}

TEST_CASE("compute_metrics: definitional counts") {
    // gt has 100 contamination pixels; pred marks 50 of them and nothing else.
    std::vector<int> gt_vals(200, 0), pred_vals(200, 0);
    for (int i = 0; i < 100; ++i) gt_vals[i] = 1;
    for (int i = 0; i < 50; ++i) pred_vals[i] = 1;
    const PairMetrics m = compute_metrics(mask_of(10, 20, pred_vals), mask_of(10, 20, gt_vals));
    CHECK(m.sensitivity == 0.5);
    CHECK(m.specificity == 1.0);
}

TEST_CASE("compute_metrics: all-ones prediction on a half-and-half truth") {
    std::vector<int> gt_vals(16, 0);
    for (int i = 0; i < 8; ++i) gt_vals[i] = 1;
    const PairMetrics m = compute_metrics(mask_of(4, 4, std::vector<int>(16, 1)),
                                          mask_of(4, 4, gt_vals));
    CHECK(m.sensitivity == 1.0);
    CHECK(m.specificity == 0.0);
}

TEST_CASE("compute_metrics: undefined metrics are flagged") {
    const SegmentationMask empty = mask_of(2, 2, {0, 0, 0, 0});
    const SegmentationMask full = mask_of(2, 2, {1, 1, 1, 1});
    const PairMetrics a = compute_metrics(empty, empty);
    CHECK_FALSE(a.sensitivity_defined);
    CHECK(a.sensitivity == 1.0);
    const PairMetrics b = compute_metrics(full, full);
    CHECK_FALSE(b.specificity_defined);
    CHECK(b.specificity == 1.0);
}

TEST_CASE("compute_metrics: dimension mismatch errors") {
    CHECK_THROWS(compute_metrics(mask_of(2, 2, {0, 0, 0, 0}), mask_of(2, 3, {0, 0, 0, 0, 0, 0})));
}

TEST_CASE("compute_metrics: complement duality and transpose invariance") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<int> gv(63), pv(63);
        for (auto& v : gv) v = rng() & 1;
        for (auto& v : pv) v = rng() & 1;
        const SegmentationMask gt = mask_of(7, 9, gv);
        const SegmentationMask pred = mask_of(7, 9, pv);

        const PairMetrics m = compute_metrics(pred, gt);
        const PairMetrics dual = compute_metrics(complement(pred), complement(gt));
        CHECK(m.sensitivity == dual.specificity);
        CHECK(m.specificity == dual.sensitivity);

        const PairMetrics t = compute_metrics(transpose(pred), transpose(gt));
        CHECK(m.sensitivity == t.sensitivity);
        CHECK(m.specificity == t.specificity);
    }
}

TEST_CASE("batch_evaluate: aggregates by filename stem") {
    TempDir pred("pred"), gt("gt");
    const SegmentationMask g1 = mask_of(2, 2, {1, 1, 0, 0});

    write_mask(g1, gt.str("a.png"), MaskFormat::Png);
    write_mask(g1, pred.str("a.png"), MaskFormat::Png);   // (1.0, 1.0)

    write_mask(g1, gt.str("b.png"), MaskFormat::Png);
    write_mask(mask_of(2, 2, {1, 0, 0, 0}), pred.str("b.png"), MaskFormat::Png);  // (0.5, 1.0)

    const MetricsReport r = batch_evaluate(pred.path().string(), gt.path().string());
    REQUIRE(r.per_micrograph.size() == 2);
    CHECK(r.ok());
    CHECK(r.mean_sensitivity() == 0.75);
    CHECK(r.mean_specificity() == 1.0);
}

TEST_CASE("batch_evaluate: mixed formats pair by stem") {
    TempDir pred("predf"), gt("gtf");
    const SegmentationMask g = mask_of(2, 2, {1, 0, 1, 0});
    write_mask(g, gt.str("x.mrc"), MaskFormat::Mrc);
    write_mask(g, pred.str("x.png"), MaskFormat::Png);
    const MetricsReport r = batch_evaluate(pred.path().string(), gt.path().string());
    REQUIRE(r.per_micrograph.size() == 1);
    CHECK(r.per_micrograph[0].metrics.sensitivity == 1.0);
}

TEST_CASE("batch_evaluate: unpaired and mismatched files are listed and skipped") {
    TempDir pred("predu"), gt("gtu");
    const SegmentationMask g2 = mask_of(2, 2, {1, 0, 0, 0});
    const SegmentationMask g3 = mask_of(3, 3, {1, 0, 0, 0, 0, 0, 0, 0, 0});

    write_mask(g2, pred.str("orphan.png"), MaskFormat::Png);      // no gt partner
    write_mask(g2, pred.str("wrongsize.png"), MaskFormat::Png);   // 2x2 vs 3x3
    write_mask(g3, gt.str("wrongsize.png"), MaskFormat::Png);
    write_mask(g2, pred.str("good.png"), MaskFormat::Png);
    write_mask(g2, gt.str("good.png"), MaskFormat::Png);

    const MetricsReport r = batch_evaluate(pred.path().string(), gt.path().string());
    CHECK(r.per_micrograph.size() == 1);
    CHECK(r.problems.size() == 2);
    CHECK_FALSE(r.ok());
}

TEST_CASE("batch_evaluate: empty directories produce an error report") {
    TempDir pred("empty_p"), gt("empty_g");
    const MetricsReport r = batch_evaluate(pred.path().string(), gt.path().string());
    CHECK(r.per_micrograph.empty());
    CHECK_FALSE(r.ok());
}

TEST_CASE("report means: flagged entries excluded unless requested") {
    MetricsReport r;
    PairMetrics defined;
    defined.sensitivity = 0.5;
    defined.specificity = 0.8;
    PairMetrics flagged;
    flagged.sensitivity = 1.0;
    flagged.sensitivity_defined = false;
    flagged.specificity = 0.6;
    r.per_micrograph = {{"a", defined}, {"b", flagged}};

    CHECK(r.mean_sensitivity() == 0.5);
    CHECK(r.mean_specificity() == 0.7);
    r.include_flagged = true;
    CHECK(r.mean_sensitivity() == 0.75);
}

TEST_CASE("report writers emit parsable CSV and JSON") {
    TempDir tmp("report");
    MetricsReport r;
    PairMetrics m;
    m.sensitivity = 0.25;
    m.specificity = 1.0;
    r.per_micrograph = {{"mic1", m}};

    write_report_csv(r, tmp.str("r.csv"));
    std::ifstream csv(tmp.str("r.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "name,sensitivity,specificity,sensitivity_defined,specificity_defined");

    write_report_json(r, tmp.str("r.json"));
    std::ifstream jf(tmp.str("r.json"));
    nlohmann::json j;
    jf >> j;
    CHECK(j["per_micrograph"].size() == 1);
    CHECK(j["mean_sensitivity"].get<double>() == 0.25);
}
