#pragma once

// Pixel-level sensitivity/specificity against ground-truth masks, plus the
// directory-pairing batch evaluator with CSV/JSON reports.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asocem/image.hpp"
#include "asocem/micrograph.hpp"

namespace asocem {

struct PairMetrics {
    double sensitivity = 0.0;   // detected contamination / true contamination
    double specificity = 0.0;   // detected clean / true clean
    bool sensitivity_defined = true;   // false when gt has no contamination
    bool specificity_defined = true;   // false when gt is all contamination
};

inline PairMetrics compute_metrics(const SegmentationMask& pred, const SegmentationMask& gt) {
    if (!pred.pixels.same_shape(gt.pixels))
        throw std::invalid_argument("compute_metrics: dimension mismatch");
    std::size_t tp = 0, tn = 0, gt_pos = 0, gt_neg = 0;
    for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
        const bool g = gt.pixels.data()[i] != 0;
        const bool p = pred.pixels.data()[i] != 0;
        if (g) {
            ++gt_pos;
            if (p) ++tp;
        } else {
            ++gt_neg;
            if (!p) ++tn;
        }
    }
    PairMetrics m;
    if (gt_pos == 0) {
        m.sensitivity = 1.0;   // reported as 1.0 but flagged undefined
        m.sensitivity_defined = false;
    } else {
        m.sensitivity = static_cast<double>(tp) / static_cast<double>(gt_pos);
    }
    if (gt_neg == 0) {
        m.specificity = 1.0;
        m.specificity_defined = false;
    } else {
        m.specificity = static_cast<double>(tn) / static_cast<double>(gt_neg);
    }
    return m;
}

struct MetricsEntry {
    std::string name;
    PairMetrics metrics;
};

struct MetricsReport {
    std::vector<MetricsEntry> per_micrograph;
    std::vector<std::string> problems;   // unpaired or unreadable/mismatched pairs
    bool include_flagged = false;        // count undefined-as-1.0 entries in the means

    double mean_sensitivity() const {
        double acc = 0.0;
        int n = 0;
        for (const auto& e : per_micrograph)
            if (e.metrics.sensitivity_defined || include_flagged) {
                acc += e.metrics.sensitivity;
                ++n;
            }
        return n ? acc / n : 0.0;
    }
    double mean_specificity() const {
        double acc = 0.0;
        int n = 0;
        for (const auto& e : per_micrograph)
            if (e.metrics.specificity_defined || include_flagged) {
                acc += e.metrics.specificity;
                ++n;
            }
        return n ? acc / n : 0.0;
    }
    bool ok() const { return problems.empty() && !per_micrograph.empty(); }
};

namespace detail {

inline bool mask_readable_ext(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".mrc" || ext == ".tif" || ext == ".tiff";
}

}  // namespace detail

// Any readable image becomes a mask: nonzero pixels count as contamination.
inline SegmentationMask read_mask_any(const std::string& path) {
    const Micrograph m = read_micrograph(path);
    SegmentationMask mask;
    mask.pixels = Image2D<std::uint8_t>(m.height(), m.width());
    for (std::size_t i = 0; i < m.pixels.size(); ++i)
        mask.pixels.data()[i] = m.pixels.data()[i] != 0.0 ? 1 : 0;
    return mask;
}

// Pairs predictions with ground truth by filename stem. Unpaired or
// incompatible files are listed in `problems` and skipped.
inline MetricsReport batch_evaluate(const std::string& pred_dir, const std::string& gt_dir,
                                    bool include_flagged = false) {
    namespace fs = std::filesystem;
    MetricsReport report;
    report.include_flagged = include_flagged;

    if (!fs::is_directory(pred_dir)) {
        report.problems.push_back("prediction directory missing: " + pred_dir);
        return report;
    }
    if (!fs::is_directory(gt_dir)) {
        report.problems.push_back("ground-truth directory missing: " + gt_dir);
        return report;
    }

    std::map<std::string, fs::path> gt_by_stem;
    for (const auto& e : fs::directory_iterator(gt_dir))
        if (e.is_regular_file() && detail::mask_readable_ext(e.path()))
            gt_by_stem[e.path().stem().string()] = e.path();

    std::vector<fs::path> preds;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.is_regular_file() && detail::mask_readable_ext(e.path()))
            preds.push_back(e.path());
    std::sort(preds.begin(), preds.end());

    for (const auto& p : preds) {
        const std::string stem = p.stem().string();
        const auto it = gt_by_stem.find(stem);
        if (it == gt_by_stem.end()) {
            report.problems.push_back("no ground truth for " + p.string());
            continue;
        }
        try {
            const SegmentationMask pred = read_mask_any(p.string());
            const SegmentationMask gt = read_mask_any(it->second.string());
            if (!pred.pixels.same_shape(gt.pixels)) {
                report.problems.push_back("dimension mismatch for " + stem + " (" +
                                          std::to_string(pred.height()) + "x" +
                                          std::to_string(pred.width()) + " vs " +
                                          std::to_string(gt.height()) + "x" +
                                          std::to_string(gt.width()) + ")");
                continue;
            }
            report.per_micrograph.push_back({stem, compute_metrics(pred, gt)});
        } catch (const std::exception& ex) {
            report.problems.push_back(stem + ": " + ex.what());
        }
    }
    if (report.per_micrograph.empty() && report.problems.empty())
        report.problems.push_back("no prediction files found in " + pred_dir);
    return report;
}

inline void write_report_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out << "name,sensitivity,specificity,sensitivity_defined,specificity_defined\n";
    for (const auto& e : report.per_micrograph)
        out << e.name << ',' << e.metrics.sensitivity << ',' << e.metrics.specificity << ','
            << (e.metrics.sensitivity_defined ? 1 : 0) << ','
            << (e.metrics.specificity_defined ? 1 : 0) << '\n';
    out << "mean," << report.mean_sensitivity() << ',' << report.mean_specificity() << ",,\n";
}

inline void write_report_json(const MetricsReport& report, const std::string& path) {
    nlohmann::json j;
    j["per_micrograph"] = nlohmann::json::array();
    for (const auto& e : report.per_micrograph)
        j["per_micrograph"].push_back({{"name", e.name},
                                       {"sensitivity", e.metrics.sensitivity},
                                       {"specificity", e.metrics.specificity},
                                       {"sensitivity_defined", e.metrics.sensitivity_defined},
                                       {"specificity_defined", e.metrics.specificity_defined}});
    j["mean_sensitivity"] = report.mean_sensitivity();
    j["mean_specificity"] = report.mean_specificity();
    j["problems"] = report.problems;
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace asocem
