// asocem command line: contamination segmentation for cryo-EM micrographs.
//
//   asocem segment --input <file|dir> --output <dir> --particle-size <px> [...]
//   asocem synth   --spec <json> --out-mrc <path> --out-gt <path>
//   asocem eval    --pred <dir> --gt <dir> --report <csv|json path>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "asocem/asocem.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex g_log_mutex;

void log_line(const std::string& line) {
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::cout << line << std::endl;
}

bool micrograph_ext(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".mrc" || ext == ".mrcs" || ext == ".rec" || ext == ".map" || ext == ".png" ||
           ext == ".tif" || ext == ".tiff";
}

json params_json(const asocem::PipelineConfig& cfg) {
    return json{{"particle_size_px", cfg.particle_size_px},
                {"working_size", cfg.working_size},
                {"block_edge", cfg.block_edge},
                {"area_factor", cfg.area_factor},
                {"alpha", cfg.solver.alpha},
                {"beta", cfg.solver.beta},
                {"a", cfg.solver.a},
                {"dt", cfg.solver.dt},
                {"inner_steps", cfg.solver.inner_steps},
                {"sign_change_tol", cfg.solver.sign_change_tol},
                {"max_outer_iters", cfg.solver.max_outer_iters}};
}

struct SegmentOptions {
    std::string input;
    std::string output;
    asocem::PipelineConfig cfg;
    int threads = 0;
    bool png_overlay = false;
    std::string mask_format = "mrc";
};

int run_segment_one(const fs::path& in_path, const SegmentOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const asocem::Micrograph m = asocem::read_micrograph(in_path.string());
    const asocem::SegmentationResult result = asocem::segment_micrograph(m, opt.cfg);

    const std::string stem = in_path.stem().string();
    const fs::path out_dir(opt.output);

    const asocem::SegmentationMask full = asocem::mask_to_input_resolution(result);
    const fs::path mask_path = out_dir / (stem + "_mask." + opt.mask_format);
    asocem::write_mask(full, mask_path.string(),
                       opt.mask_format == "png" ? asocem::MaskFormat::Png
                                                : asocem::MaskFormat::Mrc);

    if (opt.png_overlay) {
        const asocem::Micrograph work = asocem::prepare_working_micrograph(m, opt.cfg);
        asocem::write_overlay_png(work, result.mask, (out_dir / (stem + "_overlay.png")).string());
    }

    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();

    json sidecar{{"status", asocem::to_string(result.status)},
                 {"outer_iters", result.outer_iters},
                 {"contamination_fraction", result.contamination_fraction},
                 {"seconds", secs},
                 {"input", in_path.string()},
                 {"mask", mask_path.string()},
                 {"params", params_json(opt.cfg)}};
    std::ofstream sidecar_out(out_dir / (stem + ".json"));
    sidecar_out << sidecar.dump(2) << '\n';

    log_line(in_path.filename().string() + ": " + asocem::to_string(result.status) + ", " +
             std::to_string(result.outer_iters) + " outer iters, contamination " +
             std::to_string(result.contamination_fraction));
    return 0;
}

int run_segment(const SegmentOptions& opt) {
    std::vector<fs::path> inputs;
    if (fs::is_directory(opt.input)) {
        for (const auto& e : fs::directory_iterator(opt.input))
            if (e.is_regular_file() && micrograph_ext(e.path()))
                inputs.push_back(e.path());
        std::sort(inputs.begin(), inputs.end());
    } else if (fs::is_regular_file(opt.input)) {
        inputs.push_back(opt.input);
    } else {
        std::cerr << "input not found: " << opt.input << "\n";
        return 1;
    }
    if (inputs.empty()) {
        std::cerr << "no micrographs found in " << opt.input << "\n";
        return 1;
    }
    fs::create_directories(opt.output);

    unsigned nthreads = opt.threads > 0 ? static_cast<unsigned>(opt.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
    nthreads = std::min<unsigned>(nthreads, static_cast<unsigned>(inputs.size()));

    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= inputs.size())
                return;
            try {
                run_segment_one(inputs[i], opt);
            } catch (const std::exception& ex) {
                ++failures;
                log_line(inputs[i].filename().string() + ": ERROR: " + ex.what());
            }
        }
    };
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nthreads; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    return failures.load() == 0 ? 0 : 1;
}

asocem::SyntheticSpec parse_synth_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open spec file: " + path);
    json j;
    in >> j;

    asocem::SyntheticSpec spec;
    spec.height = j.value("height", 800);
    spec.width = j.value("width", 800);
    spec.seed = j.value("seed", std::uint64_t{0});

    const json& g = j.at("geometry");
    const std::string type = g.at("type").get<std::string>();
    if (type == "disk") {
        spec.geometry.kind = asocem::SyntheticGeometry::Kind::Disk;
        spec.geometry.disks = {{g.value("cx", 0.5), g.value("cy", 0.5), g.at("radius").get<double>()}};
    } else if (type == "halfplane") {
        spec.geometry.kind = asocem::SyntheticGeometry::Kind::HalfPlane;
        spec.geometry.fraction = g.at("fraction").get<double>();
    } else if (type == "disks") {
        spec.geometry.kind = asocem::SyntheticGeometry::Kind::DiskUnion;
        for (const auto& d : g.at("disks"))
            spec.geometry.disks.push_back(
                {d.at("cx").get<double>(), d.at("cy").get<double>(), d.at("radius").get<double>()});
    } else {
        throw std::runtime_error("unknown geometry type: " + type);
    }

    auto parse_model = [](const json& r) {
        asocem::RegionModel m;
        m.mean_offset = r.value("mean", 0.0);
        m.sd = r.value("sd", 1.0);
        m.ma_window = r.value("ma_window", 1);
        return m;
    };
    spec.region0 = parse_model(j.at("region0"));
    spec.region1 = parse_model(j.at("region1"));
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contamination segmentation for cryo-EM micrographs"};
    app.require_subcommand(1);

    // --- segment ---
    SegmentOptions seg;
    auto* segment = app.add_subcommand(
        "segment", "Segment contaminations; emits binary masks (1 = contamination)");
    segment->set_config("--config", "", "Config file (same keys as the flags)");
    segment->add_option("--input", seg.input, "Micrograph file or directory")->required();
    segment->add_option("--output", seg.output, "Output directory")->required();
    segment->add_option("--particle-size", seg.cfg.particle_size_px,
                        "Approximate particle size in pixels at acquisition resolution")
        ->required()
        ->check(CLI::PositiveNumber);
    segment->add_option("--alpha", seg.cfg.solver.alpha, "Boundary-length weight");
    segment->add_option("--beta", seg.cfg.solver.beta, "Area weight");
    segment->add_option("--block-edge", seg.cfg.block_edge, "Statistics block edge in pixels");
    segment->add_option("--working-size", seg.cfg.working_size, "Working grid edge in pixels");
    segment->add_option("--area-factor", seg.cfg.area_factor,
                        "Keep components larger than area-factor * disk(particle size)");
    segment->add_option("--max-outer-iters", seg.cfg.solver.max_outer_iters,
                        "Cap on estimation/evolution rounds");
    segment->add_option("--threads", seg.threads, "Worker threads for batch input (0 = auto)");
    segment->add_flag("--png-overlay", seg.png_overlay, "Also write a diagnostic overlay PNG");
    segment->add_option("--mask-format", seg.mask_format, "Mask output format")
        ->check(CLI::IsMember({"mrc", "png"}));

    // --- synth ---
    std::string synth_spec_path, synth_out_mrc, synth_out_gt;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic micrograph with ground truth");
    synth->add_option("--spec", synth_spec_path, "JSON spec file")->required();
    synth->add_option("--out-mrc", synth_out_mrc, "Output micrograph (MRC mode 2)")->required();
    synth->add_option("--out-gt", synth_out_gt, "Output ground-truth mask (.png or .mrc)")
        ->required();

    // --- eval ---
    std::string eval_pred, eval_gt, eval_report;
    bool eval_include_flagged = false;
    auto* eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
    eval->add_option("--pred", eval_pred, "Directory of predicted masks")->required();
    eval->add_option("--gt", eval_gt, "Directory of ground-truth masks (nonzero = contamination)")
        ->required();
    eval->add_option("--report", eval_report, "Report path (.csv or .json)")->required();
    eval->add_flag("--include-flagged", eval_include_flagged,
                   "Include undefined-metric entries (reported as 1.0) in the means");

    CLI11_PARSE(app, argc, argv);

    try {
        if (segment->parsed())
            return run_segment(seg);

        if (synth->parsed()) {
            const asocem::SyntheticSpec spec = parse_synth_spec(synth_spec_path);
            auto [micrograph, gt] = asocem::generate(spec);
            asocem::write_mrc_float(synth_out_mrc, micrograph.pixels);
            const auto ext = fs::path(synth_out_gt).extension().string();
            asocem::write_mask(gt, synth_out_gt,
                               ext == ".png" ? asocem::MaskFormat::Png : asocem::MaskFormat::Mrc);
            std::cout << "wrote " << synth_out_mrc << " and " << synth_out_gt << "\n";
            return 0;
        }

        if (eval->parsed()) {
            const asocem::MetricsReport report =
                asocem::batch_evaluate(eval_pred, eval_gt, eval_include_flagged);
            const auto ext = fs::path(eval_report).extension().string();
            if (ext == ".json")
                asocem::write_report_json(report, eval_report);
            else
                asocem::write_report_csv(report, eval_report);
            for (const auto& p : report.problems)
                std::cerr << "problem: " << p << "\n";
            std::cout << "micrographs: " << report.per_micrograph.size()
                      << ", mean sensitivity: " << report.mean_sensitivity()
                      << ", mean specificity: " << report.mean_specificity() << "\n";
            return report.ok() ? 0 : 1;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
