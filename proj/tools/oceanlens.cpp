// Command-line front end: enhance, synth, metrics and ablate.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "oceanlens/batch.hpp"
#include "oceanlens/error.hpp"
#include "oceanlens/io.hpp"
#include "oceanlens/metrics.hpp"
#include "oceanlens/pipeline.hpp"

namespace ol = oceanlens;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;

nlohmann::json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw ol::IoError("cannot read " + path.string());
    }
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ol::InvalidArgument(path.string() + ": " + e.what());
    }
}

// Flags shared by every subcommand that resolves a PipelineConfig.
struct CommonFlags {
    std::string config;
    bool depth_invert = false;
    bool preprocess = false;
    bool warm_start = false;
    int jobs = 0;
};

ol::PipelineConfig resolve_config(const CommonFlags& f) {
    ol::PipelineConfig cfg = f.config.empty() ? ol::PipelineConfig{} : ol::load_config(f.config);
    if (f.depth_invert) {
        cfg.depth.invert = true;
    }
    if (f.preprocess) {
        cfg.preprocess.enabled = true;
    }
    if (f.warm_start) {
        cfg.warm_start = true;
    }
    if (f.jobs > 0) {
        cfg.jobs = f.jobs;
    }
    cfg.validate();
    return cfg;
}

void print_failures(const ol::BatchSummary& s) {
    for (const auto& item : s.items) {
        if (!item.ok) {
            std::fprintf(stderr, "FAILED %s: %s\n", item.stem.c_str(), item.error.c_str());
        }
    }
    std::fprintf(stderr, "%zu item(s), %zu failed\n", s.items.size(), s.failures());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Physics-guided underwater image enhancement"};
    app.set_version_flag("--version", std::string(ol::kToolVersion));
    app.require_subcommand(1);

    CommonFlags common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Pipeline config JSON")->check(CLI::ExistingFile);
        sub->add_flag("--depth-invert", common.depth_invert, "Depth files store disparity (near = large)");
        sub->add_flag("--preprocess", common.preprocess, "Enable gray-world white balance and gamma");
    };

    // enhance
    auto* enhance = app.add_subcommand("enhance", "Enhance a directory of image/depth pairs");
    std::string in_dir, depth_dir, out_dir, manifest;
    enhance->add_option("--input-dir", in_dir, "Directory of observed images")->required();
    enhance->add_option("--depth-dir", depth_dir, "Directory of depth maps (matched by stem)")->required();
    enhance->add_option("--out", out_dir, "Output directory")->required();
    enhance->add_option("--manifest", manifest, "Explicit image/depth pairing JSON")->check(CLI::ExistingFile);
    enhance->add_flag("--warm-start", common.warm_start, "Initialize each fit from the previous image");
    enhance->add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
    add_common(enhance);

    // synth
    auto* synth = app.add_subcommand("synth", "Degrade clean images with sampled water parameters");
    std::string clean_dir, sampler_path;
    std::uint64_t seed = 0;
    int synth_bits = 16;
    synth->add_option("--clean-dir", clean_dir, "Directory of clean images")->required();
    synth->add_option("--depth-dir", depth_dir, "Directory of depth maps (matched by stem)")->required();
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--seed", seed, "Sampler seed")->required();
    synth->add_option("--sampler", sampler_path, "Sampler range override JSON")->check(CLI::ExistingFile);
    synth->add_option("--bits", synth_bits, "Output bit depth")->check(CLI::IsMember({8, 16}));
    synth->add_option("--config", common.config, "Pipeline config JSON (depth options)")->check(CLI::ExistingFile);
    synth->add_flag("--depth-invert", common.depth_invert, "Depth files store disparity (near = large)");

    // metrics
    auto* metrics = app.add_subcommand("metrics", "Compute GPMAE/UIQM/PSNR/SSIM tables");
    std::string test_dir, ref_dir, patches_dir;
    metrics->add_option("--test-dir", test_dir, "Directory of images to score")->required();
    metrics->add_option("--reference-dir", ref_dir, "Reference images matched by stem");
    metrics->add_option("--patches-dir", patches_dir, "Gray-patch sidecars <stem>.json");
    metrics->add_option("--out", out_dir, "Output directory")->required();
    metrics->add_option("--config", common.config, "Pipeline config JSON (uiqm section)")->check(CLI::ExistingFile);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Sweep layers, Huber delta and edge losses on one pair");
    std::string image_path, depth_path, reference_path, sweep_path;
    ablate->add_option("--image", image_path, "Observed image")->required()->check(CLI::ExistingFile);
    ablate->add_option("--depth", depth_path, "Depth map")->required()->check(CLI::ExistingFile);
    ablate->add_option("--reference", reference_path, "Clean reference for PSNR and edge MAE")
        ->check(CLI::ExistingFile);
    ablate->add_option("--sweep", sweep_path, "Sweep grid JSON")->check(CLI::ExistingFile);
    ablate->add_option("--out", out_dir, "Output directory")->required();
    add_common(ablate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    // Configuration problems map to exit 2 before any work starts; failures
    // inside a batch map to exit 1.
    ol::PipelineConfig cfg;
    try {
        cfg = resolve_config(common);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    }

    try {
        if (*enhance) {
            const fs::path manifest_path(manifest);
            const auto s = ol::run_enhance(in_dir, depth_dir, cfg, out_dir, manifest.empty() ? nullptr : &manifest_path);
            print_failures(s);
            return s.exit_code();
        }
        if (*synth) {
            ol::SynthOptions opts;
            opts.seed = seed;
            opts.depth = cfg.depth;
            opts.bits = synth_bits;
            if (!sampler_path.empty()) {
                try {
                    opts.ranges = ol::sampler_from_json(read_json(sampler_path));
                } catch (const std::exception& e) {
                    std::fprintf(stderr, "config error: %s\n", e.what());
                    return kExitUsage;
                }
            }
            const auto s = ol::run_synth(clean_dir, depth_dir, opts, out_dir);
            print_failures(s);
            return s.exit_code();
        }
        if (*metrics) {
            ol::MetricsOptions opts;
            opts.uiqm = cfg.uiqm;
            if (!ref_dir.empty()) {
                opts.reference_dir = ref_dir;
            }
            if (!patches_dir.empty()) {
                opts.patches_dir = patches_dir;
            }
            const auto s = ol::run_metrics(test_dir, opts, out_dir);
            print_failures(s);
            return s.exit_code();
        }
        if (*ablate) {
            ol::SweepSpec sweep;
            try {
                sweep = ol::SweepSpec::from_json(sweep_path.empty() ? nlohmann::json::object() : read_json(sweep_path),
                                                 cfg);
            } catch (const std::exception& e) {
                std::fprintf(stderr, "config error: %s\n", e.what());
                return kExitUsage;
            }
            const ol::ImageRGB observed = ol::load_image(image_path);
            const ol::DepthMap depth = ol::load_depth(depth_path, cfg.depth);
            std::optional<ol::ImageRGB> reference;
            if (!reference_path.empty()) {
                reference = ol::load_image(reference_path);
            }
            const auto rows = ol::run_ablation(observed, depth, sweep, cfg, reference ? &*reference : nullptr);
            fs::create_directories(out_dir);
            ol::write_text(fs::path(out_dir) / "sweep.csv", ol::sweep_to_csv(rows));
            nlohmann::json extra = {{"image", fs::path(image_path).filename().string()},
                                    {"depth", fs::path(depth_path).filename().string()},
                                    {"sweep", {{"layers", sweep.layers}, {"delta", sweep.delta},
                                               {"edge_loss", sweep.edge_loss}}}};
            ol::write_text(fs::path(out_dir) / "provenance.json", ol::provenance("ablate", cfg, extra).dump(2) + "\n");
            std::printf("%zu sweep rows written to %s\n", rows.size(), (fs::path(out_dir) / "sweep.csv").c_str());
            return 0;
        }
    } catch (const ol::InvalidArgument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitUsage;
}
