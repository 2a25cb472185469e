#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oceanlens/physics.hpp"
#include "oceanlens/pipeline.hpp"

namespace oceanlens {

namespace fs = std::filesystem;

struct ItemOutcome {
    std::string stem;
    bool ok = false;
    std::string error;
};

struct BatchSummary {
    std::vector<ItemOutcome> items;

    std::size_t failures() const;
    // 0 when every item succeeded, 1 otherwise.
    int exit_code() const;
};

struct ImagePair {
    std::string stem;
    fs::path image;
    fs::path depth;
};

bool is_image_file(const fs::path& p);
bool is_depth_file(const fs::path& p);

// Pairs images with depth files by stem, or by an explicit manifest
// ({"pairs": [{"image": ..., "depth": ...}]}, paths relative to the two
// directories). Images without a depth partner are reported as failures.
std::vector<ImagePair> pair_inputs(const fs::path& image_dir, const fs::path& depth_dir,
                                   std::vector<ItemOutcome>& unmatched, const fs::path* manifest = nullptr);

nlohmann::json provenance(const std::string& command, const PipelineConfig& cfg,
                          const nlohmann::json& extra = nlohmann::json::object());

// Enhances every pair. Per stem writes <stem>.png, <stem>.backscatter.png,
// <stem>.checkpoint.json, <stem>.trace.jsonl and <stem>.report.json; then
// report.json, report.csv and provenance.json for the batch.
BatchSummary run_enhance(const fs::path& input_dir, const fs::path& depth_dir, const PipelineConfig& cfg,
                         const fs::path& out_dir, const fs::path* manifest = nullptr);

struct SynthOptions {
    std::uint64_t seed = 0;
    SamplerRanges ranges;
    DepthOptions depth;
    int bits = 16;
};

// Degrades every clean image with parameters drawn in sorted-stem order from
// one seeded generator. Writes <stem>.png and the ground-truth sidecar
// <stem>.json.
BatchSummary run_synth(const fs::path& clean_dir, const fs::path& depth_dir, const SynthOptions& opts,
                       const fs::path& out_dir);

struct MetricsOptions {
    std::optional<fs::path> reference_dir;
    std::optional<fs::path> patches_dir;
    UIQMConfig uiqm;
};

// Writes metrics.json and metrics.csv. Reference images and patch sidecars are
// matched by stem; absent inputs leave their columns empty.
BatchSummary run_metrics(const fs::path& test_dir, const MetricsOptions& opts, const fs::path& out_dir,
                         std::vector<MetricReport>* reports = nullptr);

struct SweepSpec {
    std::vector<int> layers{1};
    std::vector<double> delta{0.5};
    std::vector<bool> edge_loss{true};

    static SweepSpec from_json(const nlohmann::json& j, const PipelineConfig& base);
};

struct SweepRow {
    int layers = 1;
    double delta = 0.5;
    bool edge_loss = true;
    UiqmResult uiqm;
    double final_loss = 0.0;
    std::optional<double> psnr_db;
    std::optional<double> edge_mae;
};

// Runs enhance at every grid point (layers sets both the backscatter layer
// count and the deattenuation term count). Optional clean reference adds PSNR
// and Sobel edge-map MAE columns.
std::vector<SweepRow> run_ablation(const ImageRGB& observed, const DepthMap& depth, const SweepSpec& sweep,
                                   const PipelineConfig& base, const ImageRGB* reference = nullptr);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

void write_text(const fs::path& path, const std::string& text);

} // namespace oceanlens
