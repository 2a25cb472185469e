#include "oceanlens/batch.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "oceanlens/error.hpp"
#include "oceanlens/io.hpp"
#include "oceanlens/metrics.hpp"

namespace oceanlens {
namespace {

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

// Regular files in `dir` accepted by `pred`, sorted by filename.
std::vector<fs::path> list_files(const fs::path& dir, bool (*pred)(const fs::path&)) {
    if (!fs::is_directory(dir)) {
        throw IoError("not a directory: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && pred(entry.path())) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::map<std::string, fs::path> index_by_stem(const std::vector<fs::path>& files) {
    std::map<std::string, fs::path> m;
    for (const fs::path& f : files) {
        m.emplace(f.stem().string(), f); // first in sorted order wins
    }
    return m;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions escape only
// from fn's own handling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                fn(i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

std::string trace_jsonl(const EnhanceResult& r) {
    std::string out;
    for (std::size_t k = 0; k < r.backscatter_trace.losses.size(); ++k) {
        out += nlohmann::json{{"phase", "backscatter"}, {"iter", k}, {"loss", r.backscatter_trace.losses[k]}}.dump();
        out += '\n';
    }
    for (std::size_t k = 0; k < r.deatten_trace.losses.size(); ++k) {
        nlohmann::json line = {{"phase", "deattenuation"}, {"iter", k}, {"loss", r.deatten_trace.losses[k]}};
        if (k < r.deatten_history.size()) {
            line["terms"] = breakdown_to_json(r.deatten_history[k]);
        }
        out += line.dump();
        out += '\n';
    }
    return out;
}

nlohmann::json fit_summary(const FitTrace& t) {
    return {{"iterations", t.iterations}, {"final_loss", t.final_loss}, {"stop_reason", to_string(t.stop)}};
}

} // namespace

std::size_t BatchSummary::failures() const {
    return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](const auto& i) { return !i.ok; }));
}

int BatchSummary::exit_code() const {
    return failures() == 0 ? 0 : 1;
}

bool is_image_file(const fs::path& p) {
    const std::string e = lower_ext(p);
    return e == ".png" || e == ".tif" || e == ".tiff";
}

bool is_depth_file(const fs::path& p) {
    const std::string e = lower_ext(p);
    return is_image_file(p) || e == ".txt" || e == ".dat" || e == ".csv";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f << text;
    if (!f) {
        throw IoError("write failed: " + path.string());
    }
}

std::vector<ImagePair> pair_inputs(const fs::path& image_dir, const fs::path& depth_dir,
                                   std::vector<ItemOutcome>& unmatched, const fs::path* manifest) {
    std::vector<ImagePair> pairs;
    if (manifest) {
        std::ifstream f(*manifest);
        if (!f) {
            throw IoError("cannot read manifest " + manifest->string());
        }
        nlohmann::json j;
        try {
            f >> j;
            for (const auto& entry : j.at("pairs")) {
                const fs::path image = image_dir / entry.at("image").get<std::string>();
                const fs::path depth = depth_dir / entry.at("depth").get<std::string>();
                pairs.push_back({image.stem().string(), image, depth});
            }
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument("manifest " + manifest->string() + ": " + e.what());
        }
        std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.stem < b.stem; });
        return pairs;
    }
    const auto depths = index_by_stem(list_files(depth_dir, &is_depth_file));
    for (const fs::path& image : list_files(image_dir, &is_image_file)) {
        const std::string stem = image.stem().string();
        const auto it = depths.find(stem);
        if (it == depths.end()) {
            unmatched.push_back({stem, false, "no depth file with stem '" + stem + "' in " + depth_dir.string()});
            continue;
        }
        pairs.push_back({stem, image, it->second});
    }
    return pairs;
}

nlohmann::json provenance(const std::string& command, const PipelineConfig& cfg, const nlohmann::json& extra) {
    nlohmann::json j = {{"tool", kToolName}, {"version", kToolVersion}, {"command", command},
                        {"config", config_to_json(cfg)}};
    for (const auto& [k, v] : extra.items()) {
        j[k] = v;
    }
    return j;
}

BatchSummary run_enhance(const fs::path& input_dir, const fs::path& depth_dir, const PipelineConfig& cfg,
                         const fs::path& out_dir, const fs::path* manifest) {
    cfg.validate();
    fs::create_directories(out_dir);
    BatchSummary summary;
    const std::vector<ImagePair> pairs = pair_inputs(input_dir, depth_dir, summary.items, manifest);

    std::vector<ItemOutcome> outcomes(pairs.size());
    std::vector<nlohmann::json> item_reports(pairs.size());
    std::vector<std::optional<MetricReport>> enhanced_reports(pairs.size());
    std::optional<WarmStart> previous;

    auto process = [&](std::size_t i) {
        const ImagePair& pair = pairs[i];
        outcomes[i].stem = pair.stem;
        try {
            const ImageRGB observed = load_image(pair.image);
            const DepthMap depth = load_depth(pair.depth, cfg.depth);
            require_aligned(observed, depth, pair.stem.c_str());
            const WarmStart* warm = cfg.warm_start && previous ? &*previous : nullptr;
            const EnhanceResult r = enhance(observed, depth, cfg, warm);
            if (cfg.warm_start) {
                previous = WarmStart{r.backscatter_params, r.deatten_params};
            }

            save_image(r.enhanced, out_dir / (pair.stem + ".png"), cfg.output_bits);
            save_image(r.backscatter, out_dir / (pair.stem + ".backscatter.png"), cfg.output_bits);
            write_json(out_dir / (pair.stem + ".checkpoint.json"),
                       {{"backscatter", backscatter_to_json(r.backscatter_params)},
                        {"deattenuation", deatten_to_json(r.deatten_params)},
                        {"init", {{"backscatter", warm ? "warm_start" : "darkest_1pct_mean"},
                                  {"deattenuation", warm ? "warm_start" : "uniform_0.3_0.5"}}},
                        {"alpha_cap", cfg.deatten.alpha_cap}});
            write_text(out_dir / (pair.stem + ".trace.jsonl"), trace_jsonl(r));

            const MetricReport raw = evaluate_metrics(pair.stem, observed, cfg.uiqm);
            MetricReport enh = evaluate_metrics(pair.stem, r.enhanced, cfg.uiqm);
            nlohmann::json item = {{"name", pair.stem},
                                   {"image", pair.image.filename().string()},
                                   {"depth", pair.depth.filename().string()},
                                   {"raw", report_to_json(raw)},
                                   {"enhanced", report_to_json(enh)},
                                   {"backscatter_fit", fit_summary(r.backscatter_trace)},
                                   {"deattenuation_fit", fit_summary(r.deatten_trace)},
                                   {"final_terms", breakdown_to_json(r.final_breakdown)},
                                   {"clamp_events", r.clamp_events}};
            write_json(out_dir / (pair.stem + ".report.json"), item);
            item_reports[i] = std::move(item);
            enhanced_reports[i] = std::move(enh);
            outcomes[i].ok = true;
        } catch (const std::exception& e) {
            outcomes[i].ok = false;
            outcomes[i].error = e.what();
        }
    };
    // Warm starts chain images in stem order, so they run sequentially.
    parallel_for(pairs.size(), cfg.warm_start ? 1 : cfg.jobs, process);

    summary.items.insert(summary.items.end(), outcomes.begin(), outcomes.end());
    std::sort(summary.items.begin(), summary.items.end(), [](const auto& a, const auto& b) { return a.stem < b.stem; });

    nlohmann::json items = nlohmann::json::array();
    std::vector<MetricReport> table;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (outcomes[i].ok) {
            items.push_back(item_reports[i]);
            table.push_back(*enhanced_reports[i]);
        }
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const ItemOutcome& o : summary.items) {
        if (!o.ok) {
            failures.push_back({{"name", o.stem}, {"error", o.error}});
        }
    }
    const nlohmann::json prov = provenance("enhance", cfg);
    write_json(out_dir / "provenance.json", prov);
    write_json(out_dir / "report.json", {{"provenance", prov}, {"items", items}, {"failures", failures}});
    write_text(out_dir / "report.csv", reports_to_csv(table));
    return summary;
}

BatchSummary run_synth(const fs::path& clean_dir, const fs::path& depth_dir, const SynthOptions& opts,
                       const fs::path& out_dir) {
    fs::create_directories(out_dir);
    BatchSummary summary;
    const std::vector<ImagePair> pairs = pair_inputs(clean_dir, depth_dir, summary.items);
    std::mt19937_64 rng(opts.seed);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const ImagePair& pair = pairs[k];
        // Draw even if the pair later fails so that each stem's parameters do
        // not depend on which other pairs are readable.
        const FormationParams params = sample_formation_params(rng, opts.ranges);
        ItemOutcome outcome{pair.stem, false, {}};
        try {
            const ImageRGB clean = load_image(pair.image);
            const DepthMap depth = load_depth(pair.depth, opts.depth);
            require_aligned(clean, depth, pair.stem.c_str());
            const ClampedImage degraded = degrade(clean, depth, params);
            save_image(degraded.image, out_dir / (pair.stem + ".png"), opts.bits);
            write_json(out_dir / (pair.stem + ".json"),
                       {{"tool", kToolName},
                        {"version", kToolVersion},
                        {"clean", pair.image.filename().string()},
                        {"depth", pair.depth.filename().string()},
                        {"depth_options", {{"invert", opts.depth.invert}, {"clamp_floor", opts.depth.clamp_floor}}},
                        {"seed", opts.seed},
                        {"index", k},
                        {"sampler", sampler_to_json(opts.ranges)},
                        {"params", formation_to_json(params)},
                        {"clamp_events", degraded.clamp_events},
                        {"bits", opts.bits}});
            outcome.ok = true;
        } catch (const std::exception& e) {
            outcome.error = e.what();
        }
        summary.items.push_back(std::move(outcome));
    }
    std::sort(summary.items.begin(), summary.items.end(), [](const auto& a, const auto& b) { return a.stem < b.stem; });
    return summary;
}

BatchSummary run_metrics(const fs::path& test_dir, const MetricsOptions& opts, const fs::path& out_dir,
                         std::vector<MetricReport>* reports_out) {
    opts.uiqm.validate();
    fs::create_directories(out_dir);
    BatchSummary summary;
    std::map<std::string, fs::path> refs;
    if (opts.reference_dir) {
        refs = index_by_stem(list_files(*opts.reference_dir, &is_image_file));
    }
    std::vector<MetricReport> reports;
    for (const fs::path& path : list_files(test_dir, &is_image_file)) {
        const std::string stem = path.stem().string();
        ItemOutcome outcome{stem, false, {}};
        try {
            const ImageRGB img = load_image(path);
            std::optional<ImageRGB> ref;
            if (const auto it = refs.find(stem); it != refs.end()) {
                ref = load_image(it->second);
            }
            std::optional<PatchAnnotation> patches;
            if (opts.patches_dir) {
                const fs::path sidecar = *opts.patches_dir / (stem + ".json");
                if (fs::exists(sidecar)) {
                    patches = load_patches(sidecar);
                }
            }
            reports.push_back(evaluate_metrics(stem, img, opts.uiqm, ref ? &*ref : nullptr,
                                               patches ? &*patches : nullptr));
            outcome.ok = true;
        } catch (const std::exception& e) {
            outcome.error = e.what();
        }
        summary.items.push_back(std::move(outcome));
    }
    nlohmann::json rows = nlohmann::json::array();
    for (const MetricReport& r : reports) {
        rows.push_back(report_to_json(r));
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const ItemOutcome& o : summary.items) {
        if (!o.ok) {
            failures.push_back({{"name", o.stem}, {"error", o.error}});
        }
    }
    write_json(out_dir / "metrics.json", {{"tool", kToolName},
                                          {"version", kToolVersion},
                                          {"uiqm", uiqm_config_to_json(opts.uiqm)},
                                          {"images", rows},
                                          {"failures", failures}});
    write_text(out_dir / "metrics.csv", reports_to_csv(reports));
    if (reports_out) {
        *reports_out = std::move(reports);
    }
    return summary;
}

SweepSpec SweepSpec::from_json(const nlohmann::json& j, const PipelineConfig& base) {
    SweepSpec s;
    s.layers = {base.backscatter_layers};
    s.delta = {base.huber.delta};
    s.edge_loss = {base.deatten.weight(LossTerm::sobel) != 0.0 || base.deatten.weight(LossTerm::log) != 0.0};
    try {
        for (const auto& [key, value] : j.items()) {
            if (key != "layers" && key != "delta" && key != "edge_loss") {
                throw InvalidArgument("unknown sweep key '" + key + "'");
            }
        }
        if (j.contains("layers")) {
            s.layers = j["layers"].get<std::vector<int>>();
        }
        if (j.contains("delta")) {
            s.delta = j["delta"].get<std::vector<double>>();
        }
        if (j.contains("edge_loss")) {
            s.edge_loss = j["edge_loss"].get<std::vector<bool>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("sweep spec: ") + e.what());
    }
    if (s.layers.empty() || s.delta.empty() || s.edge_loss.empty()) {
        throw InvalidArgument("sweep axes must not be empty");
    }
    return s;
}

std::vector<SweepRow> run_ablation(const ImageRGB& observed, const DepthMap& depth, const SweepSpec& sweep,
                                   const PipelineConfig& base, const ImageRGB* reference) {
    std::vector<SweepRow> rows;
    for (int layers : sweep.layers) {
        for (double delta : sweep.delta) {
            for (bool edges : sweep.edge_loss) {
                PipelineConfig cfg = base;
                cfg.backscatter_layers = layers;
                cfg.deatten_terms = layers;
                cfg.huber.delta = delta;
                cfg.deatten.set_edge_losses(edges);
                const EnhanceResult r = enhance(observed, depth, cfg);
                SweepRow row;
                row.layers = layers;
                row.delta = delta;
                row.edge_loss = edges;
                row.uiqm = uiqm(r.enhanced, cfg.uiqm);
                row.final_loss = r.deatten_trace.final_loss;
                if (reference) {
                    row.psnr_db = psnr(r.enhanced, *reference);
                    row.edge_mae = sobel_edge_mae(r.enhanced, *reference);
                }
                rows.push_back(row);
            }
        }
    }
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    const bool ref = !rows.empty() && rows.front().psnr_db.has_value();
    auto num = [](double v) {
        if (std::isinf(v)) {
            return std::string(v > 0 ? "inf" : "-inf");
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    std::string out = "layers,delta,edge_loss,uiqm,uicm,uism,uiconm,final_loss";
    if (ref) {
        out += ",psnr_db,edge_mae";
    }
    out += '\n';
    for (const SweepRow& r : rows) {
        out += std::to_string(r.layers) + ',' + num(r.delta) + ',' + (r.edge_loss ? "on" : "off") + ',' +
               num(r.uiqm.uiqm) + ',' + num(r.uiqm.uicm) + ',' + num(r.uiqm.uism) + ',' + num(r.uiqm.uiconm) + ',' +
               num(r.final_loss);
        if (ref) {
            out += ',' + num(*r.psnr_db) + ',' + num(*r.edge_mae);
        }
        out += '\n';
    }
    return out;
}

} // namespace oceanlens
