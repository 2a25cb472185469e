#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "oceanlens/batch.hpp"
#include "oceanlens/io.hpp"
#include "support/scenes.hpp"

using namespace oceanlens;
using oceanlens::testing::read_file;
using oceanlens::testing::TempDir;

namespace {

void write_depth_text(const DepthMap& d, const fs::path& p) {
    std::ofstream f(p);
    char buf[32];
    for (int y = 0; y < d.height(); ++y) {
        for (int x = 0; x < d.width(); ++x) {
            std::snprintf(buf, sizeof buf, "%.17g", d.at(y, x));
            f << (x ? " " : "") << buf;
        }
        f << '\n';
    }
}

// Writes scenes [0, count) as <name><i>.png + <name><i>.txt into the two directories.
void write_scenes(const fs::path& images, const fs::path& depths, int count, int h = 16, int w = 20,
                  const std::string& name = "img") {
    fs::create_directories(images);
    fs::create_directories(depths);
    for (int i = 0; i < count; ++i) {
        const auto s = oceanlens::testing::make_scene(i, h, w);
        save_image(s.clean, images / (name + std::to_string(i) + ".png"), 16);
        write_depth_text(s.depth, depths / (name + std::to_string(i) + ".txt"));
    }
}

PipelineConfig quick_config() {
    PipelineConfig cfg;
    cfg.optim.max_iters = 60;
    // The scenes' depth maps are already normalized; keep them as they are.
    cfg.depth.clamp_floor = 0.0;
    return cfg;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(OCEANLENS_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("enhance over an empty directory succeeds with an empty report") {
    TempDir dir("empty");
    fs::create_directories(dir / "in");
    fs::create_directories(dir / "depth");
    const BatchSummary s = run_enhance(dir / "in", dir / "depth", quick_config(), dir / "out");
    CHECK(s.exit_code() == 0);
    CHECK(s.items.empty());
    const auto report = nlohmann::json::parse(read_file(dir / "out" / "report.json"));
    CHECK(report["items"].empty());
    CHECK(report["failures"].empty());
    CHECK(fs::exists(dir / "out" / "provenance.json"));
}

TEST_CASE("enhance writes every artifact and reruns byte-identically") {
    TempDir dir("one");
    write_scenes(dir / "in", dir / "depth", 1);
    const PipelineConfig cfg = quick_config();
    REQUIRE(run_enhance(dir / "in", dir / "depth", cfg, dir / "a").exit_code() == 0);
    REQUIRE(run_enhance(dir / "in", dir / "depth", cfg, dir / "b").exit_code() == 0);
    for (const char* f : {"img0.png", "img0.backscatter.png", "img0.checkpoint.json", "img0.trace.jsonl",
                          "img0.report.json", "report.json", "report.csv", "provenance.json"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(dir / "a" / f));
        CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
    }
    const auto prov = nlohmann::json::parse(read_file(dir / "a" / "provenance.json"));
    CHECK(prov["version"] == kToolVersion);
    CHECK(prov["config"] == config_to_json(cfg));
    const auto ckpt = nlohmann::json::parse(read_file(dir / "a" / "img0.checkpoint.json"));
    CHECK(ckpt["backscatter"]["model"] == "backscatter");
    CHECK(ckpt["deattenuation"]["model"] == "deattenuation");
    CHECK(ckpt["alpha_cap"] == 20.0);
    const std::string trace = read_file(dir / "a" / "img0.trace.jsonl");
    CHECK(trace.find("\"phase\":\"deattenuation\"") != std::string::npos);
    CHECK(trace.find("\"sobel\"") != std::string::npos);
}

TEST_CASE("one bad pair does not abort the batch") {
    TempDir dir("partial");
    write_scenes(dir / "in", dir / "depth", 3);
    fs::remove(dir / "depth" / "img1.txt");
    std::ofstream(dir / "in" / "broken.png") << "garbage";
    std::ofstream(dir / "depth" / "broken.txt") << "0 1\n1 0\n";
    const BatchSummary s = run_enhance(dir / "in", dir / "depth", quick_config(), dir / "out");
    CHECK(s.exit_code() == 1);
    CHECK(s.failures() == 2);
    CHECK(fs::exists(dir / "out" / "img0.png"));
    CHECK(fs::exists(dir / "out" / "img2.png"));
    CHECK_FALSE(fs::exists(dir / "out" / "img1.png"));
    const auto report = nlohmann::json::parse(read_file(dir / "out" / "report.json"));
    CHECK(report["items"].size() == 2);
    CHECK(report["failures"].size() == 2);
}

TEST_CASE("mismatched depth dimensions fail that item only") {
    TempDir dir("shape");
    write_scenes(dir / "in", dir / "depth", 2);
    std::ofstream(dir / "depth" / "img1.txt") << "0 1\n1 0\n";
    const BatchSummary s = run_enhance(dir / "in", dir / "depth", quick_config(), dir / "out");
    CHECK(s.failures() == 1);
    CHECK(s.items[1].error.find("img1") != std::string::npos);
}

TEST_CASE("manifest overrides stem pairing") {
    TempDir dir("manifest");
    write_scenes(dir / "in", dir / "depth", 1);
    fs::rename(dir / "depth" / "img0.txt", dir / "depth" / "range_of_first.txt");
    std::ofstream(dir / "pairs.json") << R"({"pairs": [{"image": "img0.png", "depth": "range_of_first.txt"}]})";
    const fs::path manifest = dir / "pairs.json";
    CHECK(run_enhance(dir / "in", dir / "depth", quick_config(), dir / "nomanifest").exit_code() == 1);
    CHECK(run_enhance(dir / "in", dir / "depth", quick_config(), dir / "out", &manifest).exit_code() == 0);
    CHECK(fs::exists(dir / "out" / "img0.png"));
}

TEST_CASE("worker count does not change results") {
    TempDir dir("jobs");
    write_scenes(dir / "in", dir / "depth", 4);
    PipelineConfig cfg = quick_config();
    run_enhance(dir / "in", dir / "depth", cfg, dir / "serial");
    cfg.jobs = 4;
    run_enhance(dir / "in", dir / "depth", cfg, dir / "parallel");
    for (const auto& entry : fs::directory_iterator(dir / "serial")) {
        const auto name = entry.path().filename();
        if (name == "provenance.json" || name == "report.json") {
            continue; // these record the job count
        }
        CAPTURE(name.string());
        CHECK(read_file(entry.path()) == read_file(dir / "parallel" / name));
    }
}

TEST_CASE("warm start runs sequentially and records its initialization") {
    TempDir dir("warm");
    write_scenes(dir / "in", dir / "depth", 2);
    PipelineConfig cfg = quick_config();
    cfg.warm_start = true;
    cfg.jobs = 4;
    CHECK(run_enhance(dir / "in", dir / "depth", cfg, dir / "out").exit_code() == 0);
    const auto first = nlohmann::json::parse(read_file(dir / "out" / "img0.checkpoint.json"));
    const auto second = nlohmann::json::parse(read_file(dir / "out" / "img1.checkpoint.json"));
    CHECK(first["init"]["backscatter"] == "darkest_1pct_mean");
    CHECK(second["init"]["backscatter"] == "warm_start");
}

TEST_CASE("synth is seeded and writes ground truth") {
    TempDir dir("synth");
    write_scenes(dir / "clean", dir / "depth", 3);
    SynthOptions opts;
    opts.seed = 42;
    opts.depth.clamp_floor = 0.0;
    REQUIRE(run_synth(dir / "clean", dir / "depth", opts, dir / "a").exit_code() == 0);
    REQUIRE(run_synth(dir / "clean", dir / "depth", opts, dir / "b").exit_code() == 0);
    for (int i = 0; i < 3; ++i) {
        for (const char* ext : {".png", ".json"}) {
            const std::string f = "img" + std::to_string(i) + ext;
            CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
        }
    }
    const auto side = nlohmann::json::parse(read_file(dir / "a" / "img1.json"));
    CHECK(side["seed"] == 42);
    CHECK(side["index"] == 1);
    CHECK(side["clean"] == "img1.png");

    // The sidecar holds the exact parameters: re-degrading reproduces the image.
    const FormationParams params = formation_from_json(side["params"]);
    const ImageRGB clean = load_image(dir / "clean" / "img1.png");
    const DepthMap depth = load_depth(dir / "depth" / "img1.txt", opts.depth);
    ImageRGB again = degrade(clean, depth, params).image;
    save_image(again, dir / "again.png", 16);
    CHECK(load_image(dir / "again.png") == load_image(dir / "a" / "img1.png"));

    opts.seed = 43;
    run_synth(dir / "clean", dir / "depth", opts, dir / "c");
    CHECK(read_file(dir / "a" / "img1.png") != read_file(dir / "c" / "img1.png"));
}

TEST_CASE("synth with a null sampler reproduces the clean images") {
    TempDir dir("synthnull");
    write_scenes(dir / "clean", dir / "depth", 2);
    SynthOptions opts;
    opts.ranges = SamplerRanges{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
    REQUIRE(run_synth(dir / "clean", dir / "depth", opts, dir / "out").exit_code() == 0);
    for (int i = 0; i < 2; ++i) {
        const std::string f = "img" + std::to_string(i) + ".png";
        CHECK(load_image(dir / "out" / f) == load_image(dir / "clean" / f));
    }
}

TEST_CASE("metrics tables") {
    TempDir dir("metrics");
    write_scenes(dir / "test", dir / "depth", 2, 16, 16);
    MetricsOptions opts;
    std::vector<MetricReport> reports;
    REQUIRE(run_metrics(dir / "test", opts, dir / "bare", &reports).exit_code() == 0);
    CHECK(reports.size() == 2);
    CHECK(read_file(dir / "bare" / "metrics.csv").find("psnr") == std::string::npos);

    opts.reference_dir = dir / "test";
    REQUIRE(run_metrics(dir / "test", opts, dir / "self", &reports).exit_code() == 0);
    for (const auto& r : reports) {
        CHECK(std::isinf(*r.psnr_db));
        CHECK(*r.ssim == 1.0);
    }
    const auto j = nlohmann::json::parse(read_file(dir / "self" / "metrics.json"));
    CHECK(j["images"][0]["psnr_db"] == "inf");

    fs::create_directories(dir / "patches");
    PatchAnnotation p;
    for (int i = 0; i < 6; ++i) {
        p.patches[i] = {2 * i, 0, 2 * i + 2, 2};
    }
    std::ofstream(dir / "patches" / "img0.json") << patches_to_json(p).dump();
    std::ofstream(dir / "patches" / "img1.json") << R"({"patches": []})";
    opts.patches_dir = dir / "patches";
    const BatchSummary s = run_metrics(dir / "test", opts, dir / "patched", &reports);
    CHECK(s.failures() == 1); // malformed sidecar
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].gpmae.has_value());
}

TEST_CASE("metrics psnr matches a hand calculation on written files") {
    TempDir dir("psnr");
    fs::create_directories(dir / "t");
    fs::create_directories(dir / "r");
    save_image(ImageRGB(12, 12, 0.0), dir / "t" / "x.png", 8);
    save_image(ImageRGB(12, 12, 51.0 / 255.0), dir / "r" / "x.png", 8);
    MetricsOptions opts;
    opts.reference_dir = dir / "r";
    std::vector<MetricReport> reports;
    run_metrics(dir / "t", opts, dir / "out", &reports);
    // Scalar MSE oracle over the 12*12*3 stored samples (0 vs 51/255).
    const double d = 51.0 / 255.0;
    double sum = 0.0;
    for (int i = 0; i < 12 * 12 * 3; ++i) {
        sum += d * d;
    }
    CHECK(*reports[0].psnr_db == 10.0 * std::log10(1.0 / (sum / (12 * 12 * 3))));
    CHECK(*reports[0].psnr_db == doctest::Approx(10.0 * std::log10(1.0 / (d * d))).epsilon(1e-12));
}

TEST_CASE("ablation sweep") {
    const auto s = oceanlens::testing::make_scene(0, 16, 20);
    const PipelineConfig cfg = quick_config();

    SweepSpec single = SweepSpec::from_json(nlohmann::json::object(), cfg);
    const auto one = run_ablation(s.clean, s.depth, single, cfg);
    REQUIRE(one.size() == 1);
    const EnhanceResult direct = enhance(s.clean, s.depth, cfg);
    CHECK(one[0].uiqm.uiqm == uiqm(direct.enhanced).uiqm);
    CHECK(one[0].final_loss == direct.deatten_trace.final_loss);

    const SweepSpec deltas = SweepSpec::from_json({{"delta", {0.1, 0.5, 1.0}}}, cfg);
    const auto rows = run_ablation(s.clean, s.depth, deltas, cfg, &s.clean);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].delta == 0.1);
    CHECK(rows[2].delta == 1.0);
    CHECK(rows[1].psnr_db.has_value());
    const std::string csv = sweep_to_csv(rows);
    CHECK(csv.rfind("layers,delta,edge_loss,uiqm,uicm,uism,uiconm,final_loss,psnr_db,edge_mae\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(sweep_to_csv(run_ablation(s.clean, s.depth, deltas, cfg, &s.clean)) == csv);

    CHECK_THROWS_AS(SweepSpec::from_json({{"gamma", {1}}}, cfg), InvalidArgument);
    CHECK_THROWS_AS(SweepSpec::from_json({{"delta", nlohmann::json::array()}}, cfg), InvalidArgument);
}

TEST_CASE("command-line exit codes") {
    TempDir dir("cli");
    write_scenes(dir / "in", dir / "depth", 2);
    const std::string in = (dir / "in").string();
    const std::string depth = (dir / "depth").string();

    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("enhance --input-dir " + in) == 2);
    CHECK(run_cli("frobnicate") == 2);

    std::ofstream(dir / "bad.json") << R"({"optimizer": {"step": 1}})";
    CHECK(run_cli("enhance --input-dir " + in + " --depth-dir " + depth + " --out " + (dir / "o1").string() +
                  " --config " + (dir / "bad.json").string()) == 2);

    std::ofstream(dir / "fast.json") << R"({"optimizer": {"max_iters": 30}, "depth": {"clamp_floor": 0.0}})";
    const std::string fast = " --config " + (dir / "fast.json").string();
    CHECK(run_cli("enhance --input-dir " + in + " --depth-dir " + depth + " --out " + (dir / "o2").string() + fast +
                  " --jobs 2") == 0);
    CHECK(fs::exists(dir / "o2" / "img1.png"));

    fs::remove(dir / "depth" / "img1.txt");
    CHECK(run_cli("enhance --input-dir " + in + " --depth-dir " + depth + " --out " + (dir / "o3").string() + fast) ==
          1);

    CHECK(run_cli("synth --clean-dir " + in + " --depth-dir " + depth + " --out " + (dir / "s").string() +
                  " --seed 7") == 1);
    CHECK(fs::exists(dir / "s" / "img0.json"));

    CHECK(run_cli("metrics --test-dir " + in + " --out " + (dir / "m").string()) == 0);
    CHECK(fs::exists(dir / "m" / "metrics.csv"));

    std::ofstream(dir / "sweep.json") << R"({"delta": [0.1, 0.5]})";
    CHECK(run_cli("ablate --image " + (dir / "in" / "img0.png").string() + " --depth " +
                  (dir / "depth" / "img0.txt").string() + " --sweep " + (dir / "sweep.json").string() + " --out " +
                  (dir / "ab").string() + fast) == 0);
    CHECK(std::count(std::istreambuf_iterator<char>(*std::make_unique<std::ifstream>(dir / "ab" / "sweep.csv")),
                     std::istreambuf_iterator<char>(), '\n') == 3);
}
