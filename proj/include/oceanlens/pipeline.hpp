#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "oceanlens/backscatter.hpp"
#include "oceanlens/deatten.hpp"
#include "oceanlens/image.hpp"
#include "oceanlens/io.hpp"
#include "oceanlens/metrics.hpp"
#include "oceanlens/optimizer.hpp"
#include "oceanlens/preprocess.hpp"

namespace oceanlens {

inline constexpr const char* kToolName = "oceanlens";
inline constexpr const char* kToolVersion = "0.1.0";

struct PipelineConfig {
    int backscatter_layers = 1;
    int deatten_terms = 1;
    HuberConfig huber;
    DeattenLossConfig deatten;
    OptimConfig optim;
    PreprocessConfig preprocess;
    UIQMConfig uiqm;
    DepthOptions depth;
    int output_bits = 8;
    bool warm_start = false;
    int jobs = 1;

    void validate() const;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

struct WarmStart {
    BackscatterParams backscatter;
    DeattenParams deatten;
};

struct EnhanceResult {
    ImageRGB enhanced;      // clamp(direct * alpha, 0, 1)
    ImageRGB backscatter;   // fitted backscatter estimate
    BackscatterParams backscatter_params;
    DeattenParams deatten_params;
    FitTrace backscatter_trace;
    FitTrace deatten_trace;
    std::vector<LossBreakdown> deatten_history; // one entry per deattenuation iteration
    LossBreakdown final_breakdown;
    std::size_t clamp_events = 0;
};

struct BackscatterFit {
    BackscatterParams params;
    FitTrace trace;
};

// Phase 1: fits backscatter parameters to the Huber loss of I - predicted backscatter.
BackscatterFit fit_backscatter(const ImageRGB& observed, const DepthMap& depth, BackscatterParams init,
                               const HuberConfig& huber, const OptimConfig& optim);

struct DeattenFit {
    DeattenParams params;
    FitTrace trace;
};

// Phase 2: fits deattenuation parameters to the composite loss. When
// `history` is given, the per-term breakdown of each iteration is appended.
DeattenFit fit_deattenuation(const DeattenObjective& objective, const DeattenParams& init, const OptimConfig& optim,
                             std::vector<LossBreakdown>* history = nullptr);

// Two-phase fit: backscatter against the Huber loss, then deattenuation with
// the backscatter frozen. Deterministic for fixed inputs and configuration.
EnhanceResult enhance(const ImageRGB& observed, const DepthMap& depth, const PipelineConfig& cfg,
                      const WarmStart* warm = nullptr);

} // namespace oceanlens
