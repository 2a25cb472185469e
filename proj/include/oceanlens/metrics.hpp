#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oceanlens/image.hpp"

namespace oceanlens {

struct UIQMConfig {
    double c1 = 0.0282; // colorfulness weight
    double c2 = 0.2953; // sharpness weight
    double c3 = 3.5753; // contrast weight
    double trim_fraction = 0.1;
    int block_size = 8;
    std::array<double, kChannels> luminance_weights{0.299, 0.587, 0.114};
    // UICM = chroma_weight * |trimmed mean| + spread_weight * sqrt(variance sum)
    double uicm_chroma_weight = -0.0268;
    double uicm_spread_weight = 0.1586;

    void validate() const;
};

struct GpmaeResult {
    double mean_degrees = 0.0;
    std::array<double, kGrayPatchCount> patch_degrees{};
};

// Angle between a color and the gray axis (1,1,1), in degrees. Throws
// InvalidArgument for the zero vector.
double gray_axis_angle_degrees(double r, double g, double b);

GpmaeResult gpmae(const ImageRGB& img, const PatchAnnotation& patches);

// Colorfulness from asymmetric alpha-trimmed statistics of RG = R - G and
// YB = (R + G) / 2 - B.
double uicm(const ImageRGB& img, const UIQMConfig& cfg = {});
// Sharpness: luminance-weighted EME of each channel's Sobel magnitude times the channel.
double uism(const ImageRGB& img, const UIQMConfig& cfg = {});
// Contrast: block-wise -c ln c with Michelson contrast c on luminance.
double uiconm(const ImageRGB& img, const UIQMConfig& cfg = {});

struct UiqmResult {
    double uiqm = 0.0;
    double uicm = 0.0;
    double uism = 0.0;
    double uiconm = 0.0;
};

double uiqm_combine(double uicm_value, double uism_value, double uiconm_value, const UIQMConfig& cfg = {});
UiqmResult uiqm(const ImageRGB& img, const UIQMConfig& cfg = {});

// Peak 1.0; returns +infinity for identical images.
double psnr(const ImageRGB& test, const ImageRGB& reference);

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    std::array<double, kChannels> luminance_weights{0.299, 0.587, 0.114};
};

// Mean SSIM over all fully-contained Gaussian windows of the luminance.
double ssim(const ImageRGB& test, const ImageRGB& reference, const SsimConfig& cfg = {});

// Mean absolute difference of per-channel Sobel gradient magnitudes.
double sobel_edge_mae(const ImageRGB& a, const ImageRGB& b);

struct MetricReport {
    std::string name;
    std::optional<GpmaeResult> gpmae;
    UiqmResult uiqm;
    std::optional<double> psnr_db;
    std::optional<double> ssim;
};

MetricReport evaluate_metrics(std::string name, const ImageRGB& img, const UIQMConfig& cfg,
                              const ImageRGB* reference = nullptr, const PatchAnnotation* patches = nullptr);

nlohmann::json report_to_json(const MetricReport& r);
nlohmann::json uiqm_config_to_json(const UIQMConfig& cfg);
UIQMConfig uiqm_config_from_json(const nlohmann::json& j, UIQMConfig base = {});

// CSV table, one row per report plus a trailing mean row. Columns whose value
// is absent for every report are omitted; absent cells are left empty.
std::string reports_to_csv(const std::vector<MetricReport>& reports);

// Formats a PSNR value, mapping +infinity to "inf".
std::string format_db(double v);

} // namespace oceanlens
