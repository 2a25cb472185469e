#include "oceanlens/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace oceanlens {

void PreprocessConfig::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw InvalidArgument("preprocess.gamma must be positive");
    }
}

ImageRGB gray_world_white_balance(const ImageRGB& img, bool clip) {
    if (img.empty()) {
        throw InvalidArgument("white balance of an empty image");
    }
    std::array<double, kChannels> mean{};
    for (int c = 0; c < kChannels; ++c) {
        const auto ch = img.channel(c);
        mean[c] = std::accumulate(ch.begin(), ch.end(), 0.0) / static_cast<double>(ch.size());
        if (!(mean[c] > 0.0)) {
            throw InvalidArgument("white balance: channel " + std::to_string(c) + " has zero mean");
        }
    }
    const double gray = (mean[0] + mean[1] + mean[2]) / 3.0;
    ImageRGB out = img;
    for (int c = 0; c < kChannels; ++c) {
        const double gain = gray / mean[c];
        for (double& v : out.channel(c)) {
            v *= gain;
        }
    }
    if (clip) {
        out.clamp_unit();
    }
    return out;
}

ImageRGB gamma_correct(const ImageRGB& img, double gamma) {
    if (!(gamma > 0.0)) {
        throw InvalidArgument("gamma must be positive");
    }
    ImageRGB out = img;
    if (gamma == 1.0) {
        return out;
    }
    for (double& v : out.values()) {
        v = std::pow(v, gamma);
    }
    return out;
}

ImageRGB preprocess(const ImageRGB& img, const PreprocessConfig& cfg) {
    cfg.validate();
    ImageRGB out = cfg.white_balance ? gray_world_white_balance(img, cfg.wb_clip) : img;
    return gamma_correct(out, cfg.gamma);
}

} // namespace oceanlens
