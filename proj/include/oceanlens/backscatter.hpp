#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oceanlens/image.hpp"
#include "oceanlens/optimizer.hpp"

namespace oceanlens {

// Exponential activation: 1 for s <= 0, exp(-s) otherwise.
double eaf(double s);
// Complementary exponential activation: 0 for s <= 0, 1 - exp(-s) otherwise.
double ceaf(double s);
double sigmoid(double s);

// Learnable backscatter model. Per channel c, with P layers:
//   s_c(z) = sum_p [ veil_c * ceaf(rate_veil_{c,p} z) + residual_c * eaf(rate_residual_{c,p} z) ]
//   I_B    = sigmoid(s_c(z))
struct BackscatterParams {
    int layers = 1;
    std::array<double, kChannels> veil{};     // B_inf, in [0,1]
    std::array<double, kChannels> residual{}; // B_res, in [0,1]
    std::array<std::vector<double>, kChannels> rate_veil;     // b1, >= 0
    std::array<std::vector<double>, kChannels> rate_residual; // b2, >= 0

    static BackscatterParams uniform(int layers, double veil, double residual, double rate_veil,
                                     double rate_residual);

    // Layout per channel: veil, residual, rate_veil[0..P), rate_residual[0..P).
    std::vector<double> flatten() const;
    static BackscatterParams unflatten(int layers, std::span<const double> flat);
    static Bounds bounds(int layers);

    void validate() const;
    void project();
};

struct HuberConfig {
    double delta = 0.5;
    double beta = 2.0; // 2 makes the quadratic and linear branches meet at |r| = delta

    void validate() const;
};

ImageRGB predict_backscatter(const BackscatterParams& params, const DepthMap& depth);

// observed - backscatter, unclamped.
SignedImage direct_residual(const ImageRGB& observed, const ImageRGB& backscatter);

// Adaptive Huber penalty of one residual.
double huber(double r, const HuberConfig& cfg);
// Mean Huber penalty over all pixels and channels.
double backscatter_loss(const SignedImage& residual, const HuberConfig& cfg);

struct BackscatterGradient {
    double loss = 0.0;
    BackscatterParams grad;
};

// Loss and exact gradient of backscatter_loss(direct_residual(observed,
// predict_backscatter(params, depth))). Kinks take the quadratic-branch
// derivative at |r| = delta and zero at activation argument 0.
BackscatterGradient backscatter_loss_grad(const BackscatterParams& params, const ImageRGB& observed,
                                          const DepthMap& depth, const HuberConfig& cfg);

// Deterministic start: veil = per-channel mean of the darkest 1% of pixels
// (by R+G+B), residual = 0.01, all rates 1.
BackscatterParams init_backscatter(const ImageRGB& observed, int layers);

nlohmann::json backscatter_to_json(const BackscatterParams& p);
BackscatterParams backscatter_from_json(const nlohmann::json& j);

} // namespace oceanlens
