#pragma once

#include <array>
#include <span>
#include <vector>

#include <json.hpp>

#include "oceanlens/image.hpp"
#include "oceanlens/optimizer.hpp"

namespace oceanlens {

// Learnable deattenuation model. Per channel c with N exponential terms:
//   a_D(z)  = sum_k scale_{c,k} exp(-decay_{c,k} z)
//   alpha(z) = min(exp(z a_D(z)), alpha_cap)
struct DeattenParams {
    int terms = 1;
    std::array<std::vector<double>, kChannels> scale; // a', in [0,1]
    std::array<std::vector<double>, kChannels> decay; // a, in [0,1]

    static DeattenParams uniform(int terms, double scale, double decay);
    // a' = 0.3, a = 0.5 for every term.
    static DeattenParams initial(int terms) { return uniform(terms, 0.3, 0.5); }

    // Layout per channel: scale[0..N), decay[0..N).
    std::vector<double> flatten() const;
    static DeattenParams unflatten(int terms, std::span<const double> flat);
    static Bounds bounds(int terms);

    void validate() const;
};

enum class LossTerm { saturation = 0, intensity, variation, sobel, log };
inline constexpr std::size_t kLossTerms = 5;

struct DeattenLossConfig {
    double sat_target = 1.0;
    double intensity_target = 0.5;
    std::array<double, kLossTerms> weights{1.0, 1.0, 1.0, 1.0, 1.0};
    double alpha_cap = 20.0;

    double weight(LossTerm t) const { return weights[static_cast<std::size_t>(t)]; }
    void set_edge_losses(bool enabled);
    void validate() const;
};

FactorMap predict_deattenuation(const DeattenParams& params, const DepthMap& depth, double alpha_cap = 20.0);

SignedImage reconstruct(const SignedImage& direct, const FactorMap& alpha);

double saturation_loss(const SignedImage& img, double sat_target);
double intensity_loss(const SignedImage& img, double intensity_target);
double variation_loss(const SignedImage& reconstructed, const SignedImage& direct);
// Images must be at least 3x3.
double sobel_loss(const SignedImage& reconstructed, const SignedImage& direct);
// Gaussian then Laplacian, each 3x3 with replicate borders; images at least 5x5.
double log_loss(const SignedImage& reconstructed, const SignedImage& direct);

// Unweighted terms plus their weighted total.
struct LossBreakdown {
    std::array<double, kLossTerms> terms{};
    double total = 0.0;

    double term(LossTerm t) const { return terms[static_cast<std::size_t>(t)]; }
};

LossBreakdown deatten_loss(const SignedImage& reconstructed, const SignedImage& direct, const DeattenLossConfig& cfg);

struct DeattenGradient {
    LossBreakdown loss;
    DeattenParams grad;
};

// Fixed direct signal and depth; evaluates the composite loss of
// reconstruct(direct, predict_deattenuation(params)) and its exact gradient.
// Filter responses of the direct signal are computed once.
class DeattenObjective {
  public:
    DeattenObjective(SignedImage direct, DepthMap depth, DeattenLossConfig cfg);

    LossBreakdown loss(const DeattenParams& params) const;
    DeattenGradient gradient(const DeattenParams& params) const;

    const SignedImage& direct() const { return direct_; }
    const DepthMap& depth() const { return depth_; }
    const DeattenLossConfig& config() const { return cfg_; }

  private:
    struct Responses {
        std::array<std::vector<double>, kChannels> sobel_x, sobel_y, log;
        std::array<double, kChannels> sd{};
    };

    LossBreakdown evaluate(const SignedImage& recon, const Responses& recon_resp, SignedImage* grad_recon) const;

    SignedImage direct_;
    DepthMap depth_;
    DeattenLossConfig cfg_;
    Responses direct_resp_;
};

DeattenGradient deatten_loss_grad(const DeattenParams& params, const SignedImage& direct, const DepthMap& depth,
                                  const DeattenLossConfig& cfg);

nlohmann::json deatten_to_json(const DeattenParams& p);
DeattenParams deatten_from_json(const nlohmann::json& j);
nlohmann::json breakdown_to_json(const LossBreakdown& b);

} // namespace oceanlens
