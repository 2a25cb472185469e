#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "oceanlens/image.hpp"

namespace oceanlens {

// Ground-truth parameters of the image formation model for one channel:
//   I   = I_D + I_B
//   I_D = I_J * exp(-a_D(z) z),   a_D(z) = sum_p a'_p exp(-a_p z)
//   I_B = B_inf (1 - exp(-b1 z)) + B_res exp(-b2 z)
struct ChannelFormation {
    double veil = 0.0;     // B_inf, veiling-light backscatter
    double residual = 0.0; // B_res, residual direct component
    double rate_veil = 0.0;
    double rate_residual = 0.0;
    std::vector<double> atten_scale; // a'_p
    std::vector<double> atten_decay; // a_p
};

struct FormationParams {
    std::array<ChannelFormation, kChannels> channel;

    // Throws InvalidArgument when a field is out of bounds or the series is empty.
    void validate() const;
};

double attenuation_coefficient(const FormationParams& params, int c, double z);

// Backscatter field before clamping.
ImageRGB backscatter_field(const FormationParams& params, const DepthMap& depth);

struct ClampedImage {
    ImageRGB image;
    std::size_t clamp_events = 0;
};

// Backscatter clamped to [0,1] (B_inf + B_res may exceed 1).
ClampedImage synthesize_backscatter(const FormationParams& params, const DepthMap& depth);

ImageRGB attenuate(const ImageRGB& clean, const DepthMap& depth, const FormationParams& params);

// clamp(attenuate(clean) + backscatter_field) with the number of clamped components.
ClampedImage degrade(const ImageRGB& clean, const DepthMap& depth, const FormationParams& params);

// Uniform ranges for synthetic datasets.
struct SamplerRanges {
    double veil_lo = 0.3, veil_hi = 0.9;
    double residual_lo = 0.0, residual_hi = 0.1;
    double rate_lo = 0.5, rate_hi = 5.0;
    double scale_lo = 0.2, scale_hi = 1.0;
    double decay_lo = 0.0, decay_hi = 1.0;
    int atten_terms = 1;
};

FormationParams sample_formation_params(std::mt19937_64& rng, const SamplerRanges& ranges = {});

nlohmann::json formation_to_json(const FormationParams& p);
FormationParams formation_from_json(const nlohmann::json& j);
nlohmann::json sampler_to_json(const SamplerRanges& r);
SamplerRanges sampler_from_json(const nlohmann::json& j);

} // namespace oceanlens
