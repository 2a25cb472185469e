#include "oceanlens/physics.hpp"

#include <cmath>
#include <string>

namespace oceanlens {
namespace {

void check_unit(double v, const char* name, int c) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidArgument(std::string(name) + " of channel " + std::to_string(c) + " must lie in [0,1]");
    }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

} // namespace

void FormationParams::validate() const {
    for (int c = 0; c < kChannels; ++c) {
        const ChannelFormation& ch = channel[c];
        check_unit(ch.veil, "B_inf", c);
        check_unit(ch.residual, "B_res", c);
        if (!(ch.rate_veil >= 0.0) || !(ch.rate_residual >= 0.0) || !std::isfinite(ch.rate_veil) ||
            !std::isfinite(ch.rate_residual)) {
            throw InvalidArgument("backscatter rates must be finite and non-negative");
        }
        if (ch.atten_scale.empty() || ch.atten_scale.size() != ch.atten_decay.size()) {
            throw InvalidArgument("attenuation series needs P >= 1 matching (a', a) pairs");
        }
        for (std::size_t p = 0; p < ch.atten_scale.size(); ++p) {
            check_unit(ch.atten_scale[p], "a'", c);
            check_unit(ch.atten_decay[p], "a", c);
        }
    }
}

double attenuation_coefficient(const FormationParams& params, int c, double z) {
    const ChannelFormation& ch = params.channel[c];
    double sum = 0.0;
    for (std::size_t p = 0; p < ch.atten_scale.size(); ++p) {
        sum += ch.atten_scale[p] * std::exp(-ch.atten_decay[p] * z);
    }
    return sum;
}

ImageRGB backscatter_field(const FormationParams& params, const DepthMap& depth) {
    ImageRGB out(depth.height(), depth.width());
    const auto z = depth.values();
    for (int c = 0; c < kChannels; ++c) {
        const ChannelFormation& ch = params.channel[c];
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < z.size(); ++i) {
            dst[i] = ch.veil * (1.0 - std::exp(-ch.rate_veil * z[i])) + ch.residual * std::exp(-ch.rate_residual * z[i]);
        }
    }
    return out;
}

ClampedImage synthesize_backscatter(const FormationParams& params, const DepthMap& depth) {
    ClampedImage r{backscatter_field(params, depth), 0};
    r.clamp_events = r.image.clamp_unit();
    return r;
}

ImageRGB attenuate(const ImageRGB& clean, const DepthMap& depth, const FormationParams& params) {
    require_aligned(clean, depth, "attenuate");
    ImageRGB out = clean;
    const auto z = depth.values();
    for (int c = 0; c < kChannels; ++c) {
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < z.size(); ++i) {
            dst[i] *= std::exp(-attenuation_coefficient(params, c, z[i]) * z[i]);
        }
    }
    return out;
}

ClampedImage degrade(const ImageRGB& clean, const DepthMap& depth, const FormationParams& params) {
    ImageRGB direct = attenuate(clean, depth, params);
    const ImageRGB backscatter = backscatter_field(params, depth);
    auto dst = direct.values();
    const auto src = backscatter.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
    ClampedImage r{std::move(direct), 0};
    r.clamp_events = r.image.clamp_unit();
    return r;
}

FormationParams sample_formation_params(std::mt19937_64& rng, const SamplerRanges& r) {
    if (r.atten_terms < 1) {
        throw InvalidArgument("sampler needs at least one attenuation term");
    }
    FormationParams p;
    for (ChannelFormation& ch : p.channel) {
        ch.veil = uniform(rng, r.veil_lo, r.veil_hi);
        ch.residual = uniform(rng, r.residual_lo, r.residual_hi);
        ch.rate_veil = uniform(rng, r.rate_lo, r.rate_hi);
        ch.rate_residual = uniform(rng, r.rate_lo, r.rate_hi);
        for (int t = 0; t < r.atten_terms; ++t) {
            ch.atten_scale.push_back(uniform(rng, r.scale_lo, r.scale_hi));
            ch.atten_decay.push_back(uniform(rng, r.decay_lo, r.decay_hi));
        }
    }
    p.validate();
    return p;
}

nlohmann::json formation_to_json(const FormationParams& p) {
    nlohmann::json channels = nlohmann::json::array();
    for (const ChannelFormation& ch : p.channel) {
        channels.push_back({{"B_inf", ch.veil},
                            {"B_res", ch.residual},
                            {"b1", ch.rate_veil},
                            {"b2", ch.rate_residual},
                            {"a_prime", ch.atten_scale},
                            {"a", ch.atten_decay}});
    }
    return {{"channels", channels}};
}

FormationParams formation_from_json(const nlohmann::json& j) {
    FormationParams p;
    const auto& channels = j.at("channels");
    if (channels.size() != kChannels) {
        throw InvalidArgument("formation params need exactly 3 channels");
    }
    for (int c = 0; c < kChannels; ++c) {
        const auto& jc = channels[c];
        ChannelFormation& ch = p.channel[c];
        ch.veil = jc.at("B_inf").get<double>();
        ch.residual = jc.at("B_res").get<double>();
        ch.rate_veil = jc.at("b1").get<double>();
        ch.rate_residual = jc.at("b2").get<double>();
        ch.atten_scale = jc.at("a_prime").get<std::vector<double>>();
        ch.atten_decay = jc.at("a").get<std::vector<double>>();
    }
    p.validate();
    return p;
}

nlohmann::json sampler_to_json(const SamplerRanges& r) {
    return {{"B_inf", {r.veil_lo, r.veil_hi}},   {"B_res", {r.residual_lo, r.residual_hi}},
            {"b", {r.rate_lo, r.rate_hi}},        {"a_prime", {r.scale_lo, r.scale_hi}},
            {"a", {r.decay_lo, r.decay_hi}},      {"atten_terms", r.atten_terms}};
}

SamplerRanges sampler_from_json(const nlohmann::json& j) {
    SamplerRanges r;
    auto range = [&](const char* key, double& lo, double& hi) {
        if (j.contains(key)) {
            const auto v = j.at(key).get<std::vector<double>>();
            if (v.size() != 2 || v[0] > v[1]) {
                throw InvalidArgument(std::string("sampler range '") + key + "' must be [lo, hi]");
            }
            lo = v[0];
            hi = v[1];
        }
    };
    range("B_inf", r.veil_lo, r.veil_hi);
    range("B_res", r.residual_lo, r.residual_hi);
    range("b", r.rate_lo, r.rate_hi);
    range("a_prime", r.scale_lo, r.scale_hi);
    range("a", r.decay_lo, r.decay_hi);
    r.atten_terms = j.value("atten_terms", r.atten_terms);
    return r;
}

} // namespace oceanlens
