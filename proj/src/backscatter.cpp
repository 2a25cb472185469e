#include "oceanlens/backscatter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "oceanlens/error.hpp"

namespace oceanlens {

double eaf(double s) {
    return s <= 0.0 ? 1.0 : std::exp(-s);
}

double ceaf(double s) {
    return s <= 0.0 ? 0.0 : 1.0 - std::exp(-s);
}

double sigmoid(double s) {
    return 1.0 / (1.0 + std::exp(-s));
}

namespace {

// d/ds of eaf and ceaf; zero on the saturated branch including s = 0.
double eaf_slope(double s) {
    return s <= 0.0 ? 0.0 : -std::exp(-s);
}

double ceaf_slope(double s) {
    return s <= 0.0 ? 0.0 : std::exp(-s);
}

std::size_t block_size(int layers) {
    return 2 + 2 * static_cast<std::size_t>(layers);
}

double pre_activation(const BackscatterParams& p, int c, double z) {
    double s = 0.0;
    for (int l = 0; l < p.layers; ++l) {
        s += p.veil[c] * ceaf(p.rate_veil[c][l] * z) + p.residual[c] * eaf(p.rate_residual[c][l] * z);
    }
    return s;
}

} // namespace

BackscatterParams BackscatterParams::uniform(int layers, double veil, double residual, double rate_veil,
                                             double rate_residual) {
    if (layers < 1) {
        throw InvalidArgument("backscatter model needs at least one layer");
    }
    BackscatterParams p;
    p.layers = layers;
    for (int c = 0; c < kChannels; ++c) {
        p.veil[c] = veil;
        p.residual[c] = residual;
        p.rate_veil[c].assign(layers, rate_veil);
        p.rate_residual[c].assign(layers, rate_residual);
    }
    return p;
}

std::vector<double> BackscatterParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(kChannels * block_size(layers));
    for (int c = 0; c < kChannels; ++c) {
        flat.push_back(veil[c]);
        flat.push_back(residual[c]);
        flat.insert(flat.end(), rate_veil[c].begin(), rate_veil[c].end());
        flat.insert(flat.end(), rate_residual[c].begin(), rate_residual[c].end());
    }
    return flat;
}

BackscatterParams BackscatterParams::unflatten(int layers, std::span<const double> flat) {
    if (layers < 1 || flat.size() != kChannels * block_size(layers)) {
        throw InvalidArgument("flat backscatter parameter vector has the wrong length");
    }
    BackscatterParams p;
    p.layers = layers;
    auto it = flat.begin();
    for (int c = 0; c < kChannels; ++c) {
        p.veil[c] = *it++;
        p.residual[c] = *it++;
        p.rate_veil[c].assign(it, it + layers);
        it += layers;
        p.rate_residual[c].assign(it, it + layers);
        it += layers;
    }
    return p;
}

Bounds BackscatterParams::bounds(int layers) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    Bounds b;
    for (int c = 0; c < kChannels; ++c) {
        b.lower.insert(b.lower.end(), {0.0, 0.0});
        b.upper.insert(b.upper.end(), {1.0, 1.0});
        b.lower.insert(b.lower.end(), 2 * static_cast<std::size_t>(layers), 0.0);
        b.upper.insert(b.upper.end(), 2 * static_cast<std::size_t>(layers), inf);
    }
    return b;
}

void BackscatterParams::validate() const {
    if (layers < 1) {
        throw InvalidArgument("backscatter model needs at least one layer");
    }
    for (int c = 0; c < kChannels; ++c) {
        if (rate_veil[c].size() != static_cast<std::size_t>(layers) ||
            rate_residual[c].size() != static_cast<std::size_t>(layers)) {
            throw InvalidArgument("backscatter rate arrays must hold one entry per layer");
        }
    }
    const auto flat = flatten();
    if (!bounds(layers).contains(flat)) {
        throw InvalidArgument("backscatter parameters outside their bounds");
    }
}

void BackscatterParams::project() {
    auto flat = flatten();
    bounds(layers).project(flat);
    *this = unflatten(layers, flat);
}

void HuberConfig::validate() const {
    if (!(delta > 0.0) || !(beta > 0.0)) {
        throw InvalidArgument("Huber delta and beta must be positive");
    }
}

ImageRGB predict_backscatter(const BackscatterParams& params, const DepthMap& depth) {
    ImageRGB out(depth.height(), depth.width());
    const auto z = depth.values();
    for (int c = 0; c < kChannels; ++c) {
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < z.size(); ++i) {
            dst[i] = sigmoid(pre_activation(params, c, z[i]));
        }
    }
    return out;
}

SignedImage direct_residual(const ImageRGB& observed, const ImageRGB& backscatter) {
    require_same_shape(observed, backscatter, "direct_residual");
    SignedImage out = observed;
    auto dst = out.values();
    const auto src = backscatter.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] -= src[i];
    }
    return out;
}

double huber(double r, const HuberConfig& cfg) {
    const double a = std::abs(r);
    return a <= cfg.delta ? r * r : cfg.beta * cfg.delta * (a - cfg.delta / 2.0);
}

double backscatter_loss(const SignedImage& residual, const HuberConfig& cfg) {
    cfg.validate();
    const auto v = residual.values();
    double sum = 0.0;
    for (double r : v) {
        sum += huber(r, cfg);
    }
    return sum / static_cast<double>(v.size());
}

BackscatterGradient backscatter_loss_grad(const BackscatterParams& params, const ImageRGB& observed,
                                          const DepthMap& depth, const HuberConfig& cfg) {
    cfg.validate();
    require_aligned(observed, depth, "backscatter_loss_grad");
    const int layers = params.layers;
    BackscatterGradient out;
    out.grad = BackscatterParams::uniform(layers, 0.0, 0.0, 0.0, 0.0);
    const auto z = depth.values();
    const double inv_count = 1.0 / static_cast<double>(kChannels * z.size());

    std::vector<double> ceaf_v(layers), eaf_v(layers);
    double loss_sum = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        const auto obs = observed.channel(c);
        double g_veil = 0.0;
        double g_residual = 0.0;
        auto& g_rate_veil = out.grad.rate_veil[c];
        auto& g_rate_residual = out.grad.rate_residual[c];
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double zi = z[i];
            double s = 0.0;
            double sum_ceaf = 0.0;
            double sum_eaf = 0.0;
            for (int l = 0; l < layers; ++l) {
                ceaf_v[l] = ceaf(params.rate_veil[c][l] * zi);
                eaf_v[l] = eaf(params.rate_residual[c][l] * zi);
                sum_ceaf += ceaf_v[l];
                sum_eaf += eaf_v[l];
                s += params.veil[c] * ceaf_v[l] + params.residual[c] * eaf_v[l];
            }
            const double pred = sigmoid(s);
            const double r = obs[i] - pred;
            loss_sum += huber(r, cfg);

            const double a = std::abs(r);
            const double dh_dr = a <= cfg.delta ? 2.0 * r : cfg.beta * cfg.delta * (r > 0.0 ? 1.0 : -1.0);
            // dL/ds = dL/dr * dr/dpred * dpred/ds
            const double dl_ds = -dh_dr * pred * (1.0 - pred) * inv_count;
            if (dl_ds == 0.0) {
                continue;
            }
            g_veil += dl_ds * sum_ceaf;
            g_residual += dl_ds * sum_eaf;
            for (int l = 0; l < layers; ++l) {
                g_rate_veil[l] += dl_ds * params.veil[c] * ceaf_slope(params.rate_veil[c][l] * zi) * zi;
                g_rate_residual[l] += dl_ds * params.residual[c] * eaf_slope(params.rate_residual[c][l] * zi) * zi;
            }
        }
        out.grad.veil[c] = g_veil;
        out.grad.residual[c] = g_residual;
    }
    out.loss = loss_sum * inv_count;
    return out;
}

BackscatterParams init_backscatter(const ImageRGB& observed, int layers) {
    const std::size_t n = observed.pixels();
    std::vector<std::pair<double, std::size_t>> brightness(n);
    for (std::size_t i = 0; i < n; ++i) {
        brightness[i] = {observed.channel(0)[i] + observed.channel(1)[i] + observed.channel(2)[i], i};
    }
    const std::size_t dark = std::max<std::size_t>(1, (n + 99) / 100);
    std::nth_element(brightness.begin(), brightness.begin() + (dark - 1), brightness.end());
    // nth_element leaves [0, dark) unordered; sort for a fixed summation order.
    std::sort(brightness.begin(), brightness.begin() + dark);

    BackscatterParams p = BackscatterParams::uniform(layers, 0.0, 0.01, 1.0, 1.0);
    for (int c = 0; c < kChannels; ++c) {
        double sum = 0.0;
        for (std::size_t k = 0; k < dark; ++k) {
            sum += observed.channel(c)[brightness[k].second];
        }
        p.veil[c] = std::clamp(sum / static_cast<double>(dark), 0.0, 1.0);
    }
    return p;
}

nlohmann::json backscatter_to_json(const BackscatterParams& p) {
    nlohmann::json channels = nlohmann::json::array();
    for (int c = 0; c < kChannels; ++c) {
        channels.push_back({{"B_inf", p.veil[c]},
                            {"B_res", p.residual[c]},
                            {"b1", p.rate_veil[c]},
                            {"b2", p.rate_residual[c]}});
    }
    return {{"model", "backscatter"},
            {"layers", p.layers},
            {"bounds", {{"B_inf", {0.0, 1.0}}, {"B_res", {0.0, 1.0}}, {"b1", {0.0, "inf"}}, {"b2", {0.0, "inf"}}}},
            {"channels", channels}};
}

BackscatterParams backscatter_from_json(const nlohmann::json& j) {
    if (j.value("model", "") != "backscatter") {
        throw InvalidArgument("checkpoint is not a backscatter model");
    }
    BackscatterParams p;
    p.layers = j.at("layers").get<int>();
    const auto& channels = j.at("channels");
    if (channels.size() != kChannels) {
        throw InvalidArgument("backscatter checkpoint needs 3 channels");
    }
    for (int c = 0; c < kChannels; ++c) {
        p.veil[c] = channels[c].at("B_inf").get<double>();
        p.residual[c] = channels[c].at("B_res").get<double>();
        p.rate_veil[c] = channels[c].at("b1").get<std::vector<double>>();
        p.rate_residual[c] = channels[c].at("b2").get<std::vector<double>>();
    }
    p.validate();
    return p;
}

} // namespace oceanlens
