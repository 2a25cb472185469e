#include "oceanlens/deatten.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oceanlens/error.hpp"
#include "oceanlens/filters.hpp"

namespace oceanlens {
namespace {

constexpr double kThird = 1.0 / 3.0;

std::size_t idx(LossTerm t) {
    return static_cast<std::size_t>(t);
}

double sign(double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

bool fits(const ImageRGB& img, int min_side) {
    return img.height() >= min_side && img.width() >= min_side;
}

void require_min_size(const ImageRGB& img, int min_side, const char* what) {
    if (!fits(img, min_side)) {
        throw InvalidArgument(std::string(what) + " needs images of at least " + std::to_string(min_side) + "x" +
                              std::to_string(min_side));
    }
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

// Population standard deviation, two-pass.
double stddev(std::span<const double> v, double m) {
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / static_cast<double>(v.size()));
}

std::vector<double> filtered(std::span<const double> in, int h, int w, const Kernel3& k) {
    std::vector<double> out(in.size());
    convolve3x3(in, h, w, k, out);
    return out;
}

std::vector<double> log_response(std::span<const double> in, int h, int w) {
    const std::vector<double> smooth = filtered(in, h, w, kGaussian3);
    return filtered(smooth, h, w, kLaplacian);
}

} // namespace

DeattenParams DeattenParams::uniform(int terms, double scale, double decay) {
    if (terms < 1) {
        throw InvalidArgument("deattenuation model needs at least one term");
    }
    DeattenParams p;
    p.terms = terms;
    for (int c = 0; c < kChannels; ++c) {
        p.scale[c].assign(terms, scale);
        p.decay[c].assign(terms, decay);
    }
    return p;
}

std::vector<double> DeattenParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(2 * kChannels * static_cast<std::size_t>(terms));
    for (int c = 0; c < kChannels; ++c) {
        flat.insert(flat.end(), scale[c].begin(), scale[c].end());
        flat.insert(flat.end(), decay[c].begin(), decay[c].end());
    }
    return flat;
}

DeattenParams DeattenParams::unflatten(int terms, std::span<const double> flat) {
    if (terms < 1 || flat.size() != 2 * kChannels * static_cast<std::size_t>(terms)) {
        throw InvalidArgument("flat deattenuation parameter vector has the wrong length");
    }
    DeattenParams p;
    p.terms = terms;
    auto it = flat.begin();
    for (int c = 0; c < kChannels; ++c) {
        p.scale[c].assign(it, it + terms);
        it += terms;
        p.decay[c].assign(it, it + terms);
        it += terms;
    }
    return p;
}

Bounds DeattenParams::bounds(int terms) {
    const std::size_t n = 2 * kChannels * static_cast<std::size_t>(terms);
    return Bounds{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

void DeattenParams::validate() const {
    if (terms < 1) {
        throw InvalidArgument("deattenuation model needs at least one term");
    }
    for (int c = 0; c < kChannels; ++c) {
        if (scale[c].size() != static_cast<std::size_t>(terms) || decay[c].size() != static_cast<std::size_t>(terms)) {
            throw InvalidArgument("deattenuation arrays must hold one entry per term");
        }
    }
    if (!bounds(terms).contains(flatten())) {
        throw InvalidArgument("deattenuation parameters outside [0,1]");
    }
}

void DeattenLossConfig::set_edge_losses(bool enabled) {
    const double w = enabled ? 1.0 : 0.0;
    weights[idx(LossTerm::sobel)] = w;
    weights[idx(LossTerm::log)] = w;
}

void DeattenLossConfig::validate() const {
    if (!(sat_target > 0.0 && sat_target <= 1.0)) {
        throw InvalidArgument("sat_target must lie in (0,1]");
    }
    if (!(intensity_target >= 0.0 && intensity_target <= 1.0)) {
        throw InvalidArgument("intensity_target must lie in [0,1]");
    }
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) {
            throw InvalidArgument("loss term weights must be finite and non-negative");
        }
    }
    if (!(alpha_cap > 1.0)) {
        throw InvalidArgument("alpha_cap must exceed 1");
    }
}

FactorMap predict_deattenuation(const DeattenParams& params, const DepthMap& depth, double alpha_cap) {
    FactorMap alpha(depth.height(), depth.width());
    const auto z = depth.values();
    for (int c = 0; c < kChannels; ++c) {
        auto dst = alpha.channel(c);
        for (std::size_t i = 0; i < z.size(); ++i) {
            double coeff = 0.0;
            for (int k = 0; k < params.terms; ++k) {
                coeff += params.scale[c][k] * std::exp(-params.decay[c][k] * z[i]);
            }
            dst[i] = std::min(std::exp(z[i] * coeff), alpha_cap);
        }
    }
    return alpha;
}

SignedImage reconstruct(const SignedImage& direct, const FactorMap& alpha) {
    require_same_shape(direct, alpha, "reconstruct");
    SignedImage out = direct;
    auto dst = out.values();
    const auto a = alpha.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] *= a[i];
    }
    return out;
}

double saturation_loss(const SignedImage& img, double sat_target) {
    double total = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        double s = 0.0;
        for (double v : img.channel(c)) {
            const double e = std::max(0.0, -v) + std::max(0.0, v - sat_target);
            s += e * e;
        }
        total += s / static_cast<double>(img.pixels());
    }
    return total * kThird;
}

double intensity_loss(const SignedImage& img, double intensity_target) {
    double total = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        const double d = mean(img.channel(c)) - intensity_target;
        total += d * d;
    }
    return total * kThird;
}

double variation_loss(const SignedImage& reconstructed, const SignedImage& direct) {
    require_same_shape(reconstructed, direct, "variation_loss");
    double total = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        const auto r = reconstructed.channel(c);
        const auto d = direct.channel(c);
        const double diff = stddev(r, mean(r)) - stddev(d, mean(d));
        total += diff * diff;
    }
    return total * kThird;
}

double sobel_loss(const SignedImage& reconstructed, const SignedImage& direct) {
    require_same_shape(reconstructed, direct, "sobel_loss");
    require_min_size(reconstructed, 3, "sobel_loss");
    const int h = reconstructed.height();
    const int w = reconstructed.width();
    double total = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        const auto rx = filtered(reconstructed.channel(c), h, w, kSobelX);
        const auto ry = filtered(reconstructed.channel(c), h, w, kSobelY);
        const auto dx = filtered(direct.channel(c), h, w, kSobelX);
        const auto dy = filtered(direct.channel(c), h, w, kSobelY);
        double s = 0.0;
        for (std::size_t i = 0; i < rx.size(); ++i) {
            s += std::abs(rx[i] - dx[i]) + std::abs(ry[i] - dy[i]);
        }
        total += s / static_cast<double>(rx.size());
    }
    return total * kThird;
}

double log_loss(const SignedImage& reconstructed, const SignedImage& direct) {
    require_same_shape(reconstructed, direct, "log_loss");
    require_min_size(reconstructed, 5, "log_loss");
    const int h = reconstructed.height();
    const int w = reconstructed.width();
    double total = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        const auto r = log_response(reconstructed.channel(c), h, w);
        const auto d = log_response(direct.channel(c), h, w);
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            s += std::abs(r[i] - d[i]);
        }
        total += s / static_cast<double>(r.size());
    }
    return total * kThird;
}

LossBreakdown deatten_loss(const SignedImage& reconstructed, const SignedImage& direct, const DeattenLossConfig& cfg) {
    cfg.validate();
    require_same_shape(reconstructed, direct, "deatten_loss");
    LossBreakdown b;
    b.terms[idx(LossTerm::saturation)] = saturation_loss(reconstructed, cfg.sat_target);
    b.terms[idx(LossTerm::intensity)] = intensity_loss(reconstructed, cfg.intensity_target);
    b.terms[idx(LossTerm::variation)] = variation_loss(reconstructed, direct);
    if (cfg.weight(LossTerm::sobel) != 0.0 || fits(direct, 3)) {
        b.terms[idx(LossTerm::sobel)] = sobel_loss(reconstructed, direct);
    }
    if (cfg.weight(LossTerm::log) != 0.0 || fits(direct, 5)) {
        b.terms[idx(LossTerm::log)] = log_loss(reconstructed, direct);
    }
    for (std::size_t t = 0; t < kLossTerms; ++t) {
        b.total += cfg.weights[t] * b.terms[t];
    }
    return b;
}

DeattenObjective::DeattenObjective(SignedImage direct, DepthMap depth, DeattenLossConfig cfg)
    : direct_(std::move(direct)), depth_(std::move(depth)), cfg_(cfg) {
    cfg_.validate();
    require_aligned(direct_, depth_, "DeattenObjective");
    if (cfg_.weight(LossTerm::sobel) != 0.0) {
        require_min_size(direct_, 3, "sobel_loss");
    }
    if (cfg_.weight(LossTerm::log) != 0.0) {
        require_min_size(direct_, 5, "log_loss");
    }
    const int h = direct_.height();
    const int w = direct_.width();
    for (int c = 0; c < kChannels; ++c) {
        const auto d = direct_.channel(c);
        direct_resp_.sd[c] = stddev(d, mean(d));
        if (fits(direct_, 3)) {
            direct_resp_.sobel_x[c] = filtered(d, h, w, kSobelX);
            direct_resp_.sobel_y[c] = filtered(d, h, w, kSobelY);
        }
        if (fits(direct_, 5)) {
            direct_resp_.log[c] = log_response(d, h, w);
        }
    }
}

LossBreakdown DeattenObjective::evaluate(const SignedImage& recon, const Responses& rr, SignedImage* grad) const {
    const double n = static_cast<double>(recon.pixels());
    const int h = recon.height();
    const int w = recon.width();
    LossBreakdown b;
    std::vector<double> scratch(recon.pixels());

    for (int c = 0; c < kChannels; ++c) {
        const auto j = recon.channel(c);
        std::span<double> g = grad ? grad->channel(c) : std::span<double>{};

        // saturation
        {
            const double wt = cfg_.weight(LossTerm::saturation) * kThird / n;
            double s = 0.0;
            for (std::size_t i = 0; i < j.size(); ++i) {
                const double e = std::max(0.0, -j[i]) + std::max(0.0, j[i] - cfg_.sat_target);
                s += e * e;
                if (grad && e > 0.0) {
                    g[i] += wt * 2.0 * e * (j[i] < 0.0 ? -1.0 : 1.0);
                }
            }
            b.terms[idx(LossTerm::saturation)] += s / n;
        }

        const double m = mean(j);
        // intensity
        {
            const double d = m - cfg_.intensity_target;
            b.terms[idx(LossTerm::intensity)] += d * d;
            if (grad) {
                const double gi = cfg_.weight(LossTerm::intensity) * kThird * 2.0 * d / n;
                for (double& gv : g) {
                    gv += gi;
                }
            }
        }
        // variation
        {
            const double sd = rr.sd[c];
            const double diff = sd - direct_resp_.sd[c];
            b.terms[idx(LossTerm::variation)] += diff * diff;
            if (grad && sd > 0.0) {
                const double k = cfg_.weight(LossTerm::variation) * kThird * 2.0 * diff / (n * sd);
                for (std::size_t i = 0; i < j.size(); ++i) {
                    g[i] += k * (j[i] - m);
                }
            }
        }
        // sobel
        if (!rr.sobel_x[c].empty()) {
            const bool active = grad && cfg_.weight(LossTerm::sobel) != 0.0;
            const double k = cfg_.weight(LossTerm::sobel) * kThird / n;
            double s = 0.0;
            const Kernel3* kernels[2] = {&kSobelX, &kSobelY};
            const std::vector<double>* rj[2] = {&rr.sobel_x[c], &rr.sobel_y[c]};
            const std::vector<double>* rd[2] = {&direct_resp_.sobel_x[c], &direct_resp_.sobel_y[c]};
            for (int axis = 0; axis < 2; ++axis) {
                for (std::size_t i = 0; i < scratch.size(); ++i) {
                    const double e = (*rj[axis])[i] - (*rd[axis])[i];
                    s += std::abs(e);
                    scratch[i] = k * sign(e);
                }
                if (active) {
                    convolve3x3_adjoint(scratch, h, w, *kernels[axis], g);
                }
            }
            b.terms[idx(LossTerm::sobel)] += s / n;
        }
        // laplacian of gaussian
        if (!rr.log[c].empty()) {
            const bool active = grad && cfg_.weight(LossTerm::log) != 0.0;
            const double k = cfg_.weight(LossTerm::log) * kThird / n;
            double s = 0.0;
            for (std::size_t i = 0; i < scratch.size(); ++i) {
                const double e = rr.log[c][i] - direct_resp_.log[c][i];
                s += std::abs(e);
                scratch[i] = k * sign(e);
            }
            if (active) {
                std::vector<double> through_laplacian(scratch.size(), 0.0);
                convolve3x3_adjoint(scratch, h, w, kLaplacian, through_laplacian);
                convolve3x3_adjoint(through_laplacian, h, w, kGaussian3, g);
            }
            b.terms[idx(LossTerm::log)] += s / n;
        }
    }
    for (double& t : b.terms) {
        t *= kThird;
    }
    for (std::size_t t = 0; t < kLossTerms; ++t) {
        b.total += cfg_.weights[t] * b.terms[t];
    }
    return b;
}

namespace {

template <typename Resp>
void fill_responses(const SignedImage& img, Resp& r) {
    const int h = img.height();
    const int w = img.width();
    for (int c = 0; c < kChannels; ++c) {
        const auto v = img.channel(c);
        r.sd[c] = stddev(v, mean(v));
        if (fits(img, 3)) {
            r.sobel_x[c] = filtered(v, h, w, kSobelX);
            r.sobel_y[c] = filtered(v, h, w, kSobelY);
        }
        if (fits(img, 5)) {
            r.log[c] = log_response(v, h, w);
        }
    }
}

} // namespace

LossBreakdown DeattenObjective::loss(const DeattenParams& params) const {
    const SignedImage recon = reconstruct(direct_, predict_deattenuation(params, depth_, cfg_.alpha_cap));
    Responses rr;
    fill_responses(recon, rr);
    return evaluate(recon, rr, nullptr);
}

DeattenGradient DeattenObjective::gradient(const DeattenParams& params) const {
    const int terms = params.terms;
    const auto z = depth_.values();
    const std::size_t n = z.size();

    // alpha and the per-term exponentials, kept for the chain rule
    FactorMap alpha(depth_.height(), depth_.width());
    std::vector<double> decay_exp(static_cast<std::size_t>(kChannels) * n * terms);
    std::vector<char> capped(static_cast<std::size_t>(kChannels) * n, 0);
    for (int c = 0; c < kChannels; ++c) {
        auto a = alpha.channel(c);
        for (std::size_t i = 0; i < n; ++i) {
            double coeff = 0.0;
            for (int k = 0; k < terms; ++k) {
                const double e = std::exp(-params.decay[c][k] * z[i]);
                decay_exp[(c * n + i) * terms + k] = e;
                coeff += params.scale[c][k] * e;
            }
            const double raw = std::exp(z[i] * coeff);
            if (raw > cfg_.alpha_cap) {
                a[i] = cfg_.alpha_cap;
                capped[c * n + i] = 1;
            } else {
                a[i] = raw;
            }
        }
    }
    const SignedImage recon = reconstruct(direct_, alpha);
    Responses rr;
    fill_responses(recon, rr);
    SignedImage grad_recon(recon.height(), recon.width(), 0.0);

    DeattenGradient out;
    out.loss = evaluate(recon, rr, &grad_recon);
    out.grad = DeattenParams::uniform(terms, 0.0, 0.0);

    for (int c = 0; c < kChannels; ++c) {
        const auto g = grad_recon.channel(c);
        const auto d = direct_.channel(c);
        const auto a = alpha.channel(c);
        for (std::size_t i = 0; i < n; ++i) {
            if (capped[c * n + i]) {
                continue;
            }
            // dL/dalpha scaled by dalpha/d(coeff) = alpha * z
            const double dl_dcoeff = g[i] * d[i] * a[i] * z[i];
            if (dl_dcoeff == 0.0) {
                continue;
            }
            for (int k = 0; k < terms; ++k) {
                const double e = decay_exp[(c * n + i) * terms + k];
                out.grad.scale[c][k] += dl_dcoeff * e;
                out.grad.decay[c][k] -= dl_dcoeff * params.scale[c][k] * z[i] * e;
            }
        }
    }
    return out;
}

DeattenGradient deatten_loss_grad(const DeattenParams& params, const SignedImage& direct, const DepthMap& depth,
                                  const DeattenLossConfig& cfg) {
    return DeattenObjective(direct, depth, cfg).gradient(params);
}

nlohmann::json deatten_to_json(const DeattenParams& p) {
    nlohmann::json channels = nlohmann::json::array();
    for (int c = 0; c < kChannels; ++c) {
        channels.push_back({{"a_prime", p.scale[c]}, {"a", p.decay[c]}});
    }
    return {{"model", "deattenuation"},
            {"terms", p.terms},
            {"bounds", {{"a_prime", {0.0, 1.0}}, {"a", {0.0, 1.0}}}},
            {"channels", channels}};
}

DeattenParams deatten_from_json(const nlohmann::json& j) {
    if (j.value("model", "") != "deattenuation") {
        throw InvalidArgument("checkpoint is not a deattenuation model");
    }
    DeattenParams p;
    p.terms = j.at("terms").get<int>();
    const auto& channels = j.at("channels");
    if (channels.size() != kChannels) {
        throw InvalidArgument("deattenuation checkpoint needs 3 channels");
    }
    for (int c = 0; c < kChannels; ++c) {
        p.scale[c] = channels[c].at("a_prime").get<std::vector<double>>();
        p.decay[c] = channels[c].at("a").get<std::vector<double>>();
    }
    p.validate();
    return p;
}

nlohmann::json breakdown_to_json(const LossBreakdown& b) {
    return {{"sat", b.term(LossTerm::saturation)}, {"int", b.term(LossTerm::intensity)},
            {"var", b.term(LossTerm::variation)},  {"sobel", b.term(LossTerm::sobel)},
            {"log", b.term(LossTerm::log)},        {"total", b.total}};
}

} // namespace oceanlens
