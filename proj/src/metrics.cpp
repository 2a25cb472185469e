#include "oceanlens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "oceanlens/error.hpp"
#include "oceanlens/filters.hpp"

namespace oceanlens {
namespace {

double trimmed_mean(std::vector<double> v, double alpha) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    const auto lo = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(k)));
    const auto hi = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(k)));
    std::size_t begin = 0;
    std::size_t end = k;
    if (lo + hi < k) {
        begin = lo;
        end = k - hi;
    }
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        s += v[i];
    }
    return s / static_cast<double>(end - begin);
}

double spread(const std::vector<double>& v, double mu) {
    double s = 0.0;
    for (double x : v) {
        s += (x - mu) * (x - mu);
    }
    return s / static_cast<double>(v.size());
}

std::vector<double> luminance(const ImageRGB& img, const std::array<double, kChannels>& w) {
    std::vector<double> y(img.pixels());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = w[0] * img.channel(0)[i] + w[1] * img.channel(1)[i] + w[2] * img.channel(2)[i];
    }
    return y;
}

struct BlockGrid {
    int rows;
    int cols;
};

BlockGrid block_grid(const ImageRGB& img, int block) {
    const BlockGrid g{img.height() / block, img.width() / block};
    if (g.rows < 1 || g.cols < 1) {
        throw InvalidArgument("image is smaller than one " + std::to_string(block) + "x" + std::to_string(block) +
                              " block");
    }
    return g;
}

// Calls fn(min, max) for every full block, row-major over blocks.
template <typename Fn>
void for_each_block(std::span<const double> v, int width, int block, const BlockGrid& grid, Fn&& fn) {
    for (int by = 0; by < grid.rows; ++by) {
        for (int bx = 0; bx < grid.cols; ++bx) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (int y = by * block; y < (by + 1) * block; ++y) {
                for (int x = bx * block; x < (bx + 1) * block; ++x) {
                    const double p = v[static_cast<std::size_t>(y) * width + x];
                    lo = std::min(lo, p);
                    hi = std::max(hi, p);
                }
            }
            fn(lo, hi);
        }
    }
}

double eme(std::span<const double> v, int width, int block, const BlockGrid& grid) {
    double acc = 0.0;
    for_each_block(v, width, block, grid, [&](double lo, double hi) {
        if (lo > 0.0 && hi > 0.0) {
            acc += std::log(hi / lo);
        }
    });
    return 2.0 / (static_cast<double>(grid.rows) * grid.cols) * acc;
}

// 1-D valid correlation along rows then columns with the same taps.
std::vector<double> separable_valid(std::span<const double> in, int h, int w, const std::vector<double>& taps) {
    const int n = static_cast<int>(taps.size());
    const int ow = w - n + 1;
    const int oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) {
                s += taps[k] * in[static_cast<std::size_t>(y) * w + x + k];
            }
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) {
                s += taps[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
            }
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

std::string fmt(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

void UIQMConfig::validate() const {
    if (!std::isfinite(c1) || !std::isfinite(c2) || !std::isfinite(c3)) {
        throw InvalidArgument("UIQM coefficients must be finite");
    }
    if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) {
        throw InvalidArgument("UIQM trim_fraction must lie in [0, 0.5)");
    }
    if (block_size < 2) {
        throw InvalidArgument("UIQM block_size must be at least 2");
    }
}

double gray_axis_angle_degrees(double r, double g, double b) {
    const double dot = r + g + b;
    // |v x (1,1,1)|
    const double cx = g - b;
    const double cy = b - r;
    const double cz = r - g;
    const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
    if (r == 0.0 && g == 0.0 && b == 0.0) {
        throw InvalidArgument("gray-axis angle of a zero color is undefined");
    }
    return std::atan2(cross, dot) * 180.0 / std::numbers::pi;
}

GpmaeResult gpmae(const ImageRGB& img, const PatchAnnotation& patches) {
    patches.validate(img.height(), img.width());
    GpmaeResult out;
    double sum = 0.0;
    for (std::size_t p = 0; p < kGrayPatchCount; ++p) {
        const PixelRect& r = patches.patches[p];
        std::array<double, kChannels> m{};
        for (int c = 0; c < kChannels; ++c) {
            double s = 0.0;
            for (int y = r.y0; y < r.y1; ++y) {
                for (int x = r.x0; x < r.x1; ++x) {
                    s += img.at(c, y, x);
                }
            }
            m[c] = s / static_cast<double>(r.area());
        }
        try {
            out.patch_degrees[p] = gray_axis_angle_degrees(m[0], m[1], m[2]);
        } catch (const InvalidArgument&) {
            throw InvalidArgument("gray patch " + std::to_string(p) + " has a zero mean color");
        }
        sum += out.patch_degrees[p];
    }
    out.mean_degrees = sum / static_cast<double>(kGrayPatchCount);
    return out;
}

double uicm(const ImageRGB& img, const UIQMConfig& cfg) {
    cfg.validate();
    const std::size_t n = img.pixels();
    std::vector<double> rg(n), yb(n);
    const auto r = img.channel(0);
    const auto g = img.channel(1);
    const auto b = img.channel(2);
    for (std::size_t i = 0; i < n; ++i) {
        rg[i] = r[i] - g[i];
        yb[i] = (r[i] + g[i]) / 2.0 - b[i];
    }
    const double mu_rg = trimmed_mean(rg, cfg.trim_fraction);
    const double mu_yb = trimmed_mean(yb, cfg.trim_fraction);
    const double var_rg = spread(rg, mu_rg);
    const double var_yb = spread(yb, mu_yb);
    return cfg.uicm_chroma_weight * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) +
           cfg.uicm_spread_weight * std::sqrt(var_rg + var_yb);
}

double uism(const ImageRGB& img, const UIQMConfig& cfg) {
    cfg.validate();
    const BlockGrid grid = block_grid(img, cfg.block_size);
    const int h = img.height();
    const int w = img.width();
    std::vector<double> gx(img.pixels()), gy(img.pixels()), edge(img.pixels());
    double total = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        const auto ch = img.channel(c);
        convolve3x3(ch, h, w, kSobelX, gx);
        convolve3x3(ch, h, w, kSobelY, gy);
        for (std::size_t i = 0; i < edge.size(); ++i) {
            edge[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]) * ch[i];
        }
        total += cfg.luminance_weights[c] * eme(edge, w, cfg.block_size, grid);
    }
    return total;
}

double uiconm(const ImageRGB& img, const UIQMConfig& cfg) {
    cfg.validate();
    const BlockGrid grid = block_grid(img, cfg.block_size);
    const std::vector<double> y = luminance(img, cfg.luminance_weights);
    double acc = 0.0;
    for_each_block(y, img.width(), cfg.block_size, grid, [&](double lo, double hi) {
        const double top = hi - lo;
        const double bottom = hi + lo;
        if (top > 0.0 && bottom > 0.0) {
            const double contrast = top / bottom;
            acc += contrast * std::log(contrast);
        }
    });
    return -acc / (static_cast<double>(grid.rows) * grid.cols);
}

double uiqm_combine(double uicm_value, double uism_value, double uiconm_value, const UIQMConfig& cfg) {
    return cfg.c1 * uicm_value + cfg.c2 * uism_value + cfg.c3 * uiconm_value;
}

UiqmResult uiqm(const ImageRGB& img, const UIQMConfig& cfg) {
    UiqmResult r;
    r.uicm = uicm(img, cfg);
    r.uism = uism(img, cfg);
    r.uiconm = uiconm(img, cfg);
    r.uiqm = uiqm_combine(r.uicm, r.uism, r.uiconm, cfg);
    return r;
}

double psnr(const ImageRGB& test, const ImageRGB& reference) {
    require_same_shape(test, reference, "psnr");
    const auto a = test.values();
    const auto b = reference.values();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    const double mse = s / static_cast<double>(a.size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageRGB& test, const ImageRGB& reference, const SsimConfig& cfg) {
    require_same_shape(test, reference, "ssim");
    if (test.height() < cfg.window || test.width() < cfg.window) {
        throw InvalidArgument("ssim needs images of at least " + std::to_string(cfg.window) + "x" +
                              std::to_string(cfg.window));
    }
    std::vector<double> taps(cfg.window);
    const double centre = (cfg.window - 1) / 2.0;
    double tap_sum = 0.0;
    for (int k = 0; k < cfg.window; ++k) {
        taps[k] = std::exp(-(k - centre) * (k - centre) / (2.0 * cfg.sigma * cfg.sigma));
        tap_sum += taps[k];
    }
    for (double& t : taps) {
        t /= tap_sum;
    }

    const int h = test.height();
    const int w = test.width();
    const std::vector<double> x = luminance(test, cfg.luminance_weights);
    const std::vector<double> y = luminance(reference, cfg.luminance_weights);
    std::vector<double> xx(x.size()), yy(y.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = separable_valid(x, h, w, taps);
    const auto my = separable_valid(y, h, w, taps);
    const auto exx = separable_valid(xx, h, w, taps);
    const auto eyy = separable_valid(yy, h, w, taps);
    const auto exy = separable_valid(xy, h, w, taps);

    const double c1 = (cfg.k1) * (cfg.k1);
    const double c2 = (cfg.k2) * (cfg.k2);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = exx[i] - mx[i] * mx[i];
        const double vy = eyy[i] - my[i] * my[i];
        const double cov = exy[i] - mx[i] * my[i];
        const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
        const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        total += num / den;
    }
    return total / static_cast<double>(mx.size());
}

double sobel_edge_mae(const ImageRGB& a, const ImageRGB& b) {
    require_same_shape(a, b, "sobel_edge_mae");
    const int h = a.height();
    const int w = a.width();
    std::vector<double> ax(a.pixels()), ay(a.pixels()), bx(a.pixels()), by(a.pixels());
    double s = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        convolve3x3(a.channel(c), h, w, kSobelX, ax);
        convolve3x3(a.channel(c), h, w, kSobelY, ay);
        convolve3x3(b.channel(c), h, w, kSobelX, bx);
        convolve3x3(b.channel(c), h, w, kSobelY, by);
        for (std::size_t i = 0; i < ax.size(); ++i) {
            s += std::abs(std::hypot(ax[i], ay[i]) - std::hypot(bx[i], by[i]));
        }
    }
    return s / static_cast<double>(kChannels * a.pixels());
}

MetricReport evaluate_metrics(std::string name, const ImageRGB& img, const UIQMConfig& cfg,
                              const ImageRGB* reference, const PatchAnnotation* patches) {
    MetricReport r;
    r.name = std::move(name);
    r.uiqm = uiqm(img, cfg);
    if (patches) {
        r.gpmae = gpmae(img, *patches);
    }
    if (reference) {
        r.psnr_db = psnr(img, *reference);
        r.ssim = ssim(img, *reference);
    }
    return r;
}

std::string format_db(double v) {
    return fmt(v);
}

nlohmann::json report_to_json(const MetricReport& r) {
    nlohmann::json j = {{"name", r.name},
                        {"uiqm", r.uiqm.uiqm},
                        {"uicm", r.uiqm.uicm},
                        {"uism", r.uiqm.uism},
                        {"uiconm", r.uiqm.uiconm}};
    if (r.gpmae) {
        j["gpmae_degrees"] = r.gpmae->mean_degrees;
        j["gpmae_patch_degrees"] = r.gpmae->patch_degrees;
    }
    if (r.psnr_db) {
        if (std::isinf(*r.psnr_db)) {
            j["psnr_db"] = "inf";
        } else {
            j["psnr_db"] = *r.psnr_db;
        }
    }
    if (r.ssim) {
        j["ssim"] = *r.ssim;
    }
    return j;
}

nlohmann::json uiqm_config_to_json(const UIQMConfig& cfg) {
    return {{"c1", cfg.c1},
            {"c2", cfg.c2},
            {"c3", cfg.c3},
            {"trim_fraction", cfg.trim_fraction},
            {"block_size", cfg.block_size},
            {"luminance_weights", cfg.luminance_weights},
            {"uicm_chroma_weight", cfg.uicm_chroma_weight},
            {"uicm_spread_weight", cfg.uicm_spread_weight}};
}

UIQMConfig uiqm_config_from_json(const nlohmann::json& j, UIQMConfig cfg) {
    cfg.c1 = j.value("c1", cfg.c1);
    cfg.c2 = j.value("c2", cfg.c2);
    cfg.c3 = j.value("c3", cfg.c3);
    cfg.trim_fraction = j.value("trim_fraction", cfg.trim_fraction);
    cfg.block_size = j.value("block_size", cfg.block_size);
    cfg.luminance_weights = j.value("luminance_weights", cfg.luminance_weights);
    cfg.uicm_chroma_weight = j.value("uicm_chroma_weight", cfg.uicm_chroma_weight);
    cfg.uicm_spread_weight = j.value("uicm_spread_weight", cfg.uicm_spread_weight);
    cfg.validate();
    return cfg;
}

std::string reports_to_csv(const std::vector<MetricReport>& reports) {
    const bool any_gpmae = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.gpmae.has_value(); });
    const bool any_ref = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.psnr_db.has_value(); });

    std::ostringstream out;
    out << "image";
    if (any_gpmae) {
        out << ",gpmae_deg";
    }
    out << ",uiqm,uicm,uism,uiconm";
    if (any_ref) {
        out << ",psnr_db,ssim";
    }
    out << '\n';

    struct Mean {
        double sum = 0.0;
        int n = 0;
        void add(double v) { sum += v, ++n; }
        std::string str() const { return n ? fmt(sum / n) : ""; }
    } gp, q, cm, sm, con, ps, ss;

    for (const MetricReport& r : reports) {
        out << r.name;
        if (any_gpmae) {
            out << ',';
            if (r.gpmae) {
                out << fmt(r.gpmae->mean_degrees);
                gp.add(r.gpmae->mean_degrees);
            }
        }
        out << ',' << fmt(r.uiqm.uiqm) << ',' << fmt(r.uiqm.uicm) << ',' << fmt(r.uiqm.uism) << ','
            << fmt(r.uiqm.uiconm);
        q.add(r.uiqm.uiqm);
        cm.add(r.uiqm.uicm);
        sm.add(r.uiqm.uism);
        con.add(r.uiqm.uiconm);
        if (any_ref) {
            out << ',';
            if (r.psnr_db) {
                out << fmt(*r.psnr_db);
                ps.add(*r.psnr_db);
            }
            out << ',';
            if (r.ssim) {
                out << fmt(*r.ssim);
                ss.add(*r.ssim);
            }
        }
        out << '\n';
    }
    if (!reports.empty()) {
        out << "mean";
        if (any_gpmae) {
            out << ',' << gp.str();
        }
        out << ',' << q.str() << ',' << cm.str() << ',' << sm.str() << ',' << con.str();
        if (any_ref) {
            out << ',' << ps.str() << ',' << ss.str();
        }
        out << '\n';
    }
    return out.str();
}

} // namespace oceanlens
