#include "oceanlens/pipeline.hpp"

#include <fstream>
#include <set>
#include <string>

#include "oceanlens/error.hpp"

namespace oceanlens {
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) {
        throw InvalidArgument("config section '" + where + "' must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) {
            throw InvalidArgument("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
        }
    }
}

const char* kTermKeys[kLossTerms] = {"sat", "int", "var", "sobel", "log"};

} // namespace

void PipelineConfig::validate() const {
    if (backscatter_layers < 1 || deatten_terms < 1) {
        throw InvalidArgument("layer counts must be at least 1");
    }
    huber.validate();
    deatten.validate();
    optim.validate();
    preprocess.validate();
    uiqm.validate();
    if (output_bits != 8 && output_bits != 16) {
        throw InvalidArgument("output.bits must be 8 or 16");
    }
    if (jobs < 1) {
        throw InvalidArgument("jobs must be at least 1");
    }
    if (!(depth.clamp_floor >= 0.0 && depth.clamp_floor < 1.0)) {
        throw InvalidArgument("depth.clamp_floor must lie in [0,1)");
    }
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
    nlohmann::json weights;
    for (std::size_t t = 0; t < kLossTerms; ++t) {
        weights[kTermKeys[t]] = cfg.deatten.weights[t];
    }
    return {
        {"backscatter", {{"layers", cfg.backscatter_layers},
                         {"huber", {{"delta", cfg.huber.delta}, {"beta", cfg.huber.beta}}}}},
        {"deattenuation", {{"terms", cfg.deatten_terms},
                           {"sat_target", cfg.deatten.sat_target},
                           {"intensity_target", cfg.deatten.intensity_target},
                           {"weights", weights},
                           {"alpha_cap", cfg.deatten.alpha_cap}}},
        {"optimizer", {{"step_size", cfg.optim.step_size},
                       {"moment_decay_1", cfg.optim.moment_decay_1},
                       {"moment_decay_2", cfg.optim.moment_decay_2},
                       {"epsilon", cfg.optim.epsilon},
                       {"max_iters", cfg.optim.max_iters},
                       {"rel_tol", cfg.optim.rel_tol},
                       {"window", cfg.optim.window}}},
        {"preprocess", {{"enabled", cfg.preprocess.enabled},
                        {"white_balance", cfg.preprocess.white_balance},
                        {"gamma", cfg.preprocess.gamma},
                        {"wb_clip", cfg.preprocess.wb_clip}}},
        {"uiqm", uiqm_config_to_json(cfg.uiqm)},
        {"depth", {{"invert", cfg.depth.invert}, {"clamp_floor", cfg.depth.clamp_floor}}},
        {"output", {{"bits", cfg.output_bits}}},
        {"warm_start", cfg.warm_start},
        {"jobs", cfg.jobs},
    };
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    try {
        reject_unknown(j, {"backscatter", "deattenuation", "optimizer", "preprocess", "uiqm", "depth", "output",
                           "warm_start", "jobs"},
                       "");
        if (j.contains("backscatter")) {
            const auto& b = j["backscatter"];
            reject_unknown(b, {"layers", "huber"}, "backscatter");
            cfg.backscatter_layers = b.value("layers", cfg.backscatter_layers);
            if (b.contains("huber")) {
                reject_unknown(b["huber"], {"delta", "beta"}, "backscatter.huber");
                cfg.huber.delta = b["huber"].value("delta", cfg.huber.delta);
                cfg.huber.beta = b["huber"].value("beta", cfg.huber.beta);
            }
        }
        if (j.contains("deattenuation")) {
            const auto& d = j["deattenuation"];
            reject_unknown(d, {"terms", "sat_target", "intensity_target", "weights", "alpha_cap"}, "deattenuation");
            cfg.deatten_terms = d.value("terms", cfg.deatten_terms);
            cfg.deatten.sat_target = d.value("sat_target", cfg.deatten.sat_target);
            cfg.deatten.intensity_target = d.value("intensity_target", cfg.deatten.intensity_target);
            cfg.deatten.alpha_cap = d.value("alpha_cap", cfg.deatten.alpha_cap);
            if (d.contains("weights")) {
                const auto& w = d["weights"];
                reject_unknown(w, {kTermKeys[0], kTermKeys[1], kTermKeys[2], kTermKeys[3], kTermKeys[4]},
                               "deattenuation.weights");
                for (std::size_t t = 0; t < kLossTerms; ++t) {
                    cfg.deatten.weights[t] = w.value(kTermKeys[t], cfg.deatten.weights[t]);
                }
            }
        }
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            reject_unknown(o, {"step_size", "moment_decay_1", "moment_decay_2", "epsilon", "max_iters", "rel_tol",
                               "window"},
                           "optimizer");
            cfg.optim.step_size = o.value("step_size", cfg.optim.step_size);
            cfg.optim.moment_decay_1 = o.value("moment_decay_1", cfg.optim.moment_decay_1);
            cfg.optim.moment_decay_2 = o.value("moment_decay_2", cfg.optim.moment_decay_2);
            cfg.optim.epsilon = o.value("epsilon", cfg.optim.epsilon);
            cfg.optim.max_iters = o.value("max_iters", cfg.optim.max_iters);
            cfg.optim.rel_tol = o.value("rel_tol", cfg.optim.rel_tol);
            cfg.optim.window = o.value("window", cfg.optim.window);
        }
        if (j.contains("preprocess")) {
            const auto& p = j["preprocess"];
            reject_unknown(p, {"enabled", "white_balance", "gamma", "wb_clip"}, "preprocess");
            cfg.preprocess.enabled = p.value("enabled", cfg.preprocess.enabled);
            cfg.preprocess.white_balance = p.value("white_balance", cfg.preprocess.white_balance);
            cfg.preprocess.gamma = p.value("gamma", cfg.preprocess.gamma);
            cfg.preprocess.wb_clip = p.value("wb_clip", cfg.preprocess.wb_clip);
        }
        if (j.contains("uiqm")) {
            reject_unknown(j["uiqm"], {"c1", "c2", "c3", "trim_fraction", "block_size", "luminance_weights",
                                       "uicm_chroma_weight", "uicm_spread_weight"},
                           "uiqm");
            cfg.uiqm = uiqm_config_from_json(j["uiqm"], cfg.uiqm);
        }
        if (j.contains("depth")) {
            reject_unknown(j["depth"], {"invert", "clamp_floor"}, "depth");
            cfg.depth.invert = j["depth"].value("invert", cfg.depth.invert);
            cfg.depth.clamp_floor = j["depth"].value("clamp_floor", cfg.depth.clamp_floor);
        }
        if (j.contains("output")) {
            reject_unknown(j["output"], {"bits"}, "output");
            cfg.output_bits = j["output"].value("bits", cfg.output_bits);
        }
        cfg.warm_start = j.value("warm_start", cfg.warm_start);
        cfg.jobs = j.value("jobs", cfg.jobs);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read config " + path.string());
    }
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

BackscatterFit fit_backscatter(const ImageRGB& observed, const DepthMap& depth, BackscatterParams init,
                               const HuberConfig& huber, const OptimConfig& optim) {
    require_aligned(observed, depth, "fit_backscatter");
    init.project();
    const int layers = init.layers;
    GradFn grad = [&](std::span<const double> x, std::span<double> g) {
        const auto r = backscatter_loss_grad(BackscatterParams::unflatten(layers, x), observed, depth, huber);
        const auto flat = r.grad.flatten();
        std::copy(flat.begin(), flat.end(), g.begin());
        return r.loss;
    };
    FitResult r = fit(init.flatten(), BackscatterParams::bounds(layers), grad, optim);
    return {BackscatterParams::unflatten(layers, r.params), std::move(r.trace)};
}

DeattenFit fit_deattenuation(const DeattenObjective& objective, const DeattenParams& init, const OptimConfig& optim,
                             std::vector<LossBreakdown>* history) {
    const int terms = init.terms;
    LossBreakdown last;
    GradFn grad = [&](std::span<const double> x, std::span<double> g) {
        const auto r = objective.gradient(DeattenParams::unflatten(terms, x));
        const auto flat = r.grad.flatten();
        std::copy(flat.begin(), flat.end(), g.begin());
        last = r.loss;
        return r.loss.total;
    };
    IterationObserver record;
    if (history) {
        record = [&](int, double) { history->push_back(last); };
    }
    FitResult r = fit(init.flatten(), DeattenParams::bounds(terms), grad, optim, record);
    return {DeattenParams::unflatten(terms, r.params), std::move(r.trace)};
}

EnhanceResult enhance(const ImageRGB& observed, const DepthMap& depth, const PipelineConfig& cfg,
                      const WarmStart* warm) {
    cfg.validate();
    require_aligned(observed, depth, "enhance");
    const ImageRGB input = cfg.preprocess.enabled ? preprocess(observed, cfg.preprocess) : observed;

    EnhanceResult out;

    // Phase 1: backscatter.
    const BackscatterParams bs_init = warm ? warm->backscatter : init_backscatter(input, cfg.backscatter_layers);
    if (bs_init.layers != cfg.backscatter_layers) {
        throw InvalidArgument("warm-start backscatter layer count differs from configuration");
    }
    BackscatterFit bs = fit_backscatter(input, depth, bs_init, cfg.huber, cfg.optim);
    out.backscatter_params = std::move(bs.params);
    out.backscatter_trace = std::move(bs.trace);
    out.backscatter = predict_backscatter(out.backscatter_params, depth);

    // Phase 2: deattenuation against the frozen direct-signal estimate.
    const DeattenObjective objective(direct_residual(input, out.backscatter), depth, cfg.deatten);
    const DeattenParams dt_init = warm ? warm->deatten : DeattenParams::initial(cfg.deatten_terms);
    if (dt_init.terms != cfg.deatten_terms) {
        throw InvalidArgument("warm-start deattenuation term count differs from configuration");
    }
    DeattenFit dt = fit_deattenuation(objective, dt_init, cfg.optim, &out.deatten_history);
    out.deatten_params = std::move(dt.params);
    out.deatten_trace = std::move(dt.trace);
    out.final_breakdown = objective.loss(out.deatten_params);

    const FactorMap alpha = predict_deattenuation(out.deatten_params, depth, cfg.deatten.alpha_cap);
    out.enhanced = reconstruct(objective.direct(), alpha);
    out.clamp_events = out.enhanced.clamp_unit();
    return out;
}

} // namespace oceanlens
