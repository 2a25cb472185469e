#include "oceanlens/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "oceanlens/error.hpp"

namespace oceanlens {

void Bounds::project(std::span<double> x) const {
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = std::clamp(x[i], lower[i], upper[i]);
    }
}

bool Bounds::contains(std::span<const double> x) const {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= lower[i] && x[i] <= upper[i])) {
            return false;
        }
    }
    return true;
}

void OptimConfig::validate() const {
    if (!(step_size > 0.0) || !(epsilon > 0.0) || !(rel_tol >= 0.0)) {
        throw InvalidArgument("optimizer step_size and epsilon must be positive, rel_tol non-negative");
    }
    if (!(moment_decay_1 > 0.0 && moment_decay_1 < 1.0) || !(moment_decay_2 > 0.0 && moment_decay_2 < 1.0)) {
        throw InvalidArgument("optimizer moment decays must lie in (0,1)");
    }
    if (max_iters < 1 || window < 1) {
        throw InvalidArgument("optimizer max_iters must be >= 1 and window >= 1");
    }
}

std::string to_string(StopReason r) {
    return r == StopReason::converged ? "converged" : "max_iters";
}

namespace {

void require_finite(double loss, std::span<const double> grad, int iteration) {
    if (!std::isfinite(loss)) {
        throw NonFiniteError("non-finite loss", iteration);
    }
    for (double g : grad) {
        if (!std::isfinite(g)) {
            throw NonFiniteError("non-finite gradient", iteration);
        }
    }
}

} // namespace

FitResult fit(std::vector<double> x, const Bounds& bounds, const GradFn& grad_fn, const OptimConfig& cfg,
              const IterationObserver& observer) {
    cfg.validate();
    if (bounds.lower.size() != x.size() || bounds.upper.size() != x.size()) {
        throw InvalidArgument("bounds do not match parameter count");
    }
    bounds.project(x);

    const std::size_t n = x.size();
    std::vector<double> grad(n), m(n, 0.0), v(n, 0.0);
    FitTrace trace;
    double decay1_pow = 1.0;
    double decay2_pow = 1.0;

    for (int it = 0; it < cfg.max_iters; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double loss = grad_fn(x, grad);
        require_finite(loss, grad, it);
        trace.losses.push_back(loss);
        if (observer) {
            observer(it, loss);
        }

        const std::size_t k = trace.losses.size();
        if (k > static_cast<std::size_t>(cfg.window)) {
            const double past = trace.losses[k - 1 - cfg.window];
            if (std::abs(past - loss) <= cfg.rel_tol * std::abs(past)) {
                trace.stop = StopReason::converged;
                break;
            }
        }

        decay1_pow *= cfg.moment_decay_1;
        decay2_pow *= cfg.moment_decay_2;
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = cfg.moment_decay_1 * m[i] + (1.0 - cfg.moment_decay_1) * grad[i];
            v[i] = cfg.moment_decay_2 * v[i] + (1.0 - cfg.moment_decay_2) * grad[i] * grad[i];
            const double m_hat = m[i] / (1.0 - decay1_pow);
            const double v_hat = v[i] / (1.0 - decay2_pow);
            x[i] -= cfg.step_size * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
        bounds.project(x);
        ++trace.iterations;
    }

    std::fill(grad.begin(), grad.end(), 0.0);
    trace.final_loss = grad_fn(x, grad);
    require_finite(trace.final_loss, grad, trace.iterations);
    return {std::move(x), std::move(trace)};
}

std::vector<double> finite_difference_gradient(const LossFn& loss_fn, std::span<const double> params, double h) {
    if (!(h > 0.0)) {
        throw InvalidArgument("finite-difference step must be positive");
    }
    std::vector<double> x(params.begin(), params.end());
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double orig = x[k];
        x[k] = orig + h;
        const double up = loss_fn(x);
        x[k] = orig - h;
        const double down = loss_fn(x);
        x[k] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NonFiniteError("finite difference evaluated a non-finite loss at coordinate " + std::to_string(k),
                                 0);
        }
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

nlohmann::json trace_to_json(const FitTrace& t) {
    return {{"iterations", t.iterations},
            {"final_loss", t.final_loss},
            {"stop_reason", to_string(t.stop)},
            {"losses", t.losses}};
}

} // namespace oceanlens
