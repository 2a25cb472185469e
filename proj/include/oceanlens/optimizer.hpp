#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace oceanlens {

// Box constraints over a flat parameter vector.
struct Bounds {
    std::vector<double> lower;
    std::vector<double> upper;

    void project(std::span<double> x) const;
    bool contains(std::span<const double> x) const;
};

struct OptimConfig {
    double step_size = 0.01;
    double moment_decay_1 = 0.9;
    double moment_decay_2 = 0.999;
    double epsilon = 1e-8;
    int max_iters = 1000;
    double rel_tol = 1e-6; // relative loss change over `window` iterations
    int window = 10;

    void validate() const;
};

enum class StopReason { converged, max_iters };

std::string to_string(StopReason r);

struct FitTrace {
    std::vector<double> losses; // loss at the start of each iteration
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    StopReason stop = StopReason::max_iters;
};

// Evaluates the loss at `params` and writes its gradient into `grad`.
using GradFn = std::function<double(std::span<const double> params, std::span<double> grad)>;
using LossFn = std::function<double(std::span<const double> params)>;
// Called after every evaluated iteration with (iteration, loss).
using IterationObserver = std::function<void(int, double)>;

struct FitResult {
    std::vector<double> params;
    FitTrace trace;
};

// Bias-corrected adaptive-moment descent with projection onto `bounds` after
// every step. Stops when |L_{k-window} - L_k| <= rel_tol * |L_{k-window}| or
// after max_iters updates. Throws NonFiniteError on a NaN/inf loss or gradient.
FitResult fit(std::vector<double> init, const Bounds& bounds, const GradFn& grad_fn, const OptimConfig& cfg,
              const IterationObserver& observer = {});

// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h per coordinate.
std::vector<double> finite_difference_gradient(const LossFn& loss_fn, std::span<const double> params, double h);

nlohmann::json trace_to_json(const FitTrace& t);

} // namespace oceanlens
