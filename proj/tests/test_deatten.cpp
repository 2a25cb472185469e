#include <doctest.h>

#include <cmath>

#include "oceanlens/deatten.hpp"
#include "oceanlens/filters.hpp"
#include "oceanlens/optimizer.hpp"
#include "oceanlens/physics.hpp"
#include "support/gradcheck.hpp"
#include "support/scenes.hpp"

using namespace oceanlens;
using oceanlens::testing::random_depth;
using oceanlens::testing::random_image;
using oceanlens::testing::uniform;

namespace {

DeattenParams random_params(std::mt19937_64& rng, int terms) {
    DeattenParams p = DeattenParams::uniform(terms, 0, 0);
    for (int c = 0; c < kChannels; ++c) {
        for (int t = 0; t < terms; ++t) {
            p.scale[c][t] = uniform(rng, 0.1, 0.9);
            p.decay[c][t] = uniform(rng, 0.1, 0.9);
        }
    }
    return p;
}

double channel_sd(const ImageRGB& img, int c) {
    double mean = 0.0;
    for (double v : img.channel(c)) {
        mean += v;
    }
    mean /= static_cast<double>(img.pixels());
    double ss = 0.0;
    for (double v : img.channel(c)) {
        ss += (v - mean) * (v - mean);
    }
    return std::sqrt(ss / static_cast<double>(img.pixels()));
}

DeattenLossConfig only(LossTerm t) {
    DeattenLossConfig cfg;
    cfg.weights = {0, 0, 0, 0, 0};
    cfg.weights[static_cast<std::size_t>(t)] = 1.0;
    return cfg;
}

} // namespace

TEST_CASE("deattenuation factor examples") {
    std::mt19937_64 rng(40);
    const DepthMap depth = random_depth(rng, 3, 4);
    SUBCASE("zero scale means no amplification") {
        const FactorMap a = predict_deattenuation(DeattenParams::uniform(2, 0.0, 0.4), depth);
        for (double v : a.values()) {
            CHECK(v == 1.0);
        }
    }
    SUBCASE("zero range means no amplification") {
        const FactorMap a = predict_deattenuation(random_params(rng, 3), DepthMap(3, 4, 0.0));
        for (double v : a.values()) {
            CHECK(v == 1.0);
        }
    }
    SUBCASE("scalar oracle") {
        const FactorMap a = predict_deattenuation(DeattenParams::uniform(1, 1.0, 0.0), DepthMap(1, 1, 0.693147));
        CHECK(a.at(0, 0, 0) == doctest::Approx(std::exp(0.693147)).epsilon(1e-15));
        CHECK(std::abs(a.at(0, 0, 0) - 2.0) < 1e-5);
    }
    SUBCASE("factor is at least one and respects the cap") {
        const FactorMap a = predict_deattenuation(DeattenParams::uniform(1, 1.0, 0.0), DepthMap(1, 2, 10.0), 20.0);
        CHECK(a.at(1, 0, 1) == 20.0);
        const FactorMap b = predict_deattenuation(random_params(rng, 2), depth);
        for (double v : b.values()) {
            CHECK(v >= 1.0);
        }
    }
}

TEST_CASE("reconstruction") {
    std::mt19937_64 rng(41);
    const SignedImage direct = random_image(rng, 3, 3, -0.2, 1.0);
    CHECK(reconstruct(direct, FactorMap(3, 3, 1.0)) == direct);
    CHECK(reconstruct(SignedImage(1, 1, 0.25), FactorMap(1, 1, 2.0)).at(0, 0, 0) == 0.5);
    CHECK(reconstruct(SignedImage(1, 1, -0.25), FactorMap(1, 1, 2.0)).at(0, 0, 0) == -0.5);
    CHECK_THROWS_AS(reconstruct(direct, FactorMap(3, 2, 1.0)), ShapeError);
}

TEST_CASE("attenuate then reconstruct with the true parameters recovers the scene") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const auto scene = oceanlens::testing::make_scene(trial, 12, 16);
        SamplerRanges ranges;
        ranges.atten_terms = 2;
        FormationParams truth = sample_formation_params(rng, ranges);
        DeattenParams p = DeattenParams::uniform(2, 0, 0);
        for (int c = 0; c < kChannels; ++c) {
            p.scale[c] = truth.channel[c].atten_scale;
            p.decay[c] = truth.channel[c].atten_decay;
        }
        const SignedImage attenuated = attenuate(scene.clean, scene.depth, truth);
        const SignedImage recovered = reconstruct(attenuated, predict_deattenuation(p, scene.depth));
        for (std::size_t i = 0; i < recovered.values().size(); ++i) {
            CHECK(std::abs(recovered.values()[i] - scene.clean.values()[i]) < 1e-6);
        }
    }
}

TEST_CASE("saturation loss examples") {
    std::mt19937_64 rng(43);
    CHECK(saturation_loss(random_image(rng, 4, 4, 0.0, 0.9), 0.9) == 0.0);
    SignedImage img(1, 1, 0.5);
    img.at(1, 0, 0) = 1.2;
    CHECK(saturation_loss(img, 1.0) == doctest::Approx(0.04 / 3).epsilon(1e-14));
    img.at(1, 0, 0) = -0.3;
    CHECK(saturation_loss(img, 1.0) == doctest::Approx(0.03).epsilon(1e-14));
}

TEST_CASE("intensity loss examples") {
    SignedImage half(2, 2, 0.25);
    half.at(0, 0, 0) = half.at(1, 0, 1) = half.at(2, 1, 0) = 0.75;
    half.at(0, 1, 1) = half.at(1, 1, 0) = half.at(2, 0, 1) = 0.75;
    CHECK(intensity_loss(half, 0.5) == 0.0);
    CHECK(intensity_loss(SignedImage(3, 3, 0.7), 0.5) == doctest::Approx(0.04).epsilon(1e-14));

    std::mt19937_64 rng(44);
    const SignedImage img = random_image(rng, 7, 9, -0.1, 1.2);
    double expected = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        // Kahan-compensated mean as the oracle.
        double sum = 0.0, comp = 0.0;
        for (double v : img.channel(c)) {
            const double y = v - comp;
            const double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        const double mean = sum / static_cast<double>(img.pixels());
        expected += (mean - 0.3) * (mean - 0.3) / 3.0;
    }
    CHECK(std::abs(intensity_loss(img, 0.3) - expected) < 1e-12);
}

TEST_CASE("variation loss examples") {
    std::mt19937_64 rng(45);
    const SignedImage a = random_image(rng, 5, 6);
    CHECK(variation_loss(a, a) == 0.0);

    // Identical channels with population SD exactly 0.1.
    SignedImage spread(2, 2, 0.4);
    for (int c = 0; c < kChannels; ++c) {
        spread.at(c, 0, 0) = spread.at(c, 1, 1) = 0.5;
        spread.at(c, 0, 1) = spread.at(c, 1, 0) = 0.3;
    }
    CHECK(variation_loss(spread, SignedImage(2, 2, 0.2)) == doctest::Approx(0.01).epsilon(1e-12));

    const SignedImage b = random_image(rng, 5, 6, -0.2, 1.3);
    double expected = 0.0;
    for (int c = 0; c < kChannels; ++c) {
        const double d = channel_sd(b, c) - channel_sd(a, c);
        expected += d * d / 3.0;
    }
    CHECK(std::abs(variation_loss(b, a) - expected) < 1e-9);
}

TEST_CASE("sobel loss") {
    std::mt19937_64 rng(46);
    const SignedImage a = random_image(rng, 6, 6);
    CHECK(sobel_loss(a, a) == 0.0);
    CHECK(sobel_loss(SignedImage(4, 5, 0.2), SignedImage(4, 5, 0.9)) == 0.0);

    // Vertical step of height 0.5 between columns 2 and 3 of a 6x6 image,
    // against a flat image. Value frozen from tests/oracles/metric_oracles.py.
    SignedImage step(6, 6, 0.0);
    for (int c = 0; c < kChannels; ++c) {
        for (int y = 0; y < 6; ++y) {
            for (int x = 3; x < 6; ++x) {
                step.at(c, y, x) = 0.5;
            }
        }
    }
    CHECK(sobel_loss(step, SignedImage(6, 6, 0.0)) == doctest::Approx(0.6666666666666666).epsilon(1e-15));
    CHECK_THROWS_AS(sobel_loss(SignedImage(2, 5), SignedImage(2, 5)), InvalidArgument);
}

TEST_CASE("log loss") {
    std::mt19937_64 rng(47);
    const SignedImage a = random_image(rng, 6, 7);
    CHECK(log_loss(a, a) == 0.0);
    CHECK(log_loss(SignedImage(5, 5, 0.1), SignedImage(5, 5, 0.6)) == 0.0);

    // Unit impulse in the centre of a 7x7 image; frozen from the scripted oracle.
    SignedImage impulse(7, 7, 0.0);
    for (int c = 0; c < kChannels; ++c) {
        impulse.at(c, 3, 3) = 1.0;
    }
    CHECK(log_loss(impulse, SignedImage(7, 7, 0.0)) == doctest::Approx(0.04081632653061224).epsilon(1e-15));
    CHECK_THROWS_AS(log_loss(SignedImage(4, 9), SignedImage(4, 9)), InvalidArgument);
}

TEST_CASE("gaussian then laplacian equals the precomposed 5x5 kernel away from borders") {
    Kernel3 g = kGaussian3, l = kLaplacian;
    double composed[5][5] = {};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 3; ++k) {
                for (int m = 0; m < 3; ++m) {
                    composed[i + k][j + m] += g[i * 3 + j] * l[k * 3 + m];
                }
            }
        }
    }
    const int n = 9;
    std::vector<double> img(n * n, 0.0), tmp(n * n), out(n * n);
    img[4 * n + 4] = 1.0;
    convolve3x3(img, n, n, kGaussian3, tmp);
    convolve3x3(tmp, n, n, kLaplacian, out);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const int dy = y - 4 + 2, dx = x - 4 + 2;
            const double expected = (dy >= 0 && dy < 5 && dx >= 0 && dx < 5) ? composed[dy][dx] : 0.0;
            CHECK(std::abs(out[y * n + x] - expected) < 1e-15);
        }
    }
}

TEST_CASE("edge losses ignore a common offset") {
    std::mt19937_64 rng(48);
    for (int trial = 0; trial < 10; ++trial) {
        const SignedImage a = random_image(rng, 6, 8);
        const SignedImage b = random_image(rng, 6, 8);
        const double k = uniform(rng, -0.5, 0.5);
        SignedImage a2 = a, b2 = b;
        for (double& v : a2.values()) {
            v += k;
        }
        for (double& v : b2.values()) {
            v += k;
        }
        CHECK(std::abs(sobel_loss(a2, b2) - sobel_loss(a, b)) <= 1e-12);
        CHECK(std::abs(log_loss(a2, b2) - log_loss(a, b)) <= 1e-12);
    }
}

TEST_CASE("composite loss") {
    std::mt19937_64 rng(49);
    DeattenLossConfig cfg;
    cfg.weights = {0.5, 2.0, 1.5, 0.25, 3.0};
    const SignedImage d = random_image(rng, 6, 6, -0.1, 1.1);
    const SignedImage j = random_image(rng, 6, 6, -0.1, 1.3);
    const LossBreakdown b = deatten_loss(j, d, cfg);
    CHECK(b.term(LossTerm::saturation) == saturation_loss(j, cfg.sat_target));
    CHECK(b.term(LossTerm::intensity) == intensity_loss(j, cfg.intensity_target));
    CHECK(b.term(LossTerm::variation) == variation_loss(j, d));
    CHECK(b.term(LossTerm::sobel) == sobel_loss(j, d));
    CHECK(b.term(LossTerm::log) == log_loss(j, d));
    double total = 0.0;
    for (std::size_t t = 0; t < kLossTerms; ++t) {
        total += cfg.weights[t] * b.terms[t];
    }
    CHECK(b.total == total);
    CHECK(std::abs(b.total - (0.5 * saturation_loss(j, 1.0) + 2.0 * intensity_loss(j, 0.5) +
                              1.5 * variation_loss(j, d) + 0.25 * sobel_loss(j, d) + 3.0 * log_loss(j, d))) <
          1e-12);
    for (double t : b.terms) {
        CHECK(t >= 0.0);
    }

    // Every term at its minimum: identical images inside the range with mid-gray means.
    SignedImage mid(6, 6, 0.25);
    for (int c = 0; c < kChannels; ++c) {
        for (int y = 0; y < 6; ++y) {
            for (int x = 0; x < 6; ++x) {
                if ((x + y) % 2 == 0) {
                    mid.at(c, y, x) = 0.75;
                }
            }
        }
    }
    CHECK(deatten_loss(mid, mid, {}).total == 0.0);
}

TEST_CASE("objective agrees with the free loss functions") {
    std::mt19937_64 rng(50);
    const SignedImage d = random_image(rng, 7, 6, -0.1, 0.8);
    const DepthMap z = random_depth(rng, 7, 6);
    const DeattenLossConfig cfg;
    const DeattenObjective objective(d, z, cfg);
    const DeattenParams p = random_params(rng, 2);
    const LossBreakdown direct = deatten_loss(reconstruct(d, predict_deattenuation(p, z, cfg.alpha_cap)), d, cfg);
    const LossBreakdown cached = objective.loss(p);
    for (std::size_t t = 0; t < kLossTerms; ++t) {
        CHECK(std::abs(cached.terms[t] - direct.terms[t]) <= 1e-14);
    }
    CHECK(objective.gradient(p).loss.total == cached.total);
}

TEST_CASE("gradient of every term matches central differences") {
    std::mt19937_64 rng(51);
    const std::array<LossTerm, 5> terms{LossTerm::saturation, LossTerm::intensity, LossTerm::variation,
                                        LossTerm::sobel, LossTerm::log};
    for (LossTerm term : terms) {
        CAPTURE(static_cast<int>(term));
        const int min_side = term == LossTerm::log ? 5 : 4;
        int checked = 0;
        while (checked < 20) {
            const int h = min_side + static_cast<int>(rng() % (9 - min_side));
            const int w = min_side + static_cast<int>(rng() % (9 - min_side));
            const int n = 1 + checked % 3;
            const SignedImage d = random_image(rng, h, w, -0.15, 0.9);
            const DepthMap z = random_depth(rng, h, w);
            const DeattenParams p = random_params(rng, n);
            const DeattenLossConfig cfg = only(term);
            const DeattenObjective objective(d, z, cfg);

            // Skip instances too close to a kink of |.| or max(0,.).
            const SignedImage j = reconstruct(d, predict_deattenuation(p, z));
            bool near_kink = false;
            for (double v : j.values()) {
                near_kink = near_kink || std::abs(v) < 1e-3 || std::abs(v - 1.0) < 1e-3;
            }
            if (term == LossTerm::sobel || term == LossTerm::log) {
                std::vector<double> rj(j.pixels()), rd(j.pixels());
                for (int c = 0; c < kChannels && !near_kink; ++c) {
                    const auto kernels = term == LossTerm::sobel ? std::vector<Kernel3>{kSobelX, kSobelY}
                                                                 : std::vector<Kernel3>{kGaussian3};
                    for (const Kernel3& k : kernels) {
                        convolve3x3(j.channel(c), h, w, k, rj);
                        convolve3x3(d.channel(c), h, w, k, rd);
                        if (term == LossTerm::log) {
                            std::vector<double> tj(rj), td(rd);
                            convolve3x3(tj, h, w, kLaplacian, rj);
                            convolve3x3(td, h, w, kLaplacian, rd);
                        }
                        for (std::size_t i = 0; i < rj.size(); ++i) {
                            near_kink = near_kink || std::abs(rj[i] - rd[i]) < 1e-4;
                        }
                    }
                }
            }
            if (near_kink) {
                continue;
            }

            const auto flat = p.flatten();
            const auto analytic = objective.gradient(p).grad.flatten();
            const auto numeric = finite_difference_gradient(
                [&](std::span<const double> x) { return objective.loss(DeattenParams::unflatten(n, x)).total; },
                flat, oceanlens::testing::kFiniteDifferenceStep);
            CHECK(oceanlens::testing::max_relative_error(analytic, numeric) < oceanlens::testing::kGradientTolerance);
            ++checked;
        }
    }
}

TEST_CASE("gradient of the full composite loss matches central differences") {
    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 10; ++trial) {
        const SignedImage d = random_image(rng, 6, 6, 0.05, 0.6);
        const DepthMap z = random_depth(rng, 6, 6);
        const DeattenParams p = random_params(rng, 2);
        const DeattenObjective objective(d, z, {});
        const auto analytic = deatten_loss_grad(p, d, z, {}).grad.flatten();
        const auto numeric = finite_difference_gradient(
            [&](std::span<const double> x) { return objective.loss(DeattenParams::unflatten(2, x)).total; },
            p.flatten(), oceanlens::testing::kFiniteDifferenceStep);
        CHECK(oceanlens::testing::max_relative_error(analytic, numeric) < oceanlens::testing::kGradientTolerance);
    }
}

TEST_CASE("gradient vanishes where nothing can improve") {
    SignedImage mid(6, 6, 0.25);
    for (int c = 0; c < kChannels; ++c) {
        for (int y = 0; y < 6; ++y) {
            for (int x = 0; x < 6; ++x) {
                if ((x + y) % 2 == 0) {
                    mid.at(c, y, x) = 0.75;
                }
            }
        }
    }
    std::mt19937_64 rng(53);
    const DepthMap z = random_depth(rng, 6, 6);
    const auto r = deatten_loss_grad(DeattenParams::uniform(2, 0.0, 0.4), mid, z, {});
    CHECK(r.loss.total == 0.0);
    for (double g : r.grad.flatten()) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("decay gradient is dead when its scale is zero") {
    std::mt19937_64 rng(54);
    DeattenParams p = random_params(rng, 2);
    p.scale[1][0] = 0.0;
    const SignedImage d = random_image(rng, 6, 6);
    const DepthMap z = random_depth(rng, 6, 6);
    const auto r = deatten_loss_grad(p, d, z, {});
    CHECK(r.grad.decay[1][0] == 0.0);
}

TEST_CASE("capped pixels carry no gradient") {
    const SignedImage d(5, 5, 0.3);
    const DepthMap z(5, 5, 5.0);
    DeattenLossConfig cfg;
    cfg.alpha_cap = 1.5; // every pixel capped
    const auto r = deatten_loss_grad(DeattenParams::uniform(1, 0.9, 0.1), d, z, cfg);
    for (double g : r.grad.flatten()) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("term permutation leaves the loss unchanged") {
    std::mt19937_64 rng(55);
    for (int n : {2, 3, 4}) {
        const DeattenParams p = random_params(rng, n);
        DeattenParams q = p;
        for (int c = 0; c < kChannels; ++c) {
            std::rotate(q.scale[c].begin(), q.scale[c].begin() + 1, q.scale[c].end());
            std::rotate(q.decay[c].begin(), q.decay[c].begin() + 1, q.decay[c].end());
        }
        const SignedImage d = random_image(rng, 6, 6);
        const DepthMap z = random_depth(rng, 6, 6);
        const DeattenObjective objective(d, z, {});
        CHECK(std::abs(objective.loss(p).total - objective.loss(q).total) <= 1e-12);
    }
}

TEST_CASE("parameters, config and serialization") {
    const DeattenParams init = DeattenParams::initial(3);
    for (int c = 0; c < kChannels; ++c) {
        CHECK(init.scale[c] == std::vector<double>(3, 0.3));
        CHECK(init.decay[c] == std::vector<double>(3, 0.5));
    }
    CHECK(DeattenParams::unflatten(3, init.flatten()).flatten() == init.flatten());
    CHECK(deatten_from_json(deatten_to_json(init)).flatten() == init.flatten());
    CHECK(deatten_to_json(init)["model"] == "deattenuation");

    DeattenParams bad = init;
    bad.scale[0][2] = 1.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);

    DeattenLossConfig cfg;
    cfg.set_edge_losses(false);
    CHECK(cfg.weight(LossTerm::sobel) == 0.0);
    CHECK(cfg.weight(LossTerm::log) == 0.0);
    cfg.set_edge_losses(true);
    CHECK(cfg.weight(LossTerm::log) == 1.0);
    cfg.alpha_cap = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.intensity_target = 1.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);

    LossBreakdown b;
    b.terms = {1, 2, 3, 4, 5};
    b.total = 15;
    const auto j = breakdown_to_json(b);
    CHECK(j["sobel"] == 4.0);
    CHECK(j["total"] == 15.0);
}
