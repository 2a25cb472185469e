#include "oceanlens/filters.hpp"

#include <algorithm>

namespace oceanlens {

void convolve3x3(std::span<const double> in, int height, int width, const Kernel3& k, std::span<double> out) {
    double ksum = 0.0;
    for (double v : k) {
        ksum += v;
    }
    // Accumulating k * (neighbour - centre) and adding ksum * centre is the
    // same sum, but a flat neighbourhood contributes exact zeros, so
    // zero-sum kernels annihilate constants without rounding residue.
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double centre = in[static_cast<std::size_t>(y) * width + x];
            double acc = 0.0;
            for (int i = -1; i <= 1; ++i) {
                const int sy = std::clamp(y - i, 0, height - 1);
                for (int j = -1; j <= 1; ++j) {
                    const int sx = std::clamp(x - j, 0, width - 1);
                    acc += k[(i + 1) * 3 + (j + 1)] * (in[static_cast<std::size_t>(sy) * width + sx] - centre);
                }
            }
            out[static_cast<std::size_t>(y) * width + x] = ksum * centre + acc;
        }
    }
}

void convolve3x3_adjoint(std::span<const double> grad_out, int height, int width, const Kernel3& k,
                         std::span<double> grad_in) {
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double g = grad_out[static_cast<std::size_t>(y) * width + x];
            if (g == 0.0) {
                continue;
            }
            for (int i = -1; i <= 1; ++i) {
                const int sy = std::clamp(y - i, 0, height - 1);
                for (int j = -1; j <= 1; ++j) {
                    const int sx = std::clamp(x - j, 0, width - 1);
                    grad_in[static_cast<std::size_t>(sy) * width + sx] += k[(i + 1) * 3 + (j + 1)] * g;
                }
            }
        }
    }
}

} // namespace oceanlens
