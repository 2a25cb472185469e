#pragma once

#include <array>
#include <span>

namespace oceanlens {

// 3x3 kernel, row-major: k[(dy + 1) * 3 + (dx + 1)].
using Kernel3 = std::array<double, 9>;

inline constexpr Kernel3 kSobelX{1, 0, -1, 2, 0, -2, 1, 0, -1};
inline constexpr Kernel3 kSobelY{1, 2, 1, 0, 0, 0, -1, -2, -1};
inline constexpr Kernel3 kGaussian3{1.0 / 16, 2.0 / 16, 1.0 / 16, 2.0 / 16, 4.0 / 16,
                                    2.0 / 16, 1.0 / 16, 2.0 / 16, 1.0 / 16};
inline constexpr Kernel3 kLaplacian{0, -1, 0, -1, 4, -1, 0, -1, 0};

// True 2-D convolution with replicate (clamp-to-edge) borders:
//   out(y,x) = sum_{i,j in -1..1} k(i,j) * in(clamp(y-i), clamp(x-j))
void convolve3x3(std::span<const double> in, int height, int width, const Kernel3& k, std::span<double> out);

// Adjoint of convolve3x3: accumulates the input-space gradient for an
// output-space gradient into grad_in (grad_in is not cleared).
void convolve3x3_adjoint(std::span<const double> grad_out, int height, int width, const Kernel3& k,
                         std::span<double> grad_in);

} // namespace oceanlens
