#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "oceanlens/error.hpp"

namespace oceanlens {

inline constexpr int kChannels = 3;

// Three-channel (R, G, B) image of doubles stored planar: channel-major, then
// row-major. Values are nominally in [0,1]; residual and reconstruction
// images produced during fitting may leave that range (see SignedImage).
class ImageRGB {
  public:
    ImageRGB() = default;
    ImageRGB(int height, int width, double fill = 0.0);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
    bool empty() const { return data_.empty(); }

    double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<double> channel(int c) { return {data_.data() + c * pixels(), pixels()}; }
    std::span<const double> channel(int c) const { return {data_.data() + c * pixels(), pixels()}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const ImageRGB& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }
    bool in_unit_range() const;
    bool all_finite() const;

    // Clamp every component to [0,1]; returns the number of components changed.
    std::size_t clamp_unit();

    friend bool operator==(const ImageRGB&, const ImageRGB&) = default;

  private:
    std::size_t index(int c, int y, int x) const {
        return static_cast<std::size_t>(c) * pixels() + static_cast<std::size_t>(y) * width_ + x;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

// Direct-signal estimates and reconstructions before clamping; same storage,
// no range invariant.
using SignedImage = ImageRGB;
// Per-pixel per-channel multiplicative factors (deattenuation map).
using FactorMap = ImageRGB;

// Per-pixel range z, normalized, pixel-aligned with an ImageRGB.
class DepthMap {
  public:
    DepthMap() = default;
    DepthMap(int height, int width, double fill = 0.0);
    DepthMap(int height, int width, std::vector<double> values);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixels() const { return z_.size(); }

    double& at(int y, int x) { return z_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int y, int x) const { return z_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<double> values() { return z_; }
    std::span<const double> values() const { return z_; }

    bool matches(const ImageRGB& img) const {
        return height_ == img.height() && width_ == img.width();
    }

    friend bool operator==(const DepthMap&, const DepthMap&) = default;

  private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> z_;
};

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int area() const { return (x1 - x0) * (y1 - y0); }
};

inline constexpr std::size_t kGrayPatchCount = 6;

// The six grayscale calibration patches of a color chart.
struct PatchAnnotation {
    std::array<PixelRect, kGrayPatchCount> patches{};

    // Throws InvalidArgument if any rectangle is empty or leaves the image.
    void validate(int height, int width) const;
};

void require_same_shape(const ImageRGB& a, const ImageRGB& b, const char* what);
void require_aligned(const ImageRGB& img, const DepthMap& depth, const char* what);

} // namespace oceanlens
