#include "oceanlens/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace oceanlens {

ImageRGB::ImageRGB(int height, int width, double fill) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
        throw InvalidArgument("image dimensions must be positive, got " + std::to_string(height) + "x" +
                              std::to_string(width));
    }
    data_.assign(static_cast<std::size_t>(kChannels) * height * width, fill);
}

bool ImageRGB::in_unit_range() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

bool ImageRGB::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::size_t ImageRGB::clamp_unit() {
    std::size_t changed = 0;
    for (double& v : data_) {
        const double c = std::clamp(v, 0.0, 1.0);
        if (c != v) {
            ++changed;
            v = c;
        }
    }
    return changed;
}

DepthMap::DepthMap(int height, int width, double fill)
    : DepthMap(height, width, std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                                      static_cast<std::size_t>(std::max(width, 0)),
                                                  fill)) {}

DepthMap::DepthMap(int height, int width, std::vector<double> values)
    : height_(height), width_(width), z_(std::move(values)) {
    if (height < 1 || width < 1) {
        throw InvalidArgument("depth dimensions must be positive");
    }
    if (z_.size() != static_cast<std::size_t>(height) * width) {
        throw InvalidArgument("depth value count does not match dimensions");
    }
}

void PatchAnnotation::validate(int height, int width) const {
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const PixelRect& r = patches[i];
        if (r.x0 < 0 || r.y0 < 0 || r.x1 > width || r.y1 > height || r.x1 <= r.x0 || r.y1 <= r.y0) {
            throw InvalidArgument("gray patch " + std::to_string(i) + " is empty or outside the " +
                                  std::to_string(width) + "x" + std::to_string(height) + " image");
        }
    }
}

void require_same_shape(const ImageRGB& a, const ImageRGB& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": image shapes differ (" + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()) + ")");
    }
}

void require_aligned(const ImageRGB& img, const DepthMap& depth, const char* what) {
    if (!depth.matches(img)) {
        throw ShapeError(std::string(what) + ": depth map " + std::to_string(depth.height()) + "x" +
                         std::to_string(depth.width()) + " does not match image " +
                         std::to_string(img.height()) + "x" + std::to_string(img.width()));
    }
}

} // namespace oceanlens
