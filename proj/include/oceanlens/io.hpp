#pragma once

#include <filesystem>
#include <span>
#include <string_view>

#include <json.hpp>

#include "oceanlens/image.hpp"

namespace oceanlens {

// Reads an 8- or 16-bit three-channel PNG/TIFF. Samples are divided by
// 2^bits - 1; channel order of the result is R, G, B.
ImageRGB load_image(const std::filesystem::path& path);

// Writes a lossless PNG or TIFF (chosen by extension) at 8 or 16 bits per
// sample. Components are rounded half-up to the nearest integer sample.
void save_image(const ImageRGB& img, const std::filesystem::path& path, int bits = 8);

struct DepthOptions {
    bool invert = false;       // 1 - z after normalization (disparity-style inputs)
    double clamp_floor = 1e-3; // lower bound applied last
};

// Min-max normalizes raw range values to [0,1], optionally inverts, then
// floors. Throws InvalidArgument for a constant or non-finite map.
DepthMap normalize_depth(int height, int width, std::span<const double> raw, const DepthOptions& opts);

// Loads a single-channel 8/16-bit raster, a 32-bit float TIFF, or a
// whitespace-separated text grid (.txt, .dat, .csv) and normalizes it.
DepthMap load_depth(const std::filesystem::path& path, const DepthOptions& opts = {});

// Parses a whitespace-separated float grid; every row must have the same
// number of columns.
DepthMap parse_depth_text(std::string_view text, const DepthOptions& opts);

PatchAnnotation patches_from_json(const nlohmann::json& j);
nlohmann::json patches_to_json(const PatchAnnotation& p);
PatchAnnotation load_patches(const std::filesystem::path& path);

} // namespace oceanlens
