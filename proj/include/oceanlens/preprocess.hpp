#pragma once

#include "oceanlens/image.hpp"

namespace oceanlens {

struct PreprocessConfig {
    bool enabled = false;       // pipeline applies preprocessing only when set
    bool white_balance = true;
    double gamma = 0.8;         // exponent; < 1 brightens
    bool wb_clip = true;

    void validate() const;
};

// Gray-world: scales channel c by mean_gray / mean_c. Throws InvalidArgument
// if any channel mean is zero.
ImageRGB gray_world_white_balance(const ImageRGB& img, bool clip = true);

// Componentwise v^gamma; fixes 0 and 1.
ImageRGB gamma_correct(const ImageRGB& img, double gamma);

// White balance (if configured) followed by gamma correction.
ImageRGB preprocess(const ImageRGB& img, const PreprocessConfig& cfg);

} // namespace oceanlens
