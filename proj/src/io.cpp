#include "oceanlens/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace oceanlens {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext;
}

bool is_text_grid(const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    return ext == ".txt" || ext == ".dat" || ext == ".csv";
}

cv::Mat read_raster(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw IoError("cannot read " + path.string() + ": no such file");
    }
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) {
        throw IoError("cannot decode raster " + path.string());
    }
    return m;
}

template <typename T>
void copy_bgr(const cv::Mat& m, ImageRGB& img, double scale) {
    for (int y = 0; y < m.rows; ++y) {
        const T* row = m.ptr<T>(y);
        for (int x = 0; x < m.cols; ++x) {
            img.at(0, y, x) = row[3 * x + 2] / scale;
            img.at(1, y, x) = row[3 * x + 1] / scale;
            img.at(2, y, x) = row[3 * x + 0] / scale;
        }
    }
}

template <typename T>
std::vector<double> copy_gray(const cv::Mat& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const T* row = m.ptr<T>(y);
        out.insert(out.end(), row, row + m.cols);
    }
    return out;
}

} // namespace

ImageRGB load_image(const std::filesystem::path& path) {
    const cv::Mat m = read_raster(path);
    if (m.channels() != 3) {
        throw IoError(path.string() + ": expected 3-channel RGB, found " + std::to_string(m.channels()) +
                      " channel(s)");
    }
    ImageRGB img(m.rows, m.cols);
    switch (m.depth()) {
    case CV_8U:
        copy_bgr<std::uint8_t>(m, img, 255.0);
        break;
    case CV_16U:
        copy_bgr<std::uint16_t>(m, img, 65535.0);
        break;
    default:
        throw IoError(path.string() + ": unsupported sample depth (need 8 or 16 bit)");
    }
    return img;
}

void save_image(const ImageRGB& img, const std::filesystem::path& path, int bits) {
    if (bits != 8 && bits != 16) {
        throw InvalidArgument("bit depth must be 8 or 16");
    }
    const std::string ext = lower_extension(path);
    if (ext != ".png" && ext != ".tif" && ext != ".tiff") {
        throw InvalidArgument("unsupported output format '" + ext + "' (use .png or .tif)");
    }
    if (!img.in_unit_range()) {
        throw InvalidArgument("save_image: components outside [0,1]");
    }
    const double peak = bits == 8 ? 255.0 : 65535.0;
    cv::Mat m(img.height(), img.width(), bits == 8 ? CV_8UC3 : CV_16UC3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < kChannels; ++c) {
                const double q = std::floor(img.at(c, y, x) * peak + 0.5);
                const int bgr = 2 - c;
                if (bits == 8) {
                    m.ptr<std::uint8_t>(y)[3 * x + bgr] = static_cast<std::uint8_t>(q);
                } else {
                    m.ptr<std::uint16_t>(y)[3 * x + bgr] = static_cast<std::uint16_t>(q);
                }
            }
        }
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), m);
    } catch (const cv::Exception& e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) {
        throw IoError("cannot write " + path.string());
    }
}

DepthMap normalize_depth(int height, int width, std::span<const double> raw, const DepthOptions& opts) {
    if (raw.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width) || raw.empty()) {
        throw InvalidArgument("depth value count does not match dimensions");
    }
    if (!std::all_of(raw.begin(), raw.end(), [](double v) { return std::isfinite(v); })) {
        throw InvalidArgument("depth map contains non-finite values");
    }
    if (!(opts.clamp_floor >= 0.0 && opts.clamp_floor < 1.0)) {
        throw InvalidArgument("depth clamp floor must be in [0,1)");
    }
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double min = *lo;
    const double range = *hi - *lo;
    if (range <= 0.0) {
        throw InvalidArgument("depth map is constant; cannot normalize");
    }
    std::vector<double> z(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double v = (raw[i] - min) / range;
        if (opts.invert) {
            v = 1.0 - v;
        }
        z[i] = std::max(v, opts.clamp_floor);
    }
    return DepthMap(height, width, std::move(z));
}

DepthMap parse_depth_text(std::string_view text, const DepthOptions& opts) {
    std::vector<double> values;
    int rows = 0;
    int cols = -1;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        int n = 0;
        std::string tok;
        while (ls >> tok) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size()) {
                throw IoError("depth grid: invalid number '" + tok + "' on row " + std::to_string(rows + 1));
            }
            values.push_back(v);
            ++n;
        }
        if (n == 0) {
            continue;
        }
        if (cols >= 0 && n != cols) {
            throw IoError("depth grid: row " + std::to_string(rows + 1) + " has " + std::to_string(n) +
                          " values, expected " + std::to_string(cols));
        }
        cols = n;
        ++rows;
    }
    if (rows == 0) {
        throw IoError("depth grid is empty");
    }
    return normalize_depth(rows, cols, values, opts);
}

DepthMap load_depth(const std::filesystem::path& path, const DepthOptions& opts) {
    if (is_text_grid(path)) {
        std::ifstream f(path);
        if (!f) {
            throw IoError("cannot read " + path.string());
        }
        std::stringstream ss;
        ss << f.rdbuf();
        return parse_depth_text(ss.str(), opts);
    }
    const cv::Mat m = read_raster(path);
    if (m.channels() != 1) {
        throw IoError(path.string() + ": depth raster must be single-channel");
    }
    std::vector<double> raw;
    switch (m.depth()) {
    case CV_8U:
        raw = copy_gray<std::uint8_t>(m);
        break;
    case CV_16U:
        raw = copy_gray<std::uint16_t>(m);
        break;
    case CV_32F:
        raw = copy_gray<float>(m);
        break;
    default:
        throw IoError(path.string() + ": unsupported depth sample type");
    }
    return normalize_depth(m.rows, m.cols, raw, opts);
}

PatchAnnotation patches_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("patches") || !j["patches"].is_array()) {
        throw InvalidArgument("patch sidecar must be an object with a 'patches' array");
    }
    const auto& arr = j["patches"];
    if (arr.size() != kGrayPatchCount) {
        throw InvalidArgument("patch sidecar must list exactly 6 patches, found " + std::to_string(arr.size()));
    }
    PatchAnnotation p;
    for (std::size_t i = 0; i < kGrayPatchCount; ++i) {
        try {
            p.patches[i] = PixelRect{arr[i].at("x0").get<int>(), arr[i].at("y0").get<int>(),
                                     arr[i].at("x1").get<int>(), arr[i].at("y1").get<int>()};
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument("patch " + std::to_string(i) + ": " + e.what());
        }
    }
    return p;
}

nlohmann::json patches_to_json(const PatchAnnotation& p) {
    nlohmann::json arr = nlohmann::json::array();
    for (const PixelRect& r : p.patches) {
        arr.push_back({{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}});
    }
    return {{"patches", arr}};
}

PatchAnnotation load_patches(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read " + path.string());
    }
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
    return patches_from_json(j);
}

} // namespace oceanlens
