// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace gdstrack {

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
    const double ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double center_distance(const BoundingBox& a, const BoundingBox& b) {
    return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

bool clip_box(BoundingBox& box, int width, int height) {
    const double x1 = std::clamp(box.x, 0.0, static_cast<double>(width));
    const double y1 = std::clamp(box.y, 0.0, static_cast<double>(height));
    const double x2 = std::clamp(box.x2(), 0.0, static_cast<double>(width));
    const double y2 = std::clamp(box.y2(), 0.0, static_cast<double>(height));
    box = BoundingBox{x1, y1, x2 - x1, y2 - y1};
    return box.w > 0.0 && box.h > 0.0;
}

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

void write_pnm(const Image& img, const std::filesystem::path& path) {
    if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_pnm: 1 or 3 channels required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
    std::string row(static_cast<std::size_t>(img.width) * img.channels, '\0');
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::round(std::clamp(img.at(c, y, x), 0.0, 1.0) * 255.0);
                row[static_cast<std::size_t>(x) * img.channels + c] = static_cast<char>(static_cast<unsigned char>(v));
            }
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
}

Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if ((magic != "P6" && magic != "P5") || w <= 0 || h <= 0 || maxval != 255) {
        throw std::runtime_error("unsupported PNM file " + path.string());
    }
    in.get();
    const int channels = magic == "P6" ? 3 : 1;
    Image img(w, h, channels);
    std::string row(static_cast<std::size_t>(w) * channels, '\0');
    for (int y = 0; y < h; ++y) {
        if (!in.read(row.data(), static_cast<std::streamsize>(row.size()))) {
            throw std::runtime_error("truncated PNM file " + path.string());
        }
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = static_cast<unsigned char>(row[static_cast<std::size_t>(x) * channels + c]) / 255.0;
    }
    return img;
}

}  // namespace gdstrack
