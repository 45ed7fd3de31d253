// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

namespace gdstrack {

/// Axis-aligned box; (x, y) is the top-left corner, pixel units.
struct BoundingBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    double x2() const { return x + w; }
    double y2() const { return y + h; }
    double area() const { return w * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }
    bool inside(int width, int height) const { return x >= 0.0 && y >= 0.0 && x2() <= width && y2() <= height; }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);
double center_distance(const BoundingBox& a, const BoundingBox& b);
/// Clips to the frame; returns false when nothing of the box remains inside.
bool clip_box(BoundingBox& box, int width, int height);

/// Planar image, values in [0, 1]. Layout matches a (channels, height, width) tensor.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Quantises to 8 bits: round(v * 255) / 255, clamped to [0, 1].
double quantize8(double v);

/// Binary P6 (3 channels) or P5 (1 channel), chosen from `img.channels`.
void write_pnm(const Image& img, const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);

}  // namespace gdstrack
