// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "gdstrack/params.hpp"

namespace gdstrack {

void SceneConfig::validate() const {
    if (frame_width < 32 || frame_height < 32) throw std::invalid_argument("SceneConfig: frames must be at least 32x32");
    if (num_frames < 3) throw std::invalid_argument("SceneConfig: at least 3 frames required");
    if (num_distractors < 0) throw std::invalid_argument("SceneConfig: negative distractor count");
    if (target_size <= 0) throw std::invalid_argument("SceneConfig: target_size must be positive");
    if (target_size >= frame_width || target_size >= frame_height) {
        throw std::invalid_argument("SceneConfig: target_size must be smaller than the frame");
    }
    if (!(distractor_similarity >= 0.0 && distractor_similarity <= 1.0)) {
        throw std::invalid_argument("SceneConfig: distractor_similarity outside [0,1]");
    }
    if (!(motion_speed >= 0.0)) throw std::invalid_argument("SceneConfig: negative motion_speed");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("SceneConfig: negative noise_std");
}

namespace {

constexpr int kTextureCell = 2;        // texture blocks are 2x2 pixels
constexpr double kTextureAmplitude = 0.22;

struct Appearance {
    std::array<double, 3> color{};
    double temperature = 0.0;
    std::vector<double> pattern;  // size*size values in [-1, 1], object-local
};

struct Walker {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

Appearance random_appearance(int size, Rng& rng, double temp_lo, double temp_hi) {
    std::uniform_real_distribution<double> color(0.25, 0.95);
    std::uniform_real_distribution<double> temp(temp_lo, temp_hi);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Appearance a;
    a.color = {color(rng), color(rng), color(rng)};
    a.temperature = temp(rng);
    const int cells = (size + kTextureCell - 1) / kTextureCell;
    std::vector<double> cell_values(static_cast<std::size_t>(cells) * cells);
    for (double& v : cell_values) v = unit(rng);
    a.pattern.resize(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            a.pattern[static_cast<std::size_t>(y) * size + x] =
                cell_values[static_cast<std::size_t>(y / kTextureCell) * cells + x / kTextureCell];
    return a;
}

Appearance blend(const Appearance& target, const Appearance& own, double s) {
    Appearance a;
    for (int c = 0; c < 3; ++c) a.color[static_cast<std::size_t>(c)] = s * target.color[static_cast<std::size_t>(c)] + (1.0 - s) * own.color[static_cast<std::size_t>(c)];
    a.temperature = s * target.temperature + (1.0 - s) * own.temperature;
    a.pattern.resize(target.pattern.size());
    for (std::size_t i = 0; i < a.pattern.size(); ++i) a.pattern[i] = s * target.pattern[i] + (1.0 - s) * own.pattern[i];
    return a;
}

void step_walker(Walker& w, double speed, double max_x, double max_y, Rng& rng) {
    std::normal_distribution<double> turn(0.0, 0.35);
    w.heading += turn(rng);
    double nx = w.x + speed * std::cos(w.heading);
    double ny = w.y + speed * std::sin(w.heading);
    if (nx < 0.0 || nx > max_x) {
        w.heading = std::numbers::pi - w.heading;
        nx = std::clamp(nx < 0.0 ? -nx : 2.0 * max_x - nx, 0.0, max_x);
    }
    if (ny < 0.0 || ny > max_y) {
        w.heading = -w.heading;
        ny = std::clamp(ny < 0.0 ? -ny : 2.0 * max_y - ny, 0.0, max_y);
    }
    w.x = nx;
    w.y = ny;
}

void paint(Image& rgb, Image& ir, const Appearance& a, int bx, int by, int size) {
    for (int y = 0; y < size; ++y) {
        const int fy = by + y;
        if (fy < 0 || fy >= rgb.height) continue;
        for (int x = 0; x < size; ++x) {
            const int fx = bx + x;
            if (fx < 0 || fx >= rgb.width) continue;
            const double tex = kTextureAmplitude * a.pattern[static_cast<std::size_t>(y) * size + x];
            for (int c = 0; c < 3; ++c) rgb.at(c, fy, fx) = a.color[static_cast<std::size_t>(c)] + tex;
            ir.at(0, fy, fx) = a.temperature;
        }
    }
}

}  // namespace

SyntheticSequence generate_scene(const SceneConfig& config) {
    config.validate();
    Rng rng(mix_seed(config.seed, 0x5eed));
    const int W = config.frame_width, H = config.frame_height, S = config.target_size;
    const double max_x = W - S, max_y = H - S;

    // Static backgrounds: low-frequency colour field plus a faint fixed texture; IR stays cool.
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> freq(0.04, 0.12);
    std::uniform_real_distribution<double> fine(-0.04, 0.04);
    Image rgb_bg(W, H, 3), ir_bg(W, H, 1);
    std::array<double, 3> fx{}, fy{}, ph{};
    for (int c = 0; c < 3; ++c) {
        fx[static_cast<std::size_t>(c)] = freq(rng);
        fy[static_cast<std::size_t>(c)] = freq(rng);
        ph[static_cast<std::size_t>(c)] = phase(rng);
    }
    const double ir_fx = freq(rng), ir_fy = freq(rng), ir_ph = phase(rng);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < 3; ++c) {
                const auto k = static_cast<std::size_t>(c);
                rgb_bg.at(c, y, x) = 0.4 + 0.12 * std::sin(fx[k] * x + fy[k] * y + ph[k]) + fine(rng);
            }
            ir_bg.at(0, y, x) = 0.2 + 0.06 * std::sin(ir_fx * x + ir_fy * y + ir_ph);
        }

    const Appearance target = random_appearance(S, rng, 0.82, 0.95);
    std::vector<Appearance> looks;
    for (int d = 0; d < config.num_distractors; ++d) {
        looks.push_back(blend(target, random_appearance(S, rng, 0.35, 0.65), config.distractor_similarity));
    }

    std::uniform_real_distribution<double> ux(0.0, max_x), uy(0.0, max_y), heading(0.0, 2.0 * std::numbers::pi);
    Walker tw{0.25 * max_x + 0.5 * ux(rng), 0.25 * max_y + 0.5 * uy(rng), heading(rng)};
    std::vector<Walker> dw;
    for (int d = 0; d < config.num_distractors; ++d) dw.push_back(Walker{ux(rng), uy(rng), heading(rng)});

    std::normal_distribution<double> noise(0.0, 1.0);
    SyntheticSequence out;
    out.distractor_tracks.resize(static_cast<std::size_t>(config.num_distractors));
    for (int t = 0; t < config.num_frames; ++t) {
        if (t > 0) {
            step_walker(tw, config.motion_speed, max_x, max_y, rng);
            for (auto& w : dw) step_walker(w, config.motion_speed, max_x, max_y, rng);
        }
        Image rgb = rgb_bg, ir = ir_bg;
        for (int d = 0; d < config.num_distractors; ++d) {
            const int bx = static_cast<int>(std::lround(dw[static_cast<std::size_t>(d)].x));
            const int by = static_cast<int>(std::lround(dw[static_cast<std::size_t>(d)].y));
            paint(rgb, ir, looks[static_cast<std::size_t>(d)], bx, by, S);
            out.distractor_tracks[static_cast<std::size_t>(d)].push_back(BoundingBox{double(bx), double(by), double(S), double(S)});
        }
        const int bx = static_cast<int>(std::lround(tw.x));
        const int by = static_cast<int>(std::lround(tw.y));
        paint(rgb, ir, target, bx, by, S);
        out.record.gt_track.push_back(BoundingBox{double(bx), double(by), double(S), double(S)});

        for (double& v : rgb.data) v = quantize8(v + (config.noise_std > 0.0 ? config.noise_std * noise(rng) : 0.0));
        for (double& v : ir.data) v = quantize8(v + (config.noise_std > 0.0 ? config.noise_std * noise(rng) : 0.0));
        out.record.rgb_frames.push_back(std::move(rgb));
        out.record.ir_frames.push_back(std::move(ir));
    }
    return out;
}

Image crop_window(const Image& frame, double cx, double cy, double window, int side, CropTransform* transform) {
    if (!(window > 0.0) || side <= 0) throw std::invalid_argument("crop_window: degenerate window");
    const double s = window / side;
    const double x0 = cx - 0.5 * window;
    const double y0 = cy - 0.5 * window;
    if (transform) *transform = CropTransform{x0, y0, s};
    Image out(side, side, frame.channels);
    const int W = frame.width, H = frame.height;
    for (int v = 0; v < side; ++v) {
        const double fy = std::clamp(y0 + (v + 0.5) * s - 0.5, 0.0, static_cast<double>(H - 1));
        const int iy = std::min(static_cast<int>(fy), H - 1);
        const int iy1 = std::min(iy + 1, H - 1);
        const double ty = fy - iy;
        for (int u = 0; u < side; ++u) {
            const double fx = std::clamp(x0 + (u + 0.5) * s - 0.5, 0.0, static_cast<double>(W - 1));
            const int ix = std::min(static_cast<int>(fx), W - 1);
            const int ix1 = std::min(ix + 1, W - 1);
            const double tx = fx - ix;
            for (int c = 0; c < frame.channels; ++c) {
                const double top = (1.0 - tx) * frame.at(c, iy, ix) + tx * frame.at(c, iy, ix1);
                const double bottom = (1.0 - tx) * frame.at(c, iy1, ix) + tx * frame.at(c, iy1, ix1);
                out.at(c, v, u) = (1.0 - ty) * top + ty * bottom;
            }
        }
    }
    return out;
}

CropPair crop_pair_window(const SequenceRecord& record, int frame_index, double cx, double cy, double window,
                          int side) {
    if (frame_index < 0 || frame_index >= record.num_frames()) throw std::out_of_range("crop: frame index out of range");
    CropPair pair;
    pair.rgb = crop_window(record.rgb_frames[static_cast<std::size_t>(frame_index)], cx, cy, window, side, &pair.transform);
    pair.ir = crop_window(record.ir_frames[static_cast<std::size_t>(frame_index)], cx, cy, window, side);
    return pair;
}

CropPair crop_regions(const SequenceRecord& record, int frame_index, const BoundingBox& box, const CropGeometry& geom,
                      CropMode mode) {
    if (!box.valid()) throw std::invalid_argument("crop_regions: degenerate box");
    const double window = geom.window_scale(mode) * std::max(box.w, box.h);
    return crop_pair_window(record, frame_index, box.cx(), box.cy(), window, geom.side(mode));
}

}  // namespace gdstrack
