// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace gdstrack {

std::vector<double> motion_energy(const Image& prev, const Image& cur, int blur_window) {
    if (prev.width != cur.width || prev.height != cur.height || prev.channels != cur.channels) {
        throw std::invalid_argument("motion_energy: frame shapes differ");
    }
    if (blur_window < 1 || blur_window % 2 == 0) throw std::invalid_argument("motion_energy: blur window must be odd");
    const int W = cur.width, H = cur.height;
    std::vector<double> diff(static_cast<std::size_t>(W) * H, 0.0);
    for (int c = 0; c < cur.channels; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) diff[static_cast<std::size_t>(y) * W + x] += std::fabs(cur.at(c, y, x) - prev.at(c, y, x));
    for (double& v : diff) v /= cur.channels;

    const int r = blur_window / 2;
    std::vector<double> blurred(diff.size(), 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            int n = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    s += diff[static_cast<std::size_t>(yy) * W + xx];
                    ++n;
                }
            blurred[static_cast<std::size_t>(y) * W + x] = s / n;
        }
    return blurred;
}

MotionBox motion_box(const Image& prev, const Image& cur, const MotionParams& params) {
    const int W = cur.width, H = cur.height;
    const std::vector<double> energy = motion_energy(prev, cur, params.blur_window);
    const auto n = static_cast<double>(energy.size());
    double mean = 0.0;
    for (double v : energy) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : energy) var += (v - mean) * (v - mean);
    const double threshold = mean + params.threshold_sigmas * std::sqrt(var / n);

    struct Component {
        std::size_t size = 0;
        int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    };
    std::vector<Component> comps;
    std::vector<int> label(energy.size(), -1);
    std::vector<int> stack;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t seed = static_cast<std::size_t>(y) * W + x;
            if (label[seed] >= 0 || !(energy[seed] > threshold)) continue;
            const int id = static_cast<int>(comps.size());
            Component c{0, x, y, x, y};
            label[seed] = id;
            stack.assign(1, static_cast<int>(seed));
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                ++c.size;
                const int px = p % W, py = p / W;
                c.x0 = std::min(c.x0, px);
                c.x1 = std::max(c.x1, px);
                c.y0 = std::min(c.y0, py);
                c.y1 = std::max(c.y1, py);
                const int nbr[4][2] = {{px - 1, py}, {px + 1, py}, {px, py - 1}, {px, py + 1}};
                for (const auto& q : nbr) {
                    if (q[0] < 0 || q[0] >= W || q[1] < 0 || q[1] >= H) continue;
                    const std::size_t qi = static_cast<std::size_t>(q[1]) * W + q[0];
                    if (label[qi] >= 0 || !(energy[qi] > threshold)) continue;
                    label[qi] = id;
                    stack.push_back(static_cast<int>(qi));
                }
            }
            comps.push_back(c);
        }
    }
    if (comps.empty()) throw NoMotionError();

    // Largest component; strictly larger wins, so the first in raster order takes ties.
    std::size_t best = 0;
    for (std::size_t i = 1; i < comps.size(); ++i)
        if (comps[i].size > comps[best].size) best = i;

    // A uniform object moving by a few pixels only changes at its leading and
    // trailing edges. Absorb components within merge_gap pixels of the growing
    // box until nothing changes, so both edges land in one box.
    Component box = comps[best];
    std::vector<bool> merged(comps.size(), false);
    merged[best] = true;
    for (bool grew = true; grew;) {
        grew = false;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            if (merged[i]) continue;
            const Component& c = comps[i];
            const int gap_x = std::max({0, c.x0 - box.x1 - 1, box.x0 - c.x1 - 1});
            const int gap_y = std::max({0, c.y0 - box.y1 - 1, box.y0 - c.y1 - 1});
            if (std::max(gap_x, gap_y) > params.merge_gap) continue;
            merged[i] = true;
            grew = true;
            box.x0 = std::min(box.x0, c.x0);
            box.y0 = std::min(box.y0, c.y0);
            box.x1 = std::max(box.x1, c.x1);
            box.y1 = std::max(box.y1, c.y1);
        }
    }
    const int best_x0 = box.x0, best_y0 = box.y0, best_x1 = box.x1, best_y1 = box.y1;

    double total = 0.0, inside = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double e = energy[static_cast<std::size_t>(y) * W + x];
            total += e;
            if (x >= best_x0 && x <= best_x1 && y >= best_y0 && y <= best_y1) inside += e;
        }
    MotionBox out;
    out.box = BoundingBox{double(best_x0), double(best_y0), double(best_x1 - best_x0 + 1), double(best_y1 - best_y0 + 1)};
    out.confidence = total > 0.0 ? std::clamp(inside / total, 0.0, 1.0) : 0.0;
    return out;
}

PseudoLabel select_label(const PseudoLabel& rgb, const PseudoLabel& ir) {
    return ir.confidence > rgb.confidence ? ir : rgb;
}

SequenceRecord annotate_sequence(SequenceRecord record, const MotionParams& params) {
    validate_record(record);
    const int n = record.num_frames();
    if (n < 2) throw std::invalid_argument("annotate_sequence: at least two frames required");

    std::vector<std::optional<PseudoLabel>> found(static_cast<std::size_t>(n));
    bool any = false;
    for (int t = 1; t < n; ++t) {
        const auto i = static_cast<std::size_t>(t);
        std::optional<PseudoLabel> rgb, ir;
        try {
            const MotionBox m = motion_box(record.rgb_frames[i - 1], record.rgb_frames[i], params);
            rgb = PseudoLabel{m.box, m.confidence, Modality::rgb};
        } catch (const NoMotionError&) {
        }
        try {
            const MotionBox m = motion_box(record.ir_frames[i - 1], record.ir_frames[i], params);
            ir = PseudoLabel{m.box, m.confidence, Modality::ir};
        } catch (const NoMotionError&) {
        }
        if (rgb && ir) {
            found[i] = select_label(*rgb, *ir);
        } else if (rgb) {
            found[i] = rgb;
        } else if (ir) {
            found[i] = ir;
        }
        any = any || found[i].has_value();
    }
    if (!any) throw UnlabelableSequenceError();

    record.pseudo_track.assign(static_cast<std::size_t>(n), PseudoLabel{});
    // Leading frames without motion borrow the first detected box at confidence 0.
    std::optional<PseudoLabel> previous;
    for (int t = 1; t < n; ++t) {
        if (found[static_cast<std::size_t>(t)]) {
            previous = found[static_cast<std::size_t>(t)];
            break;
        }
    }
    for (int t = 1; t < n; ++t) {
        const auto i = static_cast<std::size_t>(t);
        if (found[i]) {
            record.pseudo_track[i] = *found[i];
            previous = found[i];
        } else {
            record.pseudo_track[i] = PseudoLabel{previous->box, 0.0, previous->source};
        }
    }
    record.pseudo_track[0] = record.pseudo_track[1];
    return record;
}

}  // namespace gdstrack
