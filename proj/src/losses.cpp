// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gdstrack {

Corners to_corners(const BoundingBox& b) { return {b.x, b.y, b.x + b.w, b.y + b.h}; }

namespace {

void require_proper(const Corners& c) {
    if (!(c[2] > c[0]) || !(c[3] > c[1])) throw std::invalid_argument("giou_loss: degenerate box");
}

}  // namespace

double giou_loss(const Corners& a, const Corners& b) {
    require_proper(a);
    require_proper(b);
    const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
    const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
    const double inter = iw * ih;
    const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
    const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
    const double uni = area_a + area_b - inter;
    const double hull = (std::max(a[2], b[2]) - std::min(a[0], b[0])) * (std::max(a[3], b[3]) - std::min(a[1], b[1]));
    return 1.0 - (inter / uni - (hull - uni) / hull);
}

double giou_loss(const BoundingBox& a, const BoundingBox& b) { return giou_loss(to_corners(a), to_corners(b)); }

double giou(const BoundingBox& a, const BoundingBox& b) { return 1.0 - giou_loss(a, b); }

double l1_box_loss(const BoundingBox& a, const BoundingBox& b, double norm) {
    const Corners ca = to_corners(a), cb = to_corners(b);
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += std::fabs(ca[static_cast<std::size_t>(i)] - cb[static_cast<std::size_t>(i)]);
    return s / 4.0 / norm;
}

Corners giou_loss_grad(const Corners& a, const Corners& b) {
    require_proper(a);
    require_proper(b);
    // Partial derivatives of the pieces with respect to a's corners.
    const double ix1 = std::max(a[0], b[0]), ix2 = std::min(a[2], b[2]);
    const double iy1 = std::max(a[1], b[1]), iy2 = std::min(a[3], b[3]);
    const double iw = std::max(0.0, ix2 - ix1), ih = std::max(0.0, iy2 - iy1);
    const double inter = iw * ih;
    const double wa = a[2] - a[0], ha = a[3] - a[1];
    const double uni = wa * ha + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    const double hx1 = std::min(a[0], b[0]), hx2 = std::max(a[2], b[2]);
    const double hy1 = std::min(a[1], b[1]), hy2 = std::max(a[3], b[3]);
    const double hw = hx2 - hx1, hh = hy2 - hy1;
    const double hull = hw * hh;

    Corners d_inter{}, d_area{}, d_hull{};
    const bool overlap_x = ix2 - ix1 > 0.0, overlap_y = iy2 - iy1 > 0.0;
    if (overlap_x && overlap_y) {
        if (a[0] > b[0]) d_inter[0] = -ih;
        if (a[2] < b[2]) d_inter[2] = ih;
        if (a[1] > b[1]) d_inter[1] = -iw;
        if (a[3] < b[3]) d_inter[3] = iw;
    }
    d_area = {-ha, -wa, ha, wa};
    if (a[0] < b[0]) d_hull[0] = -hh;
    if (a[2] > b[2]) d_hull[2] = hh;
    if (a[1] < b[1]) d_hull[1] = -hw;
    if (a[3] > b[3]) d_hull[3] = hw;

    // loss = 1 - inter/uni + 1 - uni/hull
    Corners g{};
    for (std::size_t i = 0; i < 4; ++i) {
        const double d_uni = d_area[i] - d_inter[i];
        const double d_iou = (d_inter[i] * uni - inter * d_uni) / (uni * uni);
        const double d_ratio = (d_uni * hull - uni * d_hull[i]) / (hull * hull);
        g[i] = -d_iou - d_ratio;
    }
    return g;
}

double weighted_box_loss(double giou_term, double l1_term, const LossWeights& w) {
    return w.giou * giou_term + w.l1 * l1_term;
}

double stage2_total(double l_s2, double l_s1_to_s2, double l_dm, const LossWeights& w) {
    return l_s2 + l_s1_to_s2 + w.diffusion * l_dm;
}

ad::Var giou_loss(ad::Var pred, ad::Var target) {
    using namespace ad;
    Tape& tape = *pred.tape;
    for (const Tensor* t : {&pred.value(), &target.value()}) {
        if (t->size() != 4) throw std::invalid_argument("giou_loss: expected 4 corner values");
        require_proper({(*t)[0], (*t)[1], (*t)[2], (*t)[3]});
    }
    const Var zero = tape.constant(Tensor::scalar(0.0));
    auto e = [](Var v, std::size_t i) { return element(v, i); };
    const Var ax1 = e(pred, 0), ay1 = e(pred, 1), ax2 = e(pred, 2), ay2 = e(pred, 3);
    const Var bx1 = e(target, 0), by1 = e(target, 1), bx2 = e(target, 2), by2 = e(target, 3);
    const Var iw = maximum(sub(minimum(ax2, bx2), maximum(ax1, bx1)), zero);
    const Var ih = maximum(sub(minimum(ay2, by2), maximum(ay1, by1)), zero);
    const Var inter = mul(iw, ih);
    const Var area_a = mul(sub(ax2, ax1), sub(ay2, ay1));
    const Var area_b = mul(sub(bx2, bx1), sub(by2, by1));
    const Var uni = sub(add(area_a, area_b), inter);
    const Var hull = mul(sub(maximum(ax2, bx2), minimum(ax1, bx1)), sub(maximum(ay2, by2), minimum(ay1, by1)));
    const Var g = sub(div(inter, uni), div(sub(hull, uni), hull));
    return add_scalar(scale(g, -1.0), 1.0);
}

ad::Var l1_box_loss(ad::Var pred, ad::Var target) { return ad::mean(ad::abs(ad::sub(pred, target))); }

BoxLossTerms stage1_loss(ad::Var pred, const Tensor& target, const LossWeights& w, double confidence) {
    ad::Tape& tape = *pred.tape;
    BoxLossTerms out;
    if (confidence <= 0.0) {
        out.giou = out.l1 = out.total = tape.constant(Tensor::scalar(0.0));
        return out;
    }
    const ad::Var t = tape.constant(target);
    out.giou = giou_loss(pred, t);
    out.l1 = l1_box_loss(pred, t);
    out.total = ad::add(ad::scale(out.giou, w.giou), ad::scale(out.l1, w.l1));
    return out;
}

Stage2LossTerms stage2_loss(ad::Var pred_s2, const Tensor& target, const Tensor& fused_box, ad::Var l_dm,
                            const LossWeights& w, double confidence) {
    // Callers may pass values that live on the same tape; copy before recording.
    const Tensor label_box = target, fused = fused_box;
    Stage2LossTerms out;
    out.to_label = stage1_loss(pred_s2, label_box, w, confidence);
    out.to_fused = stage1_loss(pred_s2, fused, w, confidence);
    out.diffusion = confidence <= 0.0 ? pred_s2.tape->constant(Tensor::scalar(0.0)) : l_dm;
    out.total = ad::add(ad::add(out.to_label.total, out.to_fused.total), ad::scale(out.diffusion, w.diffusion));
    return out;
}

}  // namespace gdstrack
