// SPDX-License-Identifier: Apache-2.0
//
// Box regression losses. Boxes are handled in corner form (x1, y1, x2, y2);
// the training pipeline feeds corners already divided by the crop side.

#pragma once

#include <array>

#include "gdstrack/autodiff.hpp"
#include "gdstrack/image.hpp"

namespace gdstrack {

struct LossWeights {
    double giou = 2.0;       // lambda1
    double l1 = 5.0;         // lambda2
    double diffusion = 5.0;  // lambda
};

using Corners = std::array<double, 4>;

Corners to_corners(const BoundingBox& b);

/// 1 - GIoU. Throws on a degenerate (non-positive extent) box.
double giou_loss(const BoundingBox& a, const BoundingBox& b);
double giou(const BoundingBox& a, const BoundingBox& b);
/// Mean absolute corner difference divided by `norm`.
double l1_box_loss(const BoundingBox& a, const BoundingBox& b, double norm);

/// Analytic gradient of giou_loss with respect to the corners of `a`.
Corners giou_loss_grad(const Corners& a, const Corners& b);
double giou_loss(const Corners& a, const Corners& b);

double weighted_box_loss(double giou_term, double l1_term, const LossWeights& w);
double stage2_total(double l_s2, double l_s1_to_s2, double l_dm, const LossWeights& w);

struct BoxLossTerms {
    ad::Var total;
    ad::Var giou;
    ad::Var l1;
};

/// Differentiable forms over corner Vars of shape {4}.
ad::Var giou_loss(ad::Var pred, ad::Var target);
ad::Var l1_box_loss(ad::Var pred, ad::Var target);

/// lambda1 * giou + lambda2 * l1; a zero-confidence label contributes a constant 0.
BoxLossTerms stage1_loss(ad::Var pred, const Tensor& target, const LossWeights& w, double confidence = 1.0);

struct Stage2LossTerms {
    ad::Var total;
    BoxLossTerms to_label;  // against the pseudo label
    BoxLossTerms to_fused;  // against the detached fusion-head box
    ad::Var diffusion;
};

Stage2LossTerms stage2_loss(ad::Var pred_s2, const Tensor& target, const Tensor& fused_box, ad::Var l_dm,
                            const LossWeights& w, double confidence = 1.0);

}  // namespace gdstrack
