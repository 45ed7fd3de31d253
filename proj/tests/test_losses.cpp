// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "gdstrack/losses.hpp"
#include "gdstrack/trainer.hpp"

using namespace gdstrack;
using ad::Tape;
using ad::Var;

namespace {

Tensor corners_tensor(const BoundingBox& b) {
    const Corners c = to_corners(b);
    return Tensor({4}, std::vector<double>(c.begin(), c.end()));
}

}  // namespace

TEST_CASE("GIoU loss hand examples") {
    const BoundingBox b{0, 0, 2, 2};
    CHECK(giou_loss(b, b) == 0.0);
    CHECK(giou_loss(b, BoundingBox{3, 0, 2, 2}) == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(giou(b, BoundingBox{3, 0, 2, 2}) == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(giou_loss(b, BoundingBox{1, 0, 2, 2}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS(giou_loss(b, BoundingBox{1, 1, 0, 2}));
    CHECK_THROWS(giou_loss(BoundingBox{1, 1, 2, -1}, b));
}

TEST_CASE("differentiable GIoU agrees with the plain value and the analytic gradient") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> pos(0.0, 40.0), size(2.0, 20.0);
    for (int i = 0; i < 50; ++i) {
        const BoundingBox a{pos(rng), pos(rng), size(rng), size(rng)}, b{pos(rng), pos(rng), size(rng), size(rng)};
        Tape tape;
        const Var pa = tape.leaf(corners_tensor(a));
        const Var l = giou_loss(pa, tape.constant(corners_tensor(b)));
        CHECK(l.value()[0] == doctest::Approx(giou_loss(a, b)).epsilon(1e-13));
        tape.backward(l);
        const Corners g = giou_loss_grad(to_corners(a), to_corners(b));
        for (std::size_t k = 0; k < 4; ++k) CHECK(tape.grad(pa.id)[k] == doctest::Approx(g[k]).epsilon(1e-10));
    }
}

TEST_CASE("L1 box loss examples") {
    const BoundingBox b{10, 10, 20, 20};
    CHECK(l1_box_loss(b, b, 64) == 0.0);
    CHECK(l1_box_loss(b, BoundingBox{14, 10, 20, 20}, 64) == 1.0 / 32.0);
    Tape tape;
    const Var l = l1_box_loss(tape.constant(corners_tensor(b)), tape.constant(corners_tensor(BoundingBox{14, 10, 20, 20})));
    CHECK(l.value()[0] == 2.0);  // mean of (4, 0, 4, 0)
}

TEST_CASE("weighted stage-1 loss examples") {
    const LossWeights w;
    CHECK(weighted_box_loss(1.2, 0.1, w) == doctest::Approx(2.9).epsilon(1e-15));
    Tape tape;
    const Tensor target = corners_tensor(BoundingBox{0.2, 0.2, 0.3, 0.3});
    const BoxLossTerms same = stage1_loss(tape.constant(target), target, w);
    CHECK(same.total.value()[0] == 0.0);
    const Var pred = tape.leaf(corners_tensor(BoundingBox{0.1, 0.1, 0.4, 0.2}));
    const BoxLossTerms skip = stage1_loss(pred, target, w, 0.0);
    CHECK(skip.total.value()[0] == 0.0);
    tape.backward(skip.total);
    CHECK(tape.grad(pred.id).empty());
    const BoxLossTerms live = stage1_loss(pred, target, w, 0.7);
    CHECK(live.total.value()[0] == doctest::Approx(2.0 * live.giou.value()[0] + 5.0 * live.l1.value()[0]).epsilon(1e-15));
}

TEST_CASE("stage-2 total examples") {
    const LossWeights w;
    CHECK(stage2_total(1.0, 2.0, 0.2, w) == doctest::Approx(4.0).epsilon(1e-15));
    Tape tape;
    const Tensor box = corners_tensor(BoundingBox{0.2, 0.3, 0.25, 0.2});
    const Stage2LossTerms t = stage2_loss(tape.constant(box), box, box, tape.constant(Tensor::scalar(0.0)), w);
    CHECK(t.total.value()[0] == 0.0);
    const Stage2LossTerms u = stage2_loss(tape.leaf(corners_tensor(BoundingBox{0.1, 0.3, 0.3, 0.2})), box,
                                          corners_tensor(BoundingBox{0.25, 0.3, 0.2, 0.2}),
                                          tape.constant(Tensor::scalar(0.2)), w);
    CHECK(u.total.value()[0] == doctest::Approx(u.to_label.total.value()[0] + u.to_fused.total.value()[0] + 1.0).epsilon(1e-14));
}

TEST_CASE("loss gradients match finite differences") {
    const GradCheckReport r = grad_check("losses", 1);
    CAPTURE(r.worst_parameter);
    CHECK(r.parameters_checked > 0);
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.max_abs_gradient > 1e-6);
}
