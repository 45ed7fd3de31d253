// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "gdstrack/pseudolabel.hpp"
#include "gdstrack/synthgen.hpp"

using namespace gdstrack;

namespace {

Image canvas(double bg = 0.1) { return Image(64, 64, 1, bg); }

void block(Image& img, int x, int y, int w, int h, double v) {
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) img.at(0, yy, xx) = v;
}

}  // namespace

TEST_CASE("a translated bright block is boxed over its union footprint") {
    Image a = canvas(), b = canvas();
    block(a, 20, 30, 8, 8, 0.9);
    block(b, 22, 30, 8, 8, 0.9);
    const MotionBox m = motion_box(a, b);
    // Union footprint is x in [20, 30), y in [30, 38).
    CHECK(std::abs(m.box.x - 20) <= 2.0);
    CHECK(std::abs(m.box.x2() - 30) <= 2.0);
    CHECK(std::abs(m.box.y - 30) <= 2.0);
    CHECK(std::abs(m.box.y2() - 38) <= 2.0);
    CHECK(m.confidence > 0.9);
}

TEST_CASE("identical frames report no motion") {
    const Image a = canvas();
    CHECK_THROWS_AS(motion_box(a, a), NoMotionError);
}

TEST_CASE("of two moving blocks the larger one is chosen") {
    Image a = canvas(), b = canvas();
    block(a, 4, 4, 6, 6, 0.9);      // small block, moves right
    block(b, 6, 4, 6, 6, 0.9);
    block(a, 36, 36, 12, 12, 0.9);  // four times the area, moves down
    block(b, 36, 39, 12, 12, 0.9);
    const MotionBox m = motion_box(a, b);
    CHECK(m.box.x >= 30);
    CHECK(m.box.y >= 30);
    CHECK(m.box.x <= 37);
    CHECK(m.box.x2() >= 47);
}

TEST_CASE("label selection prefers confidence, ties go to RGB") {
    const PseudoLabel rgb{BoundingBox{1, 1, 2, 2}, 0.8, Modality::rgb};
    const PseudoLabel ir{BoundingBox{5, 5, 2, 2}, 0.6, Modality::ir};
    CHECK(select_label(rgb, ir).source == Modality::rgb);
    CHECK(select_label({rgb.box, 0.3, Modality::rgb}, {ir.box, 0.9, Modality::ir}).source == Modality::ir);
    CHECK(select_label({rgb.box, 0.5, Modality::rgb}, {ir.box, 0.5, Modality::ir}).source == Modality::rgb);
}

TEST_CASE("clean single-target sequences are labelled with mean IoU above 0.5") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        SceneConfig cfg;
        cfg.seed = seed;
        const SequenceRecord rec = annotate_sequence(generate_sequence(cfg));
        REQUIRE(rec.pseudo_track.size() == rec.gt_track.size());
        double total = 0.0;
        for (std::size_t t = 0; t < rec.gt_track.size(); ++t) total += iou(rec.pseudo_track[t].box, rec.gt_track[t]);
        CHECK(total / static_cast<double>(rec.gt_track.size()) > 0.5);
    }
}

TEST_CASE("a static sequence cannot be labelled") {
    SceneConfig cfg;
    cfg.motion_speed = 0.0;
    CHECK_THROWS_AS(annotate_sequence(generate_sequence(cfg)), UnlabelableSequenceError);
}

TEST_CASE("labels stay inside the frame when a distractor moves alongside") {
    SceneConfig cfg;
    cfg.seed = 11;
    cfg.num_distractors = 1;
    cfg.distractor_similarity = 0.9;
    cfg.noise_std = 0.02;
    const SequenceRecord rec = annotate_sequence(generate_sequence(cfg));
    for (const PseudoLabel& p : rec.pseudo_track) {
        CHECK(p.box.valid());
        CHECK(p.box.inside(rec.width(), rec.height()));
        CHECK(p.confidence >= 0.0);
        CHECK(p.confidence <= 1.0);
    }
}

TEST_CASE("labelling never looks at the ground truth") {
    SceneConfig cfg;
    cfg.seed = 2;
    SequenceRecord rec = generate_sequence(cfg);
    const SequenceRecord a = annotate_sequence(rec);
    for (BoundingBox& b : rec.gt_track) b = BoundingBox{1, 1, 3, 3};
    const SequenceRecord b = annotate_sequence(rec);
    REQUIRE(a.pseudo_track.size() == b.pseudo_track.size());
    for (std::size_t i = 0; i < a.pseudo_track.size(); ++i) {
        CHECK(a.pseudo_track[i].box == b.pseudo_track[i].box);
        CHECK(a.pseudo_track[i].confidence == b.pseudo_track[i].confidence);
    }
}
