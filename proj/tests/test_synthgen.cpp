// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gdstrack/sequence.hpp"
#include "gdstrack/synthgen.hpp"

using namespace gdstrack;

namespace {

// Brute-force region finder: bounding box of the 4-connected region of
// pixels equal to the frame maximum that contains the first maximal pixel.
BoundingBox brightest_region(const Image& ir) {
    double best = -1.0;
    int sx = 0, sy = 0;
    for (int y = 0; y < ir.height; ++y)
        for (int x = 0; x < ir.width; ++x)
            if (ir.at(0, y, x) > best) best = ir.at(0, y, x), sx = x, sy = y;
    std::vector<char> seen(static_cast<std::size_t>(ir.width) * ir.height, 0);
    std::vector<std::pair<int, int>> stack = {{sx, sy}};
    seen[static_cast<std::size_t>(sy) * ir.width + sx] = 1;
    int x0 = sx, x1 = sx, y0 = sy, y1 = sy;
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
        const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
        for (const auto& q : nb) {
            if (q[0] < 0 || q[1] < 0 || q[0] >= ir.width || q[1] >= ir.height) continue;
            const auto i = static_cast<std::size_t>(q[1]) * ir.width + q[0];
            if (seen[i] || ir.at(0, q[1], q[0]) != best) continue;
            seen[i] = 1;
            stack.push_back({q[0], q[1]});
        }
    }
    return {double(x0), double(y0), double(x1 - x0 + 1), double(y1 - y0 + 1)};
}

bool disjoint(const BoundingBox& a, const BoundingBox& b) {
    return a.x2() <= b.x || b.x2() <= a.x || a.y2() <= b.y || b.y2() <= a.y;
}

double patch_distance(const Image& img, const BoundingBox& a, const BoundingBox& b) {
    double worst = 0.0;
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < static_cast<int>(a.h); ++y)
            for (int x = 0; x < static_cast<int>(a.w); ++x)
                worst = std::max(worst, std::abs(img.at(c, static_cast<int>(a.y) + y, static_cast<int>(a.x) + x) -
                                                 img.at(c, static_cast<int>(b.y) + y, static_cast<int>(b.x) + x)));
    return worst;
}

}  // namespace

TEST_CASE("without distractors or noise the brightest IR region is the target") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SceneConfig cfg;
        cfg.seed = seed;
        const SequenceRecord rec = generate_sequence(cfg);
        REQUIRE(rec.num_frames() == cfg.num_frames);
        for (int t = 0; t < rec.num_frames(); ++t) {
            const BoundingBox found = brightest_region(rec.ir_frames[static_cast<std::size_t>(t)]);
            const BoundingBox& gt = rec.gt_track[static_cast<std::size_t>(t)];
            CHECK(std::abs(found.x - gt.x) <= 1.0);
            CHECK(std::abs(found.y - gt.y) <= 1.0);
            CHECK(std::abs(found.x2() - gt.x2()) <= 1.0);
            CHECK(std::abs(found.y2() - gt.y2()) <= 1.0);
        }
    }
}

TEST_CASE("the same seed renders bit-identical frames") {
    SceneConfig cfg;
    cfg.seed = 42;
    cfg.num_distractors = 2;
    cfg.noise_std = 0.05;
    const SequenceRecord a = generate_sequence(cfg), b = generate_sequence(cfg);
    CHECK(a.rgb_frames == b.rgb_frames);
    CHECK(a.ir_frames == b.ir_frames);
    CHECK(a.gt_track == b.gt_track);
    cfg.seed = 43;
    CHECK_FALSE(generate_sequence(cfg).rgb_frames == a.rgb_frames);
}

TEST_CASE("fully similar distractors are indistinguishable from the target") {
    SceneConfig cfg;
    cfg.seed = 5;
    cfg.num_distractors = 2;
    cfg.distractor_similarity = 1.0;
    const SyntheticSequence s = generate_scene(cfg);
    int compared = 0;
    for (int t = 0; t < cfg.num_frames; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const BoundingBox& gt = s.record.gt_track[i];
        const BoundingBox& d0 = s.distractor_tracks[0][i];
        const BoundingBox& d1 = s.distractor_tracks[1][i];
        if (!(disjoint(gt, d0) && disjoint(gt, d1) && disjoint(d0, d1))) continue;
        ++compared;
        // Below one quantisation step in every channel of both modalities.
        for (const BoundingBox* d : {&d0, &d1}) {
            CHECK(patch_distance(s.record.rgb_frames[i], gt, *d) <= 1.0 / 255.0 + 1e-12);
            CHECK(patch_distance(s.record.ir_frames[i], gt, *d) <= 1.0 / 255.0 + 1e-12);
        }
        CHECK(patch_distance(s.record.rgb_frames[i], d0, d1) <= 1.0 / 255.0 + 1e-12);
    }
    CHECK(compared > 0);
}

TEST_CASE("scene config validation") {
    SceneConfig cfg;
    cfg.target_size = 0;
    CHECK_THROWS(generate_scene(cfg));
    cfg = SceneConfig{};
    cfg.distractor_similarity = 1.5;
    CHECK_THROWS(generate_scene(cfg));
    cfg = SceneConfig{};
    cfg.num_frames = 2;
    CHECK_THROWS(generate_scene(cfg));
}

TEST_CASE("a window equal to the box reproduces its pixels") {
    SceneConfig cfg;
    cfg.seed = 3;
    const SequenceRecord rec = generate_sequence(cfg);
    const Image& frame = rec.rgb_frames[0];
    const BoundingBox box{16, 16, 32, 32};
    CropGeometry geom;
    geom.template_side = 32;
    geom.context_scale = 1.0;
    const CropPair pair = crop_regions(rec, 0, box, geom, CropMode::template_region);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) CHECK(pair.rgb.at(c, y, x) == frame.at(c, 16 + y, 16 + x));
    CHECK(pair.ir.channels == 1);
}

TEST_CASE("crops past the frame corner replicate the edge pixels") {
    SceneConfig cfg;
    cfg.seed = 4;
    const SequenceRecord rec = generate_sequence(cfg);
    const Image& frame = rec.ir_frames[0];
    CropTransform tf;
    const Image crop = crop_window(frame, 0.0, 0.0, 32.0, 32, &tf);
    // Upper-left quadrant lies outside the frame: every pixel equals frame(0, 0).
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) CHECK(crop.at(0, y, x) == frame.at(0, 0, 0));
    // Above the frame, columns replicate the first row.
    for (int y = 0; y < 16; ++y)
        for (int x = 16; x < 32; ++x) CHECK(crop.at(0, y, x) == frame.at(0, 0, x - 16));
    // Left of the frame, rows replicate the first column.
    for (int y = 16; y < 32; ++y)
        for (int x = 0; x < 16; ++x) CHECK(crop.at(0, y, x) == frame.at(0, y - 16, 0));
}

TEST_CASE("frame to crop to frame round-trip stays within half a pixel") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> pos(0.0, 48.0), size(4.0, 16.0);
    SceneConfig cfg;
    const SequenceRecord rec = generate_sequence(cfg);
    CropGeometry geom;
    for (int i = 0; i < 200; ++i) {
        const BoundingBox box{pos(rng), pos(rng), size(rng), size(rng)};
        for (CropMode mode : {CropMode::template_region, CropMode::search_region}) {
            const CropPair pair = crop_regions(rec, 0, box, geom, mode);
            const BoundingBox back = pair.transform.to_frame(pair.transform.to_crop(box));
            CHECK(std::abs(back.x - box.x) < 0.5);
            CHECK(std::abs(back.y - box.y) < 0.5);
            CHECK(std::abs(back.w - box.w) < 0.5);
            CHECK(std::abs(back.h - box.h) < 0.5);
            // The window is centred on the box.
            const BoundingBox c = pair.transform.to_crop(box);
            CHECK(c.cx() == doctest::Approx(geom.side(mode) / 2.0));
        }
    }
    CHECK_THROWS(crop_regions(rec, 0, BoundingBox{5, 5, 0, 4}, geom, CropMode::search_region));
}

TEST_CASE("sequences survive a save/load round-trip") {
    SceneConfig cfg;
    cfg.seed = 8;
    cfg.num_frames = 5;
    cfg.num_distractors = 1;
    cfg.noise_std = 0.02;
    SequenceRecord rec = generate_sequence(cfg);
    rec.pseudo_track.assign(5, PseudoLabel{BoundingBox{1.5, 2, 10, 11.25}, 0.8125, Modality::ir});
    const auto dir = std::filesystem::temp_directory_path() / "gdstrack_test_seq";
    std::filesystem::remove_all(dir);
    save_sequence(rec, dir);
    CHECK(std::filesystem::exists(dir / "rgb" / "000000.ppm"));
    CHECK(std::filesystem::exists(dir / "ir" / "000004.pgm"));
    LoadOptions opts;
    opts.ground_truth = true;
    const SequenceRecord back = load_sequence(dir, opts);
    CHECK(back.rgb_frames == rec.rgb_frames);
    CHECK(back.ir_frames == rec.ir_frames);
    CHECK(back.gt_track == rec.gt_track);
    REQUIRE(back.pseudo_track.size() == 5);
    CHECK(back.pseudo_track[2].box == rec.pseudo_track[2].box);
    CHECK(back.pseudo_track[2].confidence == 0.8125);
    // Ground truth is only read when asked for.
    CHECK(load_sequence(dir).gt_track.empty());
    std::filesystem::remove_all(dir);
}
