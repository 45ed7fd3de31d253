// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "gdstrack/evalharness.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace gdstrack;

namespace {

// Box whose centre is displaced by (dx, dy) from `b`, same size.
BoundingBox shifted(const BoundingBox& b, double dx, double dy) { return {b.x + dx, b.y + dy, b.w, b.h}; }

oracle::Box ob(const BoundingBox& b) { return {b.x, b.y, b.w, b.h}; }

}  // namespace

TEST_CASE("precision counts errors below the threshold") {
    const BoundingBox g{10, 10, 20, 20};
    const std::vector<BoundingBox> gt = {g, g, g};
    const std::vector<BoundingBox> pred = {shifted(g, 1, 0), shifted(g, 0, 6), shifted(g, 30, 0)};
    const MetricReport r = compute_metrics(pred, gt, 5.0);
    CHECK(r.pr == 1.0 / 3.0);
    CHECK(r.frames == 3);
}

TEST_CASE("success AUC of IoUs {1, 0} is 11/21") {
    const BoundingBox g{10, 10, 20, 20};
    const MetricReport r = compute_metrics({g, BoundingBox{40, 40, 5, 5}}, {g, g}, 5.0);
    CHECK(r.sr_auc == 11.0 / 21.0);
    CHECK(r.curves.success.front() == 1.0);
    CHECK(r.curves.success.back() == 0.5);
}

TEST_CASE("a perfect track scores one everywhere") {
    std::vector<BoundingBox> gt;
    for (int i = 0; i < 10; ++i) gt.push_back(BoundingBox{double(i), 2.0 * i, 10.0 + i, 12.0});
    const MetricReport r = compute_metrics(gt, gt, 5.0);
    CHECK(r.pr == 1.0);
    CHECK(r.npr_auc == 1.0);
    CHECK(r.sr_auc == 1.0);
}

TEST_CASE("metrics agree with the scalar oracle and satisfy their bounds") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> pos(0, 60), size(4, 30), jitter(-12, 12);
    for (int trace = 0; trace < 20; ++trace) {
        std::vector<BoundingBox> pred, gt;
        std::vector<oracle::Box> op, og;
        for (int f = 0; f < 40; ++f) {
            const BoundingBox g{pos(rng), pos(rng), size(rng), size(rng)};
            const BoundingBox p{g.x + jitter(rng), g.y + jitter(rng), g.w * std::exp(jitter(rng) / 30), g.h * std::exp(jitter(rng) / 30)};
            gt.push_back(g), pred.push_back(p), og.push_back(ob(g)), op.push_back(ob(p));
        }
        const MetricReport r = compute_metrics(pred, gt, 5.0);
        const oracle::Metrics o = oracle::metrics(op, og, 5.0);
        CHECK(std::abs(r.pr - o.pr) < 1e-12);
        CHECK(std::abs(r.npr_auc - o.npr) < 1e-12);
        CHECK(std::abs(r.sr_auc - o.sr) < 1e-12);
        for (double v : {r.pr, r.npr_auc, r.sr_auc}) CHECK((v >= 0.0 && v <= 1.0));
        for (std::size_t i = 1; i < r.curves.precision.size(); ++i) CHECK(r.curves.precision[i] >= r.curves.precision[i - 1]);
        for (std::size_t i = 1; i < r.curves.success.size(); ++i) CHECK(r.curves.success[i] <= r.curves.success[i - 1]);
    }
    CHECK_THROWS(compute_metrics({BoundingBox{0, 0, 1, 1}}, {}, 5.0));
}

TEST_CASE("the JSON report carries pr, npr_auc, sr_auc and curves") {
    const BoundingBox g{10, 10, 20, 20};
    const auto j = nlohmann::json::parse(metrics_to_json(compute_metrics({g}, {g}, 5.0)));
    CHECK(j.at("pr").get<double>() == 1.0);
    CHECK(j.contains("npr_auc"));
    CHECK(j.contains("sr_auc"));
    CHECK(j.at("curves").at("success").at("thresholds").size() == 21);
    CHECK(j.at("curves").at("norm_precision").at("thresholds").size() == 51);
}

TEST_CASE("tracking returns one in-frame box per frame and is deterministic") {
    ModelConfig mc;
    Model model(mc);
    model.init_diffhead_from_head();
    SceneConfig scene;
    scene.seed = 12;
    scene.num_frames = 6;
    scene.num_distractors = 1;
    const SequenceRecord rec = generate_sequence(scene);
    for (HeadChoice head : {HeadChoice::mdgf, HeadChoice::tgid}) {
        TrackOptions opts;
        opts.head = head;
        opts.seed = 3;
        const TrackOutput a = track_sequence(model, rec, rec.gt_track[0], opts);
        const TrackOutput b = track_sequence(model, rec, rec.gt_track[0], opts);
        REQUIRE(a.boxes.size() == 6);
        CHECK(a.boxes[0] == rec.gt_track[0]);
        for (std::size_t i = 0; i < a.boxes.size(); ++i) {
            CHECK(a.boxes[i] == b.boxes[i]);
            CHECK(a.scores[i] == b.scores[i]);
            CHECK(a.boxes[i].valid());
            CHECK(a.boxes[i].inside(rec.width(), rec.height()));
        }
        const MetricReport m = evaluate_track(a, rec.gt_track, 5.0);
        CHECK(m.frames == 5);
    }
    CHECK_THROWS(track_sequence(model, rec, BoundingBox{1, 1, 0, 3}, TrackOptions{}));
}

TEST_CASE("synthetic suites are reproducible and split into regular and heavy halves") {
    SynthConfig cfg;
    const BenchmarkSuite a = make_benchmark_suite(cfg, 5, 6), b = make_benchmark_suite(cfg, 5, 6);
    CHECK(a.regular.size() == 3);
    CHECK(a.distractor_heavy.size() == 3);
    CHECK(a.all().size() == 6);
    CHECK(a.distractor_heavy[1].rgb_frames == b.distractor_heavy[1].rgb_frames);
    const auto train = make_synthetic_dataset(cfg, 5, 3, 0);
    CHECK_FALSE(train[0].rgb_frames == a.regular[0].rgb_frames);
}

TEST_CASE("ablation grids: row order, beta = 0 reduction and determinism") {
    const auto comps = ablation_grid("components");
    REQUIRE(comps.size() == 3);
    CHECK(comps[0].label == "baseline");
    CHECK(comps[1].label == "+MDGF");
    CHECK(comps[2].label == "+MDGF+TGID");
    CHECK(ablation_grid("adjacency").size() == 4);
    CHECK_THROWS(ablation_grid("nothing"));

    RunConfig base = make_preset("desk");
    base.train.epoch_unfreeze_encoder = 0;
    base.train.epoch_freeze_stage1 = 1;
    base.train.epoch_end = 2;
    base.train.samples_per_sequence = 1;
    const auto train_set = annotate_all(make_synthetic_dataset(base.synth, 1, 3, 0));
    const BenchmarkSuite suite = make_benchmark_suite(base.synth, 1, 2);
    const auto beta = ablation_grid("beta");
    const std::vector<AblationCell> cells = {beta[0], beta[1]};  // no distractor, beta = 0 with p > 0.5
    const auto rows = run_ablation(base, cells, train_set, suite);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].all.pr == rows[1].all.pr);
    CHECK(rows[0].all.sr_auc == rows[1].all.sr_auc);
    CHECK(rows[0].heavy.npr_auc == rows[1].heavy.npr_auc);
    const auto again = run_ablation(base, cells, train_set, suite);
    CHECK(format_ablation_table(again) == format_ablation_table(rows));
}
