// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "gdstrack/pseudolabel.hpp"

namespace gdstrack {

TrackOutput track_sequence(const Model& model, const SequenceRecord& record, const BoundingBox& init_box,
                           const TrackOptions& options) {
    validate_record(record);
    if (!init_box.valid()) throw std::invalid_argument("track_sequence: invalid initial box");
    const CropGeometry& geom = model.config().crop;
    const int side = geom.search_side;
    const int frames = record.num_frames();
    TrackOutput out;
    out.boxes.push_back(init_box);
    out.scores.push_back(1.0);
    out.clipped.push_back(false);
    const CropPair templ = crop_regions(record, 0, init_box, geom, CropMode::template_region);
    BoundingBox prev = init_box;
    for (int t = 1; t < frames; ++t) {
        const double window =
            std::max(options.min_window, geom.window_scale(CropMode::search_region) * std::max(prev.w, prev.h));
        const CropPair search = crop_pair_window(record, t, prev.cx(), prev.cy(), window, side);
        ad::Tape tape;
        const FusionPass pass = model.fuse(tape, templ, search);
        TrackResult result;
        if (options.head == HeadChoice::tgid) {
            if (model.config().mdgf.fusion != FusionMode::graph) {
                throw std::invalid_argument("track_sequence: the diffusion head requires graph fusion");
            }
            const Tensor f_s2 = model.tgid().infer(model.store(), pass.fv.value(), pass.fi.value(),
                                                   pass.fusion.l1.value(), mix_seed(options.seed, static_cast<std::uint64_t>(t)));
            result = model.diffhead().predict(model.store(), f_s2, model.grid(), side);
        } else {
            result = TrackResult{pass.head.score, corners_to_box(pass.head.corners.value()), pass.head.map_tl,
                                 pass.head.map_br};
        }
        BoundingBox box = search.transform.to_frame(result.box);
        bool flagged = false;
        if (!clip_box(box, record.width(), record.height())) {
            // Entirely outside: keep the previous extent, clamped into the frame.
            flagged = true;
            const double cx = std::clamp(box.cx(), 0.0, static_cast<double>(record.width()));
            const double cy = std::clamp(box.cy(), 0.0, static_cast<double>(record.height()));
            box = BoundingBox{cx - prev.w / 2, cy - prev.h / 2, prev.w, prev.h};
            clip_box(box, record.width(), record.height());
        }
        out.boxes.push_back(box);
        out.scores.push_back(result.score);
        out.clipped.push_back(flagged);
        prev = box;
    }
    return out;
}

void write_track_output(const TrackOutput& out, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < out.boxes.size(); ++i) {
        const BoundingBox& b = out.boxes[i];
        f << format_number(b.x) << ',' << format_number(b.y) << ',' << format_number(b.w) << ',' << format_number(b.h)
          << ',' << format_number(out.scores[i]) << '\n';
    }
}

MetricReport compute_metrics(const std::vector<BoundingBox>& pred, const std::vector<BoundingBox>& gt,
                             double pr_threshold) {
    if (pred.size() != gt.size()) throw std::invalid_argument("compute_metrics: length mismatch");
    MetricReport r;
    const std::size_t n = pred.size();
    r.frames = static_cast<int>(n);
    MetricCurves& c = r.curves;
    for (int i = 0; i <= 50; ++i) c.precision_thresholds.push_back(i);
    for (int i = 0; i <= 50; ++i) c.norm_precision_thresholds.push_back(i / 100.0);
    for (int i = 0; i <= 20; ++i) c.success_thresholds.push_back(i / 20.0);
    c.precision.assign(c.precision_thresholds.size(), 0.0);
    c.norm_precision.assign(c.norm_precision_thresholds.size(), 0.0);
    c.success.assign(c.success_thresholds.size(), 0.0);
    if (n == 0) return r;

    std::size_t within = 0;
    std::vector<std::size_t> prec(c.precision.size(), 0), nprec(c.norm_precision.size(), 0), succ(c.success.size(), 0);
    for (std::size_t k = 0; k < n; ++k) {
        const double err = center_distance(pred[k], gt[k]);
        const double nx = (pred[k].cx() - gt[k].cx()) / gt[k].w;
        const double ny = (pred[k].cy() - gt[k].cy()) / gt[k].h;
        const double nerr = std::sqrt(nx * nx + ny * ny);
        const double overlap = iou(pred[k], gt[k]);
        if (err < pr_threshold) ++within;
        for (std::size_t i = 0; i < prec.size(); ++i) prec[i] += err < c.precision_thresholds[i] ? 1 : 0;
        for (std::size_t i = 0; i < nprec.size(); ++i) nprec[i] += nerr <= c.norm_precision_thresholds[i] ? 1 : 0;
        for (std::size_t i = 0; i < succ.size(); ++i) succ[i] += overlap >= c.success_thresholds[i] ? 1 : 0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    r.pr = static_cast<double>(within) * inv;
    double npr = 0.0, sr = 0.0;
    for (std::size_t i = 0; i < prec.size(); ++i) c.precision[i] = static_cast<double>(prec[i]) * inv;
    for (std::size_t i = 0; i < nprec.size(); ++i) {
        c.norm_precision[i] = static_cast<double>(nprec[i]) * inv;
        npr += c.norm_precision[i];
    }
    for (std::size_t i = 0; i < succ.size(); ++i) {
        c.success[i] = static_cast<double>(succ[i]) * inv;
        sr += c.success[i];
    }
    r.npr_auc = npr / static_cast<double>(nprec.size());
    r.sr_auc = sr / static_cast<double>(succ.size());
    return r;
}

MetricReport evaluate_track(const TrackOutput& out, const std::vector<BoundingBox>& gt, double pr_threshold) {
    if (out.boxes.size() != gt.size() || gt.empty()) throw std::invalid_argument("evaluate_track: length mismatch");
    return compute_metrics(std::vector<BoundingBox>(out.boxes.begin() + 1, out.boxes.end()),
                           std::vector<BoundingBox>(gt.begin() + 1, gt.end()), pr_threshold);
}

std::string metrics_to_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["pr"] = r.pr;
    j["npr_auc"] = r.npr_auc;
    j["sr_auc"] = r.sr_auc;
    j["frames"] = r.frames;
    j["curves"] = {
        {"precision", {{"thresholds", r.curves.precision_thresholds}, {"values", r.curves.precision}}},
        {"norm_precision", {{"thresholds", r.curves.norm_precision_thresholds}, {"values", r.curves.norm_precision}}},
        {"success", {{"thresholds", r.curves.success_thresholds}, {"values", r.curves.success}}},
    };
    return j.dump(2) + "\n";
}

MetricReport evaluate_suite(const Model& model, const std::vector<SequenceRecord>& suite, const EvalConfig& config,
                            std::uint64_t seed) {
    const int n = static_cast<int>(suite.size());
    std::vector<TrackOutput> outputs(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 1)
    for (int s = 0; s < n; ++s) {
        const SequenceRecord& rec = suite[static_cast<std::size_t>(s)];
        try {
            if (rec.gt_track.size() != static_cast<std::size_t>(rec.num_frames())) {
                throw std::invalid_argument("evaluate_suite: sequence without ground truth");
            }
            BoundingBox init = rec.gt_track.front();
            if (config.init_from_pseudo) {
                if (rec.pseudo_track.empty()) throw std::invalid_argument("evaluate_suite: pseudo init needs labels");
                init = rec.pseudo_track.front().box;
            }
            TrackOptions opts;
            opts.head = config.head;
            opts.seed = mix_seed(seed, static_cast<std::uint64_t>(s));
            outputs[static_cast<std::size_t>(s)] = track_sequence(model, rec, init, opts);
        } catch (...) {
            errors[static_cast<std::size_t>(s)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<BoundingBox> pred, gt;
    for (int s = 0; s < n; ++s) {
        const auto& out = outputs[static_cast<std::size_t>(s)];
        const auto& g = suite[static_cast<std::size_t>(s)].gt_track;
        pred.insert(pred.end(), out.boxes.begin() + 1, out.boxes.end());
        gt.insert(gt.end(), g.begin() + 1, g.end());
    }
    return compute_metrics(pred, gt, config.pr_threshold);
}

std::vector<SequenceRecord> make_synthetic_dataset(const SynthConfig& config, std::uint64_t seed, int count,
                                                   std::uint64_t stream) {
    std::vector<SequenceRecord> out;
    for (int i = 0; i < count; ++i) {
        SceneConfig scene = config.scene;
        scene.num_distractors = i % (config.max_distractors + 1);
        scene.seed = mix_seed(seed, stream, static_cast<std::uint64_t>(i));
        out.push_back(generate_sequence(scene));
    }
    return out;
}

std::vector<SequenceRecord> BenchmarkSuite::all() const {
    std::vector<SequenceRecord> out = regular;
    out.insert(out.end(), distractor_heavy.begin(), distractor_heavy.end());
    return out;
}

BenchmarkSuite make_benchmark_suite(const SynthConfig& config, std::uint64_t seed, int count) {
    BenchmarkSuite suite;
    const int heavy = count / 2;
    for (int i = 0; i < count; ++i) {
        SceneConfig scene = config.scene;
        scene.seed = mix_seed(seed, 0x6576616cULL, static_cast<std::uint64_t>(i));
        if (i < count - heavy) {
            scene.num_distractors = i % (config.max_distractors + 1);
            suite.regular.push_back(generate_sequence(scene));
        } else {
            scene.num_distractors = 3;
            scene.distractor_similarity = 0.9;
            suite.distractor_heavy.push_back(generate_sequence(scene));
        }
    }
    return suite;
}

std::vector<SequenceRecord> annotate_all(std::vector<SequenceRecord> records) {
    std::vector<SequenceRecord> out;
    for (SequenceRecord& r : records) {
        try {
            out.push_back(annotate_sequence(std::move(r)));
        } catch (const UnlabelableSequenceError&) {
        }
    }
    return out;
}

std::vector<AblationCell> ablation_grid(const std::string& name) {
    std::vector<AblationCell> cells;
    auto add = [&](std::string label, std::map<std::string, std::string> o) {
        cells.push_back(AblationCell{name, std::move(label), std::move(o)});
    };
    if (name == "components") {
        add("baseline", {{"mdgf.fusion", "sum_only"}, {"train.stage1_only", "true"}, {"eval.head", "mdgf"}});
        add("+MDGF", {{"eval.head", "mdgf"}});
        add("+MDGF+TGID", {{"eval.head", "tgid"}});
    } else if (name == "adjacency") {
        for (const char* m : {"identity", "qkv", "cosine", "amg"})
            add(m, {{"amg.mode", m}, {"train.stage1_only", "true"}, {"eval.head", "mdgf"}});
    } else if (name == "topk") {
        for (const char* k : {"16", "32", "64", "96", "128"})
            add("k=" + std::string(k), {{"amg.top_k", k}, {"train.stage1_only", "true"}, {"eval.head", "mdgf"}});
    } else if (name == "beta") {
        add("no distractor", {{"tgid.inject_prob", "0"}, {"eval.head", "tgid"}});
        for (const char* b : {"0", "0.25", "0.5", "0.75"})
            add("beta=" + std::string(b) + " p>0.5", {{"tgid.beta_distractor", b}, {"eval.head", "tgid"}});
        add("beta=0.5 always", {{"tgid.beta_distractor", "0.5"}, {"tgid.inject_prob", "1"}, {"eval.head", "tgid"}});
    } else if (name == "lambda") {
        for (const char* l : {"1", "5", "10"}) add("lambda=" + std::string(l), {{"loss.lambda", l}, {"eval.head", "tgid"}});
    } else if (name == "nhead") {
        for (const char* h : {"1", "2", "4"})
            add("nhead=" + std::string(h), {{"mdgf.nhead", h}, {"train.stage1_only", "true"}, {"eval.head", "mdgf"}});
    } else if (name == "background") {
        add("whole feature", {{"tgid.filter_background", "false"}, {"eval.head", "tgid"}});
        add("background removed", {{"tgid.filter_background", "true"}, {"eval.head", "tgid"}});
    } else {
        throw std::invalid_argument("unknown ablation grid: " + name);
    }
    return cells;
}

namespace {

// Training key: everything except evaluation settings and the stage-1-only flag,
// which does not change stage-1 parameters.
std::string training_key(const RunConfig& c) {
    std::string key;
    std::istringstream in(to_text(c));
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("eval.", 0) == 0 || line.rfind("train.stage1_only", 0) == 0) continue;
        key += line + "\n";
    }
    return key;
}

struct CachedModel {
    std::string key;
    bool full_schedule = false;
    std::unique_ptr<Model> model;
};

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<AblationCell>& cells,
                                      const std::vector<SequenceRecord>& train_set, const BenchmarkSuite& suite,
                                      std::ostream* progress) {
    std::vector<CachedModel> cache;
    std::vector<AblationRow> rows;
    const std::vector<SequenceRecord> everything = suite.all();
    for (const AblationCell& cell : cells) {
        RunConfig cfg = base;
        apply_overrides(cfg, cell.overrides);
        const bool need_stage2 = cfg.eval.head == HeadChoice::tgid;
        if (need_stage2) cfg.train.stage1_only = false;
        const std::string key = training_key(cfg);
        CachedModel* hit = nullptr;
        for (CachedModel& m : cache)
            if (m.key == key && (m.full_schedule || !need_stage2)) hit = &m;
        if (hit == nullptr) {
            if (progress) *progress << "[ablate] training " << cell.group << " / " << cell.label << std::endl;
            CachedModel m;
            m.key = key;
            m.full_schedule = !cfg.train.stage1_only;
            m.model = std::make_unique<Model>(cfg.model);
            train(*m.model, train_set, cfg.train);
            cache.push_back(std::move(m));
            hit = &cache.back();
        }
        AblationRow row;
        row.group = cell.group;
        row.label = cell.label;
        row.all = evaluate_suite(*hit->model, everything, cfg.eval, cfg.seed);
        row.heavy = evaluate_suite(*hit->model, suite.distractor_heavy, cfg.eval, cfg.seed);
        if (progress) {
            *progress << "[ablate] " << cell.group << " / " << cell.label << ": PR " << row.all.pr << " heavy PR "
                      << row.heavy.pr << std::endl;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::string out;
    std::string group;
    char buf[256];
    for (const AblationRow& r : rows) {
        if (r.group != group) {
            group = r.group;
            out += "\n## " + group + "\n";
            std::snprintf(buf, sizeof buf, "%-24s %7s %7s %7s | %9s %9s %9s\n", "setting", "PR", "NPR", "SR", "heavy PR",
                          "heavy NPR", "heavy SR");
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "%-24s %7.2f %7.2f %7.2f | %9.2f %9.2f %9.2f\n", r.label.c_str(),
                      100.0 * r.all.pr, 100.0 * r.all.npr_auc, 100.0 * r.all.sr_auc, 100.0 * r.heavy.pr,
                      100.0 * r.heavy.npr_auc, 100.0 * r.heavy.sr_auc);
        out += buf;
    }
    return out;
}

}  // namespace gdstrack
