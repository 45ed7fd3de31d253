// SPDX-License-Identifier: Apache-2.0
//
// Tracking loop, metrics and the ablation runner.
//
// Metrics over per-frame predictions against ground truth:
//   PR      fraction of frames with centre error < threshold (pixels)
//   NPR AUC mean over 51 thresholds in [0, 0.5] of the fraction with
//           normalised centre error <= threshold; the error divides the
//           x and y offsets by the ground-truth width and height
//   SR AUC  mean over IoU thresholds {0, 0.05, ..., 1} of the fraction with IoU >= threshold

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gdstrack/config.hpp"
#include "gdstrack/model.hpp"
#include "gdstrack/sequence.hpp"

namespace gdstrack {

struct TrackOptions {
    HeadChoice head = HeadChoice::mdgf;
    std::uint64_t seed = 0;
    double min_window = 8.0;  // smallest search window in frame pixels
};

struct TrackOutput {
    std::vector<BoundingBox> boxes;  // boxes[0] is the initial box
    std::vector<double> scores;      // scores[0] = 1
    std::vector<bool> clipped;       // prediction fell fully outside the frame
};

TrackOutput track_sequence(const Model& model, const SequenceRecord& record, const BoundingBox& init_box,
                           const TrackOptions& options);

/// Writes one `x,y,w,h,score` line per frame.
void write_track_output(const TrackOutput& out, const std::filesystem::path& path);

struct MetricCurves {
    std::vector<double> precision_thresholds;  // 0..50 px
    std::vector<double> precision;
    std::vector<double> norm_precision_thresholds;  // 0, 0.01, ..., 0.5
    std::vector<double> norm_precision;
    std::vector<double> success_thresholds;  // 0, 0.05, ..., 1
    std::vector<double> success;
};

struct MetricReport {
    double pr = 0.0;
    double npr_auc = 0.0;
    double sr_auc = 0.0;
    int frames = 0;
    MetricCurves curves;
};

/// Equal-length prediction and ground-truth lists (frame 0 already removed).
MetricReport compute_metrics(const std::vector<BoundingBox>& pred, const std::vector<BoundingBox>& gt,
                             double pr_threshold);

/// Drops frame 0 of both tracks, then compute_metrics.
MetricReport evaluate_track(const TrackOutput& out, const std::vector<BoundingBox>& gt, double pr_threshold);

std::string metrics_to_json(const MetricReport& report);

/// Tracks every sequence (ground truth required) and pools all frames.
MetricReport evaluate_suite(const Model& model, const std::vector<SequenceRecord>& suite, const EvalConfig& config,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Fixed synthetic suites

/// Training-style sequences: i mod (max_distractors + 1) distractors each.
std::vector<SequenceRecord> make_synthetic_dataset(const SynthConfig& config, std::uint64_t seed, int count,
                                                   std::uint64_t stream);

struct BenchmarkSuite {
    std::vector<SequenceRecord> regular;
    std::vector<SequenceRecord> distractor_heavy;
    std::vector<SequenceRecord> all() const;
};

/// Held-out evaluation sequences (ground truth kept), half of them distractor-heavy.
BenchmarkSuite make_benchmark_suite(const SynthConfig& config, std::uint64_t seed, int count);

/// Runs the pseudo labeller over every record (records that cannot be labelled are dropped).
std::vector<SequenceRecord> annotate_all(std::vector<SequenceRecord> records);

// ---------------------------------------------------------------------------
// Ablations

struct AblationCell {
    std::string group;  // table name, e.g. "components"
    std::string label;  // row label
    std::map<std::string, std::string> overrides;
};

struct AblationRow {
    std::string group, label;
    MetricReport all, heavy;
};

/// Named grids: components, adjacency, topk, beta, lambda, nhead, background.
std::vector<AblationCell> ablation_grid(const std::string& name);

/// Trains (with caching of identical training configs) and evaluates each cell.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<AblationCell>& cells,
                                      const std::vector<SequenceRecord>& train_set, const BenchmarkSuite& suite,
                                      std::ostream* progress = nullptr);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace gdstrack
