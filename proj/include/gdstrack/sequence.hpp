// SPDX-License-Identifier: Apache-2.0
//
// On-disk RGB-T sequence layout:
//
//   <dir>/rgb/000000.ppm ...   binary P6
//   <dir>/ir/000000.pgm ...    binary P5
//   <dir>/groundtruth.txt      x,y,w,h per frame
//   <dir>/pseudolabel.txt      x,y,w,h,confidence per frame (optional)

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gdstrack/image.hpp"

namespace gdstrack {

enum class Modality { rgb, ir };

struct PseudoLabel {
    BoundingBox box;
    double confidence = 0.0;
    Modality source = Modality::rgb;
};

struct SequenceRecord {
    std::vector<Image> rgb_frames;
    std::vector<Image> ir_frames;
    std::vector<BoundingBox> gt_track;     // evaluation only; training code never reads it
    std::vector<PseudoLabel> pseudo_track; // empty until annotated

    int num_frames() const { return static_cast<int>(rgb_frames.size()); }
    int width() const { return rgb_frames.empty() ? 0 : rgb_frames.front().width; }
    int height() const { return rgb_frames.empty() ? 0 : rgb_frames.front().height; }
};

/// Checks frame-list consistency and that every present box is inside the frame.
void validate_record(const SequenceRecord& record);

void save_sequence(const SequenceRecord& record, const std::filesystem::path& dir);

struct LoadOptions {
    bool ground_truth = false;
    bool pseudo_labels = true;
};

/// Reads frames, plus groundtruth.txt / pseudolabel.txt when requested and present.
SequenceRecord load_sequence(const std::filesystem::path& dir, LoadOptions options = {});

void write_boxes(const std::vector<BoundingBox>& boxes, const std::filesystem::path& path);
std::vector<BoundingBox> read_boxes(const std::filesystem::path& path);

void write_pseudo_labels(const std::vector<PseudoLabel>& labels, const std::filesystem::path& path);
std::vector<PseudoLabel> read_pseudo_labels(const std::filesystem::path& path);

/// Shortest decimal that round-trips common pixel values (up to 4 decimals).
std::string format_number(double v);

}  // namespace gdstrack
