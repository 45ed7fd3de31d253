// SPDX-License-Identifier: Apache-2.0
//
// Label-free box annotation from motion energy. A frame pair is differenced,
// box-blurred and thresholded at mean + 2 * stddev; the largest 4-connected
// component, grown by any components lying within a few pixels of it, gives
// the box, and the share of motion energy inside that box gives the
// confidence. The RGB and IR candidates are then reconciled by keeping the
// more confident one.

#pragma once

#include <stdexcept>
#include <string>

#include "gdstrack/image.hpp"
#include "gdstrack/sequence.hpp"

namespace gdstrack {

struct NoMotionError : std::runtime_error {
    NoMotionError() : std::runtime_error("no pixel exceeds the motion threshold") {}
};

struct UnlabelableSequenceError : std::runtime_error {
    UnlabelableSequenceError() : std::runtime_error("no frame of the sequence contains detectable motion") {}
};

struct MotionParams {
    int blur_window = 3;
    double threshold_sigmas = 2.0;
    int merge_gap = 6;  // components this close (pixels) to the chosen one are merged into it
};

struct MotionBox {
    BoundingBox box;
    double confidence = 0.0;
};

/// Absolute temporal difference averaged over channels, then box-blurred.
std::vector<double> motion_energy(const Image& prev, const Image& cur, int blur_window);

/// Throws NoMotionError when the thresholded map is empty.
MotionBox motion_box(const Image& prev, const Image& cur, const MotionParams& params = {});

/// Higher confidence wins; exact ties go to RGB.
PseudoLabel select_label(const PseudoLabel& rgb, const PseudoLabel& ir);

/// Fills record.pseudo_track. Frame 0 copies frame 1; frames where both
/// modalities report no motion inherit the previous label with confidence 0.
/// Throws UnlabelableSequenceError when no frame has motion.
SequenceRecord annotate_sequence(SequenceRecord record, const MotionParams& params = {});

}  // namespace gdstrack
