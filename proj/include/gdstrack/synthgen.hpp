// SPDX-License-Identifier: Apache-2.0
//
// Synthetic RGB-T scenes: one target plus optional look-alike distractors,
// each following its own smooth random walk. RGB renders colour and a blocky
// object-local texture; IR renders a per-object temperature. Both modalities
// share one geometry, so the pair is registered by construction.

#pragma once

#include <cstdint>
#include <vector>

#include "gdstrack/image.hpp"
#include "gdstrack/sequence.hpp"

namespace gdstrack {

struct SceneConfig {
    int frame_width = 64;
    int frame_height = 64;
    int num_frames = 30;
    int num_distractors = 0;
    int target_size = 14;
    double distractor_similarity = 0.5;  // 1 renders distractors identically to the target
    double motion_speed = 1.5;           // pixels per frame
    double noise_std = 0.0;              // sensor noise, intensity units in [0, 1]
    std::uint64_t seed = 0;

    void validate() const;
};

/// Generator output: the on-disk record plus the distractor tracks, which
/// tests use as oracles and which are never written to disk.
struct SyntheticSequence {
    SequenceRecord record;
    std::vector<std::vector<BoundingBox>> distractor_tracks;  // [distractor][frame]
};

SyntheticSequence generate_scene(const SceneConfig& config);

inline SequenceRecord generate_sequence(const SceneConfig& config) { return generate_scene(config).record; }

// ---------------------------------------------------------------------------
// Template / search cropping

enum class CropMode { template_region, search_region };

struct CropGeometry {
    int template_side = 32;
    int search_side = 64;
    double context_scale = 2.0;  // template window = context_scale * max(w, h)

    /// Search windows keep the template's pixel resolution, so they span
    /// search_side / template_side times the template window.
    double window_scale(CropMode mode) const {
        return mode == CropMode::template_region ? context_scale
                                                 : context_scale * search_side / static_cast<double>(template_side);
    }
    int side(CropMode mode) const { return mode == CropMode::template_region ? template_side : search_side; }
};

/// frame = origin + crop * scale, for continuous pixel-edge coordinates.
struct CropTransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double scale = 1.0;

    BoundingBox to_frame(const BoundingBox& crop_box) const {
        return {origin_x + crop_box.x * scale, origin_y + crop_box.y * scale, crop_box.w * scale, crop_box.h * scale};
    }
    BoundingBox to_crop(const BoundingBox& frame_box) const {
        return {(frame_box.x - origin_x) / scale, (frame_box.y - origin_y) / scale, frame_box.w / scale,
                frame_box.h / scale};
    }
};

struct CropPair {
    Image rgb;
    Image ir;
    CropTransform transform;
};

/// Square window of side `window` centred on (cx, cy), resampled bilinearly to
/// `side` pixels with edge-replication outside the frame.
Image crop_window(const Image& frame, double cx, double cy, double window, int side, CropTransform* transform = nullptr);

/// Crops both modalities around `box` using the geometry of `mode`.
CropPair crop_regions(const SequenceRecord& record, int frame_index, const BoundingBox& box, const CropGeometry& geom,
                      CropMode mode);

/// Same, with an explicit window centre and side (used for training jitter and tracking).
CropPair crop_pair_window(const SequenceRecord& record, int frame_index, double cx, double cy, double window,
                          int side);

}  // namespace gdstrack
