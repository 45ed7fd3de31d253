// SPDX-License-Identifier: Apache-2.0
//
// Graph fusion of the two modalities and the corner tracking head.
//
// Node features f_vi = [f_v; f_i] (2N rows) pass through two graph attention
// layers over the AMG adjacency. The two N-row halves of the second layer are
// summed and a per-token projection of (f_v + f_i) is added as a residual.

#pragma once

#include <string>
#include <vector>

#include "gdstrack/autodiff.hpp"
#include "gdstrack/image.hpp"
#include "gdstrack/params.hpp"

namespace gdstrack {

enum class FusionMode {
    graph,     // full GAT fusion
    sum_only,  // residual projection only: Proj(f_v + f_i)
};

FusionMode parse_fusion_mode(const std::string& s);
std::string to_string(FusionMode mode);

struct MdgfConfig {
    int nhid = 32;
    int out_model = 32;
    int nhead = 1;
    double leaky_slope = 0.2;
    FusionMode fusion = FusionMode::graph;
};

struct FusionOutputs {
    ad::Var l1;  // 2N x (nhead * nhid); invalid in sum_only mode
    ad::Var l2;  // 2N x out_model; invalid in sum_only mode
    ad::Var s1;  // N x out_model
};

/// One graph attention layer: h' = softmax_{j in N(i)}(LeakyReLU(a^T [Wh_i || Wh_j])) Wh_j.
ad::Var gat_layer(ad::Var h, const Tensor& adjacency, ad::Var w, ad::Var a, double slope);

class Mdgf {
public:
    Mdgf() = default;
    /// Registers parameters under `mdgf.`.
    Mdgf(const MdgfConfig& config, int d_model, ParamStore& store, Rng& rng);

    const MdgfConfig& config() const { return config_; }
    int l1_width() const { return config_.nhead * config_.nhid; }

    FusionOutputs forward(ad::Tape& tape, const ParamStore& store, ad::Var fv, ad::Var fi,
                          const Tensor& adjacency) const;

private:
    MdgfConfig config_;
    std::vector<ParamId> w1_, a1_;
    ParamId w2_ = -1, a2_ = -1, proj_w_ = -1, proj_b_ = -1;
};

/// Token rows (gy * g + gx) x C  ->  C x g x g feature map.
ad::Var tokens_to_grid(ad::Var tokens, int grid);
/// C x g x g feature map  ->  (g * g) x C token rows.
ad::Var grid_to_tokens(ad::Var grid);

struct HeadConfig {
    int channels1 = 16;
    int channels2 = 8;
};

struct HeadOutput {
    ad::Var corners;  // {4}: x1, y1, x2, y2 in crop pixels, ordered and at least 1 px apart
    Tensor map_tl;    // g x g probabilities
    Tensor map_br;
    double score = 0.0;
};

struct TrackResult {
    double score = 0.0;
    BoundingBox box;  // search-crop pixels
    Tensor map_tl, map_br;
};

/// Soft-argmax of one probability map (g x g) at token centres scaled to `crop_side` pixels.
/// Returns {x, y} as two scalar Vars.
std::pair<ad::Var, ad::Var> soft_argmax(ad::Var probs, int crop_side);

/// Reorders two corner estimates per axis and enforces a minimum extent of 1 px.
ad::Var order_corners(ad::Var x1, ad::Var y1, ad::Var x2, ad::Var y2);

BoundingBox corners_to_box(const Tensor& corners);

/// Two conv-norm-ReLU stacks ending in single-channel logits, one per corner.
class CornerHead {
public:
    CornerHead() = default;
    /// `prefix` is "head" for the fusion head or "diffhead" for the diffusion head.
    CornerHead(const std::string& prefix, const HeadConfig& config, int in_channels, ParamStore& store, Rng& rng);

    HeadOutput forward(ad::Tape& tape, const ParamStore& store, ad::Var features, int grid, int crop_side) const;
    TrackResult predict(const ParamStore& store, const Tensor& features, int grid, int crop_side) const;

    /// Copies every parameter of `other` into this head (same architecture required).
    void copy_from(const CornerHead& other, ParamStore& store) const;

    const std::vector<ParamId>& parameter_ids() const { return ids_; }

private:
    struct Stack {
        ParamId c1_w, c1_b, n1_g, n1_b, c2_w, c2_b, n2_g, n2_b, c3_w, c3_b;
    };
    ad::Var run_stack(ad::Tape& tape, const ParamStore& store, const Stack& s, ad::Var x) const;

    std::vector<Stack> stacks_;
    std::vector<ParamId> ids_;
};

}  // namespace gdstrack
