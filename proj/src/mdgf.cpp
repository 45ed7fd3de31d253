// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/mdgf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gdstrack {

FusionMode parse_fusion_mode(const std::string& s) {
    if (s == "graph" || s == "mdgf") return FusionMode::graph;
    if (s == "sum" || s == "sum_only" || s == "baseline") return FusionMode::sum_only;
    throw std::invalid_argument("unknown fusion mode: " + s);
}

std::string to_string(FusionMode mode) { return mode == FusionMode::graph ? "graph" : "sum_only"; }

ad::Var gat_layer(ad::Var h, const Tensor& adjacency, ad::Var w, ad::Var a, double slope) {
    return ad::gat_attention(ad::matmul(h, w), a, adjacency, slope);
}

Mdgf::Mdgf(const MdgfConfig& config, int d_model, ParamStore& store, Rng& rng) : config_(config) {
    if (config_.nhid <= 0 || config_.out_model <= 0 || config_.nhead <= 0) {
        throw std::invalid_argument("MdgfConfig: non-positive size");
    }
    for (int h = 0; h < config_.nhead; ++h) {
        const std::string sfx = config_.nhead == 1 ? "" : "_h" + std::to_string(h);
        w1_.push_back(store.add("mdgf.w1" + sfx, uniform_init({d_model, config_.nhid}, d_model, rng)));
        a1_.push_back(store.add("mdgf.a1" + sfx, uniform_init({2 * config_.nhid}, config_.nhid, rng)));
    }
    const int width = l1_width();
    w2_ = store.add("mdgf.w2", uniform_init({width, config_.out_model}, width, rng));
    a2_ = store.add("mdgf.a2", uniform_init({2 * config_.out_model}, config_.out_model, rng));
    proj_w_ = store.add("mdgf.proj_w", uniform_init({d_model, config_.out_model}, d_model, rng));
    proj_b_ = store.add("mdgf.proj_b", Tensor({config_.out_model}));
}

FusionOutputs Mdgf::forward(ad::Tape& tape, const ParamStore& store, ad::Var fv, ad::Var fi,
                            const Tensor& adjacency) const {
    auto P = [&](ParamId id) { return tape.parameter(store, id); };
    const int n = fv.value().rows();
    FusionOutputs out;
    ad::Var residual = ad::add_row_bias(ad::matmul(ad::add(fv, fi), P(proj_w_)), P(proj_b_));
    if (config_.fusion == FusionMode::sum_only) {
        out.s1 = residual;
        return out;
    }
    if (adjacency.rows() != 2 * n || adjacency.cols() != 2 * n) {
        throw std::invalid_argument("mdgf_forward: adjacency does not match 2N nodes");
    }
    ad::Var fvi = ad::concat_dim0({fv, fi});
    std::vector<ad::Var> heads;
    for (std::size_t h = 0; h < w1_.size(); ++h) {
        heads.push_back(gat_layer(fvi, adjacency, P(w1_[h]), P(a1_[h]), config_.leaky_slope));
    }
    out.l1 = ad::elu(heads.size() == 1 ? heads.front() : ad::concat_cols(heads));
    out.l2 = gat_layer(out.l1, adjacency, P(w2_), P(a2_), config_.leaky_slope);
    ad::Var merged = ad::add(ad::slice_dim0(out.l2, 0, n), ad::slice_dim0(out.l2, n, 2 * n));
    out.s1 = ad::add(merged, residual);
    return out;
}

ad::Var tokens_to_grid(ad::Var tokens, int grid) {
    const int c = tokens.value().cols();
    if (tokens.value().rows() != grid * grid) throw std::invalid_argument("tokens_to_grid: token count mismatch");
    return ad::reshape(ad::transpose(tokens), {c, grid, grid});
}

ad::Var grid_to_tokens(ad::Var grid) {
    const Tensor& v = grid.value();
    if (v.ndim() != 3) throw std::invalid_argument("grid_to_tokens: expected C x H x W");
    return ad::transpose(ad::reshape(grid, {v.dim(0), v.dim(1) * v.dim(2)}));
}

std::pair<ad::Var, ad::Var> soft_argmax(ad::Var probs, int crop_side) {
    const Tensor& p = probs.value();
    const int g = p.dim(0);
    const double cell = static_cast<double>(crop_side) / g;
    Tensor xs({g, g}), ys({g, g});
    for (int r = 0; r < g; ++r)
        for (int c = 0; c < g; ++c) {
            xs.at(r, c) = (c + 0.5) * cell;
            ys.at(r, c) = (r + 0.5) * cell;
        }
    ad::Tape& tape = *probs.tape;
    ad::Var x = ad::sum(ad::mul(probs, tape.constant(std::move(xs))));
    ad::Var y = ad::sum(ad::mul(probs, tape.constant(std::move(ys))));
    return {x, y};
}

ad::Var order_corners(ad::Var x1, ad::Var y1, ad::Var x2, ad::Var y2) {
    ad::Tape& tape = *x1.tape;
    const ad::Var one = tape.constant(Tensor::scalar(1.0));
    auto axis = [&](ad::Var a, ad::Var b) {
        ad::Var centre = ad::scale(ad::add(a, b), 0.5);
        ad::Var half = ad::scale(ad::maximum(ad::abs(ad::sub(b, a)), one), 0.5);
        return std::pair{ad::sub(centre, half), ad::add(centre, half)};
    };
    auto [lx, hx] = axis(x1, x2);
    auto [ly, hy] = axis(y1, y2);
    return ad::concat_dim0({lx, ly, hx, hy});
}

BoundingBox corners_to_box(const Tensor& corners) {
    return BoundingBox{corners[0], corners[1], corners[2] - corners[0], corners[3] - corners[1]};
}

CornerHead::CornerHead(const std::string& prefix, const HeadConfig& config, int in_channels, ParamStore& store,
                       Rng& rng) {
    auto add = [&](const std::string& name, Tensor init) {
        const ParamId id = store.add(prefix + "." + name, std::move(init));
        ids_.push_back(id);
        return id;
    };
    const int c1 = config.channels1, c2 = config.channels2;
    for (const char* corner : {"tl", "br"}) {
        const std::string p = std::string(corner) + ".";
        Stack s{};
        s.c1_w = add(p + "conv1_w", uniform_init({c1, in_channels, 3, 3}, in_channels * 9, rng));
        s.c1_b = add(p + "conv1_b", Tensor({c1}));
        s.n1_g = add(p + "norm1_g", Tensor({c1}, 1.0));
        s.n1_b = add(p + "norm1_b", Tensor({c1}));
        s.c2_w = add(p + "conv2_w", uniform_init({c2, c1, 3, 3}, c1 * 9, rng));
        s.c2_b = add(p + "conv2_b", Tensor({c2}));
        s.n2_g = add(p + "norm2_g", Tensor({c2}, 1.0));
        s.n2_b = add(p + "norm2_b", Tensor({c2}));
        s.c3_w = add(p + "conv3_w", uniform_init({1, c2, 1, 1}, c2, rng));
        s.c3_b = add(p + "conv3_b", Tensor({1}));
        stacks_.push_back(s);
    }
}

ad::Var CornerHead::run_stack(ad::Tape& tape, const ParamStore& store, const Stack& s, ad::Var x) const {
    auto P = [&](ParamId id) { return tape.parameter(store, id); };
    x = ad::relu(ad::group_norm(ad::conv2d(x, P(s.c1_w), P(s.c1_b), 1, 1), P(s.n1_g), P(s.n1_b), 1));
    x = ad::relu(ad::group_norm(ad::conv2d(x, P(s.c2_w), P(s.c2_b), 1, 1), P(s.n2_g), P(s.n2_b), 1));
    return ad::conv2d(x, P(s.c3_w), P(s.c3_b), 1, 0);
}

HeadOutput CornerHead::forward(ad::Tape& tape, const ParamStore& store, ad::Var features, int grid,
                               int crop_side) const {
    if (stacks_.size() != 2) throw std::logic_error("CornerHead: not initialised");
    ad::Var x = tokens_to_grid(features, grid);
    HeadOutput out;
    std::vector<ad::Var> xy;
    double peak = 1.0;
    for (std::size_t k = 0; k < 2; ++k) {
        ad::Var logits = ad::reshape(run_stack(tape, store, stacks_[k], x), {grid, grid});
        ad::Var probs = ad::softmax_all(logits);
        auto [cx, cy] = soft_argmax(probs, crop_side);
        xy.push_back(cx);
        xy.push_back(cy);
        const Tensor& pv = probs.value();
        peak *= *std::max_element(pv.values().begin(), pv.values().end());
        (k == 0 ? out.map_tl : out.map_br) = pv;
    }
    out.corners = order_corners(xy[0], xy[1], xy[2], xy[3]);
    out.score = std::sqrt(peak);
    return out;
}

TrackResult CornerHead::predict(const ParamStore& store, const Tensor& features, int grid, int crop_side) const {
    ad::Tape tape;
    HeadOutput h = forward(tape, store, tape.constant(features), grid, crop_side);
    return TrackResult{h.score, corners_to_box(h.corners.value()), h.map_tl, h.map_br};
}

void CornerHead::copy_from(const CornerHead& other, ParamStore& store) const {
    if (other.ids_.size() != ids_.size()) throw std::invalid_argument("CornerHead::copy_from: architecture mismatch");
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        const Tensor& src = store[other.ids_[i]].value;
        if (!src.same_shape(store[ids_[i]].value)) throw std::invalid_argument("CornerHead::copy_from: shape mismatch");
        store[ids_[i]].value = src;
    }
}

}  // namespace gdstrack
