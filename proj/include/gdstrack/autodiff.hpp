// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode automatic differentiation over dense Tensors.
//
// A Tape records every operation applied to Vars during a forward pass. A node
// carries a backward closure only when at least one of its inputs requires a
// gradient, so frozen branches (constants, frozen parameters) cost nothing in
// backward(). Parameters enter through Tape::parameter(), which caches one leaf
// per ParamId so a weight shared by two paths (e.g. the encoder applied to both
// modalities) accumulates both contributions.

#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "gdstrack/params.hpp"
#include "gdstrack/tensor.hpp"

namespace gdstrack::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Var constant(Tensor value);
    /// A free input that requires a gradient (used by gradient checks).
    Var leaf(Tensor value);
    /// Leaf for a stored parameter; requires a gradient iff the parameter is trainable.
    Var parameter(const ParamStore& store, ParamId id);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    /// Gradient of the last backward() w.r.t. node `id`; empty when it received none.
    const Tensor& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    /// Lazily allocated, zero-initialised gradient buffer (for op implementations).
    Tensor& grad_of(int id);

    Var record(Tensor value, const std::vector<int>& inputs, BackwardFn backward);

    /// Reverse sweep from a single-element loss.
    void backward(Var loss);

    /// Gradients of all parameter leaves, indexed by ParamId.
    Gradients parameter_gradients(std::size_t store_size) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
        ParamId param = -1;
    };

    std::vector<Node> nodes_;
    std::unordered_map<ParamId, int> param_nodes_;
};

// Elementwise arithmetic (equal shapes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

// Activations.
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var elu(Var a);
Var gelu(Var a);
Var silu(Var a);
Var abs(Var a);
Var square(Var a);

// Reductions to a single element.
Var sum(Var a);
Var mean(Var a);
Var element(Var a, std::size_t index);

// Linear algebra on rank-2 tensors.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add_row_bias(Var x, Var bias);

// Layout.
Var reshape(Var a, std::vector<int> shape);
Var slice_dim0(Var a, int begin, int end);
Var concat_dim0(const std::vector<Var>& parts);
Var slice_cols(Var a, int begin, int end);
Var concat_cols(const std::vector<Var>& parts);
Var detach(Var a);

// Normalisation / probability.
Var softmax_rows(Var a);
Var softmax_all(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var group_norm(Var x, Var gain, Var bias, int groups, double eps = 1e-5);

// Feature maps laid out as (channels, height, width).
Var conv2d(Var x, Var weight, Var bias, int stride, int pad);
Var upsample_nearest2x(Var x);
Var add_channel_bias(Var x, Var bias);

/// Masked single-head graph attention. `wh` holds the linearly transformed node
/// features (nodes x F), `attn` the attention vector (2F). Node i attends over
/// {j : adjacency(i, j) > 0}; adjacency values define connectivity only.
Var gat_attention(Var wh, Var attn, const Tensor& adjacency, double slope);

/// Attention coefficients computed by gat_attention (rows sum to 1 over neighbours).
Tensor gat_coefficients(const Tensor& wh, const Tensor& attn, const Tensor& adjacency, double slope);

}  // namespace gdstrack::ad
