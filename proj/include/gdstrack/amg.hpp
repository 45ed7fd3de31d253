// SPDX-License-Identifier: Apache-2.0
//
// Adjacency Matrix Generator. Given RGB and IR search tokens (N rows each),
// builds a symmetric 2N x 2N adjacency with entries in {0, 0.5, 1}:
//
//   f_vi = [f_v; f_i]
//   S1   = (f_vi W_Q)(f_vi W_K)^T / sqrt(d_k)
//   S2   = pairwise cosine similarity of f_vi rows
//   M    = (S1 + S2 + 1) / 2
//   S'   = row softmax of S1 restricted to {M > theta}
//   A'   = per-row top-k of S'
//   A    = (A' + A'^T) / 2
//
// The adjacency is a gradient barrier: everything here works on plain Tensors.

#pragma once

#include <limits>
#include <string>

#include "gdstrack/params.hpp"
#include "gdstrack/tensor.hpp"

namespace gdstrack {

enum class AdjacencyMode { amg, identity, qkv, cosine };

AdjacencyMode parse_adjacency_mode(const std::string& s);
std::string to_string(AdjacencyMode mode);

struct AmgConfig {
    int d_k = 64;
    double theta = 0.5;
    int top_k = 64;
    AdjacencyMode mode = AdjacencyMode::amg;
};

struct SimilarityBundle {
    Tensor s1;          // scaled dot-product similarity
    Tensor s2;          // cosine similarity
    Tensor mask;        // (S1 + S2 + 1) / 2
    Tensor normalized;  // S', masked row softmax
};

struct AdjacencyResult {
    Tensor adjacency;  // A, symmetric
    Tensor directed;   // A', before symmetrisation
    SimilarityBundle similarity;
};

/// Rows 0..N-1 are f_v, rows N..2N-1 are f_i.
Tensor concat_modalities(const Tensor& fv, const Tensor& fi);

/// Fills s1, s2 and mask of the bundle.
SimilarityBundle modality_similarity(const Tensor& fvi, const Tensor& w_q, const Tensor& w_k, int d_k);

/// Row softmax over entries whose mask exceeds theta; a fully masked row becomes all zeros.
Tensor mask_normalize(const Tensor& s1, const Tensor& mask, double theta);

/// Per-row top-k indicator (ties toward the lowest column). All-zero rows of a
/// row-stochastic-or-zero input get a lone self-loop instead.
Tensor top_k_rows(const Tensor& scores, int k, bool self_loop_on_zero_rows);

/// (A' + A'^T) / 2
Tensor symmetrize(const Tensor& directed);

/// top_k_rows followed by symmetrize.
Tensor binarize_adjacency(const Tensor& normalized, int k);

class Amg {
public:
    Amg() = default;
    /// Registers `amg.w_q` and `amg.w_k` (d_model x d_k).
    Amg(const AmgConfig& config, int d_model, ParamStore& store, Rng& rng);

    const AmgConfig& config() const { return config_; }

    AdjacencyResult generate(const Tensor& fv, const Tensor& fi, const ParamStore& store) const;

private:
    AmgConfig config_;
    ParamId w_q_ = -1, w_k_ = -1;
};

/// Free-function form used by tests and the ablation runner.
AdjacencyResult generate_adjacency(const Tensor& fv, const Tensor& fi, const Tensor& w_q, const Tensor& w_k,
                                   const AmgConfig& config);

}  // namespace gdstrack
