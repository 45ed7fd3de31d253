// SPDX-License-Identifier: Apache-2.0
//
// Shared-weight patch transformer. Template and search tokens of one modality
// are concatenated and run through joint self-attention blocks, so the search
// tokens that come out have already interacted with the template. The same
// parameters serve RGB and IR; IR crops are replicated to three channels.

#pragma once

#include <utility>

#include "gdstrack/autodiff.hpp"
#include "gdstrack/image.hpp"
#include "gdstrack/params.hpp"
#include "gdstrack/sequence.hpp"

namespace gdstrack {

struct EncoderConfig {
    int patch_size = 8;
    int d_model = 64;
    int num_heads = 4;
    int num_blocks = 2;
    int ff_dim = 128;
    int template_side = 32;
    int search_side = 64;

    int template_grid() const { return template_side / patch_size; }
    int search_grid() const { return search_side / patch_size; }
    int search_tokens() const { return search_grid() * search_grid(); }
    void validate() const;
};

/// Search-frame tokens (grid_width * grid_height rows, d_model columns), row-major over the token grid.
struct TokenFeatures {
    Tensor tokens;
    int grid_width = 0;
    int grid_height = 0;
    Modality modality = Modality::rgb;
};

/// Replicates a single-channel image to three identical channels.
Image replicate_channels(const Image& ir);

/// Flattens non-overlapping patches into rows of (channel, py, px) values, centred by -0.5.
Tensor patchify(const Image& img, int patch_size);

class Encoder {
public:
    Encoder() = default;
    /// Registers parameters under the `encoder.` prefix.
    Encoder(const EncoderConfig& config, ParamStore& store, Rng& rng);

    const EncoderConfig& config() const { return config_; }

    /// One modality: 3-channel template and search crops -> search tokens.
    ad::Var encode(ad::Tape& tape, const ParamStore& store, const Image& templ, const Image& search) const;

    /// Both modalities with shared weights. IR crops may be 1- or 3-channel.
    std::pair<ad::Var, ad::Var> encode_pair(ad::Tape& tape, const ParamStore& store, const Image& templ_rgb,
                                            const Image& templ_ir, const Image& search_rgb,
                                            const Image& search_ir) const;

    /// Value-level convenience wrapper around encode_pair.
    std::pair<TokenFeatures, TokenFeatures> encode_pair(const ParamStore& store, const Image& templ_rgb,
                                                        const Image& templ_ir, const Image& search_rgb,
                                                        const Image& search_ir) const;

private:
    struct Block {
        ParamId wq, wk, wv, wo, bo;
        ParamId ln1_g, ln1_b;
        ParamId ff1_w, ff1_b, ff2_w, ff2_b;
        ParamId ln2_g, ln2_b;
    };

    ad::Var attention(ad::Tape& tape, const ParamStore& store, const Block& blk, ad::Var x) const;

    EncoderConfig config_;
    ParamId patch_w_ = -1, patch_b_ = -1, pos_template_ = -1, pos_search_ = -1;
    std::vector<Block> blocks_;
};

}  // namespace gdstrack
