// SPDX-License-Identifier: Apache-2.0
//
// The full tracker: shared encoder, adjacency generator, graph fusion with its
// corner head, and the diffusion refinement with its own head. All parameters
// live in one ParamStore so a single checkpoint captures the model.

#pragma once

#include <cstdint>
#include <optional>

#include "gdstrack/amg.hpp"
#include "gdstrack/encoder.hpp"
#include "gdstrack/mdgf.hpp"
#include "gdstrack/synthgen.hpp"
#include "gdstrack/tgid.hpp"

namespace gdstrack {

struct ModelConfig {
    EncoderConfig encoder;
    AmgConfig amg;
    MdgfConfig mdgf;
    HeadConfig head;
    TgidConfig tgid;
    CropGeometry crop;
    std::uint64_t init_seed = 0;

    /// Cross-field checks (crop sides agree with the encoder, top_k fits 2N nodes).
    void validate() const;
};

/// Everything produced by one pass through encoder, adjacency and fusion.
struct FusionPass {
    ad::Var fv, fi;
    Tensor adjacency;
    FusionOutputs fusion;
    HeadOutput head;
};

class Model {
public:
    explicit Model(const ModelConfig& config);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const { return config_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

    const Encoder& encoder() const { return encoder_; }
    const Amg& amg() const { return amg_; }
    const Mdgf& mdgf() const { return mdgf_; }
    const CornerHead& head() const { return head_; }
    const Tgid& tgid() const { return tgid_; }
    const CornerHead& diffhead() const { return diffhead_; }

    int grid() const { return config_.encoder.search_grid(); }
    int search_side() const { return config_.encoder.search_side; }

    /// Encoder -> adjacency -> fusion -> head. With `fixed_adjacency` the generator is bypassed.
    FusionPass fuse(ad::Tape& tape, const CropPair& templ, const CropPair& search,
                    const Tensor* fixed_adjacency = nullptr) const;

    /// Starts the diffusion head from the fusion head's current weights.
    void init_diffhead_from_head();

    /// Parameter name prefixes of the stage-1 modules (encoder, amg, mdgf, head).
    static const std::vector<std::string>& stage1_prefixes();
    /// Parameter name prefixes of the stage-2 modules (tgid, diffhead).
    static const std::vector<std::string>& stage2_prefixes();

private:
    ModelConfig config_;
    ParamStore store_;
    Encoder encoder_;
    Amg amg_;
    Mdgf mdgf_;
    CornerHead head_;
    Tgid tgid_;
    CornerHead diffhead_;
};

}  // namespace gdstrack
