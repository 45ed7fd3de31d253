// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/model.hpp"

#include <stdexcept>
#include <tuple>

namespace gdstrack {

void ModelConfig::validate() const {
    encoder.validate();
    if (crop.template_side != encoder.template_side || crop.search_side != encoder.search_side) {
        throw std::invalid_argument("ModelConfig: crop sides disagree with the encoder");
    }
    const int nodes = 2 * encoder.search_tokens();
    if (amg.mode != AdjacencyMode::identity && (amg.top_k < 1 || amg.top_k > nodes)) {
        throw std::invalid_argument("ModelConfig: top_k must lie in [1, 2N]");
    }
    if (encoder.search_grid() % 4 != 0) throw std::invalid_argument("ModelConfig: search grid must be divisible by 4");
}

Model::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    Rng rng(config_.init_seed);
    const int d = config_.encoder.d_model;
    encoder_ = Encoder(config_.encoder, store_, rng);
    amg_ = Amg(config_.amg, d, store_, rng);
    mdgf_ = Mdgf(config_.mdgf, d, store_, rng);
    head_ = CornerHead("head", config_.head, config_.mdgf.out_model, store_, rng);
    TgidShapes shapes;
    shapes.d_model = d;
    shapes.out_model = config_.mdgf.out_model;
    shapes.l1_width = mdgf_.l1_width();
    shapes.grid = grid();
    tgid_ = Tgid(config_.tgid, shapes, store_, rng);
    diffhead_ = CornerHead("diffhead", config_.head, config_.mdgf.out_model, store_, rng);
}

FusionPass Model::fuse(ad::Tape& tape, const CropPair& templ, const CropPair& search,
                       const Tensor* fixed_adjacency) const {
    FusionPass p;
    std::tie(p.fv, p.fi) = encoder_.encode_pair(tape, store_, templ.rgb, templ.ir, search.rgb, search.ir);
    if (fixed_adjacency != nullptr) {
        p.adjacency = *fixed_adjacency;
    } else if (config_.mdgf.fusion == FusionMode::graph) {
        p.adjacency = amg_.generate(p.fv.value(), p.fi.value(), store_).adjacency;
    }
    p.fusion = mdgf_.forward(tape, store_, p.fv, p.fi, p.adjacency);
    p.head = head_.forward(tape, store_, p.fusion.s1, grid(), search_side());
    return p;
}

void Model::init_diffhead_from_head() { diffhead_.copy_from(head_, store_); }

const std::vector<std::string>& Model::stage1_prefixes() {
    static const std::vector<std::string> p{"encoder.", "amg.", "mdgf.", "head."};
    return p;
}

const std::vector<std::string>& Model::stage2_prefixes() {
    static const std::vector<std::string> p{"tgid.", "diffhead."};
    return p;
}

}  // namespace gdstrack
