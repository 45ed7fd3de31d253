// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gdstrack {

void EncoderConfig::validate() const {
    if (patch_size <= 0 || d_model <= 0 || num_heads <= 0 || num_blocks < 0 || ff_dim <= 0) {
        throw std::invalid_argument("EncoderConfig: non-positive size");
    }
    if (d_model % num_heads != 0) throw std::invalid_argument("EncoderConfig: d_model not divisible by num_heads");
    if (template_side % patch_size != 0 || search_side % patch_size != 0) {
        throw std::invalid_argument("EncoderConfig: crop sides must be divisible by patch_size");
    }
}

Image replicate_channels(const Image& ir) {
    if (ir.channels != 1) throw std::invalid_argument("replicate_channels: expected a single-channel image");
    Image out(ir.width, ir.height, 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ir.height; ++y)
            for (int x = 0; x < ir.width; ++x) out.at(c, y, x) = ir.at(0, y, x);
    return out;
}

Tensor patchify(const Image& img, int patch_size) {
    if (img.width % patch_size != 0 || img.height % patch_size != 0) {
        throw std::invalid_argument("patchify: image size not divisible by patch size");
    }
    const int gw = img.width / patch_size, gh = img.height / patch_size;
    const int dim = img.channels * patch_size * patch_size;
    Tensor out = Tensor::matrix(gw * gh, dim);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            const int row = gy * gw + gx;
            int k = 0;
            for (int c = 0; c < img.channels; ++c)
                for (int py = 0; py < patch_size; ++py)
                    for (int px = 0; px < patch_size; ++px)
                        out.at(row, k++) = img.at(c, gy * patch_size + py, gx * patch_size + px) - 0.5;
        }
    return out;
}

Encoder::Encoder(const EncoderConfig& config, ParamStore& store, Rng& rng) : config_(config) {
    config_.validate();
    const int d = config_.d_model;
    const int patch_dim = 3 * config_.patch_size * config_.patch_size;
    const int nt = config_.template_grid() * config_.template_grid();
    const int ns = config_.search_tokens();
    patch_w_ = store.add("encoder.patch_w", uniform_init({patch_dim, d}, patch_dim, rng));
    patch_b_ = store.add("encoder.patch_b", Tensor({d}));
    pos_template_ = store.add("encoder.pos_template", uniform_init({nt, d}, d, rng));
    pos_search_ = store.add("encoder.pos_search", uniform_init({ns, d}, d, rng));
    for (int b = 0; b < config_.num_blocks; ++b) {
        const std::string p = "encoder.block" + std::to_string(b) + ".";
        Block blk{};
        blk.wq = store.add(p + "wq", uniform_init({d, d}, d, rng));
        blk.wk = store.add(p + "wk", uniform_init({d, d}, d, rng));
        blk.wv = store.add(p + "wv", uniform_init({d, d}, d, rng));
        blk.wo = store.add(p + "wo", uniform_init({d, d}, d, rng));
        blk.bo = store.add(p + "bo", Tensor({d}));
        blk.ln1_g = store.add(p + "ln1_g", Tensor({d}, 1.0));
        blk.ln1_b = store.add(p + "ln1_b", Tensor({d}));
        blk.ff1_w = store.add(p + "ff1_w", uniform_init({d, config_.ff_dim}, d, rng));
        blk.ff1_b = store.add(p + "ff1_b", Tensor({config_.ff_dim}));
        blk.ff2_w = store.add(p + "ff2_w", uniform_init({config_.ff_dim, d}, config_.ff_dim, rng));
        blk.ff2_b = store.add(p + "ff2_b", Tensor({d}));
        blk.ln2_g = store.add(p + "ln2_g", Tensor({d}, 1.0));
        blk.ln2_b = store.add(p + "ln2_b", Tensor({d}));
        blocks_.push_back(blk);
    }
}

ad::Var Encoder::attention(ad::Tape& tape, const ParamStore& store, const Block& blk, ad::Var x) const {
    const int heads = config_.num_heads;
    const int dh = config_.d_model / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    auto P = [&](ParamId id) { return tape.parameter(store, id); };
    ad::Var q = ad::matmul(x, P(blk.wq));
    ad::Var k = ad::matmul(x, P(blk.wk));
    ad::Var v = ad::matmul(x, P(blk.wv));
    std::vector<ad::Var> outs;
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = heads == 1 ? q : ad::slice_cols(q, h * dh, (h + 1) * dh);
        ad::Var kh = heads == 1 ? k : ad::slice_cols(k, h * dh, (h + 1) * dh);
        ad::Var vh = heads == 1 ? v : ad::slice_cols(v, h * dh, (h + 1) * dh);
        ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
        outs.push_back(ad::matmul(weights, vh));
    }
    ad::Var merged = heads == 1 ? outs.front() : ad::concat_cols(outs);
    return ad::add_row_bias(ad::matmul(merged, P(blk.wo)), P(blk.bo));
}

ad::Var Encoder::encode(ad::Tape& tape, const ParamStore& store, const Image& templ, const Image& search) const {
    if (templ.channels != 3 || search.channels != 3) throw std::invalid_argument("encode: 3-channel crops required");
    if (templ.width != config_.template_side || templ.height != config_.template_side ||
        search.width != config_.search_side || search.height != config_.search_side) {
        throw std::invalid_argument("encode: crop sizes do not match the encoder configuration");
    }
    auto P = [&](ParamId id) { return tape.parameter(store, id); };
    const int nt = config_.template_grid() * config_.template_grid();
    ad::Var zt = ad::add(ad::add_row_bias(ad::matmul(tape.constant(patchify(templ, config_.patch_size)), P(patch_w_)),
                                          P(patch_b_)),
                         P(pos_template_));
    ad::Var xs = ad::add(ad::add_row_bias(ad::matmul(tape.constant(patchify(search, config_.patch_size)), P(patch_w_)),
                                          P(patch_b_)),
                         P(pos_search_));
    ad::Var x = ad::concat_dim0({zt, xs});
    for (const Block& blk : blocks_) {
        x = ad::layer_norm_rows(ad::add(x, attention(tape, store, blk, x)), P(blk.ln1_g), P(blk.ln1_b));
        ad::Var ff = ad::add_row_bias(ad::matmul(x, P(blk.ff1_w)), P(blk.ff1_b));
        ff = ad::add_row_bias(ad::matmul(ad::gelu(ff), P(blk.ff2_w)), P(blk.ff2_b));
        x = ad::layer_norm_rows(ad::add(x, ff), P(blk.ln2_g), P(blk.ln2_b));
    }
    return ad::slice_dim0(x, nt, nt + config_.search_tokens());
}

std::pair<ad::Var, ad::Var> Encoder::encode_pair(ad::Tape& tape, const ParamStore& store, const Image& templ_rgb,
                                                 const Image& templ_ir, const Image& search_rgb,
                                                 const Image& search_ir) const {
    const Image ti = templ_ir.channels == 1 ? replicate_channels(templ_ir) : templ_ir;
    const Image si = search_ir.channels == 1 ? replicate_channels(search_ir) : search_ir;
    ad::Var fv = encode(tape, store, templ_rgb, search_rgb);
    ad::Var fi = encode(tape, store, ti, si);
    return {fv, fi};
}

std::pair<TokenFeatures, TokenFeatures> Encoder::encode_pair(const ParamStore& store, const Image& templ_rgb,
                                                             const Image& templ_ir, const Image& search_rgb,
                                                             const Image& search_ir) const {
    ad::Tape tape;
    auto [fv, fi] = encode_pair(tape, store, templ_rgb, templ_ir, search_rgb, search_ir);
    const int g = config_.search_grid();
    return {TokenFeatures{fv.value(), g, g, Modality::rgb}, TokenFeatures{fi.value(), g, g, Modality::ir}};
}

}  // namespace gdstrack
