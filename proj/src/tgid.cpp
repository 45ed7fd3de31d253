// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/tgid.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "gdstrack/mdgf.hpp"

namespace gdstrack {

std::vector<int> DiffusionSchedule::sampling_timesteps() const {
    std::vector<int> ts;
    for (int i = 0; i < sample_steps; ++i) ts.push_back(static_cast<int>((static_cast<long>(T) * (sample_steps - i)) / sample_steps));
    return ts;
}

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end, int sample_steps, double beta_distractor,
                                double inject_prob) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be positive");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
    }
    if (sample_steps < 1 || sample_steps > T) throw std::invalid_argument("make_schedule: sample_steps out of range");
    if (beta_distractor < 0.0 || beta_distractor > 1.0 || inject_prob < 0.0 || inject_prob > 1.0) {
        throw std::invalid_argument("make_schedule: distractor weight and probability must lie in [0, 1]");
    }
    DiffusionSchedule s;
    s.T = T;
    s.sample_steps = sample_steps;
    s.beta_distractor = beta_distractor;
    s.inject_prob = inject_prob;
    s.betas.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.alpha_bars.assign(static_cast<std::size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.betas[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
        s.alpha_bars[static_cast<std::size_t>(t)] =
            s.alpha_bars[static_cast<std::size_t>(t) - 1] * (1.0 - s.betas[static_cast<std::size_t>(t)]);
    }
    return s;
}

Tensor forward_noising(const Tensor& x0, int t, const Tensor& z, const Tensor& d, const DiffusionSchedule& schedule,
                       bool inject) {
    if (t < 1 || t > schedule.T) throw std::out_of_range("forward_noising: timestep out of range");
    if (!x0.same_shape(z) || !x0.same_shape(d)) throw std::invalid_argument("forward_noising: shape mismatch");
    const double beta = inject ? schedule.beta_distractor : 0.0;
    const double a = std::sqrt(schedule.alpha_bar(t));
    const double s = std::sqrt(1.0 - schedule.alpha_bar(t));
    const double zs = (1.0 - beta) * s;
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a * x0[i] + zs * z[i];
        if (beta != 0.0) out[i] += beta * d[i];
    }
    return out;
}

bool inject_decision(double u, double inject_prob) { return u > 1.0 - inject_prob; }

Tensor filter_background(const Tensor& grid_map, const BoundingBox& box, int crop_side) {
    if (grid_map.ndim() != 3) throw std::invalid_argument("filter_background: expected C x g x g");
    const int c = grid_map.dim(0), gh = grid_map.dim(1), gw = grid_map.dim(2);
    const double cell = static_cast<double>(crop_side) / gw;
    Tensor out = grid_map;
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            const double px = (x + 0.5) * cell, py = (y + 0.5) * cell;
            if (px >= box.x && px <= box.x2() && py >= box.y && py <= box.y2()) continue;
            for (int k = 0; k < c; ++k) out.at(k, y, x) = 0.0;
        }
    return out;
}

Tensor predict_x0(const Tensor& x_t, const Tensor& eps, double alpha_bar) {
    const double a = std::sqrt(alpha_bar), s = std::sqrt(1.0 - alpha_bar);
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - s * eps[i]) / a;
    return out;
}

Tensor ddim_sample(const Tensor& x_T, const DiffusionSchedule& schedule, const EpsilonFn& epsilon) {
    const std::vector<int> ts = schedule.sampling_timesteps();
    Tensor x = x_T;
    Tensor x0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_next = i + 1 < ts.size() ? ts[i + 1] : 0;
        const Tensor eps = epsilon(x, t);
        x0 = predict_x0(x, eps, schedule.alpha_bar(t));
        const double an = std::sqrt(schedule.alpha_bar(t_next)), sn = std::sqrt(1.0 - schedule.alpha_bar(t_next));
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = an * x0[k] + sn * eps[k];
    }
    return x0;
}

ad::Var confuse(ad::Var l1_grid, ad::Var d, ad::Var conv2_w, ad::Var conv2_b, ad::Var conv1_w, ad::Var conv1_b) {
    const int stride = conv2_w.value().dim(2);
    ad::Var c = ad::conv2d(l1_grid, conv2_w, conv2_b, stride, 0);
    const Tensor& cv = c.value();
    const Tensor& dv = d.value();
    if (cv.dim(1) != dv.dim(1) || cv.dim(2) != dv.dim(2)) throw std::invalid_argument("confuse: spatial mismatch after Conv2");
    return ad::add(ad::conv2d(ad::concat_dim0({c, d}), conv1_w, conv1_b, 1, 0), d);
}

Tensor timestep_embedding(int t, int dim) {
    Tensor e({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        e[static_cast<std::size_t>(i)] = std::sin(t * freq);
        e[static_cast<std::size_t>(i + half)] = std::cos(t * freq);
    }
    return e;
}

DiffusionSchedule TgidConfig::schedule() const {
    return make_schedule(T, beta_start, beta_end, sample_steps, beta_distractor, inject_prob);
}

Tgid::ConvBlock Tgid::make_block(ParamStore& store, Rng& rng, const std::string& name, int in, int out) {
    const std::string p = "tgid." + name + ".";
    ConvBlock b{};
    b.w = store.add(p + "conv_w", uniform_init({out, in, 3, 3}, in * 9, rng));
    b.b = store.add(p + "conv_b", Tensor({out}));
    b.t_w = store.add(p + "time_w", uniform_init({config_.time_dim, out}, config_.time_dim, rng));
    b.t_b = store.add(p + "time_b", Tensor({out}));
    b.n_g = store.add(p + "norm_g", Tensor({out}, 1.0));
    b.n_b = store.add(p + "norm_b", Tensor({out}));
    return b;
}

Tgid::Tgid(const TgidConfig& config, const TgidShapes& shapes, ParamStore& store, Rng& rng)
    : config_(config), shapes_(shapes), schedule_(config.schedule()) {
    const int g = shapes_.grid;
    if (g % 4 != 0) throw std::invalid_argument("Tgid: grid must be divisible by 4");
    const int cond = config_.cond_channels, base = config_.base_channels, mid = config_.mid_channels;
    const int x_ch = shapes_.out_model;
    cond_v_w_ = store.add("tgid.cond_v_w", uniform_init({cond, shapes_.d_model, 1, 1}, shapes_.d_model, rng));
    cond_v_b_ = store.add("tgid.cond_v_b", Tensor({cond}));
    cond_i_w_ = store.add("tgid.cond_i_w", uniform_init({cond, shapes_.d_model, 1, 1}, shapes_.d_model, rng));
    cond_i_b_ = store.add("tgid.cond_i_b", Tensor({cond}));
    in_ = make_block(store, rng, "in", x_ch + 2 * cond, base);
    down1_ = make_block(store, rng, "down1", base, mid);
    down2_ = make_block(store, rng, "down2", mid, mid);
    mid_ = make_block(store, rng, "mid", mid, mid);
    const int l1_ch = 2 * shapes_.l1_width;
    const int k2 = 4;  // grid -> grid / 4 at the bottleneck
    cf2_w_ = store.add("tgid.confuse.conv2_w", uniform_init({mid, l1_ch, k2, k2}, l1_ch * k2 * k2, rng));
    cf2_b_ = store.add("tgid.confuse.conv2_b", Tensor({mid}));
    cf1_w_ = store.add("tgid.confuse.conv1_w", uniform_init({mid, 2 * mid, 1, 1}, 2 * mid, rng));
    cf1_b_ = store.add("tgid.confuse.conv1_b", Tensor({mid}));
    up1_ = make_block(store, rng, "up1", mid + mid, mid);
    up2_ = make_block(store, rng, "up2", mid + base, base);
    out_w_ = store.add("tgid.out_w", uniform_init({x_ch, base, 1, 1}, base, rng));
    out_b_ = store.add("tgid.out_b", Tensor({x_ch}));
}

ad::Var Tgid::run_block(ad::Tape& tape, const ParamStore& store, const ConvBlock& blk, ad::Var x, ad::Var temb,
                        int stride) const {
    auto P = [&](ParamId id) { return tape.parameter(store, id); };
    ad::Var h = ad::conv2d(x, P(blk.w), P(blk.b), stride, 1);
    const int c = h.value().dim(0);
    ad::Var tb = ad::reshape(ad::add_row_bias(ad::matmul(temb, P(blk.t_w)), P(blk.t_b)), {c});
    h = ad::add_channel_bias(h, tb);
    return ad::silu(ad::group_norm(h, P(blk.n_g), P(blk.n_b), config_.groups));
}

ad::Var Tgid::denoise(ad::Tape& tape, const ParamStore& store, ad::Var x_t, int t, ad::Var fv, ad::Var fi,
                      ad::Var l1) const {
    auto P = [&](ParamId id) { return tape.parameter(store, id); };
    const int g = shapes_.grid;
    const int n = g * g;
    ad::Var temb = tape.constant(timestep_embedding(t, config_.time_dim).reshaped({1, config_.time_dim}));
    ad::Var cv = ad::conv2d(tokens_to_grid(fv, g), P(cond_v_w_), P(cond_v_b_), 1, 0);
    ad::Var ci = ad::conv2d(tokens_to_grid(fi, g), P(cond_i_w_), P(cond_i_b_), 1, 0);
    ad::Var h0 = run_block(tape, store, in_, ad::concat_dim0({x_t, cv, ci}), temb, 1);
    ad::Var h1 = run_block(tape, store, down1_, h0, temb, 2);
    ad::Var h2 = run_block(tape, store, down2_, h1, temb, 2);
    ad::Var m = run_block(tape, store, mid_, h2, temb, 1);
    ad::Var l1_grid = ad::concat_dim0({tokens_to_grid(ad::slice_dim0(l1, 0, n), g),
                                       tokens_to_grid(ad::slice_dim0(l1, n, 2 * n), g)});
    m = confuse(l1_grid, m, P(cf2_w_), P(cf2_b_), P(cf1_w_), P(cf1_b_));
    ad::Var u1 = run_block(tape, store, up1_, ad::concat_dim0({ad::upsample_nearest2x(m), h1}), temb, 1);
    ad::Var u2 = run_block(tape, store, up2_, ad::concat_dim0({ad::upsample_nearest2x(u1), h0}), temb, 1);
    return ad::conv2d(u2, P(out_w_), P(out_b_), 1, 0);
}

namespace {

Tensor gaussian(const std::vector<int>& shape, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor z(shape);
    for (double& v : z.values()) v = normal(rng);
    return z;
}

}  // namespace

TgidTrainOutput Tgid::train_forward(ad::Tape& tape, const ParamStore& store, const Tensor& distractor, ad::Var l1,
                                    ad::Var s1, ad::Var fv, ad::Var fi, std::uint64_t seed,
                                    const BoundingBox* background_box, int crop_side) const {
    const int g = shapes_.grid;
    Rng rng(seed);
    TgidTrainOutput out;
    out.t = std::uniform_int_distribution<int>(1, schedule_.T)(rng);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    out.injected = inject_decision(u, schedule_.inject_prob);

    ad::Var x0 = tokens_to_grid(s1, g);
    const std::vector<int> shape = x0.value().shape();
    const Tensor z = gaussian(shape, rng);
    if (distractor.rows() != g * g) throw std::invalid_argument("train_forward: distractor token count mismatch");
    Tensor d(shape);
    for (int r = 0; r < g * g; ++r)
        for (int c = 0; c < shape[0]; ++c) d.at(c, r / g, r % g) = distractor.at(r, c);
    if (config_.filter_background && background_box != nullptr) d = filter_background(d, *background_box, crop_side);

    // x0 carries gradients; the Gaussian and the distractor are data.
    const double beta = out.injected ? schedule_.beta_distractor : 0.0;
    const double ab = schedule_.alpha_bar(out.t);
    Tensor noise_part(shape);
    const double zs = (1.0 - beta) * std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < noise_part.size(); ++i) {
        noise_part[i] = zs * z[i];
        if (beta != 0.0) noise_part[i] += beta * d[i];
    }
    ad::Var x_t = ad::add(ad::scale(x0, std::sqrt(ab)), tape.constant(std::move(noise_part)));
    ad::Var eps = denoise(tape, store, x_t, out.t, fv, fi, l1);
    out.l_dm = ad::mean(ad::square(ad::sub(eps, tape.constant(z))));
    ad::Var x0_pred = ad::scale(ad::sub(x_t, ad::scale(eps, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
    out.f_s2 = grid_to_tokens(x0_pred);
    return out;
}

Tensor Tgid::infer(const ParamStore& store, const Tensor& fv, const Tensor& fi, const Tensor& l1,
                   std::uint64_t seed) const {
    const int g = shapes_.grid;
    Rng rng(seed);
    const Tensor x_T = gaussian({shapes_.out_model, g, g}, rng);
    auto eps_fn = [&](const Tensor& x_t, int t) {
        ad::Tape tape;
        return denoise(tape, store, tape.constant(x_t), t, tape.constant(fv), tape.constant(fi), tape.constant(l1))
            .value();
    };
    const Tensor x0 = ddim_sample(x_T, schedule_, eps_fn);
    ad::Tape tape;
    return grid_to_tokens(tape.constant(x0)).value();
}

}  // namespace gdstrack
