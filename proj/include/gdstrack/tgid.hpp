// SPDX-License-Identifier: Apache-2.0
//
// Diffusion refinement of the fused search feature.
//
// Training noises the current fusion map x0 with a Gaussian and, on a seeded
// coin flip, with the neighbouring frame's fusion map as a distractor:
//
//   x_t = sqrt(abar_t) x0 + (1 - beta) sqrt(1 - abar_t) z + beta d
//
// A small UNet predicts z from x_t, the projected modality features and the
// first graph layer output (merged at the bottleneck by ConFuse). Inference
// runs a deterministic DDIM sampler from a seeded Gaussian.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gdstrack/autodiff.hpp"
#include "gdstrack/image.hpp"
#include "gdstrack/params.hpp"

namespace gdstrack {

struct DiffusionSchedule {
    int T = 0;
    std::vector<double> betas;       // index 1..T (betas[0] unused, 0)
    std::vector<double> alpha_bars;  // index 0..T, alpha_bars[0] = 1
    int sample_steps = 1;
    double beta_distractor = 0.5;
    double inject_prob = 0.5;

    double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t)); }
    /// Decreasing DDIM timesteps, uniformly strided, starting at T.
    std::vector<int> sampling_timesteps() const;
};

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end, int sample_steps,
                                double beta_distractor = 0.5, double inject_prob = 0.5);

/// x_t for scalar-free tensors of one shape. `inject` selects beta = beta_distractor, else 0.
Tensor forward_noising(const Tensor& x0, int t, const Tensor& z, const Tensor& d, const DiffusionSchedule& schedule,
                       bool inject);

/// Injection decision from a uniform draw u in [0, 1): inject iff u > 1 - inject_prob.
bool inject_decision(double u, double inject_prob);

/// Zeroes every cell of a C x g x g map whose token centre lies outside `box` (crop pixels).
Tensor filter_background(const Tensor& grid_map, const BoundingBox& box, int crop_side);

using EpsilonFn = std::function<Tensor(const Tensor& x_t, int t)>;

/// Deterministic DDIM (eta = 0) from x_T; returns the final x0 prediction.
Tensor ddim_sample(const Tensor& x_T, const DiffusionSchedule& schedule, const EpsilonFn& epsilon);

/// Single-step x0 prediction (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
Tensor predict_x0(const Tensor& x_t, const Tensor& eps, double alpha_bar);

/// D' = Conv1(concat(Conv2(l1_grid), D)) + D. Conv2 has kernel = stride, no padding; Conv1 is 1x1.
ad::Var confuse(ad::Var l1_grid, ad::Var d, ad::Var conv2_w, ad::Var conv2_b, ad::Var conv1_w, ad::Var conv1_b);

/// Sinusoidal embedding of a timestep, `dim` values (sines then cosines).
Tensor timestep_embedding(int t, int dim);

struct TgidConfig {
    int T = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int sample_steps = 5;
    double beta_distractor = 0.5;
    double inject_prob = 0.5;
    bool filter_background = false;

    int base_channels = 32;
    int mid_channels = 64;
    int cond_channels = 16;
    int time_dim = 32;
    int groups = 8;

    DiffusionSchedule schedule() const;
};

struct TgidShapes {
    int d_model = 64;
    int out_model = 32;
    int l1_width = 32;  // columns of the first graph layer output
    int grid = 8;
};

struct TgidTrainOutput {
    ad::Var f_s2;  // N x out_model, single-step x0 prediction
    ad::Var l_dm;  // mean squared error between the Gaussian and its prediction
    int t = 0;
    bool injected = false;
};

class Tgid {
public:
    Tgid() = default;
    /// Registers parameters under `tgid.`.
    Tgid(const TgidConfig& config, const TgidShapes& shapes, ParamStore& store, Rng& rng);

    const TgidConfig& config() const { return config_; }
    const DiffusionSchedule& schedule() const { return schedule_; }
    const TgidShapes& shapes() const { return shapes_; }

    /// Epsilon prediction for x_t (out_model x g x g). fv, fi: N x d_model tokens; l1: 2N x l1_width.
    ad::Var denoise(ad::Tape& tape, const ParamStore& store, ad::Var x_t, int t, ad::Var fv, ad::Var fi,
                    ad::Var l1) const;

    /// Training pass. `distractor` is the neighbouring frame's fusion output (N x out_model), used
    /// as data. All random draws come from `seed`.
    TgidTrainOutput train_forward(ad::Tape& tape, const ParamStore& store, const Tensor& distractor, ad::Var l1,
                                  ad::Var s1, ad::Var fv, ad::Var fi, std::uint64_t seed,
                                  const BoundingBox* background_box = nullptr, int crop_side = 0) const;

    /// Inference: DDIM sample conditioned on the current features; returns N x out_model tokens.
    Tensor infer(const ParamStore& store, const Tensor& fv, const Tensor& fi, const Tensor& l1,
                 std::uint64_t seed) const;

private:
    struct ConvBlock {
        ParamId w, b, t_w, t_b, n_g, n_b;
    };
    ConvBlock make_block(ParamStore& store, Rng& rng, const std::string& name, int in, int out);
    ad::Var run_block(ad::Tape& tape, const ParamStore& store, const ConvBlock& blk, ad::Var x, ad::Var temb,
                      int stride) const;

    TgidConfig config_;
    TgidShapes shapes_;
    DiffusionSchedule schedule_;
    ParamId cond_v_w_ = -1, cond_v_b_ = -1, cond_i_w_ = -1, cond_i_b_ = -1;
    ConvBlock in_{}, down1_{}, down2_{}, mid_{}, up1_{}, up2_{};
    ParamId cf2_w_ = -1, cf2_b_ = -1, cf1_w_ = -1, cf1_b_ = -1;
    ParamId out_w_ = -1, out_b_ = -1;
};

}  // namespace gdstrack
