// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training with AdamW.
//
//   epoch < unfreeze_encoder          : fusion + head train, encoder frozen
//   unfreeze_encoder <= epoch < freeze : encoder joins
//   freeze <= epoch < end              : everything above frozen; diffusion
//                                        module and its head train
//
// Every example is a triplet (template frame, search frame, next search frame)
// drawn from one pseudo-labelled sequence. Ground truth is never touched.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gdstrack/losses.hpp"
#include "gdstrack/model.hpp"
#include "gdstrack/sequence.hpp"

namespace gdstrack {

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 8;
    int epoch_unfreeze_encoder = 4;
    int epoch_freeze_stage1 = 8;
    int epoch_end = 12;
    int samples_per_sequence = 4;  // triplets drawn per sequence per epoch
    double jitter_shift = 0.125;   // fraction of the search window
    double jitter_scale = 0.10;    // relative window size perturbation
    bool train_amg_projections = false;
    bool stage1_only = false;      // stop after the stage-1 epochs
    std::uint64_t seed = 0;
    LossWeights weights;

    void validate() const;
};

/// Per-parameter AdamW state; the step counter is per parameter so tensors
/// that unfreeze late start with fresh bias correction.
struct OptimizerState {
    std::vector<Tensor> m, v;
    std::vector<long> steps;

    explicit OptimizerState(const ParamStore& store);
};

/// Decoupled AdamW on every trainable parameter that received a gradient.
void adamw_step(ParamStore& store, OptimizerState& state, const Gradients& grads, const TrainConfig& config);

/// Applies the freezing schedule for `epoch` to the store's trainable flags.
void apply_freeze_schedule(ParamStore& store, int epoch, const TrainConfig& config);

struct EpochLog {
    int epoch = 0;  // 1-based in the written log
    int stage = 1;
    double loss_total = 0.0;
    double loss_giou = 0.0;
    double loss_l1 = 0.0;
    double loss_dm = 0.0;
    int examples = 0;
};

std::string format_log_line(const EpochLog& log);

struct Triplet {
    int sequence = 0;
    int template_frame = 0;
    int search_frame = 0;  // search frame 2 is search_frame + 1
};

/// Deterministic triplet list for one epoch.
std::vector<Triplet> sample_triplets(const std::vector<SequenceRecord>& data, int epoch, const TrainConfig& config);

struct ExampleResult {
    Gradients grads;
    double total = 0.0, giou = 0.0, l1 = 0.0, dm = 0.0;
    bool used = false;
};

/// Forward + backward for one triplet in the given stage.
ExampleResult run_example(const Model& model, const std::vector<SequenceRecord>& data, const Triplet& triplet,
                          int stage, const TrainConfig& config, std::uint64_t example_seed);

struct TrainResult {
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Runs the schedule in place on `model`.
TrainResult train(Model& model, const std::vector<SequenceRecord>& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Writes checkpoint.bin, loss_log.csv.
void write_training_outputs(const Model& model, const TrainResult& result, const std::filesystem::path& out_dir);

/// Loads every sequence directory under `root` (sorted by name), pseudo labels only.
std::vector<SequenceRecord> load_dataset(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckReport {
    std::string module;
    double max_rel_error = 0.0;
    std::string worst_parameter;
    int parameters_checked = 0;
    long elements_checked = 0;
    double max_abs_gradient = 0.0;  // largest |finite difference| seen; 0 means the loss was flat
    int flat_parameters = 0;        // tensors whose gradient is zero under both methods
    long nonsmooth_elements = 0;    // elements with a kink within one step, re-checked at a finer step
};

/// Compares reverse-mode gradients to central differences (step h) for every
/// parameter of `module` in {"losses", "encoder", "mdgf", "tgid", "pipeline"}
/// on a small seeded toy instance. The relative error of a tensor is
/// max|g - fd| / max(max|g|, max|fd|, 1e-8). An element whose central
/// differences at h and h/2 disagree sits next to a kink (ReLU, max); it is
/// counted in nonsmooth_elements and compared at step h * 1e-3 instead.
GradCheckReport grad_check(const std::string& module, std::uint64_t seed, double h = 1e-3);

/// Generic driver: `loss` rebuilds the scalar on a fresh tape from the store.
GradCheckReport grad_check_store(const std::string& module, ParamStore& store,
                                 const std::function<ad::Var(ad::Tape&)>& loss, double h,
                                 const std::vector<std::string>& prefixes);

}  // namespace gdstrack
