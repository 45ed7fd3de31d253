// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: every tunable of the model, the trainer, evaluation and
// the synthetic suites, addressable as dotted keys (`train.learning_rate`,
// `amg.top_k`, ...). Config files are `key = value` lines with `#` comments.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gdstrack/model.hpp"
#include "gdstrack/trainer.hpp"

namespace gdstrack {

enum class HeadChoice { mdgf, tgid };

struct EvalConfig {
    double pr_threshold = 5.0;  // pixels
    HeadChoice head = HeadChoice::mdgf;
    bool init_from_pseudo = false;  // initialise from the pseudo label instead of ground truth
};

/// How `synth` populates a dataset: sequence i gets (i mod (max_distractors + 1)) distractors.
struct SynthConfig {
    int num_sequences = 200;
    int max_distractors = 2;
    SceneConfig scene;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
    SynthConfig synth;
    std::uint64_t seed = 0;
};

/// `desk` (default) or `paper`.
RunConfig make_preset(const std::string& name);

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

/// Sets one key; throws std::invalid_argument on an unknown key or malformed value.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& values);

/// All keys in a fixed order with their current values, one `key = value` line each.
std::string to_text(const RunConfig& config);
std::vector<std::string> config_keys();

/// Propagates the global seed into the sub-configs that carry one.
void propagate_seed(RunConfig& config);

HeadChoice parse_head_choice(const std::string& s);
std::string to_string(HeadChoice h);

}  // namespace gdstrack
