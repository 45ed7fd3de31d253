// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace gdstrack {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
    return out;
}

long long to_integer(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw std::invalid_argument("config: " + key + " expects an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: " + key + " expects a boolean, got '" + v + "'");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <class Getter>
Field int_field(std::string key, Getter ref) {
    return Field{key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
                 [ref, key](RunConfig& c, const std::string& v) {
                     ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(to_integer(key, v));
                 }};
}

template <class Getter>
Field real_field(std::string key, Getter ref) {
    return Field{key, [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
                 [ref, key](RunConfig& c, const std::string& v) { ref(c) = to_double(key, v); }};
}

template <class Getter>
Field bool_field(std::string key, Getter ref) {
    return Field{key, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
                 [ref, key](RunConfig& c, const std::string& v) { ref(c) = to_bool(key, v); }};
}

#define GD_INT(key, member) int_field(key, [](RunConfig& c) -> auto& { return c.member; })
#define GD_REAL(key, member) real_field(key, [](RunConfig& c) -> auto& { return c.member; })
#define GD_BOOL(key, member) bool_field(key, [](RunConfig& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        GD_INT("seed", seed),
        // encoder and crops
        GD_INT("encoder.patch_size", model.encoder.patch_size),
        GD_INT("encoder.d_model", model.encoder.d_model),
        GD_INT("encoder.num_heads", model.encoder.num_heads),
        GD_INT("encoder.num_blocks", model.encoder.num_blocks),
        GD_INT("encoder.ff_dim", model.encoder.ff_dim),
        Field{"encoder.template_side", [](const RunConfig& c) { return std::to_string(c.model.encoder.template_side); },
              [](RunConfig& c, const std::string& v) {
                  c.model.encoder.template_side = c.model.crop.template_side =
                      static_cast<int>(to_integer("encoder.template_side", v));
              }},
        Field{"encoder.search_side", [](const RunConfig& c) { return std::to_string(c.model.encoder.search_side); },
              [](RunConfig& c, const std::string& v) {
                  c.model.encoder.search_side = c.model.crop.search_side =
                      static_cast<int>(to_integer("encoder.search_side", v));
              }},
        GD_REAL("crop.context_scale", model.crop.context_scale),
        // adjacency
        GD_INT("amg.d_k", model.amg.d_k),
        GD_REAL("amg.theta", model.amg.theta),
        GD_INT("amg.top_k", model.amg.top_k),
        Field{"amg.mode", [](const RunConfig& c) { return to_string(c.model.amg.mode); },
              [](RunConfig& c, const std::string& v) { c.model.amg.mode = parse_adjacency_mode(v); }},
        // fusion and heads
        GD_INT("mdgf.nhid", model.mdgf.nhid),
        GD_INT("mdgf.out_model", model.mdgf.out_model),
        GD_INT("mdgf.nhead", model.mdgf.nhead),
        GD_REAL("mdgf.leaky_slope", model.mdgf.leaky_slope),
        Field{"mdgf.fusion", [](const RunConfig& c) { return to_string(c.model.mdgf.fusion); },
              [](RunConfig& c, const std::string& v) { c.model.mdgf.fusion = parse_fusion_mode(v); }},
        GD_INT("head.channels1", model.head.channels1),
        GD_INT("head.channels2", model.head.channels2),
        // diffusion
        GD_INT("tgid.T", model.tgid.T),
        GD_REAL("tgid.beta_start", model.tgid.beta_start),
        GD_REAL("tgid.beta_end", model.tgid.beta_end),
        GD_INT("tgid.sample_steps", model.tgid.sample_steps),
        GD_REAL("tgid.beta_distractor", model.tgid.beta_distractor),
        GD_REAL("tgid.inject_prob", model.tgid.inject_prob),
        GD_BOOL("tgid.filter_background", model.tgid.filter_background),
        GD_INT("tgid.base_channels", model.tgid.base_channels),
        GD_INT("tgid.mid_channels", model.tgid.mid_channels),
        GD_INT("tgid.cond_channels", model.tgid.cond_channels),
        GD_INT("tgid.time_dim", model.tgid.time_dim),
        GD_INT("tgid.groups", model.tgid.groups),
        // training
        GD_REAL("train.learning_rate", train.learning_rate),
        GD_REAL("train.weight_decay", train.weight_decay),
        GD_REAL("train.beta1", train.beta1),
        GD_REAL("train.beta2", train.beta2),
        GD_REAL("train.eps", train.eps),
        GD_INT("train.batch_size", train.batch_size),
        GD_INT("train.epoch_unfreeze_encoder", train.epoch_unfreeze_encoder),
        GD_INT("train.epoch_freeze_stage1", train.epoch_freeze_stage1),
        GD_INT("train.epoch_end", train.epoch_end),
        GD_INT("train.samples_per_sequence", train.samples_per_sequence),
        GD_REAL("train.jitter_shift", train.jitter_shift),
        GD_REAL("train.jitter_scale", train.jitter_scale),
        GD_BOOL("train.train_amg_projections", train.train_amg_projections),
        GD_BOOL("train.stage1_only", train.stage1_only),
        GD_REAL("loss.lambda1", train.weights.giou),
        GD_REAL("loss.lambda2", train.weights.l1),
        GD_REAL("loss.lambda", train.weights.diffusion),
        // evaluation
        GD_REAL("eval.pr_threshold", eval.pr_threshold),
        Field{"eval.head", [](const RunConfig& c) { return to_string(c.eval.head); },
              [](RunConfig& c, const std::string& v) { c.eval.head = parse_head_choice(v); }},
        GD_BOOL("eval.init_from_pseudo", eval.init_from_pseudo),
        // synthetic data
        GD_INT("synth.num_sequences", synth.num_sequences),
        GD_INT("synth.max_distractors", synth.max_distractors),
        GD_INT("synth.frame_width", synth.scene.frame_width),
        GD_INT("synth.frame_height", synth.scene.frame_height),
        GD_INT("synth.num_frames", synth.scene.num_frames),
        GD_INT("synth.target_size", synth.scene.target_size),
        GD_REAL("synth.distractor_similarity", synth.scene.distractor_similarity),
        GD_REAL("synth.motion_speed", synth.scene.motion_speed),
        GD_REAL("synth.noise_std", synth.scene.noise_std),
    };
    return f;
}

#undef GD_INT
#undef GD_REAL
#undef GD_BOOL

}  // namespace

HeadChoice parse_head_choice(const std::string& s) {
    if (s == "mdgf") return HeadChoice::mdgf;
    if (s == "tgid") return HeadChoice::tgid;
    throw std::invalid_argument("unknown head: " + s);
}

std::string to_string(HeadChoice h) { return h == HeadChoice::mdgf ? "mdgf" : "tgid"; }

RunConfig make_preset(const std::string& name) {
    RunConfig c;
    if (name == "desk") return c;
    if (name == "paper") {
        c.train.learning_rate = 3e-5;
        c.train.weight_decay = 1e-4;
        c.train.batch_size = 16;
        c.train.epoch_unfreeze_encoder = 10;
        c.train.epoch_freeze_stage1 = 22;
        c.train.epoch_end = 50;
        c.model.amg.d_k = 2048;
        c.model.tgid.T = 1000;
        c.eval.pr_threshold = 20.0;
        return c;
    }
    throw std::invalid_argument("unknown preset: " + name + " (expected desk or paper)");
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const Field& f : fields()) {
        if (f.key == key) {
            f.set(config, value);
            return;
        }
    }
    throw std::invalid_argument("unknown config key: " + key);
}

void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& values) {
    for (const auto& [k, v] : values) set_config_value(config, k, v);
}

std::string to_text(const RunConfig& config) {
    std::string out;
    for (const Field& f : fields()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const Field& f : fields()) keys.push_back(f.key);
    return keys;
}

void propagate_seed(RunConfig& config) {
    config.train.seed = config.seed;
    config.model.init_seed = mix_seed(config.seed, 0x696e6974ULL);
    config.synth.scene.seed = config.seed;
}

}  // namespace gdstrack
