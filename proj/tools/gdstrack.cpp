// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synth, pseudolabel, train, track, eval, ablate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gdstrack/config.hpp"
#include "gdstrack/evalharness.hpp"
#include "gdstrack/pseudolabel.hpp"
#include "gdstrack/trainer.hpp"

namespace fs = std::filesystem;
using namespace gdstrack;

namespace {

struct GlobalOptions {
    std::string config_file;
    std::string preset = "desk";
    long long seed = -1;
    std::vector<std::string> sets;
};

RunConfig build_config(const GlobalOptions& g, const fs::path& base_file = {}) {
    RunConfig c = make_preset(g.preset);
    if (!base_file.empty() && fs::exists(base_file)) apply_overrides(c, read_key_value_file(base_file));
    if (!g.config_file.empty()) apply_overrides(c, read_key_value_file(g.config_file));
    for (const std::string& s : g.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
        set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
    }
    if (g.seed >= 0) c.seed = static_cast<std::uint64_t>(g.seed);
    propagate_seed(c);
    return c;
}

std::vector<fs::path> sequence_dirs(const fs::path& root) {
    if (fs::exists(root / "rgb")) return {root};
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "rgb")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw std::invalid_argument("no sequences under " + root.string());
    return dirs;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + path.string());
}

BoundingBox parse_box(const std::string& s) {
    BoundingBox b;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf", &b.x, &b.y, &b.w, &b.h) != 4) {
        throw std::invalid_argument("expected x,y,w,h, got " + s);
    }
    return b;
}

std::unique_ptr<Model> load_model(const RunConfig& cfg, const fs::path& checkpoint) {
    auto model = std::make_unique<Model>(cfg.model);
    load_checkpoint(model->store(), checkpoint);
    return model;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised RGB-T tracking with graph fusion and diffusion refinement"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions g;
    app.add_option("--config", g.config_file, "key=value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "global seed");
    app.add_option("--preset", g.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--set", g.sets, "override one config key (key=value), repeatable");

    std::string out_dir, data_dir, checkpoint, sequence, output, init_box, grids = "components";
    int count = -1;
    bool heldout = false;
    int eval_count = 40;

    auto* synth = app.add_subcommand("synth", "write synthetic sequences");
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--count", count, "number of sequences (default synth.num_sequences)");
    synth->add_flag("--heldout", heldout, "write the held-out benchmark suite instead of a training set");

    auto* plabel = app.add_subcommand("pseudolabel", "annotate sequences with motion pseudo labels");
    plabel->add_option("--data", data_dir, "sequence directory or a directory of sequences")->required();

    auto* trn = app.add_subcommand("train", "run the two-stage schedule");
    trn->add_option("--data", data_dir, "directory of pseudo-labelled sequences")->required();
    trn->add_option("--out", out_dir, "output directory")->required();

    auto* trk = app.add_subcommand("track", "track one sequence and write output.txt");
    trk->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    trk->add_option("--sequence", sequence, "sequence directory")->required();
    trk->add_option("--init", init_box, "initial box x,y,w,h (default: ground truth of frame 0)");
    trk->add_option("--output", output, "output file (default <sequence>/output.txt)");

    auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on sequences with ground truth");
    evl->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    evl->add_option("--data", data_dir, "directory of sequences")->required();
    evl->add_option("--output", output, "report file (default: stdout)");

    auto* abl = app.add_subcommand("ablate", "train and evaluate an ablation grid on synthetic suites");
    abl->add_option("--grid", grids, "comma-separated grids: components,adjacency,topk,beta,lambda,nhead,background");
    abl->add_option("--train-count", count, "training sequences (default synth.num_sequences)");
    abl->add_option("--eval-count", eval_count, "held-out sequences");
    abl->add_option("--output", output, "table file (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const RunConfig cfg = build_config(g);
            const int n = count > 0 ? count : cfg.synth.num_sequences;
            fs::create_directories(out_dir);
            std::vector<SequenceRecord> records;
            if (heldout) {
                records = make_benchmark_suite(cfg.synth, cfg.seed, n).all();
            } else {
                records = make_synthetic_dataset(cfg.synth, cfg.seed, n, 0);
            }
            char name[32];
            for (std::size_t i = 0; i < records.size(); ++i) {
                std::snprintf(name, sizeof name, "seq_%04zu", i);
                save_sequence(records[i], fs::path(out_dir) / name);
            }
            std::cout << "wrote " << records.size() << " sequences to " << out_dir << "\n";
        } else if (*plabel) {
            const RunConfig cfg = build_config(g);
            (void)cfg;
            int labelled = 0, skipped = 0;
            for (const fs::path& dir : sequence_dirs(data_dir)) {
                LoadOptions opts;
                opts.pseudo_labels = false;
                try {
                    const SequenceRecord rec = annotate_sequence(load_sequence(dir, opts));
                    write_pseudo_labels(rec.pseudo_track, dir / "pseudolabel.txt");
                    ++labelled;
                } catch (const UnlabelableSequenceError&) {
                    std::cerr << "no motion found in " << dir << ", skipped\n";
                    ++skipped;
                }
            }
            std::cout << "labelled " << labelled << " sequences, skipped " << skipped << "\n";
        } else if (*trn) {
            const RunConfig cfg = build_config(g);
            std::vector<SequenceRecord> data;
            for (const fs::path& dir : sequence_dirs(data_dir)) {
                SequenceRecord r = load_sequence(dir);
                if (r.pseudo_track.empty()) throw std::invalid_argument(dir.string() + " has no pseudolabel.txt");
                data.push_back(std::move(r));
            }
            Model model(cfg.model);
            const TrainResult result = train(model, data, cfg.train, [](const EpochLog& e) {
                std::cout << format_log_line(e) << std::endl;
            });
            write_training_outputs(model, result, out_dir);
            write_text(fs::path(out_dir) / "run_config.txt", to_text(cfg));
        } else if (*trk) {
            const RunConfig cfg = build_config(g, fs::path(checkpoint).parent_path() / "run_config.txt");
            const auto model = load_model(cfg, checkpoint);
            LoadOptions opts;
            opts.pseudo_labels = false;
            opts.ground_truth = init_box.empty();
            const SequenceRecord rec = load_sequence(sequence, opts);
            const BoundingBox init = init_box.empty() ? rec.gt_track.at(0) : parse_box(init_box);
            TrackOptions topts;
            topts.head = cfg.eval.head;
            topts.seed = cfg.seed;
            const TrackOutput out = track_sequence(*model, rec, init, topts);
            const fs::path path = output.empty() ? fs::path(sequence) / "output.txt" : fs::path(output);
            write_track_output(out, path);
            std::cout << "wrote " << path << "\n";
        } else if (*evl) {
            const RunConfig cfg = build_config(g, fs::path(checkpoint).parent_path() / "run_config.txt");
            const auto model = load_model(cfg, checkpoint);
            std::vector<SequenceRecord> suite;
            for (const fs::path& dir : sequence_dirs(data_dir)) {
                LoadOptions opts;
                opts.ground_truth = true;
                opts.pseudo_labels = cfg.eval.init_from_pseudo;
                suite.push_back(load_sequence(dir, opts));
            }
            const std::string report = metrics_to_json(evaluate_suite(*model, suite, cfg.eval, cfg.seed));
            if (output.empty()) {
                std::cout << report;
            } else {
                write_text(output, report);
            }
        } else if (*abl) {
            const RunConfig cfg = build_config(g);
            const int n = count > 0 ? count : cfg.synth.num_sequences;
            const std::vector<SequenceRecord> train_set =
                annotate_all(make_synthetic_dataset(cfg.synth, cfg.seed, n, 0));
            const BenchmarkSuite suite = make_benchmark_suite(cfg.synth, cfg.seed, eval_count);
            std::vector<AblationCell> cells;
            std::stringstream ss(grids);
            std::string name;
            while (std::getline(ss, name, ',')) {
                const auto grid = ablation_grid(name);
                cells.insert(cells.end(), grid.begin(), grid.end());
            }
            const std::string table = format_ablation_table(run_ablation(cfg, cells, train_set, suite, &std::cerr));
            if (output.empty()) {
                std::cout << table;
            } else {
                write_text(output, table);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
