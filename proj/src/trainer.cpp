// SPDX-License-Identifier: Apache-2.0

#include "gdstrack/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace gdstrack {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || weight_decay < 0.0) throw std::invalid_argument("TrainConfig: bad learning rate or decay");
    if (batch_size < 1 || samples_per_sequence < 1) throw std::invalid_argument("TrainConfig: batch and sample counts must be positive");
    if (!(0 <= epoch_unfreeze_encoder && epoch_unfreeze_encoder < epoch_freeze_stage1 &&
          epoch_freeze_stage1 < epoch_end)) {
        throw std::invalid_argument("TrainConfig: need unfreeze_encoder < freeze_stage1 < end");
    }
}

OptimizerState::OptimizerState(const ParamStore& store) {
    for (const Parameter& p : store) {
        m.emplace_back(p.value.shape());
        v.emplace_back(p.value.shape());
    }
    steps.assign(store.size(), 0);
}

void adamw_step(ParamStore& store, OptimizerState& state, const Gradients& grads, const TrainConfig& config) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        Parameter& p = store[static_cast<ParamId>(i)];
        if (!p.trainable || i >= grads.grads.size() || grads.grads[i].empty()) continue;
        const Tensor& g = grads.grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const long t = ++state.steps[i];
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
        const double decay = 1.0 - config.learning_rate * config.weight_decay;
        for (std::size_t k = 0; k < g.size(); ++k) {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1, vhat = v[k] / c2;
            p.value[k] = p.value[k] * decay - config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

void apply_freeze_schedule(ParamStore& store, int epoch, const TrainConfig& config) {
    for (Parameter& p : store) p.trainable = false;
    if (epoch >= config.epoch_freeze_stage1) {
        for (const std::string& prefix : Model::stage2_prefixes()) store.set_trainable(prefix, true);
        return;
    }
    store.set_trainable("mdgf.", true);
    store.set_trainable("head.", true);
    if (epoch >= config.epoch_unfreeze_encoder) store.set_trainable("encoder.", true);
    if (config.train_amg_projections) store.set_trainable("amg.", true);
}

std::string format_log_line(const EpochLog& log) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.6f,%.6f", log.epoch, log.stage, log.loss_total, log.loss_giou,
                  log.loss_l1, log.loss_dm);
    return buf;
}

namespace {

bool usable(const SequenceRecord& r, int frame) {
    return r.pseudo_track[static_cast<std::size_t>(frame)].confidence > 0.0;
}

template <class T>
void deterministic_shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

CropPair jittered_search(const SequenceRecord& rec, int frame, const CropGeometry& geom, const TrainConfig& config,
                         Rng& rng) {
    const BoundingBox& b = rec.pseudo_track[static_cast<std::size_t>(frame)].box;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double window = geom.window_scale(CropMode::search_region) * std::max(b.w, b.h) *
                          std::exp(config.jitter_scale * unit(rng));
    const double cx = b.cx() + config.jitter_shift * window * unit(rng);
    const double cy = b.cy() + config.jitter_shift * window * unit(rng);
    return crop_pair_window(rec, frame, cx, cy, window, geom.search_side);
}

Tensor normalized_target(const CropPair& crop, const BoundingBox& frame_box, int side) {
    const BoundingBox c = crop.transform.to_crop(frame_box);
    return Tensor({4}, std::vector<double>{c.x / side, c.y / side, c.x2() / side, c.y2() / side});
}

}  // namespace

std::vector<Triplet> sample_triplets(const std::vector<SequenceRecord>& data, int epoch, const TrainConfig& config) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch), 0x7472697000ULL));
    std::vector<Triplet> out;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const SequenceRecord& r = data[s];
        std::vector<int> templates, searches;
        for (int f = 0; f < r.num_frames(); ++f) {
            if (usable(r, f)) templates.push_back(f);
            if (f + 1 < r.num_frames() && usable(r, f) && usable(r, f + 1)) searches.push_back(f);
        }
        if (templates.empty() || searches.empty()) continue;
        for (int k = 0; k < config.samples_per_sequence; ++k) {
            Triplet t;
            t.sequence = static_cast<int>(s);
            t.template_frame = templates[rng() % templates.size()];
            t.search_frame = searches[rng() % searches.size()];
            out.push_back(t);
        }
    }
    deterministic_shuffle(out, rng);
    return out;
}

ExampleResult run_example(const Model& model, const std::vector<SequenceRecord>& data, const Triplet& triplet,
                          int stage, const TrainConfig& config, std::uint64_t example_seed) {
    const SequenceRecord& rec = data.at(static_cast<std::size_t>(triplet.sequence));
    const CropGeometry& geom = model.config().crop;
    const int side = geom.search_side;
    Rng rng(example_seed);
    const CropPair templ = crop_regions(rec, triplet.template_frame,
                                        rec.pseudo_track[static_cast<std::size_t>(triplet.template_frame)].box, geom,
                                        CropMode::template_region);
    const int f1 = triplet.search_frame, f2 = triplet.search_frame + 1;
    const CropPair search1 = jittered_search(rec, f1, geom, config, rng);

    ExampleResult res;
    ad::Tape tape;
    if (stage == 1) {
        FusionPass pass = model.fuse(tape, templ, search1);
        const Tensor target = normalized_target(search1, rec.pseudo_track[static_cast<std::size_t>(f1)].box, side);
        BoxLossTerms terms = stage1_loss(ad::scale(pass.head.corners, 1.0 / side), target, config.weights,
                                         rec.pseudo_track[static_cast<std::size_t>(f1)].confidence);
        tape.backward(terms.total);
        res.total = terms.total.value()[0];
        res.giou = terms.giou.value()[0];
        res.l1 = terms.l1.value()[0];
    } else {
        if (model.config().mdgf.fusion != FusionMode::graph) {
            throw std::invalid_argument("train: the diffusion stage requires graph fusion");
        }
        const CropPair search2 = jittered_search(rec, f2, geom, config, rng);
        Tensor distractor;
        BoundingBox distractor_box;
        {
            ad::Tape first;
            FusionPass p1 = model.fuse(first, templ, search1);
            distractor = p1.fusion.s1.value();
            distractor_box = corners_to_box(p1.head.corners.value());
        }
        FusionPass p2 = model.fuse(tape, templ, search2);
        TgidTrainOutput diff = model.tgid().train_forward(tape, model.store(), distractor, p2.fusion.l1, p2.fusion.s1,
                                                          p2.fv, p2.fi, mix_seed(example_seed, 2), &distractor_box,
                                                          side);
        HeadOutput h2 = model.diffhead().forward(tape, model.store(), diff.f_s2, model.grid(), side);
        Tensor fused = p2.head.corners.value();
        for (double& v : fused.values()) v /= side;
        const Tensor target = normalized_target(search2, rec.pseudo_track[static_cast<std::size_t>(f2)].box, side);
        Stage2LossTerms terms = stage2_loss(ad::scale(h2.corners, 1.0 / side), target, fused, diff.l_dm,
                                            config.weights, rec.pseudo_track[static_cast<std::size_t>(f2)].confidence);
        tape.backward(terms.total);
        res.total = terms.total.value()[0];
        res.giou = terms.to_label.giou.value()[0] + terms.to_fused.giou.value()[0];
        res.l1 = terms.to_label.l1.value()[0] + terms.to_fused.l1.value()[0];
        res.dm = terms.diffusion.value()[0];
    }
    res.grads = tape.parameter_gradients(model.store().size());
    res.used = true;
    return res;
}

TrainResult train(Model& model, const std::vector<SequenceRecord>& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    for (const SequenceRecord& r : data) {
        if (r.pseudo_track.size() != static_cast<std::size_t>(r.num_frames())) {
            throw std::invalid_argument("train: dataset is not annotated with pseudo labels");
        }
    }
    ParamStore& store = model.store();
    OptimizerState opt(store);
    TrainResult result;
    const int last = config.stage1_only ? config.epoch_freeze_stage1 : config.epoch_end;
    for (int epoch = 0; epoch < last; ++epoch) {
        apply_freeze_schedule(store, epoch, config);
        const int stage = epoch >= config.epoch_freeze_stage1 ? 2 : 1;
        if (stage == 2 && epoch == config.epoch_freeze_stage1) model.init_diffhead_from_head();
        const std::vector<Triplet> triplets = sample_triplets(data, epoch, config);
        EpochLog log;
        log.epoch = epoch + 1;
        log.stage = stage;
        for (std::size_t start = 0; start < triplets.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(triplets.size(), start + static_cast<std::size_t>(config.batch_size));
            const int count = static_cast<int>(end - start);
            std::vector<ExampleResult> results(static_cast<std::size_t>(count));
            std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 1)
            for (int i = 0; i < count; ++i) {
                const std::size_t idx = start + static_cast<std::size_t>(i);
                try {
                    results[static_cast<std::size_t>(i)] =
                        run_example(model, data, triplets[idx], stage, config,
                                    mix_seed(config.seed, static_cast<std::uint64_t>(epoch), idx));
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
            for (const auto& e : errors)
                if (e) std::rethrow_exception(e);
            Gradients batch(store.size());
            int used = 0;
            for (const ExampleResult& r : results) {
                if (!r.used) continue;
                batch.accumulate(r.grads);
                log.loss_total += r.total;
                log.loss_giou += r.giou;
                log.loss_l1 += r.l1;
                log.loss_dm += r.dm;
                ++used;
            }
            if (used == 0) continue;
            batch.scale(1.0 / used);
            log.examples += used;
            adamw_step(store, opt, batch, config);
        }
        if (log.examples > 0) {
            const double inv = 1.0 / log.examples;
            log.loss_total *= inv;
            log.loss_giou *= inv;
            log.loss_l1 *= inv;
            log.loss_dm *= inv;
        }
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    for (Parameter& p : store) p.trainable = false;
    return result;
}

void write_training_outputs(const Model& model, const TrainResult& result, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(model.store(), out_dir / "checkpoint.bin");
    std::ofstream log(out_dir / "loss_log.csv");
    log << "epoch,stage,loss_total,loss_giou,loss_l1,loss_dm\n";
    for (const EpochLog& e : result.log) log << format_log_line(e) << '\n';
    if (!log) throw std::runtime_error("cannot write loss log in " + out_dir.string());
}

std::vector<SequenceRecord> load_dataset(const std::filesystem::path& root) {
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<SequenceRecord> out;
    for (const auto& d : dirs) out.push_back(load_sequence(d));
    if (out.empty()) throw std::invalid_argument("load_dataset: no sequence directories under " + root.string());
    return out;
}

// ---------------------------------------------------------------------------

namespace {

// Gradients below this magnitude count as zero when forming relative errors.
constexpr double kGradCheckFloor = 1e-8;

}  // namespace

GradCheckReport grad_check_store(const std::string& module, ParamStore& store,
                                 const std::function<ad::Var(ad::Tape&)>& loss, double h,
                                 const std::vector<std::string>& prefixes) {
    for (Parameter& p : store) p.trainable = false;
    for (const std::string& prefix : prefixes) store.set_trainable(prefix, true);
    Gradients analytic;
    {
        ad::Tape tape;
        ad::Var l = loss(tape);
        tape.backward(l);
        analytic = tape.parameter_gradients(store.size());
    }
    auto evaluate = [&]() {
        ad::Tape tape;
        return loss(tape).value()[0];
    };
    GradCheckReport report;
    report.module = module;
    for (std::size_t i = 0; i < store.size(); ++i) {
        Parameter& p = store[static_cast<ParamId>(i)];
        if (!p.trainable) continue;
        auto central = [&](std::size_t k, double step) {
            const double orig = p.value[k];
            p.value[k] = orig + step;
            const double up = evaluate();
            p.value[k] = orig - step;
            const double down = evaluate();
            p.value[k] = orig;
            return (up - down) / (2.0 * step);
        };
        Tensor fd(p.value.shape());
        for (std::size_t k = 0; k < p.value.size(); ++k) fd[k] = central(k, h);
        const Tensor& g = analytic.grads[i];
        auto grad_at = [&](std::size_t k) { return g.empty() ? 0.0 : g[k]; };
        double scale = 0.0;
        bool finite = true;
        for (std::size_t k = 0; k < fd.size(); ++k) {
            finite = finite && std::isfinite(grad_at(k)) && std::isfinite(fd[k]);
            scale = std::max({scale, std::fabs(grad_at(k)), std::fabs(fd[k])});
        }
        const double denom = std::max(scale, kGradCheckFloor);
        double diff = 0.0;
        for (std::size_t k = 0; k < fd.size(); ++k) {
            double mismatch = std::fabs(grad_at(k) - fd[k]);
            if (mismatch > 1e-7 * denom) {
                // A ReLU or max switching inside [x - h, x + h] shows up as the two step sizes disagreeing;
                // such an element is compared at a step too small to reach the kink.
                const double half = central(k, h / 2.0);
                if (std::fabs(fd[k] - half) > 1e-4 * denom) {
                    ++report.nonsmooth_elements;
                    mismatch = std::fabs(grad_at(k) - central(k, h * 1e-3));
                }
            }
            diff = std::max(diff, mismatch);
        }
        double rel = diff / denom;
        if (!finite || !std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
        report.max_abs_gradient = std::max(report.max_abs_gradient, scale);
        if (scale == 0.0) ++report.flat_parameters;
        if (rel >= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_parameter = p.name;
        }
        ++report.parameters_checked;
        report.elements_checked += static_cast<long>(fd.size());
    }
    for (Parameter& p : store) p.trainable = false;
    return report;
}

namespace {

ModelConfig toy_model_config(std::uint64_t seed) {
    ModelConfig c;
    c.encoder.patch_size = 4;
    c.encoder.d_model = 8;
    c.encoder.num_heads = 2;
    c.encoder.num_blocks = 1;
    c.encoder.ff_dim = 16;
    c.encoder.template_side = 8;
    c.encoder.search_side = 16;
    c.crop.template_side = 8;
    c.crop.search_side = 16;
    c.amg.d_k = 8;
    c.amg.top_k = 16;
    c.mdgf.nhid = 4;
    c.mdgf.out_model = 4;
    c.head.channels1 = 4;
    c.head.channels2 = 4;
    c.tgid.T = 20;
    c.tgid.sample_steps = 2;
    c.tgid.base_channels = 8;
    c.tgid.mid_channels = 8;
    c.tgid.cond_channels = 4;
    c.tgid.time_dim = 8;
    c.tgid.groups = 2;
    c.init_seed = seed;
    return c;
}

Image random_image(int side, int channels, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(side, side, channels);
    for (double& v : img.data) v = u(rng);
    return img;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = u(rng);
    return t;
}

}  // namespace

GradCheckReport grad_check(const std::string& module, std::uint64_t seed, double h) {
    Rng rng(mix_seed(seed, 0x6763));
    if (module == "losses") {
        ParamStore store;
        store.add("box.pred", Tensor({4}, std::vector<double>{10.3, 12.1, 40.7, 38.2}));
        store.add("box.fused", Tensor({4}, std::vector<double>{9.1, 14.6, 36.4, 41.3}));
        const Tensor target({4}, std::vector<double>{15.2, 8.4, 45.9, 30.6});
        const Tensor fused_target({4}, std::vector<double>{11.8, 10.2, 42.5, 35.1});
        LossWeights w;
        auto loss = [&](ad::Tape& tape) {
            ad::Var pred = tape.parameter(store, 0);
            ad::Var fused = tape.parameter(store, 1);
            // Stage-one form on one box, stage-two form on the other.
            ad::Var a = stage1_loss(pred, target, w).total;
            ad::Var dm = ad::mean(ad::square(ad::sub(pred, fused)));
            ad::Var b = stage2_loss(fused, target, fused_target, dm, w).total;
            return ad::add(a, b);
        };
        return grad_check_store(module, store, loss, h, {"box."});
    }

    const ModelConfig cfg = toy_model_config(seed);
    Model model(cfg);
    ParamStore& store = model.store();
    const int side = cfg.encoder.search_side;
    const int g = cfg.encoder.search_grid();
    const int n = g * g;
    CropPair templ{random_image(cfg.encoder.template_side, 3, rng), random_image(cfg.encoder.template_side, 1, rng), {}};
    CropPair search{random_image(side, 3, rng), random_image(side, 1, rng), {}};
    // Off to one side of the search crop: a target enclosing a collapsed prediction makes the loss flat.
    const Tensor target({4}, std::vector<double>{0.05, 0.1, 0.3, 0.4});

    if (module == "encoder") {
        const Tensor r1 = random_tensor({n, cfg.encoder.d_model}, rng);
        const Tensor r2 = random_tensor({n, cfg.encoder.d_model}, rng);
        auto loss = [&](ad::Tape& tape) {
            auto [fv, fi] = model.encoder().encode_pair(tape, store, templ.rgb, templ.ir, search.rgb, search.ir);
            return ad::add(ad::sum(ad::mul(fv, tape.constant(r1))), ad::sum(ad::mul(fi, tape.constant(r2))));
        };
        return grad_check_store(module, store, loss, h, {"encoder."});
    }
    if (module == "mdgf") {
        const Tensor fv = random_tensor({n, cfg.encoder.d_model}, rng);
        const Tensor fi = random_tensor({n, cfg.encoder.d_model}, rng);
        const Tensor adjacency = model.amg().generate(fv, fi, store).adjacency;
        auto loss = [&](ad::Tape& tape) {
            FusionOutputs f = model.mdgf().forward(tape, store, tape.constant(fv), tape.constant(fi), adjacency);
            HeadOutput head = model.head().forward(tape, store, f.s1, g, side);
            return stage1_loss(ad::scale(head.corners, 1.0 / side), target, LossWeights{}).total;
        };
        return grad_check_store(module, store, loss, h, {"mdgf.", "head."});
    }
    if (module == "tgid") {
        const Tensor fv = random_tensor({n, cfg.encoder.d_model}, rng);
        const Tensor fi = random_tensor({n, cfg.encoder.d_model}, rng);
        const Tensor l1 = random_tensor({2 * n, model.mdgf().l1_width()}, rng);
        const Tensor x_t = random_tensor({cfg.mdgf.out_model, g, g}, rng);
        const Tensor z = random_tensor({cfg.mdgf.out_model, g, g}, rng);
        const int t = cfg.tgid.T / 2;
        auto loss = [&](ad::Tape& tape) {
            ad::Var eps = model.tgid().denoise(tape, store, tape.constant(x_t), t, tape.constant(fv), tape.constant(fi),
                                               tape.constant(l1));
            return ad::mean(ad::square(ad::sub(eps, tape.constant(z))));
        };
        return grad_check_store(module, store, loss, h, {"tgid."});
    }
    if (module == "pipeline") {
        Tensor adjacency;
        {
            ad::Tape tape;
            adjacency = model.fuse(tape, templ, search).adjacency;
        }
        auto loss = [&](ad::Tape& tape) {
            FusionPass pass = model.fuse(tape, templ, search, &adjacency);
            return stage1_loss(ad::scale(pass.head.corners, 1.0 / side), target, LossWeights{}).total;
        };
        return grad_check_store(module, store, loss, h, {"encoder.", "mdgf.", "head."});
    }
    throw std::invalid_argument("grad_check: unknown module " + module);
}

}  // namespace gdstrack
