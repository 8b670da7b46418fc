#include "conslearn/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "conslearn/ema.hpp"
#include "conslearn/losses.hpp"
#include "conslearn/optim.hpp"

namespace conslearn::train {

using diff::Tape;
using diff::Var;

namespace {

enum Stream : std::uint64_t { kInit, kSampler, kAugment, kStudentView1, kStudentView2, kTeacher, kReset, kCluster };

void check_open(const std::ofstream& out, const std::filesystem::path& path) {
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<int> dense_identity_labels(std::span<const int> identities) {
    std::map<int, int> index;
    for (int id : identities) index.emplace(id, 0);
    int next = 0;
    for (auto& [id, i] : index) i = next++;
    std::vector<int> out;
    for (int id : identities) out.push_back(index.at(id));
    return out;
}

std::size_t count_classes(std::span<const int> labels) {
    int top = -1;
    for (int l : labels) top = std::max(top, l);
    return static_cast<std::size_t>(top + 1);
}

std::string epoch_file(const char* stem, std::size_t epoch, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%02zu.%s", stem, epoch, ext);
    return buf;
}

}  // namespace

void write_iterations_csv(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    check_open(out, path);
    out.precision(17);
    out << "epoch,iteration,ce,st,co,total,label_losses\n";
    for (const auto& r : log.iterations) {
        out << r.epoch << ',' << r.iteration << ',' << r.ce << ',' << r.st << ',' << r.co << ',' << r.total << ','
            << (r.label_losses ? 1 : 0) << '\n';
    }
}

void write_epochs_csv(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    check_open(out, path);
    out.precision(17);
    out << "epoch,clusters,noise_fraction,pairwise_f1,mAP,cmc1,cmc5,cmc10\n";
    for (const auto& r : log.epochs) {
        out << r.epoch << ',' << r.clusters << ',' << r.noise_fraction << ',' << r.pairwise_f1 << ',';
        if (r.evaluated) out << r.mAP << ',' << r.cmc1 << ',' << r.cmc5 << ',' << r.cmc10 << '\n';
        else out << ",,,\n";
    }
}

Array teacher_targets(const Array& x, const model::ModelState& state, const ddl::DdlConfig* ddl, Rng* rng) {
    Tape tape;
    const model::BoundParams params = model::bind(tape, state.teacher, false);
    model::EncodeOptions opts;
    opts.ddl = ddl;
    opts.rng = rng;
    const Var h = model::encode(tape.constant(x), params, state.config, opts);
    return diff::softmax(model::project(h, params, state.config)).value();
}

StepLosses step_losses(Tape& tape, const model::BoundParams& student, const model::ModelState& state,
                       const TrainConfig& cfg, Var x, std::span<const int> lb1, std::span<const int> lb2,
                       bool label_losses, const model::EncodeOptions& view1, const model::EncodeOptions& view2,
                       const Array& tv1, const Array& tv2) {
    const bool ddl_on = !cfg.ddl.active_stages.empty();
    const Var h1 = model::encode(x, student, state.config, view1);
    const Var h2 = ddl_on ? model::encode(x, student, state.config, view2) : h1;
    const Var zero = tape.constant(Array::scalar(0.0));
    StepLosses out{zero, zero, zero, zero};
    if (label_losses && cfg.loss.lambda > 0.0) {
        const Var p1 = diff::softmax(model::classify(h1, student, state.config));
        const Var p2 = ddl_on ? diff::softmax(model::classify(h2, student, state.config)) : p1;
        out.ce = losses::cluster_ce_loss(p1, p2, lb1, lb2).loss;
    }
    if (label_losses && cfg.loss.xi > 0.0) {
        out.st = losses::softmax_triplet_loss(losses::hardest_pairs(h1, lb1), losses::hardest_pairs(h2, lb2),
                                              cfg.loss.triplet_numerator);
    }
    if (cfg.loss.eta > 0.0) {
        const Var v1 = diff::softmax(model::project(h1, student, state.config));
        const Var v2 = ddl_on ? diff::softmax(model::project(h2, student, state.config)) : v1;
        out.co = losses::consistency_loss(v1, v2, tv1, tv2);
    }
    out.total = losses::total_loss(cfg.loss, out.ce, out.st, out.co);
    return out;
}

clustering::PseudoLabelAssignment assign_epoch_labels(const Array& images, const model::ModelState& state,
                                                      const clustering::DbscanConfig& cfg, const ddl::DdlConfig* ddl,
                                                      Rng* rng) {
    Array emb;
    if (ddl && rng) {
        const std::size_t n = images.dim(0), chunk = 32;
        emb = Array({n, state.config.embed_dim});
        for (std::size_t b = 0; b < n; b += chunk) {
            const Array h = model::encode(images.slice_rows(b, std::min(n, b + chunk)), state, ddl, rng, true);
            std::copy(h.values().begin(), h.values().end(), emb.data() + b * state.config.embed_dim);
        }
    } else {
        emb = model::embed_all(images, state, true);
    }
    return clustering::dbscan(emb, cfg);
}

data::Dataset make_dataset(const TrainConfig& cfg) {
    if (cfg.data_dir) return data::load_dataset(*cfg.data_dir, cfg.synth.image_shape);
    return data::generate_synthetic(cfg.synth);
}

TrainResult train(const TrainConfig& cfg, const data::Dataset& ds, const TrainOptions& opts) {
    cfg.validate();
    auto say = [&](const std::string& msg) {
        if (opts.progress) opts.progress(msg);
    };
    const auto train_idx = ds.indices(data::Split::train);
    if (train_idx.size() < 2) throw ContractError("train: the training split needs at least two images");
    if (ds.image_shape[0] != cfg.encoder.in_channels) {
        throw ConfigError("dataset has " + std::to_string(ds.image_shape[0]) + " channels, encoder expects " +
                          std::to_string(cfg.encoder.in_channels));
    }
    const Array train_images = ds.images(train_idx);
    const std::vector<int> train_ids = ds.identities(train_idx);
    const bool can_eval = !ds.indices(data::Split::query).empty() && !ds.indices(data::Split::gallery).empty();

    Rng init_rng(Rng::derive(cfg.seed, kInit)), sampler(Rng::derive(cfg.seed, kSampler)),
        aug_rng(Rng::derive(cfg.seed, kAugment)), view1_rng(Rng::derive(cfg.seed, kStudentView1)),
        view2_rng(Rng::derive(cfg.seed, kStudentView2)), teacher_rng(Rng::derive(cfg.seed, kTeacher)),
        reset_rng(Rng::derive(cfg.seed, kReset)), cluster_rng(Rng::derive(cfg.seed, kCluster));

    TrainResult result;
    model::ModelState& state = result.state;
    state = model::init_model(cfg.encoder, init_rng);
    if (cfg.init_checkpoint) {
        model::ModelState warm = model::load_checkpoint(*cfg.init_checkpoint);
        model::EncoderConfig a = warm.config, b = cfg.encoder;
        a.num_classes = b.num_classes = 1;
        if (!(a == b)) throw ConfigError("init checkpoint architecture does not match the encoder configuration");
        for (std::size_t i = 0; i < state.student.names.size(); ++i) {
            if (model::is_classifier_param(state.student.names[i])) continue;
            state.student.values[i] = warm.student.get(state.student.names[i]);
        }
        state.teacher = state.student;
        say("warm start from " + cfg.init_checkpoint->string());
    }

    optim::Adam adam(cfg.adam);
    ema::TeacherAverager averager(cfg.ema, state.student);
    const bool ddl_on = !cfg.ddl.active_stages.empty();
    const std::vector<int> truth_labels = dense_identity_labels(train_ids);
    if (opts.run_dir) std::filesystem::create_directories(*opts.run_dir);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> labels1, labels2;
        if (cfg.supervised) {
            labels1 = labels2 = truth_labels;
        } else if (cfg.shared_labels) {
            labels1 = labels2 = assign_epoch_labels(train_images, state, cfg.cluster).labels;
        } else {
            labels1 = assign_epoch_labels(train_images, state, cfg.cluster, &cfg.ddl, &cluster_rng).labels;
            labels2 = assign_epoch_labels(train_images, state, cfg.cluster, &cfg.ddl, &cluster_rng).labels;
        }
        if (opts.on_labels) opts.on_labels(epoch, labels1, labels2);
        const std::size_t m = std::max(count_classes(labels1), count_classes(labels2));
        const bool label_losses = m > 0;
        if (label_losses && m != state.config.num_classes) {
            model::reset_classifier(state, m, reset_rng);
            adam.reset_classifier(state.student);
            averager.on_classifier_reset(state);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.clusters = count_classes(labels1);
        const eval::ClusterQuality quality = eval::cluster_quality(labels1, train_ids);
        rec.noise_fraction = quality.noise_fraction;
        rec.pairwise_f1 = quality.f1;
        if (opts.run_dir) {
            clustering::PseudoLabelAssignment dump{labels1, rec.clusters, static_cast<int>(epoch)};
            clustering::write_assignment_csv(dump, *opts.run_dir / epoch_file("labels_epoch", epoch, "csv"));
        }
        if (!label_losses) say("epoch " + std::to_string(epoch) + ": every image is noise, training on consistency only");

        for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
            std::vector<std::size_t> batch;
            if (label_losses) {
                batch = data::pk_sample(labels1, cfg.p, cfg.k, sampler).indices;
            } else {
                for (std::size_t i = 0; i < cfg.p * cfg.k; ++i) batch.push_back(sampler.uniform_int(train_idx.size()));
            }
            const Shape& img = ds.samples[train_idx[0]].image.shape();
            const std::size_t plane = shape_product(img);
            Array x({batch.size(), img[0], img[1], img[2]});
            std::vector<int> lb1, lb2;
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const Array& src = ds.samples[train_idx[batch[b]]].image;
                const Array view = cfg.augment ? data::augment(src, aug_rng, cfg.augment_cfg) : src;
                std::copy(view.values().begin(), view.values().end(), x.data() + b * plane);
                lb1.push_back(label_losses ? labels1[batch[b]] : losses::kNoise);
                lb2.push_back(label_losses ? labels2[batch[b]] : losses::kNoise);
            }
            if (opts.on_batch) opts.on_batch(batch, lb1, lb2);

            Array tv1, tv2;
            if (cfg.loss.eta > 0.0) {
                tv1 = teacher_targets(x, state, &cfg.ddl, &teacher_rng);
                tv2 = ddl_on ? teacher_targets(x, state, &cfg.ddl, &teacher_rng) : tv1;
            }
            Tape tape;
            const model::BoundParams student = model::bind(tape, state.student, true);
            model::EncodeOptions o1, o2;
            o1.ddl = o2.ddl = &cfg.ddl;
            o1.rng = &view1_rng;
            o2.rng = &view2_rng;
            const StepLosses step =
                step_losses(tape, student, state, cfg, tape.constant(x), lb1, lb2, label_losses, o1, o2, tv1, tv2);
            const Var& total = step.total;

            IterationRecord r;
            r.epoch = epoch;
            r.iteration = state.iteration;
            r.label_losses = label_losses;
            r.ce = step.ce.value()[0];
            r.st = step.st.value()[0];
            r.co = step.co.value()[0];
            r.total = total.value()[0];
            if (total.requires_grad()) {
                tape.backward(total);
                std::vector<Array> grads;
                grads.reserve(student.vars.size());
                for (const Var& v : student.vars) grads.push_back(tape.grad(v));
                adam.step(state.student, grads);
                averager.update(state);
            }
            ++state.iteration;
            result.log.iterations.push_back(r);
        }

        const bool last = epoch + 1 == cfg.epochs;
        if (can_eval && (last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0))) {
            const eval::EvalResult ev = eval::evaluate_model(state, ds, cfg.eval_teacher);
            rec.evaluated = true;
            rec.mAP = ev.mAP;
            rec.cmc1 = ev.cmc[0];
            rec.cmc5 = ev.cmc[1];
            rec.cmc10 = ev.cmc[2];
            if (last) result.final_eval = ev;
        }
        result.log.epochs.push_back(rec);
        char line[160];
        std::snprintf(line, sizeof(line), "epoch %zu: clusters=%zu noise=%.3f f1=%.3f loss=%.4f%s", epoch, rec.clusters,
                      rec.noise_fraction, rec.pairwise_f1,
                      result.log.iterations.empty() ? 0.0 : result.log.iterations.back().total,
                      rec.evaluated ? (" mAP=" + std::to_string(rec.mAP)).c_str() : "");
        say(line);
        if (opts.on_epoch) opts.on_epoch(epoch, state);
    }

    if (opts.run_dir) {
        const auto& dir = *opts.run_dir;
        write_iterations_csv(result.log, dir / "iterations.csv");
        write_epochs_csv(result.log, dir / "epochs.csv");
        model::save_checkpoint(state, dir / "model.ckpt");
        std::ofstream(dir / "config.txt") << to_text(cfg);
        if (result.final_eval) {
            eval::write_metrics_json(*result.final_eval, dir / "metrics.json");
            eval::write_per_query_csv(*result.final_eval, dir / "per_query.csv");
        }
    }
    return result;
}

}  // namespace conslearn::train
