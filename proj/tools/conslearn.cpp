// Command-line front end: gen-data, train, eval, ablate, report.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "conslearn/ablation.hpp"
#include "conslearn/config.hpp"
#include "conslearn/data.hpp"
#include "conslearn/encoder.hpp"
#include "conslearn/eval.hpp"
#include "conslearn/reporting.hpp"
#include "conslearn/trainer.hpp"

namespace fs = std::filesystem;
using namespace conslearn;

namespace {

void print_line(const std::string& s) { std::cout << s << std::endl; }

TrainConfig config_from(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
    TrainConfig cfg = file ? load_config(*file) : TrainConfig{};
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void print_eval(const eval::EvalResult& r) {
    std::printf("mAP %.2f  top-1 %.2f  top-5 %.2f  top-10 %.2f  (%zu queries, %zu excluded)\n", 100 * r.mAP,
                100 * r.cmc_at(1), 100 * r.cmc_at(5), 100 * r.cmc_at(10), r.num_queries, r.excluded.size());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised person re-identification with pseudo-label clustering and a temporal-average teacher"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
    data::SynthConfig synth;
    fs::path gen_out;
    std::size_t gen_height = synth.image_shape[1], gen_width = synth.image_shape[2];
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--identities", synth.num_identities, "Training identities");
    gen->add_option("--test-identities", synth.num_test_identities, "Query/gallery identities");
    gen->add_option("--images", synth.images_per_identity, "Images per identity");
    gen->add_option("--cameras", synth.num_cameras, "Cameras");
    gen->add_option("--height", gen_height, "Image height");
    gen->add_option("--width", gen_width, "Image width");
    gen->add_option("--noise", synth.identity_noise, "Per-pixel noise standard deviation");
    gen->add_option("--camera-shift", synth.camera_shift_strength, "Per-camera colour shift strength");
    gen->add_option("--occlusion", synth.occlusion_prob, "Occlusion probability");
    gen->add_option("--seed", synth.seed, "Generator seed");

    // train
    auto* tr = app.add_subcommand("train", "Train a model");
    std::optional<fs::path> tr_config, tr_init;
    fs::path tr_out = "run";
    std::vector<std::string> tr_set;
    bool tr_quiet = false;
    tr->add_option("--config", tr_config, "Configuration file (key = value)")->check(CLI::ExistingFile);
    tr->add_option("--init", tr_init, "Warm-start checkpoint")->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out, "Run directory for logs and the checkpoint");
    tr->add_option("--set", tr_set, "Override a configuration key (key=value), repeatable");
    tr->add_flag("--quiet", tr_quiet, "No progress output");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    fs::path ev_ckpt;
    std::optional<fs::path> ev_data, ev_config, ev_out;
    bool ev_student = false;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", ev_data, "Dataset directory (default: the configured dataset)")
        ->check(CLI::ExistingDirectory);
    ev->add_option("--config", ev_config, "Configuration file for the image shape or synthetic data")
        ->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out, "Directory for metrics.json and per_query.csv");
    ev->add_flag("--student", ev_student, "Evaluate the student instead of the teacher");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Run an ablation suite over seeds");
    std::string ab_suite;
    std::optional<fs::path> ab_config;
    std::vector<std::uint64_t> ab_seeds{1};
    std::vector<std::string> ab_set;
    fs::path ab_out = "ablation";
    bool ab_keep = false;
    ab->add_option("--suite", ab_suite, "Suite name")->required();
    ab->add_option("--config", ab_config, "Base configuration file")->check(CLI::ExistingFile);
    ab->add_option("--seeds", ab_seeds, "Seeds (train.seed) per variant");
    ab->add_option("--set", ab_set, "Override a base configuration key (key=value), repeatable");
    ab->add_option("--out", ab_out, "Output directory");
    ab->add_flag("--keep-runs", ab_keep, "Keep the logs of every run under <out>/runs");

    // report
    auto* rep = app.add_subcommand("report", "Render summaries and plots from run directories and ablation CSVs");
    std::vector<fs::path> rep_in;
    fs::path rep_out;
    std::vector<std::string> rep_formats{"csv", "txt", "svg"};
    rep->add_option("--in", rep_in, "Run directories and ablation CSV files")->required();
    rep->add_option("--out", rep_out, "Output directory")->required();
    rep->add_option("--formats", rep_formats, "Any of csv, txt, svg")
        ->check(CLI::IsMember({"csv", "txt", "svg"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            synth.image_shape = {synth.image_shape[0], gen_height, gen_width};
            synth.validate();
            data::Dataset ds = data::generate_synthetic(synth);
            data::save_dataset(ds, gen_out);
            std::printf("wrote %zu images to %s\n", ds.samples.size(), gen_out.string().c_str());
        } else if (tr->parsed()) {
            TrainConfig cfg = config_from(tr_config, tr_set);
            if (tr_init) cfg.init_checkpoint = *tr_init;
            const data::Dataset ds = train::make_dataset(cfg);
            train::TrainOptions opts;
            opts.run_dir = tr_out;
            if (!tr_quiet) opts.progress = print_line;
            const train::TrainResult r = train::train(cfg, ds, opts);
            if (r.final_eval) print_eval(*r.final_eval);
            std::printf("run directory: %s\n", tr_out.string().c_str());
        } else if (ev->parsed()) {
            const TrainConfig cfg = config_from(ev_config, {});
            const model::ModelState state = model::load_checkpoint(ev_ckpt);
            const data::Dataset ds =
                ev_data ? data::load_dataset(*ev_data, cfg.synth.image_shape) : train::make_dataset(cfg);
            const eval::EvalResult r = eval::evaluate_model(state, ds, !ev_student);
            print_eval(r);
            if (ev_out) {
                fs::create_directories(*ev_out);
                eval::write_metrics_json(r, *ev_out / "metrics.json");
                eval::write_per_query_csv(r, *ev_out / "per_query.csv");
            }
        } else if (ab->parsed()) {
            const TrainConfig base = config_from(ab_config, ab_set);
            const auto variants = ablation::suite(ab_suite);
            const data::Dataset ds = train::make_dataset(base);
            ablation::RunOptions opts;
            opts.seeds = ab_seeds;
            opts.progress = print_line;
            if (ab_keep) opts.run_root = ab_out / "runs";
            fs::create_directories(ab_out);
            const ablation::Report r = ablation::run(ab_suite, variants, base, ds, opts);
            ablation::write_csv(r, ab_out / (ab_suite + ".csv"));
            std::cout << ablation::render_text(r);
        } else if (rep->parsed()) {
            reporting::ReportSpec spec{rep_in, rep_out, {}};
            for (const auto& f : rep_formats) {
                spec.formats.insert(f == "csv" ? reporting::Format::csv
                                    : f == "txt" ? reporting::Format::txt
                                                 : reporting::Format::svg);
            }
            for (const auto& f : reporting::render(spec)) print_line(f.string());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
