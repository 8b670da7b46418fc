#pragma once

// Epoch loop: cluster teacher embeddings into pseudo-labels, then per iteration
// run one PK batch through the student twice and the teacher twice, combine
// the losses, take an Adam step and update the teacher by momentum averaging.

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conslearn/clustering.hpp"
#include "conslearn/config.hpp"
#include "conslearn/data.hpp"
#include "conslearn/eval.hpp"

namespace conslearn::train {

struct IterationRecord {
    std::size_t epoch = 0;
    std::size_t iteration = 0;  ///< global, 0-based
    double ce = 0.0;
    double st = 0.0;
    double co = 0.0;
    double total = 0.0;
    bool label_losses = false;  ///< false when the epoch had no clusters

    friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t clusters = 0;
    double noise_fraction = 0.0;
    double pairwise_f1 = 0.0;  ///< against identities, diagnostic only
    bool evaluated = false;
    double mAP = 0.0;
    double cmc1 = 0.0, cmc5 = 0.0, cmc10 = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainLog {
    std::vector<IterationRecord> iterations;
    std::vector<EpochRecord> epochs;

    friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

void write_iterations_csv(const TrainLog& log, const std::filesystem::path& path);
void write_epochs_csv(const TrainLog& log, const std::filesystem::path& path);

struct TrainOptions {
    std::optional<std::filesystem::path> run_dir;  ///< logs, label dumps and checkpoint go here
    std::function<void(const std::string&)> progress;
    /// Receives the pseudo-labels of every epoch (after clustering).
    std::function<void(std::size_t epoch, const std::vector<int>& view1, const std::vector<int>& view2)> on_labels;
    /// Receives the labels fed to the label-dependent losses of every iteration.
    std::function<void(const std::vector<std::size_t>& batch, const std::vector<int>& labels1,
                       const std::vector<int>& labels2)>
        on_batch;
    /// Called after every epoch with the current model.
    std::function<void(std::size_t epoch, const model::ModelState& state)> on_epoch;
};

struct TrainResult {
    model::ModelState state;
    TrainLog log;
    std::optional<eval::EvalResult> final_eval;
};

struct StepLosses {
    diff::Var ce, st, co, total;
};

/// Consistency targets softmax(g(h)) under the teacher parameters, no gradient.
Array teacher_targets(const Array& x, const model::ModelState& state, const ddl::DdlConfig* ddl, Rng* rng);

/// Loss terms of one iteration on the image batch `x`. The two student passes
/// use `view1` and `view2` (dropblock streams or replayed masks); `tv1`/`tv2`
/// are the teacher targets, unused when the consistency weight is zero.
/// Without `label_losses` only the consistency term is formed.
StepLosses step_losses(diff::Tape& tape, const model::BoundParams& student, const model::ModelState& state,
                       const TrainConfig& cfg, diff::Var x, std::span<const int> lb1, std::span<const int> lb2,
                       bool label_losses, const model::EncodeOptions& view1, const model::EncodeOptions& view2,
                       const Array& tv1, const Array& tv2);

/// Pseudo-labels for `images` from teacher embeddings. Dropblock is applied
/// only when `ddl` and `rng` are given (per-view clustering).
clustering::PseudoLabelAssignment assign_epoch_labels(const Array& images, const model::ModelState& state,
                                                      const clustering::DbscanConfig& cfg,
                                                      const ddl::DdlConfig* ddl = nullptr, Rng* rng = nullptr);

/// Full training run on the train split of `ds`; evaluates on query/gallery
/// when both are present. Deterministic for a fixed configuration.
TrainResult train(const TrainConfig& cfg, const data::Dataset& ds, const TrainOptions& opts = {});

/// Dataset named by the configuration: loaded from data.dir or generated.
data::Dataset make_dataset(const TrainConfig& cfg);

}  // namespace conslearn::train
