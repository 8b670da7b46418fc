#pragma once

// Complete experiment configuration and its flat `key = value` text form.
// Lines starting with '#' are comments; unknown keys are errors.

#include <filesystem>
#include <optional>
#include <string>

#include "conslearn/clustering.hpp"
#include "conslearn/data.hpp"
#include "conslearn/ddl.hpp"
#include "conslearn/ema.hpp"
#include "conslearn/encoder.hpp"
#include "conslearn/losses.hpp"
#include "conslearn/optim.hpp"

namespace conslearn {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t iters_per_epoch = 30;
    std::size_t p = 4;  ///< pseudo-classes per batch
    std::size_t k = 4;  ///< images per pseudo-class
    std::uint64_t seed = 1;
    bool supervised = false;     ///< identity labels instead of clustering, source-domain pretraining
    bool augment = true;
    bool shared_labels = true;   ///< one clustering for both views; false clusters each view separately
    std::size_t eval_every = 0;  ///< evaluate every n epochs (0: only after the last epoch)
    bool eval_teacher = true;    ///< which parameter set is evaluated
    std::optional<std::filesystem::path> init_checkpoint;

    optim::AdamConfig adam;
    ddl::DdlConfig ddl;
    ema::EmaConfig ema;
    losses::LossWeights loss;
    clustering::DbscanConfig cluster{.eps = 0.6, .min_pts = 4, .normalize = true, .eps_quantile = 0.04};
    model::EncoderConfig encoder;
    data::AugmentConfig augment_cfg;

    /// Dataset: a directory (manifest or Market layout) or, when empty, the synthetic generator.
    std::optional<std::filesystem::path> data_dir;
    data::SynthConfig synth;

    void validate() const;
};

/// Parses the text form on top of the defaults.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
/// Applies one `key = value` setting.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Every key with its current value; parse_config(to_text(c)) reproduces c.
std::string to_text(const TrainConfig& cfg);

}  // namespace conslearn
