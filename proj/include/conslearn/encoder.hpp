#pragma once

// Stage-structured convolutional encoder with dropblock insertion points before
// each of its five stages, a projection head feeding the consistency objective
// and a linear classifier over pseudo-labels.
//
// Stage k: conv3x3 (same) + bias -> relu -> [k >= 1: conv2x2 stride 2 (valid) + bias].
// Stage 0 keeps full resolution so that every stage input is at least 2x2 on
// 32x16 images: stage inputs are 32x16, 32x16, 16x8, 8x4 and 4x2.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "conslearn/array.hpp"
#include "conslearn/ddl.hpp"
#include "conslearn/rng.hpp"
#include "conslearn/tape.hpp"

namespace conslearn::model {

enum class ProjHead { identity, linear, shared_linear };

std::string to_string(ProjHead head);
ProjHead parse_proj_head(const std::string& text);

struct EncoderConfig {
    std::size_t in_channels = 3;
    std::array<std::size_t, ddl::kNumStages> stage_channels{8, 16, 32, 64, 64};
    std::size_t embed_dim = 64;  ///< must equal the last stage's channel count
    std::size_t proj_dim = 64;
    ProjHead proj_head = ProjHead::linear;
    std::size_t num_classes = 1;

    void validate() const;
    /// Width of the classifier input: embed_dim, or proj_dim when f and g share weights.
    [[nodiscard]] std::size_t classifier_in() const {
        return proj_head == ProjHead::shared_linear ? proj_dim : embed_dim;
    }
    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Ordered named parameter arrays.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Array> values;

    [[nodiscard]] std::size_t index_of(const std::string& name) const;
    [[nodiscard]] const Array& get(const std::string& name) const { return values[index_of(name)]; }
    Array& get(const std::string& name) { return values[index_of(name)]; }
    [[nodiscard]] bool contains(const std::string& name) const;
    [[nodiscard]] std::size_t scalar_count() const;
    [[nodiscard]] bool same_shapes(const ParamSet& other) const;

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Student parameters, their temporal average (the teacher) and the step counter.
struct ModelState {
    EncoderConfig config;
    ParamSet student;
    ParamSet teacher;
    std::uint64_t iteration = 0;

    friend bool operator==(const ModelState&, const ModelState&) = default;
};

inline bool is_classifier_param(const std::string& name) { return name.rfind("cls.", 0) == 0; }

/// Fresh model; the teacher starts as an exact copy of the student.
ModelState init_model(const EncoderConfig& cfg, Rng& rng);

/// Parameters placed on a tape, either as differentiable leaves or constants.
struct BoundParams {
    const ParamSet* set = nullptr;
    std::vector<diff::Var> vars;

    [[nodiscard]] diff::Var operator()(const std::string& name) const { return vars[set->index_of(name)]; }
};

BoundParams bind(diff::Tape& tape, const ParamSet& params, bool trainable);

/// Dropblock masks drawn during one encode, one entry per stage (empty when inactive).
struct MaskRecord {
    std::array<Array, ddl::kNumStages> stages;
};

struct EncodeOptions {
    const ddl::DdlConfig* ddl = nullptr;  ///< null or eval mode: no dropblock
    Rng* rng = nullptr;
    const MaskRecord* replay = nullptr;   ///< reuse masks instead of drawing
    MaskRecord* record = nullptr;         ///< store drawn masks
};

/// h = pooled embedding [N×D] of images x [N×C×H×W].
diff::Var encode(diff::Var x, const BoundParams& params, const EncoderConfig& cfg, const EncodeOptions& opts = {});
/// u = g(h), the consistency-space projection [N×Ω].
diff::Var project(diff::Var h, const BoundParams& params, const EncoderConfig& cfg);
/// f(h): the classifier input. h itself, except under shared_linear where f = g.
diff::Var classifier_input(diff::Var h, const BoundParams& params, const EncoderConfig& cfg);
/// z = class scores [N×M].
diff::Var classify(diff::Var h, const BoundParams& params, const EncoderConfig& cfg);

/// Gradient-free embedding of a batch of images with either parameter set.
Array encode(const Array& images, const ModelState& state, const ddl::DdlConfig* ddl_cfg, Rng* rng, bool use_teacher);
/// Embeds many images in chunks with dropblock off.
Array embed_all(const Array& images, const ModelState& state, bool use_teacher, std::size_t chunk = 32);

/// Re-initialises the classifier for `new_classes` outputs in both parameter
/// sets (teacher copies the student's new classifier). Other parameters are untouched.
void reset_classifier(ModelState& state, std::size_t new_classes, Rng& rng);

// ---- checkpoints ----------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace conslearn::model
