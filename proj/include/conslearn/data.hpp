#pragma once

// Re-identification samples: a synthetic generator with identity prototypes
// and per-camera appearance shifts, Market-1501 style folder ingestion, the
// dataset manifest, PK batch sampling and train-time augmentation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conslearn/array.hpp"
#include "conslearn/rng.hpp"

namespace conslearn::data {

enum class Split { train, query, gallery };

std::string to_string(Split s);
Split parse_split(const std::string& text);

using ImageShape = std::array<std::size_t, 3>;  ///< channels, height, width

struct ReidSample {
    Array image;  ///< [C×H×W], values in [0,1]
    int identity = 0;
    int camera = 0;
    Split split = Split::train;
    std::string file;  ///< relative path inside a dataset directory, may be empty
};

struct Dataset {
    ImageShape image_shape{3, 32, 16};
    std::vector<ReidSample> samples;

    [[nodiscard]] std::vector<std::size_t> indices(Split s) const;
    /// Stacked images [N×C×H×W] of the given sample indices.
    [[nodiscard]] Array images(std::span<const std::size_t> idx) const;
    [[nodiscard]] std::vector<int> identities(std::span<const std::size_t> idx) const;
    [[nodiscard]] std::vector<int> cameras(std::span<const std::size_t> idx) const;
};

struct SynthConfig {
    std::size_t num_identities = 16;       ///< identities in the training split
    std::size_t num_test_identities = 16;  ///< disjoint identities split into query/gallery
    std::size_t images_per_identity = 12;
    std::size_t num_cameras = 3;
    ImageShape image_shape{3, 32, 16};
    double identity_noise = 0.05;        ///< per-pixel noise standard deviation
    double camera_shift_strength = 0.3;  ///< magnitude of per-camera colour gain/offset
    double occlusion_prob = 0.0;         ///< chance a sample carries a random occluding block
    std::uint64_t seed = 0;

    void validate() const;
};

/// Deterministic per seed. Camera of image j of an identity is j mod num_cameras.
/// For test identities, query holds the images from camera (identity mod cameras)
/// and gallery the images from every other camera.
Dataset generate_synthetic(const SynthConfig& cfg);

struct ParsedName {
    int identity = 0;
    int camera = 0;
};

/// Parses `<identity>_c<camera>...` (Market-1501 naming, e.g. 0002_c1s1_000451_03.jpg).
std::optional<ParsedName> parse_market_name(const std::string& filename);

struct LoadReport {
    std::vector<std::string> rejected;  ///< "<file>: <reason>"
};

/// Loads every image in `dir` (non-recursive), resized bilinearly to `shape`.
/// Throws for a missing or empty directory; unparsable files are skipped and
/// listed in `report`.
Dataset load_folder(const std::filesystem::path& dir, ImageShape shape, Split split, LoadReport* report = nullptr);

/// Loads a dataset directory: via manifest.json when present, otherwise from
/// Market-style subfolders bounding_box_train/, query/ and bounding_box_test/.
Dataset load_dataset(const std::filesystem::path& dir, ImageShape shape, LoadReport* report = nullptr);

/// Writes one 16-bit PNG per sample under train/, query/ and gallery/ plus manifest.json.
void save_dataset(Dataset& ds, const std::filesystem::path& dir);

struct ManifestEntry {
    std::string file;
    int identity = 0;
    int camera = 0;
    Split split = Split::train;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
    ImageShape image_shape{3, 32, 16};
    std::vector<ManifestEntry> entries;
    friend bool operator==(const Manifest&, const Manifest&) = default;
};

Manifest make_manifest(const Dataset& ds);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

struct PkBatch {
    std::vector<std::size_t> indices;  ///< positions into the label span
    std::size_t classes_used = 0;
    bool fell_back = false;  ///< fewer than P usable classes were available
};

/// P distinct classes × K members each. Noise (negative labels) is never drawn.
/// A class with fewer than K members is sampled with replacement.
PkBatch pk_sample(std::span<const int> labels, std::size_t p, std::size_t k, Rng& rng);

struct AugmentConfig {
    double flip_prob = 0.5;
    std::size_t pad = 2;  ///< zero padding before the random crop
};

/// Random horizontal flip followed by pad-and-crop; shape and [0,1] range preserved.
Array augment(const Array& image, Rng& rng, const AugmentConfig& cfg = {});
/// Deterministic primitives behind augment.
Array flip_horizontal(const Array& image);
Array pad_crop(const Array& image, std::size_t pad, std::size_t top, std::size_t left);

}  // namespace conslearn::data
