#pragma once

// Dynamic dropblock layer: zeroes one random rectangle per image whose size is a
// fixed fraction of the feature map it is applied to. Active only in training.

#include <cstddef>
#include <set>
#include <vector>

#include "conslearn/array.hpp"
#include "conslearn/rng.hpp"
#include "conslearn/tape.hpp"

namespace conslearn::ddl {

inline constexpr std::size_t kNumStages = 5;

struct DdlConfig {
    double alpha = 0.4;  ///< erased height / map height
    double beta = 0.3;   ///< erased width / map width
    std::set<std::size_t> active_stages{0, 1, 2};
    bool train_mode = true;

    /// Throws ConfigError unless 0 < alpha, beta < 1 and every stage is in [0, 5).
    void validate() const;
    [[nodiscard]] bool active_at(std::size_t stage) const { return train_mode && active_stages.contains(stage); }
};

struct Rect {
    std::size_t top = 0, left = 0, height = 0, width = 0;
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct DropMask {
    std::size_t height = 0;
    std::size_t width = 0;
    Rect rect;
    Array values;  ///< [height × width], 0 inside rect and 1 elsewhere

    [[nodiscard]] double zero_fraction() const;
};

/// Erased rectangle size for an h×w map: max(1, round-half-up(ratio·extent)).
/// Throws ConfigError when the rectangle would span the whole map along an axis.
Rect rect_size(std::size_t h, std::size_t w, const DdlConfig& cfg);

/// Number of valid top-left corners for the rectangle on an h×w map.
std::size_t num_positions(std::size_t h, std::size_t w, const DdlConfig& cfg);

DropMask make_mask(std::size_t h, std::size_t w, const Rect& rect);

/// Draws a mask with its corner uniform over all valid positions.
DropMask generate_mask(std::size_t h, std::size_t w, const DdlConfig& cfg, Rng& rng);

/// Stacks one fresh mask per image into [N×H×W].
Array draw_batch_masks(std::size_t n, std::size_t h, std::size_t w, const DdlConfig& cfg, Rng& rng);

/// Applies dropblock to feature[N×C×H×W] with one fresh mask per image,
/// broadcast over channels. In eval mode the input Var is returned unchanged.
diff::Var apply(diff::Var feature, const DdlConfig& cfg, Rng& rng);
/// Replays previously drawn [N×H×W] masks.
diff::Var apply_with_mask(diff::Var feature, const Array& batch_masks);

}  // namespace conslearn::ddl
