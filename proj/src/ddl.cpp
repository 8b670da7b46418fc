#include "conslearn/ddl.hpp"

#include <cmath>
#include <string>

namespace conslearn::ddl {

void DdlConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("ddl.alpha must lie in (0,1), got " + std::to_string(alpha));
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("ddl.beta must lie in (0,1), got " + std::to_string(beta));
    for (std::size_t s : active_stages) {
        if (s >= kNumStages) throw ConfigError("ddl.stages entries must be in 0..4, got " + std::to_string(s));
    }
}

namespace {

std::size_t erase_extent(double ratio, std::size_t extent) {
    const auto r = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(extent) + 0.5));
    return r < 1 ? 1 : r;
}

}  // namespace

Rect rect_size(std::size_t h, std::size_t w, const DdlConfig& cfg) {
    cfg.validate();
    if (h < 1 || w < 1) throw DimensionError("ddl: empty feature map");
    Rect r;
    r.height = erase_extent(cfg.alpha, h);
    r.width = erase_extent(cfg.beta, w);
    if (r.height >= h || r.width >= w) {
        throw ConfigError("ddl: erase region " + std::to_string(r.height) + "x" + std::to_string(r.width) +
                          " covers the full extent of a " + std::to_string(h) + "x" + std::to_string(w) + " map");
    }
    return r;
}

std::size_t num_positions(std::size_t h, std::size_t w, const DdlConfig& cfg) {
    const Rect r = rect_size(h, w, cfg);
    return (h - r.height + 1) * (w - r.width + 1);
}

DropMask make_mask(std::size_t h, std::size_t w, const Rect& rect) {
    if (rect.top + rect.height > h || rect.left + rect.width > w) throw DimensionError("ddl: rectangle outside map");
    DropMask m;
    m.height = h;
    m.width = w;
    m.rect = rect;
    m.values = Array({h, w}, 1.0);
    for (std::size_t y = rect.top; y < rect.top + rect.height; ++y)
        for (std::size_t x = rect.left; x < rect.left + rect.width; ++x) m.values.at(y, x) = 0.0;
    return m;
}

double DropMask::zero_fraction() const {
    std::size_t zeros = 0;
    for (double v : values.values()) zeros += v == 0.0 ? 1 : 0;
    return static_cast<double>(zeros) / static_cast<double>(values.size());
}

DropMask generate_mask(std::size_t h, std::size_t w, const DdlConfig& cfg, Rng& rng) {
    Rect r = rect_size(h, w, cfg);
    const std::size_t cols = w - r.width + 1;
    const std::size_t pos = rng.uniform_int((h - r.height + 1) * cols);
    r.top = pos / cols;
    r.left = pos % cols;
    return make_mask(h, w, r);
}

Array draw_batch_masks(std::size_t n, std::size_t h, std::size_t w, const DdlConfig& cfg, Rng& rng) {
    Array out({n, h, w});
    for (std::size_t i = 0; i < n; ++i) {
        const DropMask m = generate_mask(h, w, cfg, rng);
        std::copy(m.values.values().begin(), m.values.values().end(), out.data() + i * h * w);
    }
    return out;
}

diff::Var apply(diff::Var feature, const DdlConfig& cfg, Rng& rng) {
    if (!cfg.train_mode) return feature;
    const Shape& s = feature.shape();
    if (s.size() != 4) throw DimensionError("ddl: feature map must be N×C×H×W, got " + shape_to_string(s));
    return diff::mask_multiply(feature, draw_batch_masks(s[0], s[2], s[3], cfg, rng));
}

diff::Var apply_with_mask(diff::Var feature, const Array& batch_masks) {
    return diff::mask_multiply(feature, batch_masks);
}

}  // namespace conslearn::ddl
