#pragma once

#include <filesystem>
#include <vector>

#include "conslearn/array.hpp"
#include "conslearn/losses.hpp"

namespace conslearn::clustering {

struct DbscanConfig {
    double eps = 0.6;
    std::size_t min_pts = 4;  ///< neighbourhood size for a core point, counting the point itself
    bool normalize = true;    ///< L2-normalise rows before measuring distances
    /// When in (0,1), eps is replaced by this quantile of the pairwise distances
    /// of the (normalised) points, so the radius follows the spread of the embedding.
    double eps_quantile = 0.0;

    void validate() const;
};

struct PseudoLabelAssignment {
    std::vector<int> labels;  ///< cluster id in [0, num_clusters) or losses::kNoise
    std::size_t num_clusters = 0;
    int epoch = 0;

    [[nodiscard]] double noise_fraction() const;
    friend bool operator==(const PseudoLabelAssignment&, const PseudoLabelAssignment&) = default;
};

/// Rows scaled to unit Euclidean norm; zero rows are left at zero.
Array l2_normalize_rows(const Array& points);

/// DBSCAN over the rows of points[N×D]. Points are visited in index order;
/// a border point reachable from several clusters joins the first one
/// discovered. Cluster ids are numbered in discovery order.
PseudoLabelAssignment dbscan(const Array& points, const DbscanConfig& cfg);

/// CSV dump: image_id,pseudo_label,epoch (noise written as -1).
void write_assignment_csv(const PseudoLabelAssignment& a, const std::filesystem::path& path);

}  // namespace conslearn::clustering
