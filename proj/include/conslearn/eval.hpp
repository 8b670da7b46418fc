#pragma once

// Cross-camera retrieval metrics (mAP, CMC) and pairwise clustering quality.

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "conslearn/array.hpp"
#include "conslearn/data.hpp"
#include "conslearn/encoder.hpp"

namespace conslearn::eval {

inline constexpr std::array<std::size_t, 3> kCmcRanks{1, 5, 10};

struct EvalResult {
    double mAP = 0.0;
    std::array<double, kCmcRanks.size()> cmc{};  ///< accuracy at ranks 1, 5, 10
    std::vector<double> per_query_ap;            ///< one entry per evaluated query
    std::vector<std::size_t> query_index;        ///< query row of each entry above
    std::vector<std::size_t> match_rank;         ///< 1-based rank of the first true match
    std::size_t num_queries = 0;
    std::vector<std::size_t> excluded;  ///< queries with no valid cross-camera match

    [[nodiscard]] double cmc_at(std::size_t rank) const;
};

/// Euclidean distances [Q×G].
Array distance_matrix(const Array& query, const Array& gallery);

struct Meta {
    std::vector<int> identities;
    std::vector<int> cameras;
};

/// Ranks the gallery for every query by ascending distance (ties by gallery
/// index) after removing same-identity same-camera entries. AP is the mean of
/// precision at each true-match rank. Queries without a valid match are
/// excluded and listed.
EvalResult evaluate(const Array& dist, const Meta& query, const Meta& gallery);

struct ClusterQuality {
    std::size_t num_clusters = 0;
    double noise_fraction = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Pairwise agreement of a pseudo-label partition with the identity partition.
/// Noise points are singletons. With no predicted (true) pairs the precision
/// (recall) is 1.
ClusterQuality cluster_quality(std::span<const int> labels, std::span<const int> identities);

/// Embeds query and gallery splits with dropblock off and evaluates them.
EvalResult evaluate_model(const model::ModelState& state, const data::Dataset& ds, bool use_teacher);

/// {"mAP", "cmc1", "cmc5", "cmc10", "num_queries", "excluded_queries"}.
void write_metrics_json(const EvalResult& r, const std::filesystem::path& path);
/// query_index,ap,first_match_rank
void write_per_query_csv(const EvalResult& r, const std::filesystem::path& path);

}  // namespace conslearn::eval
