#pragma once

// Training objectives: teacher/student consistency, pseudo-label cross-entropy
// on both views, softmax-triplet over hardest in-batch pairs, and their
// weighted total.

#include <span>
#include <string>
#include <vector>

#include "conslearn/array.hpp"
#include "conslearn/tape.hpp"

namespace conslearn::losses {

/// Pseudo-label value for points left unclustered.
inline constexpr int kNoise = -1;

inline constexpr double kLogFloor = 1e-12;

/// Which similarity sits in the softmax-triplet numerator.
/// `negative`: exp(s_neg) / (exp(s_neg) + exp(s_pos)), the literal printed form.
/// `positive`: exp(s_pos) / (exp(s_pos) + exp(s_neg)), which pulls positives in
/// and pushes negatives out.
enum class TripletNumerator { negative, positive };

std::string to_string(TripletNumerator n);
TripletNumerator parse_triplet_numerator(const std::string& text);

struct LossWeights {
    double lambda = 0.2;  ///< pseudo-label cross-entropy
    double xi = 0.35;     ///< softmax-triplet
    double eta = 0.1;     ///< consistency
    TripletNumerator triplet_numerator = TripletNumerator::positive;

    void validate() const;
};

/// Mean over the batch of H(teacher1, student2) + H(teacher2, student1).
/// `v1`, `v2` are softmaxed student rows; `tv1`, `tv2` softmaxed teacher rows.
diff::Var consistency_loss(diff::Var v1, diff::Var v2, const Array& tv1, const Array& tv2);

struct ClusterCe {
    diff::Var loss;
    std::size_t labelled = 0;  ///< rows that contributed (per view, summed)
    bool all_noise = false;
};

/// -(1/N1) Σ log p(y|h1) - (1/N2) Σ log p(y|h2) over non-noise rows. With
/// shared labels pass the same span twice. Labels >= class count throw.
ClusterCe cluster_ce_loss(diff::Var probs1, diff::Var probs2, std::span<const int> labels1,
                          std::span<const int> labels2);

/// Hardest positive (farthest same-label) and hardest negative (closest
/// other-label) partner of every anchor, mined on values. Noise rows are never
/// anchors, positives or negatives. Ties resolve to the lower index.
struct HardestPairs {
    std::vector<std::size_t> anchors;
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
    std::vector<std::size_t> skipped;  ///< labelled anchors without a positive or a negative
};

HardestPairs mine_hardest(const Array& h, std::span<const int> labels);

/// Negated distances to the mined partners; differentiable in h.
struct PairSimilarities {
    diff::Var sim_negative;  ///< -||h_i - h_n||
    diff::Var sim_positive;  ///< -||h_i - h_p||
    std::size_t anchors = 0;
    std::vector<std::size_t> skipped;
};

PairSimilarities hardest_pairs(diff::Var h, std::span<const int> labels);

/// Σ over views of -(1/N) Σ log softmax numerator term; views with no anchor add 0.
diff::Var softmax_triplet_loss(const PairSimilarities& view1, const PairSimilarities& view2,
                               TripletNumerator numerator);

/// λ·ce + ξ·st + η·co.
diff::Var total_loss(const LossWeights& w, diff::Var ce, diff::Var st, diff::Var co);

}  // namespace conslearn::losses
