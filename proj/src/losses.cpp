#include "conslearn/losses.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace conslearn::losses {

using diff::Var;

std::string to_string(TripletNumerator n) { return n == TripletNumerator::negative ? "negative" : "positive"; }

TripletNumerator parse_triplet_numerator(const std::string& text) {
    if (text == "negative") return TripletNumerator::negative;
    if (text == "positive") return TripletNumerator::positive;
    throw ConfigError("loss.triplet_numerator must be 'negative' or 'positive', got '" + text + "'");
}

void LossWeights::validate() const {
    if (!(lambda >= 0.0) || !(xi >= 0.0) || !(eta >= 0.0)) {
        throw ConfigError("loss weights must be non-negative");
    }
}

Var consistency_loss(Var v1, Var v2, const Array& tv1, const Array& tv2) {
    return diff::add(diff::soft_cross_entropy(tv1, v2, kLogFloor), diff::soft_cross_entropy(tv2, v1, kLogFloor));
}

ClusterCe cluster_ce_loss(Var probs1, Var probs2, std::span<const int> labels1, std::span<const int> labels2) {
    ClusterCe out;
    for (int l : labels1) out.labelled += l >= 0;
    for (int l : labels2) out.labelled += l >= 0;
    out.all_noise = out.labelled == 0;
    out.loss = diff::add(diff::nll_of_probs(probs1, labels1, kLogFloor), diff::nll_of_probs(probs2, labels2, kLogFloor));
    return out;
}

HardestPairs mine_hardest(const Array& h, std::span<const int> labels) {
    if (h.rank() != 2 || h.dim(0) != labels.size()) {
        throw DimensionError("mine_hardest: " + std::to_string(labels.size()) + " labels for embeddings " +
                             shape_to_string(h.shape()));
    }
    const std::size_t n = h.dim(0), d = h.dim(1);
    auto dist = [&](std::size_t a, std::size_t b) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = h[a * d + j] - h[b * d + j];
            acc += diff * diff;
        }
        return std::sqrt(acc);
    };
    HardestPairs out;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0) continue;
        std::size_t best_pos = n, best_neg = n;
        double far = -1.0, near = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || labels[j] < 0) continue;
            const double dj = dist(i, j);
            if (labels[j] == labels[i]) {
                if (dj > far) {
                    far = dj;
                    best_pos = j;
                }
            } else if (dj < near) {
                near = dj;
                best_neg = j;
            }
        }
        if (best_pos == n || best_neg == n) {
            out.skipped.push_back(i);
            continue;
        }
        out.anchors.push_back(i);
        out.positives.push_back(best_pos);
        out.negatives.push_back(best_neg);
    }
    return out;
}

PairSimilarities hardest_pairs(Var h, std::span<const int> labels) {
    const HardestPairs mined = mine_hardest(h.value(), labels);
    std::vector<std::pair<std::size_t, std::size_t>> neg, pos;
    for (std::size_t a = 0; a < mined.anchors.size(); ++a) {
        neg.emplace_back(mined.anchors[a], mined.negatives[a]);
        pos.emplace_back(mined.anchors[a], mined.positives[a]);
    }
    PairSimilarities out;
    out.sim_negative = diff::scale(diff::pair_distances(h, neg), -1.0);
    out.sim_positive = diff::scale(diff::pair_distances(h, pos), -1.0);
    out.anchors = mined.anchors.size();
    out.skipped = mined.skipped;
    return out;
}

namespace {

// -(1/N) Σ log(exp(a)/(exp(a)+exp(b))) = mean softplus(b - a).
Var view_term(const PairSimilarities& v, TripletNumerator numerator) {
    if (v.anchors == 0) return v.sim_negative.tape->constant(Array::scalar(0.0));
    const Var a = numerator == TripletNumerator::negative ? v.sim_negative : v.sim_positive;
    const Var b = numerator == TripletNumerator::negative ? v.sim_positive : v.sim_negative;
    return diff::mean(diff::softplus(diff::add(b, diff::scale(a, -1.0))));
}

}  // namespace

Var softmax_triplet_loss(const PairSimilarities& view1, const PairSimilarities& view2, TripletNumerator numerator) {
    return diff::add(view_term(view1, numerator), view_term(view2, numerator));
}

Var total_loss(const LossWeights& w, Var ce, Var st, Var co) {
    return diff::add(diff::add(diff::scale(ce, w.lambda), diff::scale(st, w.xi)), diff::scale(co, w.eta));
}

}  // namespace conslearn::losses
