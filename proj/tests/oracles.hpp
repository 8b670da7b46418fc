#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// suites. Each works straight from the definition, in long double where it
// matters, and shares no code with the library routine it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "conslearn/array.hpp"
#include "conslearn/eval.hpp"
#include "conslearn/losses.hpp"

namespace oracles {

using conslearn::Array;

// ---- clustering --------------------------------------------------------------

struct Dbscan {
    std::vector<int> labels;
    std::vector<bool> core;
    std::vector<std::vector<std::size_t>> neighbours;
};

// Density-reachability by transitive closure: core points joined when within
// eps, clusters numbered by their lowest core index, border points attached to
// the lowest-numbered cluster among their core neighbours.
inline Dbscan dbscan(const Array& x, double eps, std::size_t min_pts) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    Dbscan o;
    o.neighbours.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long double acc = 0.0L;
            for (std::size_t k = 0; k < d; ++k) {
                const long double diff = static_cast<long double>(x[i * d + k]) - x[j * d + k];
                acc += diff * diff;
            }
            if (acc <= static_cast<long double>(eps) * eps) o.neighbours[i].push_back(j);
        }
    o.core.resize(n);
    for (std::size_t i = 0; i < n; ++i) o.core[i] = o.neighbours[i].size() >= min_pts;

    std::vector<std::size_t> comp(n);
    std::iota(comp.begin(), comp.end(), 0);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!o.core[i]) continue;
            for (std::size_t j : o.neighbours[i]) {
                if (!o.core[j]) continue;
                const std::size_t m = std::min(comp[i], comp[j]);
                if (comp[i] != m || comp[j] != m) {
                    comp[i] = comp[j] = m;
                    changed = true;
                }
            }
        }
    }
    std::map<std::size_t, int> id;
    for (std::size_t i = 0; i < n; ++i)
        if (o.core[i] && !id.contains(comp[i])) id.emplace(comp[i], static_cast<int>(id.size()));
    o.labels.assign(n, conslearn::losses::kNoise);
    for (std::size_t i = 0; i < n; ++i) {
        if (o.core[i]) {
            o.labels[i] = id.at(comp[i]);
            continue;
        }
        for (std::size_t j : o.neighbours[i]) {
            if (!o.core[j]) continue;
            const int c = id.at(comp[j]);
            if (o.labels[i] == conslearn::losses::kNoise || c < o.labels[i]) o.labels[i] = c;
        }
    }
    return o;
}

// Canonical partition: sets of member indices, noise left out.
inline std::set<std::set<std::size_t>> partition(std::span<const int> labels) {
    std::map<int, std::set<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) groups[labels[i]].insert(i);
    std::set<std::set<std::size_t>> out;
    for (auto& [_, g] : groups) out.insert(g);
    return out;
}

// ---- losses --------------------------------------------------------------------

inline double euclid(const Array& h, std::size_t a, std::size_t b) {
    const std::size_t d = h.dim(1);
    long double acc = 0.0L;
    for (std::size_t j = 0; j < d; ++j) {
        const long double diff = static_cast<long double>(h[a * d + j]) - h[b * d + j];
        acc += diff * diff;
    }
    return static_cast<double>(std::sqrt(acc));
}

// O(N^2) enumeration: farthest positive and nearest negative, lowest index on ties.
inline conslearn::losses::HardestPairs mine_hardest(const Array& h, std::span<const int> labels) {
    conslearn::losses::HardestPairs want;
    const std::size_t n = labels.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0) continue;
        std::vector<std::pair<double, std::size_t>> pos, neg;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || labels[j] < 0) continue;
            (labels[j] == labels[i] ? pos : neg).emplace_back(euclid(h, i, j), j);
        }
        if (pos.empty() || neg.empty()) {
            want.skipped.push_back(i);
            continue;
        }
        std::sort(pos.begin(), pos.end(),
                  [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
        std::sort(neg.begin(), neg.end());
        want.anchors.push_back(i);
        want.positives.push_back(pos.front().second);
        want.negatives.push_back(neg.front().second);
    }
    return want;
}

// Sum over entries of KL(p || q) + H(p).
inline long double kl_plus_entropy(const Array& p, const Array& q) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        const long double pi = p[i], qi = q[i];
        acc += pi * std::log(pi / qi) - pi * std::log(pi);
    }
    return acc;
}

// ---- evaluation ----------------------------------------------------------------

struct Metrics {
    double mAP = 0.0;
    std::array<double, 3> cmc{};
    std::size_t evaluated = 0;
};

// Ranks from counting, no sorting: rank(g) = 1 + #valid entries strictly
// closer, or equally close with a lower gallery index.
inline Metrics evaluate(const Array& dist, const conslearn::eval::Meta& q, const conslearn::eval::Meta& g) {
    const std::size_t nq = dist.dim(0), ng = dist.dim(1);
    Metrics out;
    for (std::size_t i = 0; i < nq; ++i) {
        auto valid = [&](std::size_t j) { return !(g.identities[j] == q.identities[i] && g.cameras[j] == q.cameras[i]); };
        std::vector<std::size_t> ranks;
        for (std::size_t j = 0; j < ng; ++j) {
            if (!valid(j) || g.identities[j] != q.identities[i]) continue;
            std::size_t r = 1;
            for (std::size_t k = 0; k < ng; ++k) {
                if (!valid(k) || k == j) continue;
                const double a = dist[i * ng + k], b = dist[i * ng + j];
                r += a < b || (a == b && k < j);
            }
            ranks.push_back(r);
        }
        if (ranks.empty()) continue;
        std::sort(ranks.begin(), ranks.end());
        double ap = 0.0;
        for (std::size_t m = 0; m < ranks.size(); ++m) ap += static_cast<double>(m + 1) / static_cast<double>(ranks[m]);
        out.mAP += ap / static_cast<double>(ranks.size());
        for (std::size_t k = 0; k < 3; ++k) out.cmc[k] += ranks.front() <= conslearn::eval::kCmcRanks[k];
        ++out.evaluated;
    }
    if (out.evaluated) {
        out.mAP /= static_cast<double>(out.evaluated);
        for (auto& c : out.cmc) c /= static_cast<double>(out.evaluated);
    }
    return out;
}

}  // namespace oracles
