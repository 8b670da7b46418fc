#include "conslearn/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace conslearn::clustering {

void DbscanConfig::validate() const {
    if (!(eps > 0.0)) throw ConfigError("cluster.eps must be > 0");
    if (min_pts < 1) throw ConfigError("cluster.min_pts must be >= 1");
    if (!(eps_quantile >= 0.0 && eps_quantile < 1.0)) throw ConfigError("cluster.eps_quantile must lie in [0,1)");
}

double PseudoLabelAssignment::noise_fraction() const {
    if (labels.empty()) return 0.0;
    std::size_t noise = 0;
    for (int l : labels) noise += l < 0;
    return static_cast<double>(noise) / static_cast<double>(labels.size());
}

Array l2_normalize_rows(const Array& points) {
    Array out = points;
    const std::size_t n = points.dim(0), d = points.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += points[i * d + j] * points[i * d + j];
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= norm;
    }
    return out;
}

PseudoLabelAssignment dbscan(const Array& points, const DbscanConfig& cfg) {
    cfg.validate();
    if (points.rank() != 2) throw DimensionError("dbscan: expected N×D points, got " + shape_to_string(points.shape()));
    if (points.dim(0) < 1) throw ContractError("dbscan: need at least one point");
    if (!points.all_finite()) throw std::invalid_argument("dbscan: non-finite coordinates");
    const Array x = cfg.normalize ? l2_normalize_rows(points) : points;
    const std::size_t n = x.dim(0), d = x.dim(1);

    std::vector<double> dist2(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = x[i * d + k] - x[j * d + k];
                acc += diff * diff;
            }
            dist2[i * n + j] = acc;
        }
    }
    double eps2 = cfg.eps * cfg.eps;
    if (cfg.eps_quantile > 0.0 && n >= 2) {
        std::vector<double> pairs;
        pairs.reserve(n * (n - 1) / 2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) pairs.push_back(dist2[i * n + j]);
        const auto at = pairs.begin() + static_cast<std::ptrdiff_t>(cfg.eps_quantile * static_cast<double>(pairs.size() - 1));
        std::nth_element(pairs.begin(), at, pairs.end());
        eps2 = *at;
    }

    std::vector<std::vector<std::size_t>> neighbours(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (dist2[i * n + j] <= eps2) neighbours[i].push_back(j);

    constexpr int kUnvisited = -2;
    PseudoLabelAssignment out;
    out.labels.assign(n, kUnvisited);
    int cluster = 0;
    std::vector<std::size_t> frontier;
    for (std::size_t i = 0; i < n; ++i) {
        if (out.labels[i] != kUnvisited) continue;
        if (neighbours[i].size() < cfg.min_pts) {
            out.labels[i] = losses::kNoise;
            continue;
        }
        out.labels[i] = cluster;
        frontier.assign(neighbours[i].begin(), neighbours[i].end());
        while (!frontier.empty()) {
            const std::size_t j = frontier.back();
            frontier.pop_back();
            if (out.labels[j] == losses::kNoise) out.labels[j] = cluster;  // border point
            if (out.labels[j] != kUnvisited) continue;
            out.labels[j] = cluster;
            if (neighbours[j].size() >= cfg.min_pts) {
                frontier.insert(frontier.end(), neighbours[j].begin(), neighbours[j].end());
            }
        }
        ++cluster;
    }
    out.num_clusters = static_cast<std::size_t>(cluster);
    return out;
}

void write_assignment_csv(const PseudoLabelAssignment& a, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "image_id,pseudo_label,epoch\n";
    for (std::size_t i = 0; i < a.labels.size(); ++i) out << i << ',' << a.labels[i] << ',' << a.epoch << '\n';
}

}  // namespace conslearn::clustering
