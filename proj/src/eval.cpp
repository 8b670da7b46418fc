#include "conslearn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace conslearn::eval {

double EvalResult::cmc_at(std::size_t rank) const {
    for (std::size_t i = 0; i < kCmcRanks.size(); ++i)
        if (kCmcRanks[i] == rank) return cmc[i];
    throw ContractError("cmc_at: rank " + std::to_string(rank) + " is not tracked");
}

Array distance_matrix(const Array& query, const Array& gallery) {
    if (query.rank() != 2 || gallery.rank() != 2 || query.dim(1) != gallery.dim(1)) {
        throw DimensionError("distance_matrix: embeddings " + shape_to_string(query.shape()) + " and " +
                             shape_to_string(gallery.shape()) + " differ in width");
    }
    const std::size_t q = query.dim(0), g = gallery.dim(0), d = query.dim(1);
    Array out({q, g});
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < g; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = query[i * d + k] - gallery[j * d + k];
                acc += diff * diff;
            }
            out[i * g + j] = std::sqrt(acc);
        }
    return out;
}

EvalResult evaluate(const Array& dist, const Meta& query, const Meta& gallery) {
    if (dist.rank() != 2 || dist.dim(0) != query.identities.size() || dist.dim(1) != gallery.identities.size() ||
        query.cameras.size() != query.identities.size() || gallery.cameras.size() != gallery.identities.size()) {
        throw DimensionError("evaluate: distance matrix " + shape_to_string(dist.shape()) +
                             " does not match query/gallery metadata");
    }
    const std::size_t nq = dist.dim(0), ng = dist.dim(1);
    EvalResult r;
    std::array<std::size_t, kCmcRanks.size()> hits{};
    std::vector<std::size_t> order(ng);
    for (std::size_t q = 0; q < nq; ++q) {
        std::iota(order.begin(), order.end(), 0);
        const double* row = dist.data() + q * ng;
        std::stable_sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
        std::size_t rank = 0, found = 0, first = 0;
        double precision_sum = 0.0;
        for (std::size_t g : order) {
            const bool same_id = gallery.identities[g] == query.identities[q];
            if (same_id && gallery.cameras[g] == query.cameras[q]) continue;
            ++rank;
            if (!same_id) continue;
            ++found;
            if (first == 0) first = rank;
            precision_sum += static_cast<double>(found) / static_cast<double>(rank);
        }
        if (found == 0) {
            r.excluded.push_back(q);
            continue;
        }
        r.per_query_ap.push_back(precision_sum / static_cast<double>(found));
        r.query_index.push_back(q);
        r.match_rank.push_back(first);
        for (std::size_t k = 0; k < kCmcRanks.size(); ++k) hits[k] += first <= kCmcRanks[k];
    }
    r.num_queries = r.per_query_ap.size();
    if (r.num_queries > 0) {
        r.mAP = std::accumulate(r.per_query_ap.begin(), r.per_query_ap.end(), 0.0) / static_cast<double>(r.num_queries);
        for (std::size_t k = 0; k < kCmcRanks.size(); ++k)
            r.cmc[k] = static_cast<double>(hits[k]) / static_cast<double>(r.num_queries);
    }
    return r;
}

ClusterQuality cluster_quality(std::span<const int> labels, std::span<const int> identities) {
    if (labels.size() != identities.size()) {
        throw DimensionError("cluster_quality: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(identities.size()) + " identities");
    }
    ClusterQuality out;
    int max_label = -1;
    std::size_t noise = 0;
    for (int l : labels) {
        max_label = std::max(max_label, l);
        noise += l < 0;
    }
    out.num_clusters = static_cast<std::size_t>(max_label + 1);
    out.noise_fraction = labels.empty() ? 0.0 : static_cast<double>(noise) / static_cast<double>(labels.size());
    std::size_t same_cluster = 0, same_identity = 0, both = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            const bool c = labels[i] >= 0 && labels[i] == labels[j];
            const bool t = identities[i] == identities[j];
            same_cluster += c;
            same_identity += t;
            both += c && t;
        }
    out.precision = same_cluster ? static_cast<double>(both) / static_cast<double>(same_cluster) : 1.0;
    out.recall = same_identity ? static_cast<double>(both) / static_cast<double>(same_identity) : 1.0;
    const double denom = out.precision + out.recall;
    out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
    return out;
}

EvalResult evaluate_model(const model::ModelState& state, const data::Dataset& ds, bool use_teacher) {
    const auto qi = ds.indices(data::Split::query), gi = ds.indices(data::Split::gallery);
    if (qi.empty() || gi.empty()) throw ContractError("evaluate_model: dataset has no query or gallery split");
    const Array q = model::embed_all(ds.images(qi), state, use_teacher);
    const Array g = model::embed_all(ds.images(gi), state, use_teacher);
    return evaluate(distance_matrix(q, g), {ds.identities(qi), ds.cameras(qi)}, {ds.identities(gi), ds.cameras(gi)});
}

void write_metrics_json(const EvalResult& r, const std::filesystem::path& path) {
    const nlohmann::json j = {{"mAP", r.mAP},
                              {"cmc1", r.cmc[0]},
                              {"cmc5", r.cmc[1]},
                              {"cmc10", r.cmc[2]},
                              {"num_queries", r.num_queries},
                              {"excluded_queries", r.excluded.size()}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_per_query_csv(const EvalResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "query_index,ap,first_match_rank\n";
    out.precision(17);
    for (std::size_t i = 0; i < r.per_query_ap.size(); ++i)
        out << r.query_index[i] << ',' << r.per_query_ap[i] << ',' << r.match_rank[i] << '\n';
}

}  // namespace conslearn::eval
