#include "conslearn/ablation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "conslearn/trainer.hpp"

namespace conslearn::ablation {

namespace {

using Settings = std::vector<std::pair<std::string, std::string>>;

std::vector<Variant> ddl_stages() {
    std::vector<Variant> out;
    for (const char* s : {"0", "1,3", "0,1,2", "0,1,2,3,4", "2,3,4", "2,4", "3,4"}) {
        out.push_back({std::string("stage_{") + s + "}", {{"ddl.stages", s}}});
    }
    out.push_back({"no DDL", {{"ddl.stages", "none"}}});
    return out;
}

std::vector<Variant> erase_size() {
    std::vector<Variant> out;
    const std::pair<const char*, const char*> sizes[] = {{"0.2", "0.1"}, {"0.3", "0.2"}, {"0.4", "0.3"}, {"0.5", "0.4"}};
    for (const char* stages : {"0,1,2", "3,4"}) {
        for (const auto& [a, b] : sizes) {
            out.push_back({std::string("stage_{") + stages + "} (" + a + "," + b + ")",
                           {{"ddl.stages", stages}, {"ddl.alpha", a}, {"ddl.beta", b}}});
        }
    }
    return out;
}

std::vector<Variant> components() {
    return {
        {"L_ce", {{"loss.xi", "0"}, {"loss.eta", "0"}, {"ddl.stages", "none"}}},
        {"L_ce + L_st", {{"loss.eta", "0"}, {"ddl.stages", "none"}}},
        {"L_ce + L_st + DDL + L_co", {}},
        {"L_ce + L_st + DDL + L_co, unshared labels", {{"cluster.shared_labels", "false"}}},
    };
}

std::vector<Variant> momentum() {
    return {
        {"theta(t)", {{"ema.depth", "1"}}},
        {"theta(t-1), theta(t)", {{"ema.depth", "2"}}},
        {"theta(t-2), theta(t-1), theta(t)", {{"ema.depth", "3"}}},
        {"no averaging", {{"ema.enabled", "false"}}},
    };
}

std::vector<Variant> proj_head() {
    return {
        {"identity", {{"encoder.proj_head", "identity"}}},
        {"linear", {{"encoder.proj_head", "linear"}}},
        {"shared linear", {{"encoder.proj_head", "shared_linear"}}},
    };
}

std::string settings_text(const Settings& s) {
    std::string out;
    for (const auto& [k, v] : s) out += (out.empty() ? "" : "; ") + k + "=" + v;
    return out.empty() ? "defaults" : out;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string dir_name(const std::string& variant) {
    std::string out;
    for (char c : variant) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    return out;
}

}  // namespace

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"ddl_stages", "erase_size", "components", "momentum", "proj_head"};
    return names;
}

std::vector<Variant> suite(const std::string& name) {
    if (name == "ddl_stages") return ddl_stages();
    if (name == "erase_size") return erase_size();
    if (name == "components") return components();
    if (name == "momentum") return momentum();
    if (name == "proj_head") return proj_head();
    std::string known;
    for (const auto& n : suite_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown ablation suite '" + name + "'; known suites: " + known);
}

TrainConfig apply(const TrainConfig& base, const Variant& v) {
    TrainConfig cfg = base;
    for (const auto& [key, value] : v.settings) apply_setting(cfg, key, value);
    cfg.validate();
    return cfg;
}

double Row::mean_mAP() const {
    if (runs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : runs) s += r.mAP;
    return s / static_cast<double>(runs.size());
}

double Row::mean_cmc(std::size_t rank) const {
    if (runs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : runs) {
        if (rank == 1) s += r.cmc1;
        else if (rank == 5) s += r.cmc5;
        else if (rank == 10) s += r.cmc10;
        else throw std::invalid_argument("mean_cmc: rank must be 1, 5 or 10");
    }
    return s / static_cast<double>(runs.size());
}

Report run(const std::string& suite_name, const std::vector<Variant>& variants, const TrainConfig& base,
           const data::Dataset& ds, const RunOptions& opts) {
    if (opts.seeds.empty()) throw ConfigError("ablation needs at least one seed");
    Report report;
    report.suite = suite_name;
    for (const Variant& v : variants) {
        Row row;
        row.variant = v;
        TrainConfig cfg = apply(base, v);
        for (std::uint64_t seed : opts.seeds) {
            cfg.seed = seed;
            train::TrainOptions topts;
            if (opts.run_root) topts.run_dir = *opts.run_root / dir_name(v.name) / ("seed_" + std::to_string(seed));
            const train::TrainResult result = train::train(cfg, ds, topts);
            if (!result.final_eval) throw ContractError("ablation: the dataset has no query/gallery split to evaluate");
            const auto& ev = *result.final_eval;
            row.runs.push_back({seed, ev.mAP, ev.cmc_at(1), ev.cmc_at(5), ev.cmc_at(10)});
            if (opts.progress) {
                char line[256];
                std::snprintf(line, sizeof(line), "%s | %s | seed %llu | mAP %.4f", suite_name.c_str(), v.name.c_str(),
                              static_cast<unsigned long long>(seed), ev.mAP);
                opts.progress(line);
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_csv(const Report& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "setting,config,runs,mAP,cmc1,cmc5,cmc10,per_seed_mAP\n";
    for (const Row& row : r.rows) {
        std::string per_seed;
        for (const auto& s : row.runs) per_seed += (per_seed.empty() ? "" : " ") + fmt(s.mAP);
        out << quote(row.variant.name) << ',' << quote(settings_text(row.variant.settings)) << ',' << row.runs.size()
            << ',' << fmt(row.mean_mAP()) << ',' << fmt(row.mean_cmc(1)) << ',' << fmt(row.mean_cmc(5)) << ','
            << fmt(row.mean_cmc(10)) << ',' << quote(per_seed) << '\n';
    }
}

std::string render_text(const Report& r) {
    std::size_t width = 7;
    for (const Row& row : r.rows) width = std::max(width, row.variant.name.size());
    std::string out = "suite: " + r.suite + "\n";
    char line[512];
    std::snprintf(line, sizeof(line), "%-*s  %6s  %6s  %6s  %6s  %4s\n", static_cast<int>(width), "setting", "mAP",
                  "top-1", "top-5", "top-10", "runs");
    out += line;
    for (const Row& row : r.rows) {
        std::snprintf(line, sizeof(line), "%-*s  %6.2f  %6.2f  %6.2f  %6.2f  %4zu\n", static_cast<int>(width),
                      row.variant.name.c_str(), 100 * row.mean_mAP(), 100 * row.mean_cmc(1), 100 * row.mean_cmc(5),
                      100 * row.mean_cmc(10), row.runs.size());
        out += line;
    }
    return out;
}

}  // namespace conslearn::ablation
