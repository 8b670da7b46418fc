#pragma once

// Named grids of configuration variants, run over several seeds on one
// dataset, summarised as mean mAP/CMC per variant.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "conslearn/config.hpp"
#include "conslearn/data.hpp"

namespace conslearn::ablation {

struct Variant {
    std::string name;
    std::vector<std::pair<std::string, std::string>> settings;  ///< config key, value; applied over the base
};

/// ddl_stages, erase_size, components, momentum, proj_head.
const std::vector<std::string>& suite_names();
/// Throws ConfigError listing the known suites.
std::vector<Variant> suite(const std::string& name);

TrainConfig apply(const TrainConfig& base, const Variant& v);

struct SeedResult {
    std::uint64_t seed = 0;
    double mAP = 0.0, cmc1 = 0.0, cmc5 = 0.0, cmc10 = 0.0;
};

struct Row {
    Variant variant;
    std::vector<SeedResult> runs;

    [[nodiscard]] double mean_mAP() const;
    [[nodiscard]] double mean_cmc(std::size_t rank) const;  ///< rank 1, 5 or 10
};

struct Report {
    std::string suite;
    std::vector<Row> rows;  ///< in grid order
};

struct RunOptions {
    std::vector<std::uint64_t> seeds{1};
    /// When set, every run writes its logs to <run_root>/<variant>/seed_<s>.
    std::optional<std::filesystem::path> run_root;
    std::function<void(const std::string&)> progress;
};

/// Trains every variant with every seed (train.seed) on `ds` and evaluates the final model.
Report run(const std::string& suite_name, const std::vector<Variant>& variants, const TrainConfig& base,
           const data::Dataset& ds, const RunOptions& opts);

/// Columns: setting, config, runs, mAP, cmc1, cmc5, cmc10, per_seed_mAP.
void write_csv(const Report& r, const std::filesystem::path& path);
/// Fixed-width text table in grid order.
std::string render_text(const Report& r);

}  // namespace conslearn::ablation
