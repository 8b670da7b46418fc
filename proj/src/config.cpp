#include "conslearn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace conslearn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt(double d) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", d);
    return buf;
}

std::string fmt(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string join(const T& items) {
    std::string out;
    for (const auto& i : items) out += (out.empty() ? "" : ",") + std::to_string(i);
    return out;
}

struct Field {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define CL_DOUBLE(expr) \
    Field { [](TrainConfig& c, const std::string& k, const std::string& v) { c.expr = to_double(k, v); }, \
            [](const TrainConfig& c) { return fmt(c.expr); } }
#define CL_UINT(expr) \
    Field { [](TrainConfig& c, const std::string& k, const std::string& v) { c.expr = to_uint(k, v); }, \
            [](const TrainConfig& c) { return std::to_string(c.expr); } }
#define CL_BOOL(expr) \
    Field { [](TrainConfig& c, const std::string& k, const std::string& v) { c.expr = to_bool(k, v); }, \
            [](const TrainConfig& c) { return fmt(c.expr); } }

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"ddl.alpha", CL_DOUBLE(ddl.alpha)},
        {"ddl.beta", CL_DOUBLE(ddl.beta)},
        {"ddl.stages",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              c.ddl.active_stages.clear();
              if (v == "none") return;
              for (const auto& s : split_list(v)) c.ddl.active_stages.insert(to_uint(k, s));
          },
          [](const TrainConfig& c) { return c.ddl.active_stages.empty() ? "none" : join(c.ddl.active_stages); }}},
        {"ema.zeta", CL_DOUBLE(ema.zeta)},
        {"ema.depth", CL_UINT(ema.history_depth)},
        {"ema.enabled", CL_BOOL(ema.enabled)},
        {"loss.lambda", CL_DOUBLE(loss.lambda)},
        {"loss.xi", CL_DOUBLE(loss.xi)},
        {"loss.eta", CL_DOUBLE(loss.eta)},
        {"loss.triplet_numerator",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              c.loss.triplet_numerator = losses::parse_triplet_numerator(v);
          },
          [](const TrainConfig& c) { return losses::to_string(c.loss.triplet_numerator); }}},
        {"cluster.eps", CL_DOUBLE(cluster.eps)},
        {"cluster.min_pts", CL_UINT(cluster.min_pts)},
        {"cluster.normalize", CL_BOOL(cluster.normalize)},
        {"cluster.eps_quantile", CL_DOUBLE(cluster.eps_quantile)},
        {"cluster.shared_labels", CL_BOOL(shared_labels)},
        {"encoder.channels",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              const auto items = split_list(v);
              if (items.size() != ddl::kNumStages) throw ConfigError(k + ": expected 5 comma-separated channel counts");
              for (std::size_t i = 0; i < items.size(); ++i) c.encoder.stage_channels[i] = to_uint(k, items[i]);
              c.encoder.embed_dim = c.encoder.stage_channels.back();
          },
          [](const TrainConfig& c) { return join(c.encoder.stage_channels); }}},
        {"encoder.proj_dim", CL_UINT(encoder.proj_dim)},
        {"encoder.proj_head",
         {[](TrainConfig& c, const std::string&, const std::string& v) { c.encoder.proj_head = model::parse_proj_head(v); },
          [](const TrainConfig& c) { return model::to_string(c.encoder.proj_head); }}},
        {"train.epochs", CL_UINT(epochs)},
        {"train.iters_per_epoch", CL_UINT(iters_per_epoch)},
        {"train.p", CL_UINT(p)},
        {"train.k", CL_UINT(k)},
        {"train.lr", CL_DOUBLE(adam.learning_rate)},
        {"train.weight_decay", CL_DOUBLE(adam.weight_decay)},
        {"train.beta1", CL_DOUBLE(adam.beta1)},
        {"train.beta2", CL_DOUBLE(adam.beta2)},
        {"train.epsilon", CL_DOUBLE(adam.epsilon)},
        {"train.seed", CL_UINT(seed)},
        {"train.supervised", CL_BOOL(supervised)},
        {"train.augment", CL_BOOL(augment)},
        {"train.flip_prob", CL_DOUBLE(augment_cfg.flip_prob)},
        {"train.pad", CL_UINT(augment_cfg.pad)},
        {"train.eval_every", CL_UINT(eval_every)},
        {"train.init",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              if (v.empty()) c.init_checkpoint.reset();
              else c.init_checkpoint = v;
          },
          [](const TrainConfig& c) { return c.init_checkpoint ? c.init_checkpoint->string() : std::string(); }}},
        {"eval.model",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              if (v != "teacher" && v != "student") throw ConfigError(k + ": expected teacher or student, got '" + v + "'");
              c.eval_teacher = v == "teacher";
          },
          [](const TrainConfig& c) { return std::string(c.eval_teacher ? "teacher" : "student"); }}},
        {"data.dir",
         {[](TrainConfig& c, const std::string&, const std::string& v) {
              if (v.empty()) c.data_dir.reset();
              else c.data_dir = v;
          },
          [](const TrainConfig& c) { return c.data_dir ? c.data_dir->string() : std::string(); }}},
        {"data.channels", CL_UINT(synth.image_shape[0])},
        {"data.height", CL_UINT(synth.image_shape[1])},
        {"data.width", CL_UINT(synth.image_shape[2])},
        {"synth.identities", CL_UINT(synth.num_identities)},
        {"synth.test_identities", CL_UINT(synth.num_test_identities)},
        {"synth.images_per_identity", CL_UINT(synth.images_per_identity)},
        {"synth.cameras", CL_UINT(synth.num_cameras)},
        {"synth.noise", CL_DOUBLE(synth.identity_noise)},
        {"synth.camera_shift", CL_DOUBLE(synth.camera_shift_strength)},
        {"synth.occlusion", CL_DOUBLE(synth.occlusion_prob)},
        {"synth.seed", CL_UINT(synth.seed)},
    };
    return table;
}

#undef CL_DOUBLE
#undef CL_UINT
#undef CL_BOOL

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (iters_per_epoch < 1) throw ConfigError("train.iters_per_epoch must be >= 1");
    if (p < 2 || k < 2) throw ConfigError("train.p and train.k must be >= 2 so every anchor has a positive and a negative");
    adam.validate();
    ddl.validate();
    ema.validate();
    loss.validate();
    cluster.validate();
    if (encoder.in_channels != synth.image_shape[0]) {
        throw ConfigError("data.channels (" + std::to_string(synth.image_shape[0]) + ") must match the encoder input");
    }
    encoder.validate();
    if (!data_dir) synth.validate();
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = fields();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, key, value);
    if (key == "data.channels") cfg.encoder.in_channels = cfg.synth.image_shape[0];
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(ss, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value', got '" + line + "'");
        }
        apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_text(const TrainConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
    return out;
}

}  // namespace conslearn
