#include "conslearn/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace conslearn::model {

using diff::Var;

std::string to_string(ProjHead head) {
    switch (head) {
        case ProjHead::identity: return "identity";
        case ProjHead::linear: return "linear";
        case ProjHead::shared_linear: return "shared_linear";
    }
    return "linear";
}

ProjHead parse_proj_head(const std::string& text) {
    if (text == "identity") return ProjHead::identity;
    if (text == "linear") return ProjHead::linear;
    if (text == "shared_linear") return ProjHead::shared_linear;
    throw ConfigError("unknown projection head '" + text + "' (expected identity, linear or shared_linear)");
}

void EncoderConfig::validate() const {
    if (in_channels < 1) throw ConfigError("encoder: in_channels must be >= 1");
    for (std::size_t c : stage_channels)
        if (c < 1) throw ConfigError("encoder: stage channels must be >= 1");
    if (embed_dim != stage_channels.back()) {
        throw ConfigError("encoder: embed_dim " + std::to_string(embed_dim) + " must equal last stage channels " +
                          std::to_string(stage_channels.back()));
    }
    if (proj_dim < 2) throw ConfigError("encoder: proj_dim must be >= 2");
    if (proj_head == ProjHead::identity && proj_dim != embed_dim) {
        throw ConfigError("encoder: identity projection head requires proj_dim == embed_dim (" +
                          std::to_string(proj_dim) + " vs " + std::to_string(embed_dim) + ")");
    }
    if (num_classes < 1) throw ConfigError("encoder: num_classes must be >= 1");
}

std::size_t ParamSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw ContractError("no parameter named '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
    for (const auto& n : names)
        if (n == name) return true;
    return false;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t total = 0;
    for (const auto& v : values) total += v.size();
    return total;
}

bool ParamSet::same_shapes(const ParamSet& other) const {
    if (names != other.names) return false;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i].shape() != other.values[i].shape()) return false;
    return true;
}

namespace {

Array uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Array a(std::move(shape));
    for (auto& v : a.values()) v = rng.uniform(-bound, bound);
    return a;
}

std::string stage_name(std::size_t k, const char* part) { return "stage" + std::to_string(k) + "." + part; }

void add_classifier(ParamSet& p, const EncoderConfig& cfg, std::size_t classes, Rng& rng) {
    const std::size_t in = cfg.classifier_in();
    Array w = uniform_init({in, classes}, in, rng);
    Array b({classes}, 0.0);
    if (p.contains("cls.weight")) {
        p.get("cls.weight") = std::move(w);
        p.get("cls.bias") = std::move(b);
    } else {
        p.names.emplace_back("cls.weight");
        p.values.push_back(std::move(w));
        p.names.emplace_back("cls.bias");
        p.values.push_back(std::move(b));
    }
}

}  // namespace

ModelState init_model(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelState state;
    state.config = cfg;
    ParamSet& p = state.student;
    std::size_t in = cfg.in_channels;
    for (std::size_t k = 0; k < ddl::kNumStages; ++k) {
        const std::size_t out = cfg.stage_channels[k];
        p.names.push_back(stage_name(k, "conv.weight"));
        p.values.push_back(uniform_init({out, in, 3, 3}, in * 9, rng));
        p.names.push_back(stage_name(k, "conv.bias"));
        p.values.emplace_back(Shape{out}, 0.0);
        if (k >= 1) {
            p.names.push_back(stage_name(k, "down.weight"));
            p.values.push_back(uniform_init({out, out, 2, 2}, out * 4, rng));
            p.names.push_back(stage_name(k, "down.bias"));
            p.values.emplace_back(Shape{out}, 0.0);
        }
        in = out;
    }
    if (cfg.proj_head != ProjHead::identity) {
        p.names.emplace_back("proj.weight");
        p.values.push_back(uniform_init({cfg.embed_dim, cfg.proj_dim}, cfg.embed_dim, rng));
        p.names.emplace_back("proj.bias");
        p.values.emplace_back(Shape{cfg.proj_dim}, 0.0);
    }
    add_classifier(p, cfg, cfg.num_classes, rng);
    state.teacher = state.student;
    return state;
}

BoundParams bind(diff::Tape& tape, const ParamSet& params, bool trainable) {
    BoundParams bound;
    bound.set = &params;
    bound.vars.reserve(params.values.size());
    for (const auto& v : params.values) bound.vars.push_back(trainable ? tape.leaf(v) : tape.constant(v));
    return bound;
}

Var encode(Var x, const BoundParams& params, const EncoderConfig& cfg, const EncodeOptions& opts) {
    if (x.shape().size() != 4 || x.shape()[1] != cfg.in_channels) {
        throw DimensionError("encode: expected N×" + std::to_string(cfg.in_channels) + "×H×W images, got " +
                             shape_to_string(x.shape()));
    }
    Var h = x;
    for (std::size_t k = 0; k < ddl::kNumStages; ++k) {
        if (opts.replay && opts.replay->stages[k].size() > 0) {
            h = ddl::apply_with_mask(h, opts.replay->stages[k]);
        } else if (opts.ddl && opts.ddl->active_at(k)) {
            if (!opts.rng) throw ContractError("encode: dropblock active but no random source given");
            const Shape& s = h.shape();
            Array masks = ddl::draw_batch_masks(s[0], s[2], s[3], *opts.ddl, *opts.rng);
            h = ddl::apply_with_mask(h, masks);
            if (opts.record) opts.record->stages[k] = std::move(masks);
        }
        h = diff::conv2d(h, params(stage_name(k, "conv.weight")), 1, diff::Padding::same);
        h = diff::relu(diff::add_channel_bias(h, params(stage_name(k, "conv.bias"))));
        if (k >= 1) {
            h = diff::conv2d(h, params(stage_name(k, "down.weight")), 2, diff::Padding::valid);
            h = diff::add_channel_bias(h, params(stage_name(k, "down.bias")));
        }
    }
    return diff::global_avg_pool(h);
}

Var project(Var h, const BoundParams& params, const EncoderConfig& cfg) {
    if (cfg.proj_head == ProjHead::identity) return h;
    return diff::linear(h, params("proj.weight"), params("proj.bias"));
}

Var classifier_input(Var h, const BoundParams& params, const EncoderConfig& cfg) {
    if (cfg.proj_head == ProjHead::shared_linear) return project(h, params, cfg);
    return h;
}

Var classify(Var h, const BoundParams& params, const EncoderConfig& cfg) {
    return diff::linear(classifier_input(h, params, cfg), params("cls.weight"), params("cls.bias"));
}

Array encode(const Array& images, const ModelState& state, const ddl::DdlConfig* ddl_cfg, Rng* rng,
             bool use_teacher) {
    diff::Tape tape;
    const BoundParams params = bind(tape, use_teacher ? state.teacher : state.student, false);
    EncodeOptions opts;
    opts.ddl = ddl_cfg;
    opts.rng = rng;
    return encode(tape.constant(images), params, state.config, opts).value();
}

Array embed_all(const Array& images, const ModelState& state, bool use_teacher, std::size_t chunk) {
    const std::size_t n = images.dim(0);
    Array out({n, state.config.embed_dim});
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        const Array h = encode(images.slice_rows(begin, end), state, nullptr, nullptr, use_teacher);
        std::copy(h.values().begin(), h.values().end(), out.data() + begin * state.config.embed_dim);
    }
    return out;
}

void reset_classifier(ModelState& state, std::size_t new_classes, Rng& rng) {
    if (new_classes < 1) throw ContractError("reset_classifier: need at least one class, got 0");
    state.config.num_classes = new_classes;
    add_classifier(state.student, state.config, new_classes, rng);
    state.teacher.get("cls.weight") = state.student.get("cls.weight");
    state.teacher.get("cls.bias") = state.student.get("cls.bias");
}

// ---- checkpoints ----------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'S', 'C', 'L', 'C', 'K', 'P', 'T'};

nlohmann::json config_to_json(const EncoderConfig& c) {
    return {{"in_channels", c.in_channels},
            {"stage_channels", c.stage_channels},
            {"embed_dim", c.embed_dim},
            {"proj_dim", c.proj_dim},
            {"proj_head", to_string(c.proj_head)},
            {"num_classes", c.num_classes}};
}

EncoderConfig config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.stage_channels = j.at("stage_channels").get<std::array<std::size_t, ddl::kNumStages>>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.proj_dim = j.at("proj_dim").get<std::size_t>();
    c.proj_head = parse_proj_head(j.at("proj_head").get<std::string>());
    c.num_classes = j.at("num_classes").get<std::size_t>();
    return c;
}

nlohmann::json layout(const ParamSet& p) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < p.names.size(); ++i) out.push_back({{"name", p.names[i]}, {"shape", p.values[i].shape()}});
    return out;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint truncated");
    return v;
}

ParamSet read_params(std::istream& in, const nlohmann::json& entries) {
    ParamSet p;
    for (const auto& e : entries) {
        Shape shape = e.at("shape").get<Shape>();
        std::vector<double> data(shape_product(shape));
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint truncated in parameter " + e.at("name").get<std::string>());
        p.names.push_back(e.at("name").get<std::string>());
        p.values.emplace_back(std::move(shape), std::move(data));
    }
    return p;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
    const nlohmann::json header = {{"config", config_to_json(state.config)},
                                   {"iteration", state.iteration},
                                   {"student", layout(state.student)},
                                   {"teacher", layout(state.teacher)}};
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const ParamSet* set : {&state.student, &state.teacher})
        for (const auto& v : set->values)
            out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error(path.string() + " is not a checkpoint file");
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const auto len = read_pod<std::uint64_t>(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("checkpoint truncated in header");
    const auto header = nlohmann::json::parse(text);
    ModelState state;
    state.config = config_from_json(header.at("config"));
    state.iteration = header.at("iteration").get<std::uint64_t>();
    state.student = read_params(in, header.at("student"));
    state.teacher = read_params(in, header.at("teacher"));
    if (!state.student.same_shapes(state.teacher)) throw std::runtime_error("checkpoint teacher/student layouts differ");
    return state;
}

}  // namespace conslearn::model
