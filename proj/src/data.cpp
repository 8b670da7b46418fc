#include "conslearn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"

namespace conslearn::data {

namespace fs = std::filesystem;

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::query: return "query";
        case Split::gallery: return "gallery";
    }
    return "train";
}

Split parse_split(const std::string& text) {
    if (text == "train") return Split::train;
    if (text == "query") return Split::query;
    if (text == "gallery") return Split::gallery;
    throw std::invalid_argument("unknown split '" + text + "'");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == s) out.push_back(i);
    return out;
}

Array Dataset::images(std::span<const std::size_t> idx) const {
    const std::size_t plane = image_shape[0] * image_shape[1] * image_shape[2];
    Array out({idx.size(), image_shape[0], image_shape[1], image_shape[2]});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Array& img = samples.at(idx[i]).image;
        if (img.size() != plane) throw DimensionError("dataset image " + shape_to_string(img.shape()) + " has wrong size");
        std::copy(img.values().begin(), img.values().end(), out.data() + i * plane);
    }
    return out;
}

std::vector<int> Dataset::identities(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    for (std::size_t i : idx) out.push_back(samples.at(i).identity);
    return out;
}

std::vector<int> Dataset::cameras(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    for (std::size_t i : idx) out.push_back(samples.at(i).camera);
    return out;
}

// ---- synthetic generation -------------------------------------------------

void SynthConfig::validate() const {
    if (num_identities < 1 || images_per_identity < 1) throw ConfigError("synth: counts must be >= 1");
    if (num_cameras < 2) throw ConfigError("synth: need at least 2 cameras for cross-camera evaluation");
    if (image_shape[0] < 1 || image_shape[1] < 2 || image_shape[2] < 2) throw ConfigError("synth: image too small");
    if (identity_noise < 0.0 || camera_shift_strength < 0.0) throw ConfigError("synth: noise strengths must be >= 0");
    if (occlusion_prob < 0.0 || occlusion_prob > 1.0) throw ConfigError("synth: occlusion_prob must be in [0,1]");
    if (num_test_identities > 0 && images_per_identity < num_cameras) {
        throw ConfigError("synth: test identities need at least one image per camera");
    }
}

namespace {

struct Prototype {
    Array body;  ///< [C×H×W] person appearance before camera effects
};

struct CameraLook {
    std::vector<double> gain, offset, background;
};

// Body made of three horizontal bands (head, torso, legs), each with its own
// colour and a low-frequency texture, on a neutral background of width W/8 per side.
Prototype make_prototype(const ImageShape& s, Rng& rng) {
    const std::size_t c = s[0], h = s[1], w = s[2];
    const std::array<std::size_t, 4> bands{0, h / 4, (5 * h) / 8, h};
    Prototype p;
    p.body = Array({c, h, w}, 0.0);
    for (std::size_t b = 0; b < 3; ++b) {
        std::vector<double> colour(c);
        for (auto& v : colour) v = rng.uniform(0.15, 0.85);
        const double amp = rng.uniform(0.05, 0.2);
        const double fy = static_cast<double>(rng.uniform_int(3));
        const double fx = static_cast<double>(rng.uniform_int(3));
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t y = bands[b]; y < bands[b + 1]; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double tex = amp * std::sin(2.0 * std::numbers::pi *
                                                      (fy * static_cast<double>(y) / static_cast<double>(h) +
                                                       fx * static_cast<double>(x) / static_cast<double>(w)) +
                                                  phase);
                for (std::size_t ch = 0; ch < c; ++ch) p.body[(ch * h + y) * w + x] = colour[ch] + tex;
            }
    }
    return p;
}

CameraLook make_camera(const ImageShape& s, double strength, Rng& rng) {
    CameraLook cam;
    for (std::size_t ch = 0; ch < s[0]; ++ch) {
        cam.gain.push_back(1.0 + strength * rng.uniform(-0.5, 0.5));
        cam.offset.push_back(strength * rng.uniform(-0.5, 0.5));
        cam.background.push_back(0.5 + strength * rng.uniform(-1.0, 1.0));
    }
    return cam;
}

Array render(const Prototype& proto, const CameraLook& cam, const SynthConfig& cfg, Rng& rng) {
    const std::size_t c = cfg.image_shape[0], h = cfg.image_shape[1], w = cfg.image_shape[2];
    const std::size_t margin = w / 8;
    Array img({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const bool body = x >= margin && x < w - margin;
                const double base = body ? proto.body[(ch * h + y) * w + x] : cam.background[ch];
                img[(ch * h + y) * w + x] = cam.gain[ch] * base + cam.offset[ch];
            }
    if (cfg.occlusion_prob > 0.0 && rng.bernoulli(cfg.occlusion_prob)) {
        const std::size_t oh = std::max<std::size_t>(1, h / 4 + rng.uniform_int(h / 4 + 1));
        const std::size_t top = rng.uniform_int(h - oh + 1);
        std::vector<double> colour(c);
        for (auto& v : colour) v = rng.uniform(0.0, 1.0);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = top; y < top + oh; ++y)
                for (std::size_t x = 0; x < w; ++x) img[(ch * h + y) * w + x] = colour[ch];
    }
    for (auto& v : img.values()) {
        if (cfg.identity_noise > 0.0) v += cfg.identity_noise * rng.normal();
        v = std::clamp(v, 0.0, 1.0);
    }
    return img;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    Rng proto_rng(Rng::derive(cfg.seed, 1));
    Rng cam_rng(Rng::derive(cfg.seed, 2));
    Rng sample_rng(Rng::derive(cfg.seed, 3));
    std::vector<CameraLook> cams;
    for (std::size_t k = 0; k < cfg.num_cameras; ++k) cams.push_back(make_camera(cfg.image_shape, cfg.camera_shift_strength, cam_rng));

    Dataset ds;
    ds.image_shape = cfg.image_shape;
    const std::size_t total = cfg.num_identities + cfg.num_test_identities;
    for (std::size_t id = 0; id < total; ++id) {
        const Prototype proto = make_prototype(cfg.image_shape, proto_rng);
        const bool train = id < cfg.num_identities;
        const int query_cam = static_cast<int>(id % cfg.num_cameras);
        for (std::size_t j = 0; j < cfg.images_per_identity; ++j) {
            ReidSample s;
            s.camera = static_cast<int>(j % cfg.num_cameras);
            s.identity = static_cast<int>(id);
            s.image = render(proto, cams[static_cast<std::size_t>(s.camera)], cfg, sample_rng);
            s.split = train ? Split::train : (s.camera == query_cam ? Split::query : Split::gallery);
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

// ---- folder ingestion -----------------------------------------------------

std::optional<ParsedName> parse_market_name(const std::string& filename) {
    static const std::regex pattern(R"(^(-?\d+)_c(\d+)[^/\\]*\.[A-Za-z0-9]+$)");
    std::smatch m;
    if (!std::regex_match(filename, m, pattern)) return std::nullopt;
    ParsedName p;
    p.identity = std::stoi(m[1].str());
    p.camera = std::stoi(m[2].str());
    return p;
}

namespace {

const std::set<std::string> kImageExtensions{".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm", ".tif", ".tiff"};

Array read_image(const fs::path& file, ImageShape shape) {
    cv::Mat raw = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw std::runtime_error("unreadable image");
    double scale = 1.0 / 255.0;
    if (raw.depth() == CV_16U) scale = 1.0 / 65535.0;
    cv::Mat converted;
    if (raw.channels() == 4) cv::cvtColor(raw, raw, cv::COLOR_BGRA2BGR);
    if (shape[0] == 3 && raw.channels() == 1) cv::cvtColor(raw, raw, cv::COLOR_GRAY2BGR);
    if (shape[0] == 1 && raw.channels() == 3) cv::cvtColor(raw, raw, cv::COLOR_BGR2GRAY);
    if (static_cast<std::size_t>(raw.channels()) != shape[0]) throw std::runtime_error("unsupported channel count");
    raw.convertTo(converted, CV_64F, scale);
    cv::Mat resized;
    if (static_cast<std::size_t>(converted.rows) == shape[1] && static_cast<std::size_t>(converted.cols) == shape[2]) {
        resized = converted;
    } else {
        cv::resize(converted, resized, cv::Size(static_cast<int>(shape[2]), static_cast<int>(shape[1])), 0, 0,
                   cv::INTER_LINEAR);
    }
    Array img({shape[0], shape[1], shape[2]});
    for (std::size_t y = 0; y < shape[1]; ++y)
        for (std::size_t x = 0; x < shape[2]; ++x) {
            if (shape[0] == 1) {
                img[y * shape[2] + x] = resized.at<double>(static_cast<int>(y), static_cast<int>(x));
                continue;
            }
            const auto& px = resized.at<cv::Vec3d>(static_cast<int>(y), static_cast<int>(x));
            for (std::size_t ch = 0; ch < 3; ++ch)  // BGR -> RGB
                img[(ch * shape[1] + y) * shape[2] + x] = std::clamp(px[static_cast<int>(2 - ch)], 0.0, 1.0);
        }
    return img;
}

void write_image(const Array& img, const fs::path& file) {
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    cv::Mat out(static_cast<int>(h), static_cast<int>(w), c == 1 ? CV_16UC1 : CV_16UC3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            auto to16 = [&](std::size_t ch) {
                return static_cast<std::uint16_t>(std::lround(std::clamp(img[(ch * h + y) * w + x], 0.0, 1.0) * 65535.0));
            };
            if (c == 1) {
                out.at<std::uint16_t>(static_cast<int>(y), static_cast<int>(x)) = to16(0);
            } else {
                out.at<cv::Vec<std::uint16_t, 3>>(static_cast<int>(y), static_cast<int>(x)) =
                    cv::Vec<std::uint16_t, 3>(to16(2), to16(1), to16(0));
            }
        }
    if (!cv::imwrite(file.string(), out)) throw std::runtime_error("cannot write image " + file.string());
}

}  // namespace

Dataset load_folder(const fs::path& dir, ImageShape shape, Split split, LoadReport* report) {
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    if (files.empty()) throw std::runtime_error("dataset directory is empty: " + dir.string());
    std::sort(files.begin(), files.end());
    Dataset ds;
    ds.image_shape = shape;
    for (const auto& file : files) {
        const std::string name = file.filename().string();
        std::string ext = file.extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (!kImageExtensions.contains(ext)) {
            if (report) report->rejected.push_back(name + ": not an image file");
            continue;
        }
        const auto parsed = parse_market_name(name);
        if (!parsed) {
            if (report) report->rejected.push_back(name + ": name does not match <identity>_c<camera>...");
            continue;
        }
        try {
            ReidSample s;
            s.image = read_image(file, shape);
            s.identity = parsed->identity;
            s.camera = parsed->camera;
            s.split = split;
            s.file = name;
            ds.samples.push_back(std::move(s));
        } catch (const std::exception& e) {
            if (report) report->rejected.push_back(name + ": " + e.what());
        }
    }
    if (ds.samples.empty()) throw std::runtime_error("no loadable images in " + dir.string());
    return ds;
}

Dataset load_dataset(const fs::path& dir, ImageShape shape, LoadReport* report) {
    if (fs::exists(dir / "manifest.json")) {
        const Manifest m = read_manifest(dir / "manifest.json");
        Dataset ds;
        ds.image_shape = shape;
        for (const auto& e : m.entries) {
            ReidSample s;
            s.image = read_image(dir / e.file, shape);
            s.identity = e.identity;
            s.camera = e.camera;
            s.split = e.split;
            s.file = e.file;
            ds.samples.push_back(std::move(s));
        }
        return ds;
    }
    Dataset ds;
    ds.image_shape = shape;
    const std::array<std::pair<const char*, Split>, 3> layout{
        {{"bounding_box_train", Split::train}, {"query", Split::query}, {"bounding_box_test", Split::gallery}}};
    for (const auto& [sub, split] : layout) {
        if (!fs::is_directory(dir / sub)) continue;
        Dataset part = load_folder(dir / sub, shape, split, report);
        for (auto& s : part.samples) {
            s.file = std::string(sub) + "/" + s.file;
            // Market marks distractors and junk with identities 0 and -1.
            if (split != Split::train && s.identity <= 0) continue;
            ds.samples.push_back(std::move(s));
        }
    }
    if (ds.samples.empty()) throw std::runtime_error("no manifest.json or Market-style subfolders in " + dir.string());
    return ds;
}

void save_dataset(Dataset& ds, const fs::path& dir) {
    std::size_t seq = 0;
    for (const char* sub : {"train", "query", "gallery"}) fs::create_directories(dir / sub);
    for (auto& s : ds.samples) {
        char name[64];
        std::snprintf(name, sizeof(name), "%04d_c%ds1_%06zu_00.png", s.identity, s.camera + 1, seq++);
        s.file = to_string(s.split) + "/" + name;
        write_image(s.image, dir / s.file);
    }
    write_manifest(make_manifest(ds), dir / "manifest.json");
}

// ---- manifest --------------------------------------------------------------

Manifest make_manifest(const Dataset& ds) {
    Manifest m;
    m.image_shape = ds.image_shape;
    for (const auto& s : ds.samples) m.entries.push_back({s.file, s.identity, s.camera, s.split});
    return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
    nlohmann::json j;
    j["image_shape"] = m.image_shape;
    j["samples"] = nlohmann::json::array();
    for (const auto& e : m.entries) {
        j["samples"].push_back(
            {{"file", e.file}, {"identity", e.identity}, {"camera", e.camera}, {"split", to_string(e.split)}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest " + path.string());
    const auto j = nlohmann::json::parse(in);
    Manifest m;
    m.image_shape = j.at("image_shape").get<ImageShape>();
    for (const auto& e : j.at("samples")) {
        m.entries.push_back({e.at("file").get<std::string>(), e.at("identity").get<int>(), e.at("camera").get<int>(),
                             parse_split(e.at("split").get<std::string>())});
    }
    return m;
}

// ---- sampling and augmentation --------------------------------------------

PkBatch pk_sample(std::span<const int> labels, std::size_t p, std::size_t k, Rng& rng) {
    if (p < 1 || k < 1) throw ContractError("pk_sample: P and K must be >= 1");
    std::vector<int> classes;
    for (int l : labels)
        if (l >= 0) classes.push_back(l);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    PkBatch batch;
    if (classes.empty()) return batch;
    batch.fell_back = classes.size() < p;
    const std::size_t take = std::min(p, classes.size());
    // Partial Fisher-Yates: the first `take` entries become the chosen classes.
    for (std::size_t i = 0; i < take; ++i) std::swap(classes[i], classes[i + rng.uniform_int(classes.size() - i)]);
    for (std::size_t c = 0; c < take; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == classes[c]) members.push_back(i);
        if (members.size() >= k) {
            for (std::size_t i = 0; i < k; ++i) std::swap(members[i], members[i + rng.uniform_int(members.size() - i)]);
            batch.indices.insert(batch.indices.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
            for (std::size_t i = 0; i < k; ++i) batch.indices.push_back(members[rng.uniform_int(members.size())]);
        }
    }
    batch.classes_used = take;
    return batch;
}

Array flip_horizontal(const Array& image) {
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Array out(image.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out[(ch * h + y) * w + x] = image[(ch * h + y) * w + (w - 1 - x)];
    return out;
}

Array pad_crop(const Array& image, std::size_t pad, std::size_t top, std::size_t left) {
    if (top > 2 * pad || left > 2 * pad) throw ContractError("pad_crop: crop offset outside padded image");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Array out(image.shape(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y) {
            const long sy = static_cast<long>(y + top) - static_cast<long>(pad);
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            for (std::size_t x = 0; x < w; ++x) {
                const long sx = static_cast<long>(x + left) - static_cast<long>(pad);
                if (sx < 0 || sx >= static_cast<long>(w)) continue;
                out[(ch * h + y) * w + x] = image[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
            }
        }
    return out;
}

Array augment(const Array& image, Rng& rng, const AugmentConfig& cfg) {
    if (image.rank() != 3) throw DimensionError("augment: expected C×H×W image, got " + shape_to_string(image.shape()));
    const bool flip = rng.bernoulli(cfg.flip_prob);
    const std::size_t top = rng.uniform_int(2 * cfg.pad + 1);
    const std::size_t left = rng.uniform_int(2 * cfg.pad + 1);
    return pad_crop(flip ? flip_horizontal(image) : image, cfg.pad, top, left);
}

}  // namespace conslearn::data
