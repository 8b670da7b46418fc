#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "conslearn/data.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace conslearn;
using namespace conslearn::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("conslearn_test_data_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

SynthConfig small_synth() {
    SynthConfig c;
    c.num_identities = 4;
    c.num_test_identities = 3;
    c.images_per_identity = 6;
    c.num_cameras = 3;
    c.seed = 11;
    return c;
}

void write_png(const fs::path& file, int rows, int cols, unsigned char value) {
    cv::Mat m(rows, cols, CV_8UC3, cv::Scalar(value, value, value));
    REQUIRE(cv::imwrite(file.string(), m));
}

}  // namespace

// ---- synthetic generation -------------------------------------------------

TEST_CASE("generate_synthetic: without noise or camera shift an identity's images are identical") {
    SynthConfig c = small_synth();
    c.identity_noise = 0.0;
    c.camera_shift_strength = 0.0;
    const Dataset ds = generate_synthetic(c);
    std::map<int, const Array*> first;
    for (const auto& s : ds.samples) {
        auto [it, inserted] = first.emplace(s.identity, &s.image);
        if (!inserted) CHECK(s.image == *it->second);
    }
    CHECK(first.size() == 7);
}

TEST_CASE("generate_synthetic: deterministic per seed") {
    const Dataset a = generate_synthetic(small_synth());
    const Dataset b = generate_synthetic(small_synth());
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].image == b.samples[i].image);
        CHECK(a.samples[i].identity == b.samples[i].identity);
        CHECK(a.samples[i].camera == b.samples[i].camera);
        CHECK(a.samples[i].split == b.samples[i].split);
    }
    SynthConfig other = small_synth();
    other.seed = 12;
    CHECK(generate_synthetic(other).samples[0].image != a.samples[0].image);
}

TEST_CASE("generate_synthetic: split layout, cross-camera query/gallery, value range") {
    SynthConfig c = small_synth();
    c.occlusion_prob = 0.5;
    const Dataset ds = generate_synthetic(c);
    CHECK(ds.samples.size() == 7 * 6);
    CHECK(ds.indices(Split::train).size() == 4 * 6);
    std::set<int> train_ids, test_ids;
    std::map<int, std::set<int>> query_cams, gallery_cams;
    for (const auto& s : ds.samples) {
        CHECK(s.image.shape() == Shape{3, 32, 16});
        for (double v : s.image.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        if (s.split == Split::train) train_ids.insert(s.identity);
        else test_ids.insert(s.identity);
        if (s.split == Split::query) query_cams[s.identity].insert(s.camera);
        if (s.split == Split::gallery) gallery_cams[s.identity].insert(s.camera);
    }
    for (int id : train_ids) CHECK_FALSE(test_ids.contains(id));
    CHECK(test_ids.size() == 3);
    for (int id : test_ids) {
        REQUIRE(query_cams.contains(id));
        REQUIRE(gallery_cams.contains(id));
        for (int cam : query_cams[id]) CHECK_FALSE(gallery_cams[id].contains(cam));
    }
}

TEST_CASE("SynthConfig: invalid settings") {
    SynthConfig c = small_synth();
    c.num_cameras = 1;
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
    c = small_synth();
    c.identity_noise = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_synth();
    c.num_identities = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_synth();
    c.images_per_identity = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

// ---- ingestion ---------------------------------------------------------------

TEST_CASE("parse_market_name: documented convention") {
    const auto p = parse_market_name("0002_c1s1_000451_03.jpg");
    REQUIRE(p.has_value());
    CHECK(p->identity == 2);
    CHECK(p->camera == 1);
    const auto junk = parse_market_name("-1_c3s2_000100_00.jpg");
    REQUIRE(junk.has_value());
    CHECK(junk->identity == -1);
    CHECK_FALSE(parse_market_name("readme.txt").has_value());
    CHECK_FALSE(parse_market_name("0002_s1_000451.jpg").has_value());
    CHECK_FALSE(parse_market_name("abc_c1.jpg").has_value());
}

TEST_CASE("load_folder: empty or missing directory is an error naming the path") {
    TempDir dir("empty");
    try {
        (void)load_folder(dir.path, {3, 32, 16}, Split::train);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(dir.path.string()) != std::string::npos);
    }
    CHECK_THROWS_AS(load_folder(dir.path / "nope", {3, 32, 16}, Split::train), std::runtime_error);
}

TEST_CASE("load_folder: valid files load and resize, invalid ones are reported") {
    TempDir dir("mixed");
    write_png(dir.path / "0001_c1s1_000001_00.png", 64, 32, 255);
    write_png(dir.path / "0007_c2s1_000002_00.png", 20, 10, 0);
    write_png(dir.path / "badname.png", 8, 8, 10);
    { std::ofstream(dir.path / "0003_c1_notes.txt") << "x"; }
    { std::ofstream(dir.path / "0004_c1s1_000003_00.png") << "not a png"; }
    LoadReport report;
    const Dataset ds = load_folder(dir.path, {3, 32, 16}, Split::gallery, &report);
    REQUIRE(ds.samples.size() == 2);
    CHECK(ds.samples[0].identity == 1);
    CHECK(ds.samples[0].camera == 1);
    CHECK(ds.samples[1].identity == 7);
    CHECK(ds.samples[1].camera == 2);
    CHECK(ds.samples[0].split == Split::gallery);
    CHECK(ds.samples[0].image.shape() == Shape{3, 32, 16});
    for (double v : ds.samples[0].image.values()) CHECK(v == doctest::Approx(1.0));
    for (double v : ds.samples[1].image.values()) CHECK(v == 0.0);
    CHECK(report.rejected.size() == 3);
}

TEST_CASE("load_dataset: Market-style subfolders, distractors dropped from test splits") {
    TempDir dir("market");
    for (const char* sub : {"bounding_box_train", "query", "bounding_box_test"}) fs::create_directories(dir.path / sub);
    write_png(dir.path / "bounding_box_train" / "0002_c1s1_000001_00.jpg", 128, 64, 100);
    write_png(dir.path / "query" / "0005_c2s1_000001_00.jpg", 128, 64, 100);
    write_png(dir.path / "bounding_box_test" / "0005_c1s1_000001_00.jpg", 128, 64, 100);
    write_png(dir.path / "bounding_box_test" / "0000_c1s1_000002_00.jpg", 128, 64, 100);
    write_png(dir.path / "bounding_box_test" / "-1_c3s1_000003_00.jpg", 128, 64, 100);
    const Dataset ds = load_dataset(dir.path, {3, 32, 16});
    CHECK(ds.indices(Split::train).size() == 1);
    CHECK(ds.indices(Split::query).size() == 1);
    CHECK(ds.indices(Split::gallery).size() == 1);
    CHECK(ds.samples.back().file == "bounding_box_test/0005_c1s1_000001_00.jpg");
}

TEST_CASE("save_dataset / load_dataset: manifest round trip within 16-bit quantisation") {
    TempDir dir("roundtrip");
    Dataset ds = generate_synthetic(small_synth());
    save_dataset(ds, dir.path);
    CHECK(fs::exists(dir.path / "manifest.json"));
    const Dataset back = load_dataset(dir.path, ds.image_shape);
    REQUIRE(back.samples.size() == ds.samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].identity == ds.samples[i].identity);
        CHECK(back.samples[i].camera == ds.samples[i].camera);
        CHECK(back.samples[i].split == ds.samples[i].split);
        CHECK(back.samples[i].file == ds.samples[i].file);
        for (std::size_t j = 0; j < ds.samples[i].image.size(); ++j)
            worst = std::max(worst, std::abs(back.samples[i].image[j] - ds.samples[i].image[j]));
    }
    CHECK(worst <= 0.5 / 65535.0 + 1e-12);
    CHECK(read_manifest(dir.path / "manifest.json") == make_manifest(ds));
}

// ---- PK sampling -------------------------------------------------------------

TEST_CASE("pk_sample: two classes of two is the whole set") {
    const std::vector<int> labels{0, 1, 0, 1};
    Rng rng(1);
    PkBatch b = pk_sample(labels, 2, 2, rng);
    std::sort(b.indices.begin(), b.indices.end());
    CHECK(b.indices == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(b.classes_used == 2);
    CHECK_FALSE(b.fell_back);
}

TEST_CASE("pk_sample: structure, noise exclusion and replacement for small classes") {
    Rng rng(2);
    const std::vector<int> labels{0, 0, 0, 0, 1, 1, -1, -1, 2, 2, 2, 3};
    for (int trial = 0; trial < 200; ++trial) {
        const PkBatch b = pk_sample(labels, 3, 3, rng);
        REQUIRE(b.indices.size() == 9);
        std::map<int, std::size_t> counts;
        for (std::size_t i : b.indices) {
            CHECK(labels[i] >= 0);
            ++counts[labels[i]];
        }
        CHECK(counts.size() == 3);
        for (const auto& [cls, k] : counts) CHECK(k == 3);
    }
}

TEST_CASE("pk_sample: too few classes falls back with a flag") {
    Rng rng(3);
    const std::vector<int> labels{0, 0, 1, 1, -1};
    const PkBatch b = pk_sample(labels, 4, 2, rng);
    CHECK(b.fell_back);
    CHECK(b.classes_used == 2);
    CHECK(b.indices.size() == 4);
    const std::vector<int> noise{-1, -1};
    CHECK(pk_sample(noise, 2, 2, rng).indices.empty());
    CHECK_THROWS_AS(pk_sample(labels, 0, 2, rng), ContractError);
}

TEST_CASE("pk_sample: class selection frequency is uniform within 3 sigma") {
    Rng rng(4);
    const std::size_t classes = 10, draws = 1000, p = 3;
    std::vector<int> labels;
    for (std::size_t c = 0; c < classes; ++c)
        for (int k = 0; k < 4; ++k) labels.push_back(static_cast<int>(c));
    std::vector<std::size_t> hits(classes, 0);
    for (std::size_t d = 0; d < draws; ++d) {
        const PkBatch b = pk_sample(labels, p, 2, rng);
        std::set<int> chosen;
        for (std::size_t i : b.indices) chosen.insert(labels[i]);
        for (int c : chosen) ++hits[static_cast<std::size_t>(c)];
    }
    const double prob = static_cast<double>(p) / classes;
    const double mean = draws * prob, sigma = std::sqrt(draws * prob * (1.0 - prob));
    for (std::size_t h : hits) CHECK(std::abs(static_cast<double>(h) - mean) <= 3.0 * sigma);
}

// ---- augmentation ------------------------------------------------------------

TEST_CASE("augment: no flip and centred crop is the identity") {
    Rng rng(5);
    const Array img = gradcheck::random_array({3, 8, 4}, rng, 0.0, 1.0);
    AugmentConfig none;
    none.flip_prob = 0.0;
    none.pad = 0;
    CHECK(augment(img, rng, none) == img);
    CHECK(pad_crop(img, 2, 2, 2) == img);
}

TEST_CASE("augment: double flip is the identity, single flip mirrors columns") {
    Rng rng(6);
    const Array img = gradcheck::random_array({2, 3, 5}, rng, 0.0, 1.0);
    CHECK(flip_horizontal(flip_horizontal(img)) == img);
    const Array f = flip_horizontal(img);
    CHECK(f[(1 * 3 + 2) * 5 + 0] == img[(1 * 3 + 2) * 5 + 4]);
    AugmentConfig always;
    always.flip_prob = 1.0;
    always.pad = 0;
    CHECK(augment(img, rng, always) == f);
}

TEST_CASE("pad_crop: shifts content and fills with zeros") {
    const Array img({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const Array shifted = pad_crop(img, 1, 0, 0);
    CHECK(shifted == Array({1, 2, 2}, std::vector<double>{0, 0, 0, 1}));
    CHECK(pad_crop(img, 1, 2, 2) == Array({1, 2, 2}, std::vector<double>{4, 0, 0, 0}));
    CHECK_THROWS_AS(pad_crop(img, 1, 3, 0), ContractError);
}

TEST_CASE("property: augment keeps shape and range over 100 draws") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = 2 + rng.uniform_int(10), w = 2 + rng.uniform_int(10);
        const Array img = gradcheck::random_array({3, h, w}, rng, 0.0, 1.0);
        const Array out = augment(img, rng);
        CHECK(out.shape() == img.shape());
        for (double v : out.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS_AS(augment(Array({4, 4}, 0.0), rng), DimensionError);
}
