#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "garmnet/ctu.hpp"
#include "garmnet/synthetic.hpp"

using namespace garmnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("garmnet_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SyntheticDataset small_synthetic(std::size_t n = 18, std::uint64_t seed = 7) {
    SyntheticSceneConfig cfg;
    cfg.n_examples = n;
    cfg.image_size = 96;
    cfg.seed = seed;
    return generate_synthetic(cfg);
}

ManifestRecord record(const std::string& id, int cls) {
    ManifestRecord r;
    r.id = id;
    r.image = id + ".png";
    r.width = 200;
    r.height = 100;
    r.garment_class = cls;
    r.landmarks = {{0, {10, 20}}, {3, {150, 80}}};
    r.garment_box = derive_box(r.landmarks);
    return r;
}

}  // namespace

TEST(Taxonomy, DefaultSizesAndUniqueNames) {
    const auto t = Taxonomy::default_taxonomy();
    EXPECT_EQ(t.n_landmarks(), 27);
    EXPECT_EQ(t.n_garments(), 9);
    EXPECT_EQ(std::set<std::string>(t.landmarks.begin(), t.landmarks.end()).size(), 27u);
    EXPECT_EQ(std::set<std::string>(t.garments.begin(), t.garments.end()).size(), 9u);
    EXPECT_EQ(Taxonomy::from_json(t.to_json()), t);
    EXPECT_EQ(t.landmark_id("no_such"), -1);
}

TEST(Manifest, RoundTripsThroughDisk) {
    const auto ds = small_synthetic();
    const fs::path dir = temp_dir("manifest");
    write_synthetic(ds, dir);
    const auto m = read_manifest(dir / "manifest.jsonl");
    EXPECT_EQ(m.base_dir, dir);
    EXPECT_EQ(m.taxonomy, ds.manifest.taxonomy);
    ASSERT_EQ(m.records.size(), ds.manifest.records.size());
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m.records[i], ds.manifest.records[i]);

    const auto from_disk = load_examples(m, 64);
    const auto direct = synthetic_examples(ds, 64);
    ASSERT_EQ(from_disk.size(), direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
        EXPECT_EQ(from_disk[i].image, direct[i].image);
        EXPECT_EQ(from_disk[i].landmarks, direct[i].landmarks);
        EXPECT_EQ(from_disk[i].garment_box, direct[i].garment_box);
    }
    fs::remove_all(dir);
}

TEST(Manifest, RejectsBrokenInput) {
    const fs::path dir = temp_dir("manifest_bad");
    {
        std::ofstream(dir / "a.jsonl") << "{\"format\":\"other\"}\n";
    }
    EXPECT_THROW(read_manifest(dir / "a.jsonl"), DataError);
    EXPECT_THROW(read_manifest(dir / "missing.jsonl"), DataError);

    DatasetManifest m;
    m.records = {record("r0", 1)};
    write_manifest(m, dir / "b.jsonl");
    {
        std::ofstream(dir / "b.jsonl", std::ios::app)
            << R"({"id":"r1","image":"x.png","width":4,"height":4,"garment":{"id":42},"landmarks":[]})" << '\n';
    }
    EXPECT_THROW(read_manifest(dir / "b.jsonl"), DataError);
    fs::remove_all(dir);
}

TEST(Split, DisjointCompleteAndSeeded) {
    DatasetManifest m;
    for (int i = 0; i < 40; ++i) m.records.push_back(record("r" + std::to_string(i), i % 9));
    const auto [train, val] = split_dataset(m, 10, 5);
    EXPECT_EQ(val.size(), 10u);
    EXPECT_EQ(train.size(), 30u);
    std::set<std::string> ids;
    for (const auto& r : train.records) ids.insert(r.id);
    for (const auto& r : val.records) EXPECT_TRUE(ids.insert(r.id).second) << r.id;
    EXPECT_EQ(ids.size(), 40u);
    const auto again = split_dataset(m, 10, 5).second;
    EXPECT_EQ(again.records, val.records);
    EXPECT_NE(split_dataset(m, 10, 6).second.records, val.records);
    EXPECT_THROW(split_dataset(m, 40, 1), std::invalid_argument);
}

TEST(Balance, EveryClassReachesTheLargest) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const int n_classes = 2 + int(rng() % 8);
        std::vector<int> items;
        for (int c = 0; c < n_classes; ++c)
            for (int k = 0, n = 1 + int(rng() % 7); k < n; ++k) items.push_back(c * 100 + k);
        std::shuffle(items.begin(), items.end(), rng);
        const auto out = balance_by_class(items, n_classes, [](int v) { return v / 100; });
        std::vector<std::size_t> before(static_cast<std::size_t>(n_classes)), after = before;
        for (int v : items) ++before[std::size_t(v / 100)];
        for (int v : out) ++after[std::size_t(v / 100)];
        const std::size_t mx = *std::max_element(before.begin(), before.end());
        for (std::size_t c = 0; c < after.size(); ++c) EXPECT_EQ(after[c], mx);
        EXPECT_TRUE(std::equal(items.begin(), items.end(), out.begin()));
        // Repeats only ever copy existing items.
        const std::set<int> orig(items.begin(), items.end());
        for (int v : out) EXPECT_TRUE(orig.count(v));
    }
    EXPECT_THROW(balance_by_class(std::vector<int>{0, 0}, 2, [](int v) { return v; }), std::invalid_argument);
}

TEST(Augment, LeavesGeometryAndClassUntouched) {
    const auto ex = synthetic_examples(small_synthetic(4), 64);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto a = augment(ex[seed % 4], seed, AugmentConfig{true, 8, -18, 18});
        EXPECT_EQ(a.landmarks, ex[seed % 4].landmarks);
        EXPECT_EQ(a.garment_box, ex[seed % 4].garment_box);
        EXPECT_EQ(a.garment_class, ex[seed % 4].garment_class);
        EXPECT_NE(a.image, ex[seed % 4].image);
        EXPECT_EQ(augment(ex[seed % 4], seed, AugmentConfig{true, 8, -18, 18}).image, a.image);
    }
}

TEST(Augment, NoiseHasRequestedSpread) {
    Example e;
    e.image = Image(128, 128, 128);
    const auto a = augment(e, 99, 10.0, 0.0, 0.0);
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < a.image.pixels.size(); ++i) {
        const double d = double(a.image.pixels[i]) - 128.0;
        sum += d;
        sq += d * d;
    }
    const double n = double(a.image.pixels.size());
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    EXPECT_NEAR(sd, 10.0, 2.0);
    EXPECT_NEAR(sum / n, 0.0, 0.5);
}

TEST(Augment, IdentityWithoutNoiseOrHue) {
    const auto ex = synthetic_examples(small_synthetic(2), 64);
    EXPECT_EQ(augment(ex[0], 1, 0.0, 0.0, 0.0).image, ex[0].image);
    EXPECT_THROW(augment(ex[0], 1, -1.0, 0.0, 0.0), std::invalid_argument);
    EXPECT_THROW(augment(ex[0], 1, 1.0, 5.0, 0.0), std::invalid_argument);
}

TEST(Augment, HueRotationKeepsGreysAndShiftsColours) {
    Image img(2, 1);
    img.px(0, 0)[0] = img.px(0, 0)[1] = img.px(0, 0)[2] = 90;
    img.px(1, 0)[0] = 255;  // pure red
    rotate_hue(img, 120.0);
    EXPECT_EQ(img.px(0, 0)[0], 90);
    EXPECT_EQ(img.px(0, 0)[1], 90);
    EXPECT_EQ(img.px(0, 0)[2], 90);
    EXPECT_EQ(img.px(1, 0)[0], 0);
    EXPECT_EQ(img.px(1, 0)[1], 255);  // red + 120 degrees is green
    EXPECT_EQ(img.px(1, 0)[2], 0);
}

TEST(Synthetic, EveryExampleSatisfiesInvariants) {
    const auto ds = small_synthetic(36);
    const auto tax = Taxonomy::default_taxonomy();
    std::vector<int> per_class(9, 0);
    for (const auto& e : synthetic_examples(ds, 96)) {
        const auto errs = validate_example(e, 96, tax.n_landmarks(), tax.n_garments());
        EXPECT_TRUE(errs.empty()) << e.id << ": " << (errs.empty() ? "" : errs.front());
        EXPECT_GE(e.landmarks.size(), 4u);
        ++per_class[std::size_t(e.garment_class)];
    }
    // Templates are cycled, so no class is more than one ahead of another.
    const auto [lo, hi] = std::minmax_element(per_class.begin(), per_class.end());
    EXPECT_LE(*hi - *lo, 1);
}

TEST(Synthetic, DeterministicPerSeed) {
    const auto a = small_synthetic(6, 11), b = small_synthetic(6, 11), c = small_synthetic(6, 12);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(a.images[i], b.images[i]);
        EXPECT_EQ(a.manifest.records[i], b.manifest.records[i]);
    }
    EXPECT_NE(a.images[0], c.images[0]);
}

TEST(Synthetic, ScenesAreIndividuallyReproducible) {
    // The first scenes do not depend on how many follow them.
    const auto a = small_synthetic(3, 5), b = small_synthetic(9, 5);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.images[i], b.images[i]);
}

TEST(Rescale, BoxOfScaledLandmarksIsScaledBox) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 50; ++t) {
        ManifestRecord r;
        r.width = 50 + int(rng() % 400);
        r.height = 50 + int(rng() % 400);
        for (int k = 0; k < 1 + t % 8; ++k) r.landmarks.push_back({k, {u(rng) * r.width, u(rng) * r.height}});
        r.garment_box = derive_box(r.landmarks);
        const auto e = make_example(r, Image(r.width, r.height, 10), 64);
        EXPECT_EQ(e.image.width, 64);
        const Box b = derive_box(e.landmarks);
        EXPECT_NEAR(b.x_min, e.garment_box.x_min, 1e-9);
        EXPECT_NEAR(b.y_min, e.garment_box.y_min, 1e-9);
        EXPECT_NEAR(b.x_max, e.garment_box.x_max, 1e-9);
        EXPECT_NEAR(b.y_max, e.garment_box.y_max, 1e-9);
        EXPECT_TRUE(validate_example(e, 64).empty());
        // Scaling back recovers the original coordinates.
        for (std::size_t k = 0; k < r.landmarks.size(); ++k) {
            EXPECT_NEAR(e.landmarks[k].point.x / e.scale_x, r.landmarks[k].point.x, 1e-9);
            EXPECT_NEAR(e.landmarks[k].point.y / e.scale_y, r.landmarks[k].point.y, 1e-9);
        }
    }
}

TEST(Validate, ReportsViolations) {
    Example e;
    e.image = Image(64, 64);
    e.landmarks = {{1, {10, 10}}, {1, {70, 5}}};
    e.garment_box = {0, 0, 1, 1};
    e.garment_class = 12;
    const auto errs = validate_example(e, 64);
    EXPECT_GE(errs.size(), 4u);
}

TEST(CtuLoader, MapsLabelsMergesGroupsAndReportsBrokenFiles) {
    const fs::path root = temp_dir("ctu");
    fs::create_directories(root / "flat");
    fs::create_directories(root / "folded");
    cv::imwrite((root / "flat" / "a.png").string(), cv::Mat(100, 200, CV_8UC3, cv::Scalar(30, 60, 90)));
    cv::imwrite((root / "folded" / "b.png").string(), cv::Mat(80, 80, CV_8UC3, cv::Scalar(1, 2, 3)));
    {
        std::ofstream(root / "flat" / "a.yaml") << "type: T-shirt\npoints:\n  - [LS, 20, 30]\n  - [RS, 180, 40]\n"
                                                   "  - {label: BL, x: 25, y: 95}\n";
        std::ofstream(root / "folded" / "b.yaml") << "type: Towel\npoints:\n  - [F1, 10, 70]\n  - [F2, 60, 20]\n";
        std::ofstream(root / "folded" / "c.yaml") << "type: Sock\npoints:\n  - [F1, 1, 1]\n";
    }
    YAML::Node map = YAML::Load(
        "garments: {T-shirt: tshirt, Towel: folded_towel}\n"
        "landmarks: {LS: left_shoulder, RS: right_shoulder, BL: bottom_left, F1: fold_1, F2: fold_2}\n");
    const auto tax = Taxonomy::default_taxonomy();
    const auto res = load_ctu_dataset(root, CtuMapping::from_yaml(map), tax);
    ASSERT_EQ(res.manifest.size(), 2u);
    ASSERT_EQ(res.errors.size(), 1u);
    EXPECT_NE(res.errors[0].find("Sock"), std::string::npos);

    const auto& a = res.manifest.records[0];
    EXPECT_EQ(a.id, "flat/a");
    EXPECT_EQ(a.group, "flat");
    EXPECT_EQ(a.width, 200);
    EXPECT_EQ(a.height, 100);
    EXPECT_EQ(a.garment_class, tax.garment_id("tshirt"));
    ASSERT_EQ(a.landmarks.size(), 3u);
    EXPECT_EQ(a.landmarks[0].class_id, tax.landmark_id("left_shoulder"));
    EXPECT_EQ(a.garment_box, (Box{20, 30, 180, 95}));
    EXPECT_EQ(res.manifest.records[1].garment_class, tax.garment_id("folded_towel"));

    const auto ex = load_examples(res.manifest, 64);
    EXPECT_TRUE(validate_example(ex[0], 64).empty());
    EXPECT_NEAR(ex[0].landmarks[1].point.x, 180 * 64.0 / 200, 1e-12);
    EXPECT_NEAR(ex[0].landmarks[1].point.y, 40 * 64.0 / 100, 1e-12);
    fs::remove_all(root);
}

TEST(CtuLoader, RowColumnOrderAndOutOfImageCheck) {
    const fs::path root = temp_dir("ctu_yx");
    cv::imwrite((root / "x.png").string(), cv::Mat(50, 100, CV_8UC3, cv::Scalar(0, 0, 0)));
    {
        std::ofstream(root / "x.yaml") << "type: towel\npoints:\n  - [fold_1, 40, 90]\n";
    }
    CtuMapping m;
    m.axis_order = AxisOrder::yx;
    const auto res = load_ctu_dataset(root, m);
    ASSERT_EQ(res.manifest.size(), 1u);
    EXPECT_EQ(res.manifest.records[0].landmarks[0].point, (Point{90, 40}));
    // Read as (x, y) the point would fall below the 50-row image.
    EXPECT_THROW(load_ctu_dataset(root, CtuMapping{}), DataError);
    fs::remove_all(root);
}
