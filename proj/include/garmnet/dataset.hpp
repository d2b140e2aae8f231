#pragma once

/**
 * @file garmnet/dataset.hpp
 * @brief Label taxonomy, JSON-lines manifests, example loading, splits,
 *        class balancing and photometric augmentation.
 */

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "garmnet/geometry.hpp"
#include "garmnet/image.hpp"

namespace garmnet {

/// Raised for malformed or inconsistent input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Taxonomy {
    std::vector<std::string> garments;
    std::vector<std::string> landmarks;

    int garment_id(const std::string& name) const { return find(garments, name); }
    int landmark_id(const std::string& name) const { return find(landmarks, name); }
    int n_garments() const { return int(garments.size()); }
    int n_landmarks() const { return int(landmarks.size()); }

    static Taxonomy default_taxonomy() {
        return {{"towel", "skirt", "pants", "shorts", "tshirt", "long_tshirt", "polo", "hoody", "folded_towel"},
                {"left_leg_outer", "left_leg_inner", "crotch", "right_leg_inner", "right_leg_outer",
                 "top_right", "top_left", "right_sleeve_inner", "right_sleeve_outer", "left_sleeve_inner",
                 "left_sleeve_outer", "hood_right", "hood_top", "hood_left", "bottom_left",
                 "bottom_middle", "bottom_right", "right_armpit", "right_shoulder", "neckline_right",
                 "collar_right", "collar_left", "neckline_left", "left_shoulder", "left_armpit",
                 "fold_1", "fold_2"}};
    }

    nlohmann::json to_json() const { return {{"garments", garments}, {"landmarks", landmarks}}; }
    static Taxonomy from_json(const nlohmann::json& j) {
        return {j.at("garments").get<std::vector<std::string>>(), j.at("landmarks").get<std::vector<std::string>>()};
    }
    friend bool operator==(const Taxonomy&, const Taxonomy&) = default;

private:
    static int find(const std::vector<std::string>& v, const std::string& name) {
        auto it = std::find(v.begin(), v.end(), name);
        return it == v.end() ? -1 : int(it - v.begin());
    }
};

struct LandmarkAnnotation {
    int class_id = 0;
    Point point;

    friend bool operator==(const LandmarkAnnotation&, const LandmarkAnnotation&) = default;
};

/// One annotated image as referenced by a manifest; coordinates in original pixels.
struct ManifestRecord {
    std::string id;
    std::string image;  // relative to the manifest directory, or absolute
    int width = 0;
    int height = 0;
    int garment_class = 0;
    std::vector<LandmarkAnnotation> landmarks;
    Box garment_box;
    std::string group;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
    Taxonomy taxonomy = Taxonomy::default_taxonomy();
    std::string split = "all";
    std::vector<ManifestRecord> records;
    std::filesystem::path base_dir;  // resolves relative image paths; not serialised

    std::size_t size() const { return records.size(); }
    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(std::size_t(taxonomy.n_garments()), 0);
        for (const auto& r : records)
            if (r.garment_class >= 0 && r.garment_class < taxonomy.n_garments()) ++counts[std::size_t(r.garment_class)];
        return counts;
    }
};

/// A training-ready example: image resized to the network input, annotations rescaled.
struct Example {
    std::string id;
    Image image;
    int garment_class = 0;
    std::vector<LandmarkAnnotation> landmarks;
    Box garment_box;
    double scale_x = 1.0;  // network pixels per original pixel
    double scale_y = 1.0;

    std::vector<Point> points() const {
        std::vector<Point> p;
        for (const auto& l : landmarks) p.push_back(l.point);
        return p;
    }
    std::vector<ClassPoint> class_points() const {
        std::vector<ClassPoint> p;
        for (const auto& l : landmarks) p.push_back({l.class_id, l.point});
        return p;
    }
};

inline constexpr const char* kManifestFormat = "garmnet-manifest";
inline constexpr int kManifestVersion = 1;

inline Box derive_box(const std::vector<LandmarkAnnotation>& landmarks) {
    std::vector<Point> pts;
    for (const auto& l : landmarks) pts.push_back(l.point);
    return derive_garment_box(pts);
}

inline nlohmann::json record_to_json(const ManifestRecord& r, const Taxonomy& tax) {
    nlohmann::json lms = nlohmann::json::array();
    for (const auto& l : r.landmarks)
        lms.push_back({{"id", l.class_id}, {"name", tax.landmarks.at(std::size_t(l.class_id))},
                       {"x", l.point.x}, {"y", l.point.y}});
    nlohmann::json j{{"id", r.id},
                     {"image", r.image},
                     {"width", r.width},
                     {"height", r.height},
                     {"garment", {{"id", r.garment_class}, {"name", tax.garments.at(std::size_t(r.garment_class))}}},
                     {"landmarks", lms},
                     {"box", {r.garment_box.x_min, r.garment_box.y_min, r.garment_box.x_max, r.garment_box.y_max}}};
    if (!r.group.empty()) j["group"] = r.group;
    return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j, const Taxonomy& tax) {
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.image = j.at("image").get<std::string>();
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.garment_class = j.at("garment").at("id").get<int>();
    if (r.garment_class < 0 || r.garment_class >= tax.n_garments())
        throw DataError("record " + r.id + ": garment id out of range");
    std::set<int> seen;
    for (const auto& l : j.at("landmarks")) {
        LandmarkAnnotation a{l.at("id").get<int>(), {l.at("x").get<double>(), l.at("y").get<double>()}};
        if (a.class_id < 0 || a.class_id >= tax.n_landmarks())
            throw DataError("record " + r.id + ": landmark id out of range");
        if (!seen.insert(a.class_id).second)
            throw DataError("record " + r.id + ": landmark class " + std::to_string(a.class_id) + " repeated");
        r.landmarks.push_back(a);
    }
    if (r.landmarks.empty()) throw DataError("record " + r.id + ": no landmarks");
    if (j.contains("box")) {
        const auto& b = j.at("box");
        r.garment_box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
    } else {
        r.garment_box = derive_box(r.landmarks);
    }
    r.group = j.value("group", std::string{});
    return r;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write manifest " + path.string());
    nlohmann::json header{{"format", kManifestFormat},
                          {"version", kManifestVersion},
                          {"split", m.split},
                          {"count", m.records.size()},
                          {"taxonomy", m.taxonomy.to_json()}};
    os << header.dump() << '\n';
    for (const auto& r : m.records) os << record_to_json(r, m.taxonomy).dump() << '\n';
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest " + path.string());
    DatasetManifest m;
    m.base_dir = path.parent_path();
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty manifest " + path.string());
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", std::string{}) != kManifestFormat)
        throw DataError(path.string() + ": missing manifest header");
    if (header.value("version", 0) != kManifestVersion)
        throw DataError(path.string() + ": unsupported manifest version");
    m.split = header.value("split", std::string{"all"});
    if (header.contains("taxonomy")) m.taxonomy = Taxonomy::from_json(header.at("taxonomy"));
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            m.records.push_back(record_from_json(nlohmann::json::parse(line), m.taxonomy));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return m;
}

inline std::filesystem::path resolve_image(const DatasetManifest& m, const ManifestRecord& r) {
    std::filesystem::path p(r.image);
    return p.is_absolute() ? p : m.base_dir / p;
}

/// Resize an image and its annotations to input_size x input_size.
inline Example make_example(const ManifestRecord& r, const Image& original, int input_size) {
    Example e;
    e.id = r.id;
    e.garment_class = r.garment_class;
    e.scale_x = double(input_size) / original.width;
    e.scale_y = double(input_size) / original.height;
    e.image = resize_image(original, input_size, input_size);
    for (const auto& l : r.landmarks) e.landmarks.push_back({l.class_id, {l.point.x * e.scale_x, l.point.y * e.scale_y}});
    e.garment_box = r.garment_box.scaled(e.scale_x, e.scale_y);
    return e;
}

inline Example load_example(const DatasetManifest& m, const ManifestRecord& r, int input_size) {
    return make_example(r, load_image(resolve_image(m, r)), input_size);
}

inline std::vector<Example> load_examples(const DatasetManifest& m, int input_size) {
    std::vector<Example> out;
    out.reserve(m.size());
    for (const auto& r : m.records) out.push_back(load_example(m, r, input_size));
    return out;
}

/// Empty when the example satisfies every invariant; otherwise one message per violation.
inline std::vector<std::string> validate_example(const Example& e, int input_size, int n_landmarks = 27,
                                                 int n_garments = 9, double tol = 1e-6) {
    std::vector<std::string> errs;
    if (e.image.width != input_size || e.image.height != input_size)
        errs.push_back("image is " + std::to_string(e.image.width) + "x" + std::to_string(e.image.height));
    if (e.garment_class < 0 || e.garment_class >= n_garments) errs.push_back("garment class out of range");
    if (e.landmarks.empty()) {
        errs.push_back("no landmarks");
        return errs;
    }
    std::set<int> seen;
    for (const auto& l : e.landmarks) {
        if (l.class_id < 0 || l.class_id >= n_landmarks) errs.push_back("landmark class out of range");
        if (!seen.insert(l.class_id).second) errs.push_back("landmark class repeated");
        if (!std::isfinite(l.point.x) || !std::isfinite(l.point.y) || l.point.x < -tol || l.point.y < -tol ||
            l.point.x > input_size + tol || l.point.y > input_size + tol)
            errs.push_back("landmark outside the image");
    }
    const Box b = derive_box(e.landmarks);
    if (std::abs(b.x_min - e.garment_box.x_min) > tol || std::abs(b.y_min - e.garment_box.y_min) > tol ||
        std::abs(b.x_max - e.garment_box.x_max) > tol || std::abs(b.y_max - e.garment_box.y_max) > tol)
        errs.push_back("garment box is not the landmark extent");
    return errs;
}

/// Seeded disjoint split; records keep their manifest order inside each part.
inline std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& m, std::size_t val_count,
                                                                 std::uint64_t seed) {
    if (val_count >= m.size())
        throw std::invalid_argument("split_dataset: validation count " + std::to_string(val_count) +
                                    " must be smaller than the dataset (" + std::to_string(m.size()) + ")");
    std::vector<std::size_t> idx(m.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::uint8_t> is_val(m.size(), 0);
    for (std::size_t k = 0; k < val_count; ++k) is_val[idx[k]] = 1;

    DatasetManifest train = m, val = m;
    train.records.clear();
    val.records.clear();
    train.split = "train";
    val.split = "validation";
    for (std::size_t i = 0; i < m.size(); ++i) (is_val[i] ? val : train).records.push_back(m.records[i]);
    return {train, val};
}

/**
 * Repeat examples of the less numerous garment classes, cycling through each
 * class's examples in order, until every class matches the largest one.
 * Originals keep their positions; repeats are appended class by class.
 */
template <typename Item, typename ClassOf>
std::vector<Item> balance_by_class(const std::vector<Item>& items, int n_classes, ClassOf class_of) {
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < items.size(); ++i) {
        const int c = class_of(items[i]);
        if (c < 0 || c >= n_classes) throw std::invalid_argument("balance_classes: class id out of range");
        members[std::size_t(c)].push_back(i);
    }
    std::size_t target = 0;
    for (std::size_t c = 0; c < members.size(); ++c) {
        if (members[c].empty())
            throw std::invalid_argument("balance_classes: garment class " + std::to_string(c) + " has no examples");
        target = std::max(target, members[c].size());
    }
    std::vector<Item> out = items;
    for (const auto& mem : members)
        for (std::size_t k = mem.size(); k < target; ++k) out.push_back(items[mem[k % mem.size()]]);
    return out;
}

inline DatasetManifest balance_classes(const DatasetManifest& m, std::optional<int> n_classes = std::nullopt) {
    DatasetManifest out = m;
    out.records = balance_by_class(m.records, n_classes.value_or(m.taxonomy.n_garments()),
                                   [](const ManifestRecord& r) { return r.garment_class; });
    return out;
}

struct AugmentConfig {
    bool enabled = false;
    double gaussian_sigma = 8.0;       // in 0..255 intensity units
    double hue_delta_min = -18.0;      // degrees
    double hue_delta_max = 18.0;
};

namespace detail {

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
    v = mx;
    s = mx > 0 ? d / mx : 0;
    if (d <= 0) {
        h = 0;
        return;
    }
    if (mx == r)
        h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    else if (mx == g)
        h = 60.0 * ((b - r) / d + 2.0);
    else
        h = 60.0 * ((r - g) / d + 4.0);
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s, hp = h / 60.0, x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1)), m = v - c;
    double r1 = 0, g1 = 0, b1 = 0;
    switch (int(hp) % 6) {
        case 0: r1 = c, g1 = x; break;
        case 1: r1 = x, g1 = c; break;
        case 2: g1 = c, b1 = x; break;
        case 3: g1 = x, b1 = c; break;
        case 4: r1 = x, b1 = c; break;
        default: r1 = c, b1 = x; break;
    }
    r = r1 + m, g = g1 + m, b = b1 + m;
}

inline std::uint8_t to_byte(double v) { return std::uint8_t(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace detail

/// Rotate every pixel's hue by delta degrees.
inline void rotate_hue(Image& img, double delta) {
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        double h, s, v, r, g, b;
        detail::rgb_to_hsv(img.pixels[i], img.pixels[i + 1], img.pixels[i + 2], h, s, v);
        h = std::fmod(h + delta, 360.0);
        if (h < 0) h += 360.0;
        detail::hsv_to_rgb(h, s, v, r, g, b);
        img.pixels[i] = detail::to_byte(r);
        img.pixels[i + 1] = detail::to_byte(g);
        img.pixels[i + 2] = detail::to_byte(b);
    }
}

/// Photometric-only augmentation: uniform hue rotation then clipped Gaussian pixel noise.
inline Example augment(const Example& e, std::uint64_t seed, double gaussian_sigma, double hue_min, double hue_max) {
    if (gaussian_sigma < 0) throw std::invalid_argument("augment: sigma must be non-negative");
    if (hue_min > hue_max) throw std::invalid_argument("augment: empty hue range");
    Example out = e;
    std::mt19937_64 rng(seed);
    const double delta = hue_min == hue_max ? hue_min : std::uniform_real_distribution<double>(hue_min, hue_max)(rng);
    if (delta != 0.0) rotate_hue(out.image, delta);
    if (gaussian_sigma > 0) {
        std::normal_distribution<double> noise(0.0, gaussian_sigma);
        for (auto& p : out.image.pixels) p = detail::to_byte(p + noise(rng));
    }
    return out;
}

inline Example augment(const Example& e, std::uint64_t seed, const AugmentConfig& cfg) {
    return augment(e, seed, cfg.gaussian_sigma, cfg.hue_delta_min, cfg.hue_delta_max);
}

}  // namespace garmnet
