#pragma once

/**
 * @file garmnet/ctu.hpp
 * @brief Loader for the CTU spread-garment image collection.
 *
 * The loader walks every group directory below the root (the flat/wrinkled
 * and folded groups are merged), pairs each annotation file with the image
 * of the same stem, maps source labels onto the taxonomy through a small
 * mapping file, and derives the garment box from the landmark extent.
 *
 * Mapping file (YAML, every key optional):
 *
 *     annotation_extension: .yaml
 *     image_extensions: [.png, .jpg, .jpeg]
 *     axis_order: xy            # or yx when points are stored (row, col)
 *     garment_key: type
 *     points_key: points
 *     garments: {source-label: taxonomy-name, ...}
 *     landmarks: {source-label: taxonomy-name, ...}
 *
 * Annotation file: a YAML map with the garment label under garment_key and a
 * list under points_key whose items are either [label, a, b] or
 * {label: ..., x: ..., y: ...}. An optional "image" key names the image file.
 */

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "garmnet/dataset.hpp"
#include "garmnet/image.hpp"

namespace garmnet {

enum class AxisOrder { xy, yx };

struct CtuMapping {
    std::string annotation_extension = ".yaml";
    std::vector<std::string> image_extensions{".png", ".jpg", ".jpeg"};
    AxisOrder axis_order = AxisOrder::xy;
    std::string garment_key = "type";
    std::string points_key = "points";
    std::map<std::string, std::string> garments;   // empty: labels already taxonomy names
    std::map<std::string, std::string> landmarks;

    static CtuMapping from_yaml(const YAML::Node& n) {
        CtuMapping m;
        if (!n || n.IsNull()) return m;
        if (n["annotation_extension"]) m.annotation_extension = n["annotation_extension"].as<std::string>();
        if (n["image_extensions"]) m.image_extensions = n["image_extensions"].as<std::vector<std::string>>();
        if (n["axis_order"]) {
            const auto s = n["axis_order"].as<std::string>();
            if (s != "xy" && s != "yx") throw std::invalid_argument("axis_order must be xy or yx");
            m.axis_order = s == "xy" ? AxisOrder::xy : AxisOrder::yx;
        }
        if (n["garment_key"]) m.garment_key = n["garment_key"].as<std::string>();
        if (n["points_key"]) m.points_key = n["points_key"].as<std::string>();
        if (n["garments"]) m.garments = n["garments"].as<std::map<std::string, std::string>>();
        if (n["landmarks"]) m.landmarks = n["landmarks"].as<std::map<std::string, std::string>>();
        return m;
    }

    static CtuMapping load(const std::filesystem::path& p) { return from_yaml(YAML::LoadFile(p.string())); }
};

struct CtuLoadResult {
    DatasetManifest manifest;
    std::vector<std::string> errors;  // "<path>: <reason>" per rejected example
};

namespace detail {

inline std::string map_label(const std::map<std::string, std::string>& m, const std::string& s) {
    if (m.empty()) return s;
    auto it = m.find(s);
    return it == m.end() ? std::string{} : it->second;
}

inline ManifestRecord parse_ctu_annotation(const std::filesystem::path& ann, const std::filesystem::path& root,
                                           const CtuMapping& map, const Taxonomy& tax) {
    const YAML::Node doc = YAML::LoadFile(ann.string());
    ManifestRecord r;
    const auto rel = std::filesystem::relative(ann, root);
    r.id = (rel.parent_path() / rel.stem()).generic_string();
    r.group = rel.begin() != rel.end() && rel.has_parent_path() ? rel.begin()->string() : std::string{};

    if (!doc[map.garment_key]) throw DataError("missing garment label '" + map.garment_key + "'");
    const std::string glabel = doc[map.garment_key].as<std::string>();
    r.garment_class = tax.garment_id(map_label(map.garments, glabel));
    if (r.garment_class < 0) throw DataError("unknown garment label '" + glabel + "'");

    const YAML::Node pts = doc[map.points_key];
    if (!pts || !pts.IsSequence()) throw DataError("missing landmark list '" + map.points_key + "'");
    std::set<int> seen;
    for (const auto& p : pts) {
        std::string label;
        double a = 0, b = 0;
        if (p.IsSequence() && p.size() == 3) {
            label = p[0].as<std::string>();
            a = p[1].as<double>();
            b = p[2].as<double>();
        } else if (p.IsMap() && p["label"] && p["x"] && p["y"]) {
            label = p["label"].as<std::string>();
            a = p["x"].as<double>();
            b = p["y"].as<double>();
        } else {
            throw DataError("malformed landmark entry");
        }
        const int id = tax.landmark_id(map_label(map.landmarks, label));
        if (id < 0) throw DataError("unknown landmark label '" + label + "'");
        if (!seen.insert(id).second) throw DataError("landmark '" + label + "' annotated twice");
        const Point pt = map.axis_order == AxisOrder::xy ? Point{a, b} : Point{b, a};
        r.landmarks.push_back({id, pt});
    }
    if (r.landmarks.empty()) throw DataError("no landmarks");

    std::filesystem::path img;
    if (doc["image"]) {
        img = ann.parent_path() / doc["image"].as<std::string>();
    } else {
        for (const auto& ext : map.image_extensions) {
            auto cand = ann;
            cand.replace_extension(ext);
            if (std::filesystem::exists(cand)) {
                img = cand;
                break;
            }
        }
    }
    if (img.empty() || !std::filesystem::exists(img)) throw DataError("no image next to the annotation");
    const cv::Mat probe = cv::imread(img.string(), cv::IMREAD_COLOR);
    if (probe.empty()) throw DataError("unreadable image " + img.string());
    r.width = probe.cols;
    r.height = probe.rows;
    for (const auto& l : r.landmarks)
        if (l.point.x < 0 || l.point.y < 0 || l.point.x > r.width || l.point.y > r.height)
            throw DataError("landmark outside the image; check axis_order");
    r.image = std::filesystem::relative(img, root).generic_string();
    r.garment_box = derive_box(r.landmarks);  // original pixel coordinates
    return r;
}

}  // namespace detail

/**
 * Parse every annotation under root. Broken examples are reported in
 * errors and skipped; the call throws DataError only when nothing parses.
 * Image paths in the manifest are relative to root.
 */
inline CtuLoadResult load_ctu_dataset(const std::filesystem::path& root, const CtuMapping& map = {},
                                      const Taxonomy& tax = Taxonomy::default_taxonomy()) {
    if (!std::filesystem::is_directory(root)) throw DataError("not a directory: " + root.string());
    std::vector<std::filesystem::path> annotations;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().extension() == map.annotation_extension) annotations.push_back(e.path());
    std::sort(annotations.begin(), annotations.end());

    CtuLoadResult res;
    res.manifest.taxonomy = tax;
    res.manifest.base_dir = root;
    for (const auto& ann : annotations) {
        try {
            res.manifest.records.push_back(detail::parse_ctu_annotation(ann, root, map, tax));
        } catch (const std::exception& e) {
            res.errors.push_back(ann.string() + ": " + e.what());
        }
    }
    if (res.manifest.records.empty())
        throw DataError("no examples parsed under " + root.string() +
                        (res.errors.empty() ? std::string{} : " (first error: " + res.errors.front() + ")"));
    return res;
}

}  // namespace garmnet
