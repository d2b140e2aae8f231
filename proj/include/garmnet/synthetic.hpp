#pragma once

/**
 * @file garmnet/synthetic.hpp
 * @brief Procedural garment scenes: a deformed garment polygon drawn over a
 *        wood-plank background, with the deformed template landmarks as
 *        ground truth.
 */

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "garmnet/dataset.hpp"
#include "garmnet/geometry.hpp"
#include "garmnet/image.hpp"

namespace garmnet {

/// Polygon vertex in a canonical frame (roughly [-1, 1], y down), optionally a landmark.
struct TemplateVertex {
    double x = 0.0;
    double y = 0.0;
    const char* landmark = nullptr;
};

struct GarmentTemplate {
    std::string garment;
    std::vector<TemplateVertex> outline;

    std::vector<std::string> landmark_names() const {
        std::vector<std::string> n;
        for (const auto& v : outline)
            if (v.landmark) n.emplace_back(v.landmark);
        return n;
    }
};

inline std::vector<GarmentTemplate> default_templates() {
    return {
        {"towel",
         {{-0.8, -0.6, "top_left"}, {0.8, -0.6, "top_right"}, {0.8, 0.6, "bottom_right"}, {-0.8, 0.6, "bottom_left"}}},
        {"skirt",
         {{-0.45, -0.7, "top_left"},
          {0.45, -0.7, "top_right"},
          {0.85, 0.7, "bottom_right"},
          {0.0, 0.78, "bottom_middle"},
          {-0.85, 0.7, "bottom_left"}}},
        {"pants",
         {{-0.5, -0.85, "top_left"},
          {0.5, -0.85, "top_right"},
          {0.62, 0.88, "right_leg_outer"},
          {0.16, 0.88, "right_leg_inner"},
          {0.0, -0.1, "crotch"},
          {-0.16, 0.88, "left_leg_inner"},
          {-0.62, 0.88, "left_leg_outer"}}},
        {"shorts",
         {{-0.65, -0.55, "top_left"},
          {0.65, -0.55, "top_right"},
          {0.85, 0.5, "right_leg_outer"},
          {0.22, 0.6, "right_leg_inner"},
          {0.0, 0.08, "crotch"},
          {-0.22, 0.6, "left_leg_inner"},
          {-0.85, 0.5, "left_leg_outer"}}},
        {"tshirt",
         {{-0.22, -0.75, "neckline_left"},
          {0.0, -0.6, nullptr},
          {0.22, -0.75, "neckline_right"},
          {0.52, -0.66, "right_shoulder"},
          {0.95, -0.22, "right_sleeve_outer"},
          {0.74, 0.04, "right_sleeve_inner"},
          {0.48, -0.18, "right_armpit"},
          {0.5, 0.82, "bottom_right"},
          {-0.5, 0.82, "bottom_left"},
          {-0.48, -0.18, "left_armpit"},
          {-0.74, 0.04, "left_sleeve_inner"},
          {-0.95, -0.22, "left_sleeve_outer"},
          {-0.52, -0.66, "left_shoulder"}}},
        {"long_tshirt",
         {{-0.2, -0.78, "neckline_left"},
          {0.0, -0.64, nullptr},
          {0.2, -0.78, "neckline_right"},
          {0.46, -0.7, "right_shoulder"},
          {0.98, 0.5, "right_sleeve_outer"},
          {0.72, 0.62, "right_sleeve_inner"},
          {0.42, -0.2, "right_armpit"},
          {0.44, 0.88, "bottom_right"},
          {-0.44, 0.88, "bottom_left"},
          {-0.42, -0.2, "left_armpit"},
          {-0.72, 0.62, "left_sleeve_inner"},
          {-0.98, 0.5, "left_sleeve_outer"},
          {-0.46, -0.7, "left_shoulder"}}},
        {"polo",
         {{-0.18, -0.86, "collar_left"},
          {0.0, -0.62, nullptr},
          {0.18, -0.86, "collar_right"},
          {0.5, -0.68, "right_shoulder"},
          {0.8, -0.3, "right_sleeve_outer"},
          {0.62, -0.1, "right_sleeve_inner"},
          {0.42, -0.28, "right_armpit"},
          {0.45, 0.9, "bottom_right"},
          {-0.45, 0.9, "bottom_left"},
          {-0.42, -0.28, "left_armpit"},
          {-0.62, -0.1, "left_sleeve_inner"},
          {-0.8, -0.3, "left_sleeve_outer"},
          {-0.5, -0.68, "left_shoulder"}}},
        {"hoody",
         {{-0.3, -0.78, "hood_left"},
          {0.3, -0.78, "hood_right"},
          {0.5, -0.58, "right_shoulder"},
          {0.92, 0.6, "right_sleeve_outer"},
          {0.66, 0.7, "right_sleeve_inner"},
          {0.44, -0.1, "right_armpit"},
          {0.5, 0.88, "bottom_right"},
          {-0.5, 0.88, "bottom_left"},
          {-0.44, -0.1, "left_armpit"},
          {-0.66, 0.7, "left_sleeve_inner"},
          {-0.92, 0.6, "left_sleeve_outer"},
          {-0.5, -0.58, "left_shoulder"}}},
        {"folded_towel",
         {{-0.8, -0.6, "top_left"},
          {0.15, -0.6, "fold_1"},
          {0.8, 0.0, "fold_2"},
          {0.8, 0.6, "bottom_right"},
          {0.0, 0.6, "bottom_middle"},
          {-0.8, 0.6, "bottom_left"}}},
    };
}

struct SyntheticSceneConfig {
    std::size_t n_examples = 32;
    int image_size = 128;
    std::vector<std::string> templates;  // empty: all default templates, cycled
    // Garment size: one canonical unit spans this fraction of the image.
    double base_scale = 0.42;
    double scale_min = 0.85;
    double scale_max = 1.0;
    double rotation_deg = 12.0;
    double jitter = 0.03;  // per-vertex std, canonical units
    // Landmarks are kept inside [placement_min, placement_max] * image_size.
    double placement_min = 0.05;
    double placement_max = 0.88;
    double background_noise = 6.0;
    bool deform = true;
    std::uint64_t seed = 7;
};

struct SyntheticDataset {
    DatasetManifest manifest;
    std::vector<Image> images;  // parallel to manifest.records
};

namespace detail {

inline cv::Scalar hsv_color(double h, double s, double v) {
    double r, g, b;
    hsv_to_rgb(std::fmod(h, 360.0), s, v, r, g, b);
    return cv::Scalar(r * 255, g * 255, b * 255);  // RGB order; the canvas is RGB
}

inline void paint_background(cv::Mat& canvas, std::mt19937_64& rng, double noise_std) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double hue = 22 + 14 * u(rng), sat = 0.35 + 0.25 * u(rng), val = 0.45 + 0.3 * u(rng);
    const double plank = canvas.rows / (4.0 + 3.0 * u(rng));
    const double grain_f = 0.15 + 0.2 * u(rng), phase = 6.28 * u(rng);
    std::normal_distribution<double> n(0.0, noise_std);
    for (int y = 0; y < canvas.rows; ++y) {
        const int row_plank = int(y / plank);
        const double plank_shift = 0.06 * std::sin(1.7 * row_plank + phase);
        auto* p = canvas.ptr<cv::Vec3b>(y);
        for (int x = 0; x < canvas.cols; ++x) {
            const double grain = 0.05 * std::sin(grain_f * x + 0.3 * y / plank + phase + row_plank);
            const double seam = (std::fmod(y, plank) < 1.0) ? -0.12 : 0.0;
            double r, g, b;
            hsv_to_rgb(hue, sat, std::clamp(val + plank_shift + grain + seam, 0.0, 1.0), r, g, b);
            p[x] = {to_byte(r * 255 + n(rng)), to_byte(g * 255 + n(rng)), to_byte(b * 255 + n(rng))};
        }
    }
}

}  // namespace detail

inline const GarmentTemplate& find_template(const std::vector<GarmentTemplate>& all, const std::string& name) {
    for (const auto& t : all)
        if (t.garment == name) return t;
    throw std::invalid_argument("unknown garment template '" + name + "'");
}

/// Check templates against the taxonomy: known garment, known landmarks, at least 4 of them.
inline void validate_templates(const std::vector<GarmentTemplate>& templates, const Taxonomy& tax) {
    for (const auto& t : templates) {
        if (tax.garment_id(t.garment) < 0)
            throw std::invalid_argument("template '" + t.garment + "' is not a garment class");
        const auto names = t.landmark_names();
        if (names.size() < 4) throw std::invalid_argument("template '" + t.garment + "' has fewer than 4 landmarks");
        std::set<std::string> seen;
        for (const auto& n : names) {
            if (tax.landmark_id(n) < 0)
                throw std::invalid_argument("template '" + t.garment + "' uses unknown landmark '" + n + "'");
            if (!seen.insert(n).second)
                throw std::invalid_argument("template '" + t.garment + "' repeats landmark '" + n + "'");
        }
    }
}

/**
 * Render n_examples scenes. Templates are cycled in order so classes stay
 * balanced; every random draw comes from a generator seeded with
 * (seed, example index), so scenes are reproducible individually.
 */
inline SyntheticDataset generate_synthetic(const SyntheticSceneConfig& cfg,
                                           const Taxonomy& tax = Taxonomy::default_taxonomy()) {
    if (cfg.image_size < 16) throw std::invalid_argument("synthetic image_size must be at least 16");
    if (!(cfg.placement_min < cfg.placement_max)) throw std::invalid_argument("synthetic placement range is empty");
    const auto all = default_templates();
    std::vector<GarmentTemplate> chosen;
    if (cfg.templates.empty())
        chosen = all;
    else
        for (const auto& name : cfg.templates) chosen.push_back(find_template(all, name));
    validate_templates(chosen, tax);

    SyntheticDataset ds;
    ds.manifest.taxonomy = tax;
    ds.manifest.split = "all";
    const double size = cfg.image_size;
    const double lo = cfg.placement_min * size, hi = cfg.placement_max * size;

    for (std::size_t n = 0; n < cfg.n_examples; ++n) {
        const GarmentTemplate& tpl = chosen[n % chosen.size()];
        std::seed_seq seq{std::uint64_t(cfg.seed), std::uint64_t(n), std::uint64_t(0x5eed)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> gauss(0.0, 1.0);

        cv::Mat canvas(cfg.image_size, cfg.image_size, CV_8UC3);
        detail::paint_background(canvas, rng, cfg.background_noise);

        // Deform in the canonical frame, then map to pixels.
        const double angle = cfg.deform ? (2 * u(rng) - 1) * cfg.rotation_deg * std::numbers::pi / 180 : 0.0;
        double scale = cfg.base_scale * size * (cfg.deform ? cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u(rng)
                                                           : 1.0);
        const double ca = std::cos(angle), sa = std::sin(angle);
        std::vector<Point> canon;
        for (const auto& v : tpl.outline) {
            const double jx = cfg.deform ? cfg.jitter * gauss(rng) : 0.0;
            const double jy = cfg.deform ? cfg.jitter * gauss(rng) : 0.0;
            const double x = v.x + jx, y = v.y + jy;
            canon.push_back({ca * x - sa * y, sa * x + ca * y});
        }
        double mnx = 1e9, mny = 1e9, mxx = -1e9, mxy = -1e9;
        for (const auto& p : canon) {
            mnx = std::min(mnx, p.x), mny = std::min(mny, p.y), mxx = std::max(mxx, p.x), mxy = std::max(mxy, p.y);
        }
        scale = std::min({scale, (hi - lo) / std::max(mxx - mnx, 1e-9), (hi - lo) / std::max(mxy - mny, 1e-9)});
        // Translation range that keeps every vertex inside [lo, hi].
        const double tx_lo = lo - mnx * scale, tx_hi = hi - mxx * scale;
        const double ty_lo = lo - mny * scale, ty_hi = hi - mxy * scale;
        const double tx = cfg.deform ? tx_lo + (tx_hi - tx_lo) * u(rng) : size / 2;
        const double ty = cfg.deform ? ty_lo + (ty_hi - ty_lo) * u(rng) : size / 2;

        std::vector<Point> pix;
        for (const auto& p : canon) pix.push_back({p.x * scale + tx, p.y * scale + ty});

        constexpr int kShift = 4;
        std::vector<cv::Point> poly;
        for (const auto& p : pix)
            poly.emplace_back(int(std::lround(p.x * (1 << kShift))), int(std::lround(p.y * (1 << kShift))));
        const double hue = 360 * u(rng), sat = 0.45 + 0.45 * u(rng), val = 0.55 + 0.4 * u(rng);
        cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{poly}, detail::hsv_color(hue, sat, val), cv::LINE_8,
                     kShift);
        // A couple of wrinkles: short darker strokes inside the garment.
        const cv::Scalar wrinkle = detail::hsv_color(hue, sat, val * 0.78);
        for (int w = 0; w < 2; ++w) {
            const std::size_t a = std::size_t(u(rng) * pix.size()) % pix.size();
            const std::size_t b = (a + pix.size() / 2) % pix.size();
            const double t0 = 0.3 + 0.2 * u(rng), t1 = 0.55 + 0.2 * u(rng);
            const Point p0 = pix[a] + (pix[b] - pix[a]) * t0, p1 = pix[a] + (pix[b] - pix[a]) * t1;
            cv::line(canvas, cv::Point(int(p0.x), int(p0.y)), cv::Point(int(p1.x), int(p1.y)), wrinkle, 1, cv::LINE_8);
        }
        cv::polylines(canvas, std::vector<std::vector<cv::Point>>{poly}, true, detail::hsv_color(hue, sat, val * 0.6), 1,
                      cv::LINE_8, kShift);

        ManifestRecord rec;
        std::ostringstream id;
        id << "synth_" << std::setw(6) << std::setfill('0') << n;
        rec.id = id.str();
        rec.image = rec.id + ".png";
        rec.width = rec.height = cfg.image_size;
        rec.garment_class = tax.garment_id(tpl.garment);
        rec.group = "synthetic";
        for (std::size_t k = 0; k < tpl.outline.size(); ++k)
            if (tpl.outline[k].landmark) rec.landmarks.push_back({tax.landmark_id(tpl.outline[k].landmark), pix[k]});
        rec.garment_box = derive_box(rec.landmarks);

        Image img(cfg.image_size, cfg.image_size);
        for (int y = 0; y < canvas.rows; ++y)
            std::copy_n(canvas.ptr<std::uint8_t>(y), std::size_t(canvas.cols) * 3, img.px(0, y));
        ds.manifest.records.push_back(std::move(rec));
        ds.images.push_back(std::move(img));
    }
    return ds;
}

/// Examples straight from a generated dataset, resized to input_size.
inline std::vector<Example> synthetic_examples(const SyntheticDataset& ds, int input_size) {
    std::vector<Example> out;
    for (std::size_t i = 0; i < ds.images.size(); ++i)
        out.push_back(make_example(ds.manifest.records[i], ds.images[i], input_size));
    return out;
}

/// Writes <out>/<id>.png for every scene and <out>/<manifest_name>.
inline void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& out,
                            const std::string& manifest_name = "manifest.jsonl") {
    std::filesystem::create_directories(out);
    for (std::size_t i = 0; i < ds.images.size(); ++i) save_image(ds.images[i], out / ds.manifest.records[i].image);
    write_manifest(ds.manifest, out / manifest_name);
}

}  // namespace garmnet
