#pragma once

/**
 * @file garmnet/geometry.hpp
 * @brief Anchor lattice, landmark squares, IoU, anchor assignment and the
 *        loss-mask sampler.
 *
 * Coordinates are image pixels with x = column (rightward) and y = row
 * (downward). Every function here is pure; randomness only enters through an
 * explicit seed.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace garmnet {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(Point a, double s) { return {a.x * s, a.y * s}; }
    friend bool operator==(const Point&, const Point&) = default;
};

struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
    Point center() const { return {(x_min + x_max) / 2, (y_min + y_max) / 2}; }
    bool valid() const { return x_min <= x_max && y_min <= y_max; }
    bool contains(Point p) const {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
    }
    Box scaled(double fx, double fy) const { return {x_min * fx, y_min * fy, x_max * fx, y_max * fy}; }

    friend bool operator==(const Box&, const Box&) = default;
};

/// A landmark as seen by the anchor machinery: class id plus location.
struct ClassPoint {
    int class_id = 0;
    Point point;
};

/// Regular lattice of anchor points. Anchor (i, j) sits at (stride * j, stride * i).
struct AnchorGrid {
    int grid_h = 0;
    int grid_w = 0;
    double stride = 0.0;
    double box_side = 0.0;
    std::vector<Point> anchor_points;  // row-major, grid_h * grid_w

    std::size_t cells() const { return anchor_points.size(); }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * grid_w + j; }
    const Point& anchor(int i, int j) const { return anchor_points[index(i, j)]; }
};

inline constexpr int kBackground = -1;
inline constexpr int kIgnore = -2;

struct AnchorAssignment {
    int grid_h = 0;
    int grid_w = 0;
    std::vector<int> label;             // class id, kBackground or kIgnore
    std::vector<double> best_iou;       // max IoU over landmark boxes
    std::vector<Point> target_point;    // meaningful on positive cells only
    std::vector<Point> target_offset;   // target_point - anchor_point

    std::size_t cells() const { return label.size(); }
    bool positive(std::size_t c) const { return label[c] >= 0; }
    std::size_t count_positive() const {
        return static_cast<std::size_t>(std::count_if(label.begin(), label.end(), [](int l) { return l >= 0; }));
    }
    std::size_t count_background() const {
        return static_cast<std::size_t>(std::count(label.begin(), label.end(), kBackground));
    }
};

struct LossMask {
    std::vector<std::uint8_t> active;

    std::size_t count() const {
        return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
    }
};

namespace detail {

inline AnchorGrid lattice(int grid_h, int grid_w, double stride, double box_side) {
    AnchorGrid grid;
    grid.grid_h = grid_h;
    grid.grid_w = grid_w;
    grid.stride = stride;
    grid.box_side = box_side;
    grid.anchor_points.reserve(static_cast<std::size_t>(grid_h) * grid_w);
    for (int i = 0; i < grid_h; ++i)
        for (int j = 0; j < grid_w; ++j)
            grid.anchor_points.push_back({stride * j, stride * i});
    return grid;
}

}  // namespace detail

/// Lattice sized so every box_side-wide window starting at an anchor fits the input.
inline AnchorGrid make_anchor_grid(double input_size, double stride, double box_side) {
    if (!(stride > 0) || !(box_side > 0) || !(input_size > 0))
        throw std::invalid_argument("make_anchor_grid: input_size, stride and box_side must be positive");
    if (input_size < box_side)
        throw std::invalid_argument("make_anchor_grid: input_size must be at least box_side");
    const int n = static_cast<int>(std::floor((input_size - box_side) / stride)) + 1;
    return detail::lattice(n, n, stride, box_side);
}

/// Lattice matching a square feature map of side grid_size.
inline AnchorGrid make_anchor_grid_for_features(int grid_size, double stride, double box_side) {
    if (grid_size <= 0 || !(stride > 0) || !(box_side > 0))
        throw std::invalid_argument("make_anchor_grid_for_features: arguments must be positive");
    return detail::lattice(grid_size, grid_size, stride, box_side);
}

/// Square of side box_side centred on p. Never clipped.
inline Box landmark_to_box(Point p, double box_side) {
    const double h = box_side / 2;
    return {p.x - h, p.y - h, p.x + h, p.y + h};
}

inline double intersection_area(const Box& a, const Box& b) {
    const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (w <= 0 || h <= 0) return 0.0;
    return w * h;
}

inline double iou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

inline Box derive_garment_box(std::span<const Point> landmarks) {
    if (landmarks.empty()) throw std::invalid_argument("derive_garment_box: no landmarks");
    Box box{landmarks[0].x, landmarks[0].y, landmarks[0].x, landmarks[0].y};
    for (const Point& p : landmarks.subspan(1)) {
        box.x_min = std::min(box.x_min, p.x);
        box.y_min = std::min(box.y_min, p.y);
        box.x_max = std::max(box.x_max, p.x);
        box.y_max = std::max(box.y_max, p.y);
    }
    return box;
}

/**
 * Label every anchor cell.
 *
 * A cell is positive for the landmark whose square overlaps the anchor's
 * square with the highest IoU, provided that IoU exceeds pos_thresh (ties go
 * to the lowest class id). A cell whose best IoU is below bg_thresh is
 * background. Everything else is ignored.
 */
inline AnchorAssignment assign_anchors(const AnchorGrid& grid, std::span<const ClassPoint> landmarks,
                                       double pos_thresh = 0.7, double bg_thresh = 0.3) {
    if (!(pos_thresh > 0 && pos_thresh < 1) || !(bg_thresh > 0 && bg_thresh < 1) || pos_thresh < bg_thresh)
        throw std::invalid_argument("assign_anchors: thresholds must lie in (0,1) with pos >= bg");

    AnchorAssignment out;
    out.grid_h = grid.grid_h;
    out.grid_w = grid.grid_w;
    const std::size_t n = grid.cells();
    out.label.assign(n, kBackground);
    out.best_iou.assign(n, 0.0);
    out.target_point.assign(n, Point{});
    out.target_offset.assign(n, Point{});

    std::vector<Box> boxes;
    boxes.reserve(landmarks.size());
    for (const auto& l : landmarks) boxes.push_back(landmark_to_box(l.point, grid.box_side));

    for (std::size_t c = 0; c < n; ++c) {
        const Box anchor_box = landmark_to_box(grid.anchor_points[c], grid.box_side);
        double best = 0.0;
        int best_k = -1;
        for (std::size_t k = 0; k < landmarks.size(); ++k) {
            const double v = iou(anchor_box, boxes[k]);
            if (best_k < 0 || v > best || (v == best && landmarks[k].class_id < landmarks[best_k].class_id)) {
                best = v;
                best_k = static_cast<int>(k);
            }
        }
        out.best_iou[c] = best;
        if (best_k >= 0 && best > pos_thresh) {
            const auto& lm = landmarks[static_cast<std::size_t>(best_k)];
            out.label[c] = lm.class_id;
            out.target_point[c] = lm.point;
            out.target_offset[c] = lm.point - grid.anchor_points[c];
        } else if (best < bg_thresh) {
            out.label[c] = kBackground;
        } else {
            out.label[c] = kIgnore;
        }
    }
    return out;
}

/// All positives plus min(n_background, #background) background cells drawn without replacement.
inline LossMask build_loss_mask(const AnchorAssignment& assignment, std::size_t n_background, std::uint64_t seed) {
    LossMask mask;
    mask.active.assign(assignment.cells(), 0);
    std::vector<std::size_t> background;
    for (std::size_t c = 0; c < assignment.cells(); ++c) {
        if (assignment.positive(c))
            mask.active[c] = 1;
        else if (assignment.label[c] == kBackground)
            background.push_back(c);
    }
    std::vector<std::size_t> picked;
    picked.reserve(std::min(n_background, background.size()));
    std::mt19937_64 rng(seed);
    std::sample(background.begin(), background.end(), std::back_inserter(picked), n_background, rng);
    for (std::size_t c : picked) mask.active[c] = 1;
    return mask;
}

/// Offsets are either raw pixels or pixels divided by the stride.
struct OffsetCodec {
    bool normalize_by_stride = false;

    Point encode(Point raw, double stride) const { return normalize_by_stride ? raw * (1.0 / stride) : raw; }
    Point decode(Point coded, double stride) const { return normalize_by_stride ? coded * stride : coded; }
};

/// L = A + O at every cell.
inline std::vector<Point> decode_landmarks(const AnchorGrid& grid, std::span<const Point> offsets) {
    if (offsets.size() != grid.cells())
        throw std::invalid_argument("decode_landmarks: offsets do not match the anchor grid");
    std::vector<Point> out(offsets.size());
    for (std::size_t c = 0; c < offsets.size(); ++c) out[c] = grid.anchor_points[c] + offsets[c];
    return out;
}

}  // namespace garmnet
