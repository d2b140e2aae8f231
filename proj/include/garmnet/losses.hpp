#pragma once

/**
 * @file garmnet/losses.hpp
 * @brief Landmark and garment losses, their gradients, and the per-example
 *        multi-task aggregation used by training.
 *
 * Every loss returns its value and, when a gradient buffer is supplied, the
 * gradient with respect to the quantity it consumes (probabilities or raw
 * regressor outputs). compute_example_loss chains these through the softmax
 * Jacobians to produce gradients with respect to the network's raw outputs.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "garmnet/geometry.hpp"
#include "garmnet/network.hpp"
#include "garmnet/softmax.hpp"
#include "garmnet/tensor.hpp"

namespace garmnet {

inline constexpr double kProbFloor = 1e-7;
inline constexpr double kProbCeil = 1.0 - 1e-7;

/// Squared error below 0.5 absolute error, absolute error above.
template <typename T>
T robust_loss(T p, T t) {
    const T d = std::abs(p - t);
    return d < T(0.5) ? d * d : d;
}

template <typename T>
T robust_loss_derivative(T p, T t) {
    const T e = p - t;
    if (std::abs(e) < T(0.5)) return T(2) * e;
    return e > T(0) ? T(1) : (e < T(0) ? T(-1) : T(0));
}

/// -log(clamp(p)) and its derivative in p (zero where the clamp is active).
template <typename T>
T clamped_nll(T p, T* dp = nullptr) {
    const T lo = T(kProbFloor), hi = T(kProbCeil);
    if (p < lo || p > hi) {
        if (dp) *dp = T(0);
        return -std::log(std::clamp(p, lo, hi));
    }
    if (dp) *dp = T(-1) / p;
    return -std::log(p);
}

struct LossWeights {
    double landmark_reg = 1.0;
    double landmark_cls = 1.0;
    double garment_cls = 1.0;
    double garment_reg = 1.0;

    std::array<double, 4> as_array() const { return {landmark_reg, landmark_cls, garment_cls, garment_reg}; }
};

struct LossBundle {
    double landmark_reg = 0.0;
    double landmark_cls = 0.0;
    double garment_cls = 0.0;
    double garment_reg = 0.0;
    double total = 0.0;
    LossWeights weights;
};

/// Active landmark classes: those with at least one positive anchor.
struct SpatialMask {
    std::vector<std::uint8_t> active_classes;

    std::size_t count() const {
        return std::size_t(std::count(active_classes.begin(), active_classes.end(), std::uint8_t{1}));
    }
};

inline SpatialMask build_spatial_mask(const AnchorAssignment& a, int n_landmarks) {
    SpatialMask m;
    m.active_classes.assign(std::size_t(n_landmarks), 0);
    for (int l : a.label)
        if (l >= 0 && l < n_landmarks) m.active_classes[std::size_t(l)] = 1;
    return m;
}

/// Cells that carry an offset target: positive and selected by the mask.
inline LossMask regression_mask(const AnchorAssignment& a, const LossMask& m) {
    LossMask r;
    r.active.assign(a.cells(), 0);
    for (std::size_t c = 0; c < a.cells(); ++c) r.active[c] = (a.positive(c) && m.active[c]) ? 1 : 0;
    return r;
}

namespace detail {

inline void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace detail

/**
 * Mean robust loss over both offset channels of the masked cells.
 * pred/target are 2 x H x W; returns 0 when no cell is active.
 */
template <typename T>
T landmark_regression_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossMask& mask,
                           Tensor<T>* grad = nullptr) {
    detail::require(pred.shape() == target.shape() && pred.rank() == 3 && pred.dim(0) == 2,
                    "landmark_regression_loss: offset tensors must be 2xHxW and agree");
    const std::size_t plane = pred.dim(1) * pred.dim(2);
    detail::require(mask.active.size() == plane, "landmark_regression_loss: mask does not match the grid");
    if (grad) *grad = Tensor<T>(pred.shape());
    const std::size_t terms = 2 * mask.count();
    if (terms == 0) return T(0);
    T sum = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        if (!mask.active[p]) continue;
        for (std::size_t c = 0; c < 2; ++c) {
            const std::size_t i = c * plane + p;
            sum += robust_loss(pred[i], target[i]);
            if (grad) (*grad)[i] = robust_loss_derivative(pred[i], target[i]) / T(terms);
        }
    }
    return sum / T(terms);
}

/// Index of the target class at a cell: the landmark id, or the trailing background channel.
inline std::size_t target_channel(int label, std::size_t channels) {
    return label >= 0 ? std::size_t(label) : channels - 1;
}

/**
 * Mean cross-entropy over active cells. probs is (n+1) x H x W, depth-softmaxed;
 * labels holds class ids or kBackground per cell.
 */
template <typename T>
T landmark_classification_loss(const Tensor<T>& probs, const std::vector<int>& labels, const LossMask& mask,
                                Tensor<T>* dprobs = nullptr) {
    detail::require(probs.rank() == 3, "landmark_classification_loss: scores must be CxHxW");
    const std::size_t ch = probs.dim(0), plane = probs.dim(1) * probs.dim(2);
    detail::require(labels.size() == plane && mask.active.size() == plane,
                    "landmark_classification_loss: labels/mask do not match the grid");
    if (dprobs) *dprobs = Tensor<T>(probs.shape());
    const std::size_t n = mask.count();
    if (n == 0) return T(0);
    T sum = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        if (!mask.active[p]) continue;
        detail::require(labels[p] != kIgnore, "landmark_classification_loss: ignored cell is active");
        const std::size_t i = target_channel(labels[p], ch) * plane + p;
        T d = 0;
        sum += clamped_nll(probs[i], &d);
        if (dprobs) (*dprobs)[i] = d / T(n);
    }
    return sum / T(n);
}

/// Ground-truth location distribution for class c: uniform over its positive cells.
inline std::vector<double> spatial_target(const std::vector<int>& labels, int class_id) {
    std::vector<double> t(labels.size(), 0.0);
    std::size_t k = 0;
    for (std::size_t p = 0; p < labels.size(); ++p)
        if (labels[p] == class_id) {
            t[p] = 1.0;
            ++k;
        }
    if (k > 1)
        for (double& v : t) v /= double(k);
    return t;
}

/// Per-class spatial cross-entropy averaged over the classes enabled in the spatial mask.
template <typename T>
T spatial_cross_entropy(const Tensor<T>& spatial_probs, const std::vector<int>& labels, const SpatialMask& smask,
                        Tensor<T>* dspatial = nullptr) {
    const std::size_t plane = spatial_probs.dim(1) * spatial_probs.dim(2);
    if (dspatial) *dspatial = Tensor<T>(spatial_probs.shape());
    const std::size_t active = smask.count();
    if (active == 0) return T(0);
    T sum = 0;
    for (std::size_t c = 0; c < smask.active_classes.size(); ++c) {
        if (!smask.active_classes[c]) continue;
        const std::vector<double> t = spatial_target(labels, int(c));
        for (std::size_t p = 0; p < plane; ++p) {
            if (t[p] == 0.0) continue;
            const std::size_t i = c * plane + p;
            T d = 0;
            sum += T(t[p]) * clamped_nll(spatial_probs[i], &d);
            if (dspatial) (*dspatial)[i] = T(t[p]) * d / T(active);
        }
    }
    return sum / T(active);
}

/**
 * Composed classification loss with the one-landmark-per-class constraint:
 * half the sum of the masked depth-wise cross-entropy and the spatial
 * cross-entropy over the active classes.
 */
template <typename T>
T spatial_constraint_loss(const Tensor<T>& depth_probs, const Tensor<T>& spatial_probs, const std::vector<int>& labels,
                          const LossMask& mask, const SpatialMask& smask, Tensor<T>* ddepth = nullptr,
                          Tensor<T>* dspatial = nullptr) {
    detail::require(depth_probs.shape() == spatial_probs.shape(),
                    "spatial_constraint_loss: softmax views must share a shape");
    detail::require(smask.active_classes.size() < depth_probs.dim(0),
                    "spatial_constraint_loss: spatial mask larger than the landmark classes");
    const std::size_t ch = depth_probs.dim(0), plane = depth_probs.dim(1) * depth_probs.dim(2);
    const double tol = std::is_same_v<T, float> ? 1e-3 : 1e-6;
    for (std::size_t p = 0; p < plane; ++p) {
        double s = 0;
        for (std::size_t c = 0; c < ch; ++c) s += double(depth_probs[c * plane + p]);
        detail::require(std::abs(s - 1.0) < tol, "spatial_constraint_loss: depth scores are not normalised");
    }
    for (std::size_t c = 0; c < smask.active_classes.size(); ++c) {
        if (!smask.active_classes[c]) continue;
        double s = 0;
        for (std::size_t p = 0; p < plane; ++p) s += double(spatial_probs[c * plane + p]);
        detail::require(std::abs(s - 1.0) < tol, "spatial_constraint_loss: spatial scores are not normalised");
    }
    const T depth = landmark_classification_loss(depth_probs, labels, mask, ddepth);
    const T spatial = spatial_cross_entropy(spatial_probs, labels, smask, dspatial);
    if (ddepth)
        for (T& v : ddepth->vec()) v /= T(2);
    if (dspatial)
        for (T& v : dspatial->vec()) v /= T(2);
    return (depth + spatial) / T(2);
}

struct GarmentLoss {
    double cls = 0.0;
    double reg = 0.0;
};

/// Cross-entropy on the class probabilities and mean squared error on the 4 box codec values.
template <typename T>
GarmentLoss garment_losses(const std::vector<T>& probs, int true_class, const std::vector<T>& box,
                           const std::array<double, 4>& true_box, std::vector<T>* dprobs = nullptr,
                           std::vector<T>* dbox = nullptr) {
    detail::require(true_class >= 0 && std::size_t(true_class) < probs.size(), "garment_losses: class out of range");
    detail::require(box.size() == 4, "garment_losses: box needs 4 values");
    GarmentLoss out;
    T d = 0;
    out.cls = double(clamped_nll(probs[std::size_t(true_class)], &d));
    if (dprobs) {
        dprobs->assign(probs.size(), T(0));
        (*dprobs)[std::size_t(true_class)] = d;
    }
    if (dbox) dbox->assign(4, T(0));
    for (std::size_t i = 0; i < 4; ++i) {
        const T e = box[i] - T(true_box[i]);
        out.reg += double(e * e) / 4.0;
        if (dbox) (*dbox)[i] = T(2) * e / T(4);
    }
    return out;
}

inline LossBundle total_loss(double landmark_reg, double landmark_cls, double garment_cls, double garment_reg,
                             const LossWeights& w = {}) {
    for (double v : w.as_array())
        if (v < 0) throw std::invalid_argument("total_loss: weights must be non-negative");
    LossBundle b{landmark_reg, landmark_cls, garment_cls, garment_reg, 0.0, w};
    b.total = w.landmark_reg * landmark_reg + w.landmark_cls * landmark_cls + w.garment_cls * garment_cls +
              w.garment_reg * garment_reg;
    return b;
}

/// Everything a single example contributes to the loss.
struct ExampleTargets {
    AnchorAssignment assignment;
    LossMask mask;
    std::vector<double> offsets;  // 2 x cells, codec space
    int garment_class = 0;
    std::array<double, 4> garment_box{};
};

struct TargetConfig {
    double pos_thresh = 0.7;
    double bg_thresh = 0.3;
    std::size_t n_background = 10;
};

inline ExampleTargets make_targets(const AnchorGrid& grid, std::span<const ClassPoint> landmarks, int garment_class,
                                   const Box& garment_box, const BoxCodec& box_codec, const OffsetCodec& offset_codec,
                                   const TargetConfig& tc, std::uint64_t mask_seed) {
    ExampleTargets t;
    t.assignment = assign_anchors(grid, landmarks, tc.pos_thresh, tc.bg_thresh);
    t.mask = build_loss_mask(t.assignment, tc.n_background, mask_seed);
    const std::size_t n = grid.cells();
    t.offsets.assign(2 * n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        if (!t.assignment.positive(c)) continue;
        const Point o = offset_codec.encode(t.assignment.target_offset[c], grid.stride);
        t.offsets[c] = o.x;
        t.offsets[n + c] = o.y;
    }
    t.garment_class = garment_class;
    t.garment_box = box_codec.encode(garment_box);
    return t;
}

/**
 * Loss bundle for one example plus gradients with respect to the raw network
 * outputs (landmark logits, offsets, garment logits, garment box values),
 * already scaled by the loss weights.
 */
template <typename T>
LossBundle compute_example_loss(const HeadOutputs<T>& out, const ExampleTargets& tg, const LossWeights& w,
                                bool spatial_constraint, int n_landmarks, HeadGrads<T>* grads = nullptr) {
    const Shape& oshape = out.landmark_offsets.shape();
    const Tensor<T> target_offsets(oshape, std::vector<T>(tg.offsets.begin(), tg.offsets.end()));
    const LossMask rmask = regression_mask(tg.assignment, tg.mask);

    Tensor<T> d_off, d_depth, d_spatial;
    const bool need = grads != nullptr;
    const double l_reg = double(landmark_regression_loss(out.landmark_offsets, target_offsets, rmask,
                                                         need ? &d_off : nullptr));
    double l_cls = 0.0;
    if (spatial_constraint) {
        const Tensor<T> spatial = out.landmark_spatial.empty() ? spatial_softmax(out.landmark_logits)
                                                               : out.landmark_spatial;
        const SpatialMask smask = build_spatial_mask(tg.assignment, n_landmarks);
        l_cls = double(spatial_constraint_loss(out.landmark_probs, spatial, tg.assignment.label, tg.mask, smask,
                                               need ? &d_depth : nullptr, need ? &d_spatial : nullptr));
        if (need) {
            Tensor<T> dz = depth_softmax_backward(out.landmark_probs, d_depth);
            dz += spatial_softmax_backward(spatial, d_spatial);
            d_depth = std::move(dz);
        }
    } else {
        l_cls = double(landmark_classification_loss(out.landmark_probs, tg.assignment.label, tg.mask,
                                                    need ? &d_depth : nullptr));
        if (need) d_depth = depth_softmax_backward(out.landmark_probs, d_depth);
    }

    std::vector<T> d_gprobs, d_gbox;
    const GarmentLoss g = garment_losses(out.garment_probs, tg.garment_class, out.garment_box, tg.garment_box,
                                         need ? &d_gprobs : nullptr, need ? &d_gbox : nullptr);
    const LossBundle bundle = total_loss(l_reg, l_cls, g.cls, g.reg, w);

    if (grads) {
        auto scale = [](auto& v, double s) {
            for (auto& x : v) x *= static_cast<std::remove_reference_t<decltype(x)>>(s);
        };
        scale(d_off.vec(), w.landmark_reg);
        scale(d_depth.vec(), w.landmark_cls);
        std::vector<T> d_glogits = softmax_backward<T>(out.garment_probs, d_gprobs);
        scale(d_glogits, w.garment_cls);
        scale(d_gbox, w.garment_reg);
        grads->landmark_offsets = std::move(d_off);
        grads->landmark_logits = std::move(d_depth);
        grads->garment_logits = std::move(d_glogits);
        grads->garment_box = std::move(d_gbox);
    }
    return bundle;
}

}  // namespace garmnet
