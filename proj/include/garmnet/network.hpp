#pragma once

/**
 * @file garmnet/network.hpp
 * @brief The two-branch garment network: shared backbone, sliding landmark
 *        detector and fully connected garment localizer, with the optional
 *        bridge that feeds landmark class probabilities into the localizer.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "garmnet/backbone.hpp"
#include "garmnet/geometry.hpp"
#include "garmnet/layers.hpp"
#include "garmnet/softmax.hpp"
#include "garmnet/tensor.hpp"

namespace garmnet {

enum class Variant { garmnet, garmnet_b };

inline std::string to_string(Variant v) { return v == Variant::garmnet ? "garmnet" : "garmnet-b"; }

inline Variant parse_variant(const std::string& s) {
    if (s == "garmnet") return Variant::garmnet;
    if (s == "garmnet-b") return Variant::garmnet_b;
    throw std::invalid_argument("unknown variant '" + s + "' (expected garmnet or garmnet-b)");
}

struct NetworkConfig {
    Variant variant = Variant::garmnet;
    BackboneConfig backbone;
    int n_landmarks = 27;
    int n_garments = 9;
    int head_channels = 256;
    int hidden_units = 512;
    double box_side = 26.0;
    double stride = 0.0;  // 0: input_size / grid size
    bool normalize_offsets = false;
    bool spatial_constraint = true;
    double confidence_threshold = 0.5;
};

/// Garment box as (cx, cy, w, h) / input_size.
struct BoxCodec {
    double input_size = 1.0;

    std::array<double, 4> encode(const Box& b) const {
        const Point c = b.center();
        return {c.x / input_size, c.y / input_size, b.width() / input_size, b.height() / input_size};
    }
    template <typename V>
    Box decode(const V& v) const {
        const double cx = double(v[0]) * input_size, cy = double(v[1]) * input_size;
        const double w = std::max(0.0, double(v[2]) * input_size), h = std::max(0.0, double(v[3]) * input_size);
        return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    }
    static constexpr const char* name() { return "cxcywh-normalized"; }
};

template <typename T>
struct HeadOutputs {
    Tensor<T> landmark_logits;   // (n+1) x S x S
    Tensor<T> landmark_probs;    // depth-wise softmax
    Tensor<T> landmark_spatial;  // spatial softmax; empty without the spatial constraint
    Tensor<T> landmark_offsets;  // 2 x S x S, (dx, dy)
    std::vector<T> garment_logits;
    std::vector<T> garment_probs;
    std::vector<T> garment_box;  // codec space
};

template <typename T>
struct HeadGrads {
    Tensor<T> landmark_logits;
    Tensor<T> landmark_offsets;
    std::vector<T> garment_logits;
    std::vector<T> garment_box;
};

struct LandmarkPrediction {
    int class_id = 0;
    Point point;
    double confidence = 0.0;
    int cell = 0;
};

struct GarmentPrediction {
    int class_id = 0;
    std::vector<double> probs;
    Box box;
};

struct PredictionSet {
    std::vector<LandmarkPrediction> landmarks;
    GarmentPrediction garment;
};

/// Per-cell confidence: depth softmax, or its average with the spatial softmax.
template <typename T>
Tensor<T> landmark_confidence(const HeadOutputs<T>& out, bool spatial_constraint) {
    if (!spatial_constraint) return out.landmark_probs;
    Tensor<T> conf = out.landmark_probs;
    const Tensor<T> spatial = out.landmark_spatial.empty() ? spatial_softmax(out.landmark_logits)
                                                           : out.landmark_spatial;
    for (std::size_t i = 0; i < conf.size(); ++i) conf[i] = (conf[i] + spatial[i]) / T(2);
    return conf;
}

/**
 * Turn head outputs into landmark and garment predictions.
 *
 * At each cell the class with the highest confidence wins; the cell yields a
 * landmark when that class is not background and its confidence reaches the
 * threshold. The landmark sits at anchor + decoded offset.
 */
template <typename T>
PredictionSet decode_predictions(const HeadOutputs<T>& out, const AnchorGrid& grid, const NetworkConfig& cfg) {
    PredictionSet ps;
    const Tensor<T> conf = landmark_confidence(out, cfg.spatial_constraint);
    const std::size_t ch = conf.dim(0), plane = conf.dim(1) * conf.dim(2);
    const std::size_t bg = ch - 1;
    if (plane != grid.cells()) throw std::invalid_argument("decode_predictions: grid does not match head outputs");
    const OffsetCodec codec{cfg.normalize_offsets};
    for (std::size_t p = 0; p < plane; ++p) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < ch; ++c)
            if (conf[c * plane + p] > conf[best * plane + p]) best = c;
        const double score = double(conf[best * plane + p]);
        if (best == bg || score < cfg.confidence_threshold) continue;
        const Point off = codec.decode({double(out.landmark_offsets[p]), double(out.landmark_offsets[plane + p])},
                                       grid.stride);
        ps.landmarks.push_back({int(best), grid.anchor_points[p] + off, score, int(p)});
    }
    ps.garment.probs.assign(out.garment_probs.begin(), out.garment_probs.end());
    ps.garment.class_id = int(std::max_element(ps.garment.probs.begin(), ps.garment.probs.end()) -
                              ps.garment.probs.begin());
    ps.garment.box = BoxCodec{double(cfg.backbone.input_size)}.decode(out.garment_box);
    return ps;
}

template <typename T>
class GarmNet {
public:
    struct Cache {
        typename Backbone<T>::Cache backbone;
        Tensor<T> features;
        typename Conv2d<T>::Cache head_conv, head_cls, head_reg;
        Tensor<T> head_act;
        typename Linear<T>::Cache hidden, fc_cls, fc_reg;
        std::vector<T> hidden_act;
    };

    GarmNet() = default;
    explicit GarmNet(const NetworkConfig& cfg) : cfg_(cfg), backbone_(cfg.backbone) {
        if (cfg.n_landmarks <= 0 || cfg.n_garments <= 0 || cfg.head_channels <= 0 || cfg.hidden_units <= 0)
            throw std::invalid_argument("network class counts and widths must be positive");
        const int d = backbone_.depth();
        grid_size_ = backbone_.output_size();
        head_conv_ = Conv2d<T>("landmark_head.conv", d, cfg.head_channels, 3, 1, 1);
        head_cls_ = Conv2d<T>("landmark_head.cls", cfg.head_channels, cfg.n_landmarks + 1, 1, 1, 0);
        head_reg_ = Conv2d<T>("landmark_head.reg", cfg.head_channels, 2, 1, 1, 0);
        hidden_ = Linear<T>("garment_head.hidden", garment_input_size(), std::size_t(cfg.hidden_units));
        fc_cls_ = Linear<T>("garment_head.cls", std::size_t(cfg.hidden_units), std::size_t(cfg.n_garments));
        fc_reg_ = Linear<T>("garment_head.reg", std::size_t(cfg.hidden_units), 4);
    }

    const NetworkConfig& config() const { return cfg_; }
    int grid_size() const { return grid_size_; }
    int feature_depth() const { return backbone_.depth(); }
    double stride() const { return cfg_.stride > 0 ? cfg_.stride : double(cfg_.backbone.input_size) / grid_size_; }
    AnchorGrid anchor_grid() const { return make_anchor_grid_for_features(grid_size_, stride(), cfg_.box_side); }
    BoxCodec box_codec() const { return {double(cfg_.backbone.input_size)}; }
    bool bridged() const { return cfg_.variant == Variant::garmnet_b; }

    std::size_t feature_size() const { return std::size_t(grid_size_) * grid_size_ * backbone_.depth(); }
    std::size_t bridge_size() const { return std::size_t(grid_size_) * grid_size_ * (cfg_.n_landmarks + 1); }
    std::size_t garment_input_size() const { return feature_size() + (bridged() ? bridge_size() : 0); }

    /// Raw head outputs; fills cache when given (training).
    HeadOutputs<T> forward(const Tensor<T>& image, Cache* cache = nullptr) const {
        HeadOutputs<T> out;
        Tensor<T> features = backbone_.forward(image, cache ? &cache->backbone : nullptr);

        Tensor<T> act = head_conv_.forward(features, cache ? &cache->head_conv : nullptr);
        relu_inplace(act.span());
        out.landmark_logits = head_cls_.forward(act, cache ? &cache->head_cls : nullptr);
        out.landmark_offsets = head_reg_.forward(act, cache ? &cache->head_reg : nullptr);
        out.landmark_probs = depth_softmax(out.landmark_logits);
        if (cfg_.spatial_constraint) out.landmark_spatial = spatial_softmax(out.landmark_logits);

        std::vector<T> garment_in(features.vec());
        if (bridged()) garment_in.insert(garment_in.end(), out.landmark_probs.vec().begin(),
                                         out.landmark_probs.vec().end());
        std::vector<T> hidden = hidden_.forward(garment_in, cache ? &cache->hidden : nullptr);
        relu_inplace<T>(hidden);
        out.garment_logits = fc_cls_.forward(hidden, cache ? &cache->fc_cls : nullptr);
        out.garment_probs = softmax<T>(out.garment_logits);
        out.garment_box = fc_reg_.forward(hidden, cache ? &cache->fc_reg : nullptr);

        if (cache) {
            cache->features = std::move(features);
            cache->head_act = std::move(act);
            cache->hidden_act = std::move(hidden);
        }
        return out;
    }

    PredictionSet predict(const Tensor<T>& image) const {
        return decode_predictions(forward(image), anchor_grid(), cfg_);
    }

    /// Accumulates parameter gradients. The bridge is a one-way feed: no
    /// gradient flows from the garment head back into the landmark classifier.
    void backward(const Cache& cache, const HeadGrads<T>& g) {
        // garment branch
        std::vector<T> dh(std::size_t(cfg_.hidden_units), T(0));
        auto add = [](std::vector<T>& acc, const std::vector<T>& v) {
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
        };
        if (!g.garment_logits.empty()) add(dh, fc_cls_.backward(cache.fc_cls, g.garment_logits));
        if (!g.garment_box.empty()) add(dh, fc_reg_.backward(cache.fc_reg, g.garment_box));
        relu_backward<T>(cache.hidden_act, dh);
        std::vector<T> dgin = hidden_.backward(cache.hidden, dh);

        // landmark branch
        Tensor<T> dact(cache.head_act.shape());
        if (!g.landmark_logits.empty()) dact += head_cls_.backward(cache.head_cls, g.landmark_logits);
        if (!g.landmark_offsets.empty()) dact += head_reg_.backward(cache.head_reg, g.landmark_offsets);
        relu_backward<T>(cache.head_act.span(), dact.span());
        Tensor<T> dfeat = head_conv_.backward(cache.head_conv, dact, cfg_.backbone.finetune);

        if (!cfg_.backbone.finetune) return;
        for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] += dgin[i];
        backbone_.backward(cache.backbone, std::move(dfeat));
    }

    ParamList<T> parameters() {
        ParamList<T> out;
        backbone_.collect(out);
        head_conv_.collect(out);
        head_cls_.collect(out);
        head_reg_.collect(out);
        hidden_.collect(out);
        fc_cls_.collect(out);
        fc_reg_.collect(out);
        return out;
    }

    std::vector<const Param<T>*> parameters() const {
        auto ps = const_cast<GarmNet*>(this)->parameters();
        return {ps.begin(), ps.end()};
    }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

    /// Copy parameter values from a structurally identical model of any scalar type.
    template <typename U>
    void copy_parameters_from(const GarmNet<U>& other) {
        auto dst = parameters();
        auto src = other.parameters();
        if (dst.size() != src.size()) throw std::invalid_argument("copy_parameters_from: architecture mismatch");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (dst[i]->name != src[i]->name || dst[i]->value.size() != src[i]->value.size())
                throw std::invalid_argument("copy_parameters_from: mismatch at " + dst[i]->name);
            dst[i]->value = src[i]->value.template cast<T>();
        }
    }

private:
    NetworkConfig cfg_;
    Backbone<T> backbone_;
    int grid_size_ = 0;
    Conv2d<T> head_conv_, head_cls_, head_reg_;
    Linear<T> hidden_, fc_cls_, fc_reg_;
};

}  // namespace garmnet
