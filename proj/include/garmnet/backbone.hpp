#pragma once

/**
 * @file garmnet/backbone.hpp
 * @brief Feature extractors: ResNet-50 truncated after conv4_x, and a small
 *        normalisation-free CNN for CPU-scale experiments.
 */

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "garmnet/layers.hpp"
#include "garmnet/tensor.hpp"

namespace garmnet {

enum class BackboneKind { resnet50_conv4x, tiny };

inline std::string to_string(BackboneKind k) { return k == BackboneKind::tiny ? "tiny" : "resnet50-conv4x"; }

inline BackboneKind parse_backbone_kind(const std::string& s) {
    if (s == "tiny") return BackboneKind::tiny;
    if (s == "resnet50-conv4x" || s == "resnet50") return BackboneKind::resnet50_conv4x;
    throw std::invalid_argument("unknown backbone kind '" + s + "' (expected tiny or resnet50-conv4x)");
}

struct BackboneConfig {
    BackboneKind kind = BackboneKind::tiny;
    int input_size = 128;
    std::vector<int> tiny_channels{16, 32, 32, 32};
    std::optional<std::string> pretrained_weights;
    bool finetune = true;
    // Per-channel input normalisation applied to pixel / 255.
    std::array<double, 3> mean{0.5, 0.5, 0.5};
    std::array<double, 3> std{0.25, 0.25, 0.25};

    static BackboneConfig resnet50(int input_size = 224) {
        BackboneConfig c;
        c.kind = BackboneKind::resnet50_conv4x;
        c.input_size = input_size;
        c.mean = {0.485, 0.456, 0.406};
        c.std = {0.229, 0.224, 0.225};
        return c;
    }
};

/// One 3x3 stride-2 convolution with ReLU per stage width; four stages give input / 16.
template <typename T>
class TinyBackbone {
public:
    struct Cache {
        std::vector<typename Conv2d<T>::Cache> conv;
        std::vector<Tensor<T>> out;
    };

    TinyBackbone() = default;
    explicit TinyBackbone(const std::vector<int>& channels) {
        if (channels.empty() || channels.size() > 6) throw std::invalid_argument("tiny backbone needs 1 to 6 stage widths");
        int in = 3;
        for (std::size_t s = 0; s < channels.size(); ++s) {
            if (channels[s] <= 0 || channels[s] > 64)
                throw std::invalid_argument("tiny backbone stage widths must lie in [1, 64]");
            convs_.emplace_back("backbone.stage" + std::to_string(s + 1), in, channels[s], 3, 2, 1);
            in = channels[s];
        }
    }

    int depth() const { return convs_.back().out_channels(); }
    int output_size(int input_size) const {
        std::size_t s = std::size_t(input_size);
        for (const auto& c : convs_) s = c.out_extent(s);
        return int(s);
    }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        if (cache) {
            cache->conv.assign(convs_.size(), {});
            cache->out.assign(convs_.size(), {});
        }
        Tensor<T> h = x;
        for (std::size_t s = 0; s < convs_.size(); ++s) {
            h = convs_[s].forward(h, cache ? &cache->conv[s] : nullptr);
            relu_inplace(h.span());
            if (cache) cache->out[s] = h;
        }
        return h;
    }

    void backward(const Cache& cache, Tensor<T> dy) {
        for (std::size_t s = convs_.size(); s-- > 0;) {
            relu_backward<T>(cache.out[s].span(), dy.span());
            dy = convs_[s].backward(cache.conv[s], dy, s > 0);
        }
    }

    void collect(ParamList<T>& out) {
        for (auto& c : convs_) c.collect(out);
    }

private:
    std::vector<Conv2d<T>> convs_;
};

/// torchvision-style bottleneck (stride on the 3x3 convolution) with frozen batch norm.
template <typename T>
class Bottleneck {
public:
    struct Cache {
        typename Conv2d<T>::Cache c1, c2, c3, cd;
        Tensor<T> a1, a2, y;
    };

    Bottleneck() = default;
    Bottleneck(const std::string& name, int in, int mid, int out, int stride, bool downsample)
        : conv1(name + ".conv1", in, mid, 1, 1, 0, false), bn1(name + ".bn1", std::size_t(mid)),
          conv2(name + ".conv2", mid, mid, 3, stride, 1, false), bn2(name + ".bn2", std::size_t(mid)),
          conv3(name + ".conv3", mid, out, 1, 1, 0, false), bn3(name + ".bn3", std::size_t(out)),
          has_downsample(downsample) {
        if (downsample) {
            down_conv = Conv2d<T>(name + ".downsample.0", in, out, 1, stride, 0, false);
            down_bn = FrozenBatchNorm<T>(name + ".downsample.1", std::size_t(out));
        }
    }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
        Tensor<T> h = conv1.forward(x, cache ? &cache->c1 : nullptr);
        bn1.forward_inplace(h);
        relu_inplace(h.span());
        if (cache) cache->a1 = h;
        h = conv2.forward(h, cache ? &cache->c2 : nullptr);
        bn2.forward_inplace(h);
        relu_inplace(h.span());
        if (cache) cache->a2 = h;
        h = conv3.forward(h, cache ? &cache->c3 : nullptr);
        bn3.forward_inplace(h);
        if (has_downsample) {
            Tensor<T> idn = down_conv.forward(x, cache ? &cache->cd : nullptr);
            down_bn.forward_inplace(idn);
            h += idn;
        } else {
            h += x;
        }
        relu_inplace(h.span());
        if (cache) cache->y = h;
        return h;
    }

    Tensor<T> backward(const Cache& cache, Tensor<T> dy) {
        relu_backward<T>(cache.y.span(), dy.span());
        Tensor<T> didn = dy;
        bn3.backward_inplace(dy);
        Tensor<T> g = conv3.backward(cache.c3, dy);
        relu_backward<T>(cache.a2.span(), g.span());
        bn2.backward_inplace(g);
        g = conv2.backward(cache.c2, g);
        relu_backward<T>(cache.a1.span(), g.span());
        bn1.backward_inplace(g);
        g = conv1.backward(cache.c1, g);
        if (has_downsample) {
            down_bn.backward_inplace(didn);
            didn = down_conv.backward(cache.cd, didn);
        }
        g += didn;
        return g;
    }

    void collect(ParamList<T>& out) {
        conv1.collect(out);
        bn1.collect(out);
        conv2.collect(out);
        bn2.collect(out);
        conv3.collect(out);
        bn3.collect(out);
        if (has_downsample) {
            down_conv.collect(out);
            down_bn.collect(out);
        }
    }

    Conv2d<T> conv1;
    FrozenBatchNorm<T> bn1;
    Conv2d<T> conv2;
    FrozenBatchNorm<T> bn2;
    Conv2d<T> conv3;
    FrozenBatchNorm<T> bn3;
    bool has_downsample = false;
    Conv2d<T> down_conv;
    FrozenBatchNorm<T> down_bn;
};

/// ResNet-50 stem + layer1..layer3 (conv2_x..conv4_x). 224 input -> 14x14x1024.
template <typename T>
class ResNet50Conv4 {
public:
    struct Cache {
        typename Conv2d<T>::Cache stem;
        Tensor<T> stem_out;
        typename MaxPool2d<T>::Cache pool;
        std::vector<typename Bottleneck<T>::Cache> blocks;
    };

    ResNet50Conv4()
        : conv1_("backbone.conv1", 3, 64, 7, 2, 3, false), bn1_("backbone.bn1", 64) {
        const std::array<int, 3> counts{3, 4, 6};
        const std::array<int, 3> mids{64, 128, 256};
        int in = 64;
        for (int l = 0; l < 3; ++l) {
            const int out = mids[l] * 4;
            for (int b = 0; b < counts[l]; ++b) {
                const std::string name = "backbone.layer" + std::to_string(l + 1) + "." + std::to_string(b);
                const int stride = (b == 0 && l > 0) ? 2 : 1;
                blocks_.emplace_back(name, in, mids[l], out, stride, b == 0);
                in = out;
            }
        }
    }

    int depth() const { return 1024; }
    int output_size(int input_size) const {
        std::size_t s = conv1_.out_extent(std::size_t(input_size));
        s = (s + 2 - 3) / 2 + 1;  // max pool
        s = (s + 2 - 3) / 2 + 1;  // layer2
        s = (s + 2 - 3) / 2 + 1;  // layer3
        return int(s);
    }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        Tensor<T> h = conv1_.forward(x, cache ? &cache->stem : nullptr);
        bn1_.forward_inplace(h);
        relu_inplace(h.span());
        if (cache) cache->stem_out = h;
        h = pool_.forward(h, cache ? &cache->pool : nullptr);
        if (cache) cache->blocks.assign(blocks_.size(), {});
        for (std::size_t b = 0; b < blocks_.size(); ++b) h = blocks_[b].forward(h, cache ? &cache->blocks[b] : nullptr);
        return h;
    }

    void backward(const Cache& cache, Tensor<T> dy) {
        for (std::size_t b = blocks_.size(); b-- > 0;) dy = blocks_[b].backward(cache.blocks[b], std::move(dy));
        dy = pool_.backward(cache.pool, dy);
        relu_backward<T>(cache.stem_out.span(), dy.span());
        bn1_.backward_inplace(dy);
        conv1_.backward(cache.stem, dy, false);
    }

    void collect(ParamList<T>& out) {
        conv1_.collect(out);
        bn1_.collect(out);
        for (auto& b : blocks_) b.collect(out);
    }

private:
    Conv2d<T> conv1_;
    FrozenBatchNorm<T> bn1_;
    MaxPool2d<T> pool_;
    std::vector<Bottleneck<T>> blocks_;
};

template <typename T>
class Backbone {
public:
    using Cache = std::variant<typename TinyBackbone<T>::Cache, typename ResNet50Conv4<T>::Cache>;

    Backbone() = default;
    explicit Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
        if (cfg.input_size <= 0) throw std::invalid_argument("backbone input_size must be positive");
        if (cfg.kind == BackboneKind::tiny)
            impl_ = TinyBackbone<T>(cfg.tiny_channels);
        else
            impl_ = ResNet50Conv4<T>();
        if (output_size() <= 0) throw std::invalid_argument("backbone input_size too small");
    }

    const BackboneConfig& config() const { return cfg_; }
    int depth() const {
        return std::visit([](const auto& b) { return b.depth(); }, impl_);
    }
    /// Side of the square spatial output for the configured input size.
    int output_size() const {
        return std::visit([&](const auto& b) { return b.output_size(cfg_.input_size); }, impl_);
    }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        if (x.rank() != 3 || x.dim(0) != 3 || x.dim(1) != std::size_t(cfg_.input_size) ||
            x.dim(2) != std::size_t(cfg_.input_size))
            throw std::invalid_argument("backbone expects a 3x" + std::to_string(cfg_.input_size) + "x" +
                                        std::to_string(cfg_.input_size) + " input, got " + shape_str(x.shape()));
        if (std::holds_alternative<TinyBackbone<T>>(impl_)) {
            auto* c = cache ? &cache->template emplace<0>() : nullptr;
            return std::get<TinyBackbone<T>>(impl_).forward(x, c);
        }
        auto* c = cache ? &cache->template emplace<1>() : nullptr;
        return std::get<ResNet50Conv4<T>>(impl_).forward(x, c);
    }

    void backward(const Cache& cache, Tensor<T> dy) {
        if (auto* b = std::get_if<TinyBackbone<T>>(&impl_))
            b->backward(std::get<0>(cache), std::move(dy));
        else
            std::get<ResNet50Conv4<T>>(impl_).backward(std::get<1>(cache), std::move(dy));
    }

    void collect(ParamList<T>& out) {
        std::visit([&](auto& b) { b.collect(out); }, impl_);
    }

private:
    BackboneConfig cfg_;
    std::variant<TinyBackbone<T>, ResNet50Conv4<T>> impl_;
};

}  // namespace garmnet
