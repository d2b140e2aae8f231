#pragma once

/**
 * @file garmnet/layers.hpp
 * @brief Convolution, fully connected, pooling and activation layers with
 *        explicit forward caches and backward passes.
 *
 * Layers hold their parameters (value + accumulated gradient). Forward passes
 * are const and write whatever backward needs into a caller-owned cache, so a
 * model can serve concurrent inference while training stays single-threaded.
 */

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "garmnet/tensor.hpp"

namespace garmnet {

enum class ParamKind { kernel, bias, buffer };

template <typename T>
struct Param {
    std::string name;
    ParamKind kind = ParamKind::kernel;
    Tensor<T> value;
    Tensor<T> grad;

    Param() = default;
    Param(std::string n, ParamKind k, Shape shape)
        : name(std::move(n)), kind(k), value(shape), grad(k == ParamKind::buffer ? Shape{0} : shape) {}

    bool trainable() const { return kind != ParamKind::buffer; }
    void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Conv2d {
public:
    struct Cache {
        Shape in_shape;
        std::vector<T> col;  // im2col of the input, (in*k*k) x (out_h*out_w)
    };

    Conv2d() = default;
    Conv2d(const std::string& name, int in_ch, int out_ch, int kernel, int stride, int pad, bool with_bias = true)
        : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad), with_bias_(with_bias),
          weight(name + ".weight", ParamKind::kernel,
                 {std::size_t(out_ch), std::size_t(in_ch), std::size_t(kernel), std::size_t(kernel)}) {
        if (with_bias) bias = Param<T>(name + ".bias", ParamKind::bias, {std::size_t(out_ch)});
    }

    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }
    std::size_t out_extent(std::size_t in) const {
        return (in + 2 * std::size_t(pad_) - std::size_t(kernel_)) / std::size_t(stride_) + 1;
    }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        if (x.rank() != 3 || x.dim(0) != std::size_t(in_ch_))
            throw std::invalid_argument("Conv2d " + weight.name + ": expected " + std::to_string(in_ch_) +
                                        " input channels, got " + shape_str(x.shape()));
        const std::size_t oh = out_extent(x.dim(1)), ow = out_extent(x.dim(2));
        const std::size_t k = patch_size(), hw = oh * ow;
        Tensor<T> y({std::size_t(out_ch_), oh, ow});

        std::vector<T> local;
        const T* col = nullptr;
        if (pointwise()) {
            col = x.data();
        } else {
            std::vector<T>& buf = cache ? cache->col : local;
            im2col(x, oh, ow, buf);
            col = buf.data();
        }
        if (cache) {
            cache->in_shape = x.shape();
            if (pointwise()) cache->col.assign(x.data(), x.data() + x.size());
        }

        Eigen::Map<const RowMatrix<T>> w(weight.value.data(), out_ch_, Eigen::Index(k));
        Eigen::Map<const RowMatrix<T>> c(col, Eigen::Index(k), Eigen::Index(hw));
        Eigen::Map<RowMatrix<T>> out(y.data(), out_ch_, Eigen::Index(hw));
        out.noalias() = w * c;
        if (with_bias_) {
            Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.value.data(), out_ch_);
            out.colwise() += b;
        }
        return y;
    }

    /// Accumulates parameter gradients; returns dL/dx unless need_input_grad is false.
    Tensor<T> backward(const Cache& cache, const Tensor<T>& dy, bool need_input_grad = true) {
        const std::size_t oh = dy.dim(1), ow = dy.dim(2), k = patch_size(), hw = oh * ow;
        Eigen::Map<const RowMatrix<T>> g(dy.data(), out_ch_, Eigen::Index(hw));
        Eigen::Map<const RowMatrix<T>> c(cache.col.data(), Eigen::Index(k), Eigen::Index(hw));
        Eigen::Map<RowMatrix<T>> gw(weight.grad.data(), out_ch_, Eigen::Index(k));
        gw.noalias() += g * c.transpose();
        if (with_bias_) {
            // Plain loop: Eigen's vectorised sum peels by address alignment, which
            // makes the rounding depend on where the allocator put dy.
            const T* src = dy.data();
            for (Eigen::Index o = 0; o < out_ch_; ++o) {
                T acc = T(0);
                for (std::size_t i = 0; i < hw; ++i) acc += src[std::size_t(o) * hw + i];
                bias.grad[std::size_t(o)] += acc;
            }
        }
        if (!need_input_grad) return {};

        Eigen::Map<const RowMatrix<T>> w(weight.value.data(), out_ch_, Eigen::Index(k));
        Tensor<T> dx(cache.in_shape);
        if (pointwise()) {
            Eigen::Map<RowMatrix<T>> dxm(dx.data(), Eigen::Index(k), Eigen::Index(hw));
            dxm.noalias() = w.transpose() * g;
            return dx;
        }
        std::vector<T> dcol(k * hw);
        Eigen::Map<RowMatrix<T>> dc(dcol.data(), Eigen::Index(k), Eigen::Index(hw));
        dc.noalias() = w.transpose() * g;
        col2im(dcol, oh, ow, dx);
        return dx;
    }

    void collect(ParamList<T>& out) {
        out.push_back(&weight);
        if (with_bias_) out.push_back(&bias);
    }

private:
    bool pointwise() const { return kernel_ == 1 && stride_ == 1 && pad_ == 0; }
    std::size_t patch_size() const { return std::size_t(in_ch_) * kernel_ * kernel_; }

    void im2col(const Tensor<T>& x, std::size_t oh, std::size_t ow, std::vector<T>& col) const {
        const long h = long(x.dim(1)), w = long(x.dim(2));
        col.assign(patch_size() * oh * ow, T(0));
        T* dst = col.data();
        for (int ch = 0; ch < in_ch_; ++ch)
            for (int ky = 0; ky < kernel_; ++ky)
                for (int kx = 0; kx < kernel_; ++kx) {
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const long iy = long(oy) * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= h) {
                            dst += ow;
                            continue;
                        }
                        const T* row = x.data() + (std::size_t(ch) * h + iy) * w;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const long ix = long(ox) * stride_ - pad_ + kx;
                            *dst++ = (ix >= 0 && ix < w) ? row[ix] : T(0);
                        }
                    }
                }
    }

    void col2im(const std::vector<T>& col, std::size_t oh, std::size_t ow, Tensor<T>& dx) const {
        const long h = long(dx.dim(1)), w = long(dx.dim(2));
        const T* src = col.data();
        for (int ch = 0; ch < in_ch_; ++ch)
            for (int ky = 0; ky < kernel_; ++ky)
                for (int kx = 0; kx < kernel_; ++kx) {
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const long iy = long(oy) * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= h) {
                            src += ow;
                            continue;
                        }
                        T* row = dx.data() + (std::size_t(ch) * h + iy) * w;
                        for (std::size_t ox = 0; ox < ow; ++ox, ++src) {
                            const long ix = long(ox) * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < w) row[ix] += *src;
                        }
                    }
                }
    }

    int in_ch_ = 0, out_ch_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
    bool with_bias_ = true;

public:
    Param<T> weight;
    Param<T> bias;
};

template <typename T>
class Linear {
public:
    struct Cache {
        std::vector<T> input;
    };

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out)
        : in_(in), out_(out), weight(name + ".weight", ParamKind::kernel, {out, in}),
          bias(name + ".bias", ParamKind::bias, {out}) {}

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }

    std::vector<T> forward(std::span<const T> x, Cache* cache = nullptr) const {
        if (x.size() != in_)
            throw std::invalid_argument("Linear " + weight.name + ": expected " + std::to_string(in_) +
                                        " inputs, got " + std::to_string(x.size()));
        std::vector<T> y(out_);
        Eigen::Map<const RowMatrix<T>> w(weight.value.data(), Eigen::Index(out_), Eigen::Index(in_));
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data(), Eigen::Index(in_));
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.value.data(), Eigen::Index(out_));
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yv(y.data(), Eigen::Index(out_));
        yv.noalias() = w * xv;
        yv += b;
        if (cache) cache->input.assign(x.begin(), x.end());
        return y;
    }

    std::vector<T> backward(const Cache& cache, std::span<const T> dy, bool need_input_grad = true) {
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> g(dy.data(), Eigen::Index(out_));
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(cache.input.data(), Eigen::Index(in_));
        Eigen::Map<RowMatrix<T>> gw(weight.grad.data(), Eigen::Index(out_), Eigen::Index(in_));
        gw.noalias() += g * xv.transpose();
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(bias.grad.data(), Eigen::Index(out_));
        gb += g;
        if (!need_input_grad) return {};
        std::vector<T> dx(in_);
        Eigen::Map<const RowMatrix<T>> w(weight.value.data(), Eigen::Index(out_), Eigen::Index(in_));
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dxv(dx.data(), Eigen::Index(in_));
        dxv.noalias() = w.transpose() * g;
        return dx;
    }

    void collect(ParamList<T>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

private:
    std::size_t in_ = 0, out_ = 0;

public:
    Param<T> weight;
    Param<T> bias;
};

template <typename T>
void relu_inplace(std::span<T> x) {
    for (T& v : x) v = v > T(0) ? v : T(0);
}

/// dy *= (y > 0), where y is the ReLU output.
template <typename T>
void relu_backward(std::span<const T> y, std::span<T> dy) {
    for (std::size_t i = 0; i < y.size(); ++i)
        if (!(y[i] > T(0))) dy[i] = T(0);
}

/// 3x3 / stride 2 / pad 1 max pooling as used after the ResNet stem.
template <typename T>
class MaxPool2d {
public:
    struct Cache {
        Shape in_shape;
        std::vector<std::size_t> argmax;
    };

    MaxPool2d(int kernel = 3, int stride = 2, int pad = 1) : kernel_(kernel), stride_(stride), pad_(pad) {}

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        const std::size_t ch = x.dim(0);
        const long h = long(x.dim(1)), w = long(x.dim(2));
        const std::size_t oh = (std::size_t(h) + 2 * pad_ - kernel_) / stride_ + 1;
        const std::size_t ow = (std::size_t(w) + 2 * pad_ - kernel_) / stride_ + 1;
        Tensor<T> y({ch, oh, ow});
        if (cache) {
            cache->in_shape = x.shape();
            cache->argmax.assign(y.size(), 0);
        }
        std::size_t o = 0;
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_i = 0;
                    for (int ky = 0; ky < kernel_; ++ky) {
                        const long iy = long(oy) * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kernel_; ++kx) {
                            const long ix = long(ox) * stride_ - pad_ + kx;
                            if (ix < 0 || ix >= w) continue;
                            const std::size_t i = (c * h + iy) * w + ix;
                            if (x[i] > best) {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    y[o] = best;
                    if (cache) cache->argmax[o] = best_i;
                }
        return y;
    }

    Tensor<T> backward(const Cache& cache, const Tensor<T>& dy) const {
        Tensor<T> dx(cache.in_shape);
        for (std::size_t o = 0; o < dy.size(); ++o) dx[cache.argmax[o]] += dy[o];
        return dx;
    }

private:
    int kernel_, stride_, pad_;
};

/// Batch normalisation with frozen statistics: a fixed per-channel affine map.
template <typename T>
class FrozenBatchNorm {
public:
    FrozenBatchNorm() = default;
    FrozenBatchNorm(const std::string& name, std::size_t ch)
        : weight(name + ".weight", ParamKind::buffer, {ch}), bias(name + ".bias", ParamKind::buffer, {ch}),
          running_mean(name + ".running_mean", ParamKind::buffer, {ch}),
          running_var(name + ".running_var", ParamKind::buffer, {ch}) {
        weight.value.fill(T(1));
        running_var.value.fill(T(1));
    }

    void forward_inplace(Tensor<T>& x) const {
        const std::size_t ch = x.dim(0), plane = x.dim(1) * x.dim(2);
        for (std::size_t c = 0; c < ch; ++c) {
            const T s = scale(c), b = bias.value[c] - running_mean.value[c] * s;
            T* p = x.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] * s + b;
        }
    }

    void backward_inplace(Tensor<T>& dy) const {
        const std::size_t ch = dy.dim(0), plane = dy.dim(1) * dy.dim(2);
        for (std::size_t c = 0; c < ch; ++c) {
            const T s = scale(c);
            T* p = dy.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] *= s;
        }
    }

    void collect(ParamList<T>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
        out.push_back(&running_mean);
        out.push_back(&running_var);
    }

private:
    T scale(std::size_t c) const { return weight.value[c] / std::sqrt(running_var.value[c] + T(1e-5)); }

public:
    Param<T> weight, bias, running_mean, running_var;
};

}  // namespace garmnet
