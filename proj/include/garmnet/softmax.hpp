#pragma once

/**
 * @file garmnet/softmax.hpp
 * @brief Softmax over the class axis ("depth") and over the grid ("spatial")
 *        of a C x H x W score map, plus their vector-Jacobian products.
 */

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "garmnet/tensor.hpp"

namespace garmnet {

template <typename T>
void softmax_inplace(std::span<T> v) {
    if (v.empty()) return;
    const T m = *std::max_element(v.begin(), v.end());
    T sum = 0;
    for (T& x : v) {
        x = std::exp(x - m);
        sum += x;
    }
    for (T& x : v) x /= sum;
}

template <typename T>
std::vector<T> softmax(std::span<const T> v) {
    std::vector<T> out(v.begin(), v.end());
    softmax_inplace<T>(out);
    return out;
}

/// dL/dz = p * (dL/dp - <dL/dp, p>)
template <typename T>
std::vector<T> softmax_backward(std::span<const T> p, std::span<const T> dp) {
    T dot = 0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += dp[i] * p[i];
    std::vector<T> dz(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (dp[i] - dot);
    return dz;
}

/// Normalise over channels at every (y, x).
template <typename T>
Tensor<T> depth_softmax(const Tensor<T>& logits) {
    const std::size_t ch = logits.dim(0), plane = logits.dim(1) * logits.dim(2);
    Tensor<T> out(logits.shape());
    std::vector<T> buf(ch);
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < ch; ++c) buf[c] = logits[c * plane + p];
        softmax_inplace<T>(buf);
        for (std::size_t c = 0; c < ch; ++c) out[c * plane + p] = buf[c];
    }
    return out;
}

/// Normalise each channel plane over all grid cells.
template <typename T>
Tensor<T> spatial_softmax(const Tensor<T>& logits) {
    const std::size_t ch = logits.dim(0), plane = logits.dim(1) * logits.dim(2);
    Tensor<T> out = logits;
    for (std::size_t c = 0; c < ch; ++c) softmax_inplace<T>(std::span<T>(out.data() + c * plane, plane));
    return out;
}

template <typename T>
Tensor<T> depth_softmax_backward(const Tensor<T>& probs, const Tensor<T>& dprobs) {
    const std::size_t ch = probs.dim(0), plane = probs.dim(1) * probs.dim(2);
    Tensor<T> dz(probs.shape());
    for (std::size_t p = 0; p < plane; ++p) {
        T dot = 0;
        for (std::size_t c = 0; c < ch; ++c) dot += dprobs[c * plane + p] * probs[c * plane + p];
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = c * plane + p;
            dz[i] = probs[i] * (dprobs[i] - dot);
        }
    }
    return dz;
}

template <typename T>
Tensor<T> spatial_softmax_backward(const Tensor<T>& probs, const Tensor<T>& dprobs) {
    const std::size_t ch = probs.dim(0), plane = probs.dim(1) * probs.dim(2);
    Tensor<T> dz(probs.shape());
    for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t o = c * plane;
        T dot = 0;
        for (std::size_t p = 0; p < plane; ++p) dot += dprobs[o + p] * probs[o + p];
        for (std::size_t p = 0; p < plane; ++p) dz[o + p] = probs[o + p] * (dprobs[o + p] - dot);
    }
    return dz;
}

}  // namespace garmnet
