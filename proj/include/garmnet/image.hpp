#pragma once

/**
 * @file garmnet/image.hpp
 * @brief 8-bit RGB raster, OpenCV-backed codecs and resizing, and the
 *        conversion into normalised network input.
 */

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "garmnet/tensor.hpp"

namespace garmnet {

/// Interleaved RGB, row-major, 8 bits per channel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0) : width(w), height(h), pixels(std::size_t(w) * h * 3, fill) {}

    std::uint8_t* px(int x, int y) { return pixels.data() + (std::size_t(y) * width + x) * 3; }
    const std::uint8_t* px(int x, int y) const { return pixels.data() + (std::size_t(y) * width + x) * 3; }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const Image&, const Image&) = default;
};

inline cv::Mat to_mat_bgr(const Image& img) {
    cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

inline Image from_mat_bgr(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Image img(rgb.cols, rgb.rows);
    for (int y = 0; y < rgb.rows; ++y)
        std::copy_n(rgb.ptr<std::uint8_t>(y), std::size_t(rgb.cols) * 3, img.px(0, y));
    return img;
}

inline Image load_image(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("cannot read image " + path.string());
    return from_mat_bgr(m);
}

/// Writes losslessly (PNG) regardless of extension semantics of the caller.
inline void save_image(const Image& img, const std::filesystem::path& path) {
    if (!cv::imwrite(path.string(), to_mat_bgr(img), {cv::IMWRITE_PNG_COMPRESSION, 6}))
        throw std::runtime_error("cannot write image " + path.string());
}

inline Image resize_image(const Image& img, int width, int height) {
    if (img.width == width && img.height == height) return img;
    cv::Mat src(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
    cv::Mat dst;
    const bool shrinking = width < img.width && height < img.height;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    Image out(width, height);
    for (int y = 0; y < height; ++y) std::copy_n(dst.ptr<std::uint8_t>(y), std::size_t(width) * 3, out.px(0, y));
    return out;
}

/// (pixel / 255 - mean) / std, laid out as 3 x H x W.
template <typename T>
Tensor<T> image_to_tensor(const Image& img, const std::array<double, 3>& mean, const std::array<double, 3>& std) {
    Tensor<T> t({3, std::size_t(img.height), std::size_t(img.width)});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::uint8_t* p = img.px(x, y);
            for (int c = 0; c < 3; ++c) t.at(c, y, x) = T((p[c] / 255.0 - mean[c]) / std[c]);
        }
    return t;
}

}  // namespace garmnet
