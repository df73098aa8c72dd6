#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dirlearn/tensor.hpp"

namespace dirlearn {

inline float clamp01(double v) {
    return static_cast<float>(std::min(1.0, std::max(0.0, v)));
}

// RGB image in [0,1], interleaved row-major (y, x, channel).
class ImageRGB {
public:
    ImageRGB() = default;
    ImageRGB(int height, int width)
        : height_(height), width_(width), pixels_(static_cast<std::size_t>(height) * width * 3, 0.f) {
        if (height <= 0 || width <= 0) throw std::invalid_argument("ImageRGB: nonpositive size");
    }

    int height() const { return height_; }
    int width() const { return width_; }

    float& at(int y, int x, int c) { return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
    float at(int y, int x, int c) const { return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }

    std::vector<float>& pixels() { return pixels_; }
    const std::vector<float>& pixels() const { return pixels_; }

    void fill(float r, float g, float b) {
        for (std::size_t i = 0; i < pixels_.size(); i += 3) {
            pixels_[i] = r;
            pixels_[i + 1] = g;
            pixels_[i + 2] = b;
        }
    }

    void clamp() {
        for (auto& v : pixels_) v = clamp01(v);
    }

    bool same_shape(const ImageRGB& o) const { return height_ == o.height_ && width_ == o.width_; }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> pixels_;
};

// Single-channel Bayer mosaic in [0,1]. The CFA is fixed RGGB: (0,0)=R,
// (0,1)=G, (1,0)=G, (1,1)=B within each 2x2 tile; dimensions must be even.
class BayerRaw {
public:
    BayerRaw() = default;
    BayerRaw(int height, int width)
        : height_(height), width_(width), pixels_(static_cast<std::size_t>(height) * width, 0.f) {
        if (height <= 0 || width <= 0) throw std::invalid_argument("BayerRaw: nonpositive size");
        if (height % 2 != 0 || width % 2 != 0)
            throw std::invalid_argument("BayerRaw: dimensions must be even");
    }

    int height() const { return height_; }
    int width() const { return width_; }

    float& at(int y, int x) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int y, int x) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    std::vector<float>& pixels() { return pixels_; }
    const std::vector<float>& pixels() const { return pixels_; }

    // Channel sampled at (y,x): 0=R, 1=G, 2=B.
    static int cfa_channel(int y, int x) {
        const bool even_row = (y % 2 == 0);
        const bool even_col = (x % 2 == 0);
        if (even_row && even_col) return 0;
        if (!even_row && !even_col) return 2;
        return 1;
    }

    void clamp() {
        for (auto& v : pixels_) v = clamp01(v);
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> pixels_;
};

// Batch of images as an autodiff constant (N,3,H,W).
inline ag::Tensor to_tensor(const std::vector<ImageRGB>& batch) {
    if (batch.empty()) throw std::invalid_argument("to_tensor: empty batch");
    const int H = batch[0].height(), W = batch[0].width();
    ag::Tensor t({static_cast<int>(batch.size()), 3, H, W});
    for (std::size_t n = 0; n < batch.size(); ++n) {
        if (!batch[n].same_shape(batch[0])) throw std::invalid_argument("to_tensor: ragged batch");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    t.at(static_cast<int>(n), c, y, x) = batch[n].at(y, x, c);
    }
    return t;
}

inline ImageRGB from_tensor(const ag::Tensor& t, int n) {
    if (t.dim() != 4 || t.size(1) != 3) throw std::invalid_argument("from_tensor: expected (N,3,H,W)");
    ImageRGB img(t.size(2), t.size(3));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < t.size(2); ++y)
            for (int x = 0; x < t.size(3); ++x)
                img.at(y, x, c) = clamp01(t.at(n, c, y, x));
    return img;
}

}  // namespace dirlearn
