#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dirlearn/autodiff.hpp"
#include "dirlearn/image.hpp"
#include "dirlearn/rng.hpp"

namespace testutil {

// Central finite differences of a scalar-valued graph builder with respect to
// a set of input tensors; the independent oracle for analytic gradients.
inline double max_rel_grad_error(std::vector<dirlearn::ag::Tensor>& inputs,
                                 const std::function<dirlearn::ag::Var(std::vector<dirlearn::ag::Var>&)>& build,
                                 double h = 1e-6) {
    namespace ag = dirlearn::ag;
    std::vector<ag::Var> vars;
    for (auto& t : inputs) vars.push_back(ag::leaf(t, true));
    ag::Var loss = build(vars);
    ag::backward(loss);

    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
            const double orig = inputs[k][i];
            auto eval = [&](double v) {
                inputs[k][i] = v;
                std::vector<ag::Var> vs;
                for (auto& t : inputs) vs.push_back(ag::leaf(t, false));
                double out = build(vs).item();
                inputs[k][i] = orig;
                return out;
            };
            const double fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
            const double an = vars[k].grad()[i];
            const double err = std::fabs(fd - an) / std::max({1e-4, std::fabs(fd), std::fabs(an)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline dirlearn::ag::Tensor random_tensor(std::vector<int> shape, dirlearn::Rng& rng,
                                          double scale = 1.0) {
    dirlearn::ag::Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Smooth band-limited random image: a few low-frequency sinusoids per channel.
inline dirlearn::ImageRGB smooth_image(int h, int w, std::uint64_t seed) {
    dirlearn::Rng rng(seed);
    dirlearn::ImageRGB img(h, w);
    struct Wave {
        double fy, fx, phase, amp;
    };
    for (int c = 0; c < 3; ++c) {
        Wave waves[3];
        for (auto& wv : waves)
            wv = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.0, 6.28),
                  rng.uniform(0.05, 0.15)};
        const double base = rng.uniform(0.35, 0.65);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = base;
                for (const auto& wv : waves)
                    v += wv.amp * std::sin(2.0 * 3.14159265358979 *
                                               (wv.fy * y / h + wv.fx * x / w) +
                                           wv.phase);
                img.at(y, x, c) = dirlearn::clamp01(v);
            }
    }
    return img;
}

inline dirlearn::ImageRGB noise_image(int h, int w, std::uint64_t seed) {
    dirlearn::Rng rng(seed);
    dirlearn::ImageRGB img(h, w);
    for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform01());
    return img;
}

// Direct-formula PSNR, independent of the evaluation module.
inline double psnr_ref(const dirlearn::ImageRGB& a, const dirlearn::ImageRGB& b) {
    double mse = 0.0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i) {
        const double d = static_cast<double>(a.pixels()[i]) - b.pixels()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.pixels().size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace testutil
