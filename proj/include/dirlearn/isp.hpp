#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dirlearn/image.hpp"
#include "dirlearn/rng.hpp"

namespace dirlearn::isp {

// One sampled ISP configuration. The gamma/wb bounds below describe what
// sample_params may draw; hand-built configurations (identity pipelines,
// canonical references) are allowed outside them.
struct IspParams {
    std::array<double, 3> wb_gains{1.0, 1.0, 1.0};
    std::array<std::array<double, 3>, 3> ccm{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    double gamma = 2.2;
    double gauss_sigma = 0.0;
    double poisson_lambda = 0.0;
    int jpeg_qf = 100;
    std::uint64_t seed = 0;

    static IspParams identity() {
        IspParams p;
        p.gamma = 1.0;
        return p;
    }

    // Reference configuration used when linearizing clean RGB.
    static IspParams canonical() { return IspParams{}; }
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct DegradationProfile {
    Range wb_gain{0.8, 1.25};
    Range gamma{1.8, 2.6};
    Range gauss_sigma{0.0, 0.0};
    Range poisson_lambda{0.0, 0.0};
    int jpeg_qf_lo = 100;
    int jpeg_qf_hi = 100;
    double ccm_offdiag = 0.1;

    void validate() const {
        auto ok = [](const Range& r) { return r.lo <= r.hi; };
        if (!ok(wb_gain) || !ok(gamma) || !ok(gauss_sigma) || !ok(poisson_lambda) ||
            jpeg_qf_lo > jpeg_qf_hi)
            throw std::invalid_argument("DegradationProfile: min > max");
        if (wb_gain.lo < 0.5 || wb_gain.hi > 2.0)
            throw std::invalid_argument("DegradationProfile: wb gains must stay in [0.5,2]");
        if (gamma.lo < 1.8 || gamma.hi > 2.6)
            throw std::invalid_argument("DegradationProfile: gamma must stay in [1.8,2.6]");
        if (jpeg_qf_lo < 1 || jpeg_qf_hi > 100)
            throw std::invalid_argument("DegradationProfile: jpeg qf must stay in [1,100]");
    }

    static DegradationProfile preset_default() {
        DegradationProfile p;
        p.gauss_sigma = {0.05, 0.10};
        p.poisson_lambda = {0.0, 0.0};
        p.jpeg_qf_lo = 10;
        p.jpeg_qf_hi = 30;
        return p;
    }

    static DegradationProfile preset_dark() {
        DegradationProfile p;
        p.gauss_sigma = {0.15, 0.35};
        p.poisson_lambda = {0.02, 0.04};
        p.jpeg_qf_lo = 50;
        p.jpeg_qf_hi = 95;
        return p;
    }

    static DegradationProfile by_name(const std::string& name) {
        if (name == "default") return preset_default();
        if (name == "dark") return preset_dark();
        throw std::invalid_argument("unknown degradation profile: " + name);
    }
};

// ---------------------------------------------------------------------------
// Mosaic / demosaic
// ---------------------------------------------------------------------------

inline BayerRaw mosaic(const ImageRGB& rgb) {
    if (rgb.height() % 2 != 0 || rgb.width() % 2 != 0)
        throw std::invalid_argument("mosaic: dimensions must be even");
    BayerRaw raw(rgb.height(), rgb.width());
    for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x)
            raw.at(y, x) = rgb.at(y, x, BayerRaw::cfa_channel(y, x));
    return raw;
}

namespace detail {

// Mirror indexing about the edge pixel, which preserves CFA parity.
inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

}  // namespace detail

inline ImageRGB demosaic_bilinear(const BayerRaw& raw) {
    const int H = raw.height(), W = raw.width();
    ImageRGB out(H, W);
    auto v = [&](int y, int x) { return static_cast<double>(raw.at(detail::reflect(y, H), detail::reflect(x, W))); };

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const bool er = (y % 2 == 0), ec = (x % 2 == 0);
            double r, g, b;
            if (er && ec) {  // R site
                r = v(y, x);
                g = 0.25 * (v(y - 1, x) + v(y + 1, x) + v(y, x - 1) + v(y, x + 1));
                b = 0.25 * (v(y - 1, x - 1) + v(y - 1, x + 1) + v(y + 1, x - 1) + v(y + 1, x + 1));
            } else if (er && !ec) {  // G site on R row
                g = v(y, x);
                r = 0.5 * (v(y, x - 1) + v(y, x + 1));
                b = 0.5 * (v(y - 1, x) + v(y + 1, x));
            } else if (!er && ec) {  // G site on B row
                g = v(y, x);
                r = 0.5 * (v(y - 1, x) + v(y + 1, x));
                b = 0.5 * (v(y, x - 1) + v(y, x + 1));
            } else {  // B site
                b = v(y, x);
                g = 0.25 * (v(y - 1, x) + v(y + 1, x) + v(y, x - 1) + v(y, x + 1));
                r = 0.25 * (v(y - 1, x - 1) + v(y - 1, x + 1) + v(y + 1, x - 1) + v(y + 1, x + 1));
            }
            out.at(y, x, 0) = static_cast<float>(r);
            out.at(y, x, 1) = static_cast<float>(g);
            out.at(y, x, 2) = static_cast<float>(b);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Color pipeline
// ---------------------------------------------------------------------------

namespace detail {

inline std::array<std::array<double, 3>, 3> invert3x3(const std::array<std::array<double, 3>, 3>& m) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    double frob = 0.0;
    for (const auto& row : m)
        for (double e : row) frob += e * e;
    // cond ~ ||A||_F * ||A^-1||_F; the adjugate scales as frob^2 / det
    if (std::fabs(det) < 1e-12 || frob / std::fabs(det) > 1e6)
        throw std::invalid_argument("ccm is singular or near-singular");
    std::array<std::array<double, 3>, 3> inv;
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return inv;
}

inline double gamma_encode(double v, double gamma) { return std::pow(std::max(v, 0.0), 1.0 / gamma); }
inline double gamma_decode(double v, double gamma) { return std::pow(std::max(v, 0.0), gamma); }

}  // namespace detail

// demosaic -> white balance -> CCM -> gamma encode -> clamp.
inline ImageRGB apply_forward_isp(const BayerRaw& raw, const IspParams& p) {
    ImageRGB img = demosaic_bilinear(raw);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            double c[3];
            for (int k = 0; k < 3; ++k) c[k] = img.at(y, x, k) * p.wb_gains[k];
            double m[3];
            for (int k = 0; k < 3; ++k)
                m[k] = p.ccm[k][0] * c[0] + p.ccm[k][1] * c[1] + p.ccm[k][2] * c[2];
            for (int k = 0; k < 3; ++k)
                img.at(y, x, k) = clamp01(detail::gamma_encode(m[k], p.gamma));
        }
    return img;
}

// Exact pointwise inverse of apply_forward_isp, then mosaic.
inline BayerRaw apply_inverse_isp(const ImageRGB& rgb, const IspParams& p) {
    const auto inv = detail::invert3x3(p.ccm);
    ImageRGB lin(rgb.height(), rgb.width());
    for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x) {
            double c[3];
            for (int k = 0; k < 3; ++k) c[k] = detail::gamma_decode(rgb.at(y, x, k), p.gamma);
            double m[3];
            for (int k = 0; k < 3; ++k) m[k] = inv[k][0] * c[0] + inv[k][1] * c[1] + inv[k][2] * c[2];
            for (int k = 0; k < 3; ++k) lin.at(y, x, k) = clamp01(m[k] / p.wb_gains[k]);
        }
    return mosaic(lin);
}

// ---------------------------------------------------------------------------
// Sensor noise
// ---------------------------------------------------------------------------

namespace detail {

// Shot + read noise before the [0,1] clamp; kept separate so the noise
// statistics are observable pre-clamping.
inline std::vector<double> apply_noise_unclamped(const BayerRaw& raw, double sigma, double lambda,
                                                 Rng& rng) {
    std::vector<double> out(raw.pixels().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = raw.pixels()[i];
        if (lambda > 0.0) v = lambda * static_cast<double>(rng.poisson(v / lambda));
        if (sigma > 0.0) v += sigma * rng.normal();
        out[i] = v;
    }
    return out;
}

}  // namespace detail

inline BayerRaw add_sensor_noise(const BayerRaw& raw, double sigma, double lambda, Rng& rng) {
    if (sigma < 0.0 || lambda < 0.0)
        throw std::invalid_argument("add_sensor_noise: negative noise magnitude");
    BayerRaw out(raw.height(), raw.width());
    const auto noisy = detail::apply_noise_unclamped(raw, sigma, lambda, rng);
    for (std::size_t i = 0; i < noisy.size(); ++i) out.pixels()[i] = clamp01(noisy[i]);
    return out;
}

// ---------------------------------------------------------------------------
// JPEG quantization roundtrip (no entropy coding)
// ---------------------------------------------------------------------------

namespace detail {

inline const std::array<int, 64>& jpeg_luma_table() {
    static const std::array<int, 64> t = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    return t;
}

inline const std::array<int, 64>& jpeg_chroma_table() {
    static const std::array<int, 64> t = {
        17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
        24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
    return t;
}

inline std::array<double, 64> scaled_quant_table(const std::array<int, 64>& base, int qf) {
    const double s = qf < 50 ? 5000.0 / qf : 200.0 - 2.0 * qf;
    std::array<double, 64> q;
    for (int i = 0; i < 64; ++i) {
        int qi = static_cast<int>(std::floor((base[static_cast<std::size_t>(i)] * s + 50.0) / 100.0));
        q[static_cast<std::size_t>(i)] = static_cast<double>(std::min(255, std::max(1, qi)));
    }
    return q;
}

inline const std::array<double, 64>& dct_basis() {
    static const std::array<double, 64> d = [] {
        std::array<double, 64> m{};
        const double pi = 3.14159265358979323846;
        for (int u = 0; u < 8; ++u) {
            const double cu = (u == 0) ? 1.0 / std::sqrt(2.0) : 1.0;
            for (int x = 0; x < 8; ++x)
                m[static_cast<std::size_t>(u * 8 + x)] = 0.5 * cu * std::cos((2 * x + 1) * u * pi / 16.0);
        }
        return m;
    }();
    return d;
}

// Quantization roundtrip of one 8x8 block, in place.
inline void quantize_block(double* blk, const std::array<double, 64>& q) {
    const auto& D = dct_basis();
    double tmp[64], coef[64];
    for (int u = 0; u < 8; ++u)  // rows: tmp = blk * D^T
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += blk[u * 8 + k] * D[static_cast<std::size_t>(x * 8 + k)];
            tmp[u * 8 + x] = s;
        }
    for (int u = 0; u < 8; ++u)  // cols: coef = D * tmp
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += D[static_cast<std::size_t>(u * 8 + k)] * tmp[k * 8 + x];
            coef[u * 8 + x] = s;
        }
    for (int i = 0; i < 64; ++i)
        coef[i] = std::round(coef[i] / q[static_cast<std::size_t>(i)]) * q[static_cast<std::size_t>(i)];
    for (int u = 0; u < 8; ++u)  // inverse: tmp = D^T * coef
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += D[static_cast<std::size_t>(k * 8 + u)] * coef[k * 8 + x];
            tmp[u * 8 + x] = s;
        }
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int k = 0; k < 8; ++k) s += tmp[u * 8 + k] * D[static_cast<std::size_t>(k * 8 + x)];
            blk[u * 8 + x] = s;
        }
}

}  // namespace detail

inline ImageRGB jpeg_quantize(const ImageRGB& rgb, int qf) {
    if (qf < 1 || qf > 100) throw std::invalid_argument("jpeg_quantize: qf must be in [1,100]");
    const int H = rgb.height(), W = rgb.width();
    const int Hp = (H + 7) / 8 * 8, Wp = (W + 7) / 8 * 8;

    // YCbCr planes, centered and scaled to the 8-bit DCT convention; the Y
    // shift is symmetric so mid-gray blocks quantize exactly.
    std::vector<double> plane[3];
    for (auto& pl : plane) pl.assign(static_cast<std::size_t>(Hp) * Wp, 0.0);
    for (int y = 0; y < Hp; ++y)
        for (int x = 0; x < Wp; ++x) {
            const int sy = std::min(y, H - 1), sx = std::min(x, W - 1);
            const double r = rgb.at(sy, sx, 0), g = rgb.at(sy, sx, 1), b = rgb.at(sy, sx, 2);
            const std::size_t i = static_cast<std::size_t>(y) * Wp + x;
            plane[0][i] = (0.299 * r + 0.587 * g + 0.114 * b - 0.5) * 255.0;
            plane[1][i] = (-0.168736 * r - 0.331264 * g + 0.5 * b) * 255.0;
            plane[2][i] = (0.5 * r - 0.418688 * g - 0.081312 * b) * 255.0;
        }

    const auto qy = detail::scaled_quant_table(detail::jpeg_luma_table(), qf);
    const auto qc = detail::scaled_quant_table(detail::jpeg_chroma_table(), qf);
    double blk[64];
    for (int ch = 0; ch < 3; ++ch)
        for (int by = 0; by < Hp; by += 8)
            for (int bx = 0; bx < Wp; bx += 8) {
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        blk[y * 8 + x] = plane[ch][static_cast<std::size_t>(by + y) * Wp + bx + x];
                detail::quantize_block(blk, ch == 0 ? qy : qc);
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        plane[ch][static_cast<std::size_t>(by + y) * Wp + bx + x] = blk[y * 8 + x];
            }

    ImageRGB out(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * Wp + x;
            const double Y = plane[0][i] / 255.0 + 0.5;
            const double cb = plane[1][i] / 255.0;
            const double cr = plane[2][i] / 255.0;
            out.at(y, x, 0) = clamp01(Y + 1.402 * cr);
            out.at(y, x, 1) = clamp01(Y - 0.344136 * cb - 0.714136 * cr);
            out.at(y, x, 2) = clamp01(Y + 1.772 * cb);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Degradation synthesis
// ---------------------------------------------------------------------------

inline IspParams sample_params(const DegradationProfile& profile, Rng& rng) {
    profile.validate();
    IspParams p;
    for (int k = 0; k < 3; ++k) p.wb_gains[k] = rng.uniform(profile.wb_gain.lo, profile.wb_gain.hi);
    for (int r = 0; r < 3; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            p.ccm[r][c] = (r == c) ? 1.0 : rng.uniform(-profile.ccm_offdiag, profile.ccm_offdiag);
            sum += p.ccm[r][c];
        }
        for (int c = 0; c < 3; ++c) p.ccm[r][c] /= sum;  // white-point preserving
    }
    p.gamma = rng.uniform(profile.gamma.lo, profile.gamma.hi);
    p.gauss_sigma = rng.uniform(profile.gauss_sigma.lo, profile.gauss_sigma.hi);
    p.poisson_lambda = rng.uniform(profile.poisson_lambda.lo, profile.poisson_lambda.hi);
    p.jpeg_qf = rng.uniform_int(profile.jpeg_qf_lo, profile.jpeg_qf_hi);
    p.seed = rng.bits();
    return p;
}

// Linearize through the canonical inverse ISP, corrupt the simulated RAW,
// then develop with the sampled forward ISP and JPEG quantization.
inline ImageRGB degrade(const ImageRGB& clean, const IspParams& params,
                        BayerRaw* noisy_raw_out = nullptr) {
    BayerRaw raw = apply_inverse_isp(clean, IspParams::canonical());
    Rng noise_rng(params.seed);
    raw = add_sensor_noise(raw, params.gauss_sigma, params.poisson_lambda, noise_rng);
    if (noisy_raw_out) *noisy_raw_out = raw;
    ImageRGB developed = apply_forward_isp(raw, params);
    return jpeg_quantize(developed, params.jpeg_qf);
}

inline std::pair<ImageRGB, ImageRGB> make_pair(const ImageRGB& clean,
                                               const DegradationProfile& profile, Rng& rng) {
    const IspParams p1 = sample_params(profile, rng);
    const IspParams p2 = sample_params(profile, rng);
    return {degrade(clean, p1), degrade(clean, p2)};
}

// ---------------------------------------------------------------------------
// Sidecar serialization
// ---------------------------------------------------------------------------

inline nlohmann::json params_to_json(const IspParams& p) {
    return nlohmann::json{{"wb_gains", p.wb_gains},
                          {"ccm", p.ccm},
                          {"gamma", p.gamma},
                          {"gauss_sigma", p.gauss_sigma},
                          {"poisson_lambda", p.poisson_lambda},
                          {"jpeg_qf", p.jpeg_qf},
                          {"seed", p.seed}};
}

inline IspParams params_from_json(const nlohmann::json& j) {
    IspParams p;
    p.wb_gains = j.at("wb_gains").get<std::array<double, 3>>();
    p.ccm = j.at("ccm").get<std::array<std::array<double, 3>, 3>>();
    p.gamma = j.at("gamma").get<double>();
    p.gauss_sigma = j.at("gauss_sigma").get<double>();
    p.poisson_lambda = j.at("poisson_lambda").get<double>();
    p.jpeg_qf = j.at("jpeg_qf").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

}  // namespace dirlearn::isp
