#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dirlearn/corpus.hpp"
#include "dirlearn/isp.hpp"
#include "dirlearn/networks.hpp"

namespace dirlearn::eval {

// ---------------------------------------------------------------------------
// Image metrics
// ---------------------------------------------------------------------------

inline double psnr(const ImageRGB& a, const ImageRGB& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i) {
        const double d = static_cast<double>(a.pixels()[i]) - b.pixels()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.pixels().size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

struct SsimValue {
    double ssim = 0.0;                // full index
    double luminance = 0.0;           // mean luminance term
    double contrast_structure = 0.0;  // mean contrast-structure product
};

// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// valid-region average over the three channels.
inline SsimValue ssim_components(const ImageRGB& a, const ImageRGB& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    constexpr int kWin = 11, kHalf = 5;
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    if (a.height() < kWin || a.width() < kWin)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    static const std::array<double, kWin> kernel = [] {
        std::array<double, kWin> k{};
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - kHalf;
            k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += k[static_cast<std::size_t>(i)];
        }
        for (auto& v : k) v /= sum;
        return k;
    }();

    SsimValue out;
    std::int64_t count = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = kHalf; y < a.height() - kHalf; ++y)
            for (int x = kHalf; x < a.width() - kHalf; ++x) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int i = -kHalf; i <= kHalf; ++i)
                    for (int j = -kHalf; j <= kHalf; ++j) {
                        const double w = kernel[static_cast<std::size_t>(i + kHalf)] *
                                         kernel[static_cast<std::size_t>(j + kHalf)];
                        const double va = a.at(y + i, x + j, c);
                        const double vb = b.at(y + i, x + j, c);
                        mx += w * va;
                        my += w * vb;
                        mxx += w * va * va;
                        myy += w * vb * vb;
                        mxy += w * va * vb;
                    }
                const double vx = mxx - mx * mx;
                const double vy = myy - my * my;
                const double cov = mxy - mx * my;
                const double lum = (2 * mx * my + kC1) / (mx * mx + my * my + kC1);
                const double cs = (2 * cov + kC2) / (vx + vy + kC2);
                out.luminance += lum;
                out.contrast_structure += cs;
                out.ssim += lum * cs;
                ++count;
            }
    out.ssim /= static_cast<double>(count);
    out.luminance /= static_cast<double>(count);
    out.contrast_structure /= static_cast<double>(count);
    return out;
}

inline double ssim(const ImageRGB& a, const ImageRGB& b) { return ssim_components(a, b).ssim; }

// ---------------------------------------------------------------------------
// Latent-space diagnostics
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<double>> mean_latents(const nets::Encoder& encoder,
                                                     const std::vector<ImageRGB>& images) {
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    constexpr std::size_t kChunk = 32;
    for (std::size_t start = 0; start < images.size(); start += kChunk) {
        const std::size_t stop = std::min(images.size(), start + kChunk);
        std::vector<ImageRGB> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                    images.begin() + static_cast<std::ptrdiff_t>(stop));
        const auto g = encoder.encode_value(to_tensor(chunk));
        const std::int64_t per = g.mean.numel() / static_cast<std::int64_t>(chunk.size());
        for (std::size_t n = 0; n < chunk.size(); ++n) {
            std::vector<double> z(static_cast<std::size_t>(per));
            for (std::int64_t i = 0; i < per; ++i)
                z[static_cast<std::size_t>(i)] = g.mean[static_cast<std::int64_t>(n) * per + i];
            out.push_back(std::move(z));
        }
    }
    return out;
}

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace detail

// Mean L2 distance between mean-latents of same-content view pairs divided by
// the mean distance across different-content pairs. Near 1 for an encoder
// with no invariance structure; smaller once views of the same content are
// pulled together.
inline double latent_invariance_ratio(const nets::Encoder& encoder,
                                      const std::vector<std::pair<ImageRGB, ImageRGB>>& pairs) {
    if (pairs.size() < 50)
        throw std::invalid_argument("latent_invariance_ratio: need at least 50 pairs");
    std::vector<ImageRGB> firsts, seconds;
    for (const auto& [a, b] : pairs) {
        firsts.push_back(a);
        seconds.push_back(b);
    }
    const auto za = detail::mean_latents(encoder, firsts);
    const auto zb = detail::mean_latents(encoder, seconds);

    double intra = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) intra += detail::l2_distance(za[i], zb[i]);
    intra /= static_cast<double>(pairs.size());

    double inter = 0.0;
    std::int64_t n_inter = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        for (std::size_t j = 0; j < pairs.size(); ++j) {
            if (i == j) continue;
            inter += detail::l2_distance(za[i], zb[j]);
            ++n_inter;
        }
    inter /= static_cast<double>(n_inter);
    return intra / inter;
}

// ---------------------------------------------------------------------------
// PCA projection (latent visualization)
// ---------------------------------------------------------------------------

struct PcaResult {
    std::vector<std::array<double, 2>> coords;
    bool reduced_rank = false;  // fewer informative directions than requested
};

// Mean-centered projection onto the top principal directions. Deterministic
// sign convention: the largest-magnitude coordinate of each component is
// positive.
inline PcaResult pca_project(const std::vector<std::vector<double>>& latents, int dims = 2) {
    if (dims != 2) throw std::invalid_argument("pca_project: dims must be 2");
    const int n = static_cast<int>(latents.size());
    if (n < dims + 1) throw std::invalid_argument("pca_project: need at least dims+1 latents");
    const int d = static_cast<int>(latents[0].size());

    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = latents[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    X.rowwise() -= X.colwise().mean();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();

    PcaResult out;
    out.coords.assign(static_cast<std::size_t>(n), {0.0, 0.0});
    const double tol = 1e-9 * std::max(1.0, sv(0));
    int informative = 0;
    for (int j = 0; j < std::min<int>(dims, sv.size()); ++j)
        if (sv(j) > tol) ++informative;
    out.reduced_rank = informative < dims;

    for (int j = 0; j < std::min<int>(dims, sv.size()); ++j) {
        Eigen::VectorXd comp = svd.matrixU().col(j) * sv(j);
        int arg = 0;
        for (int i = 1; i < n; ++i)
            if (std::fabs(comp(i)) > std::fabs(comp(arg))) arg = i;
        if (comp(arg) < 0.0) comp = -comp;
        for (int i = 0; i < n; ++i) out.coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = comp(i);
    }
    return out;
}

inline void write_projection_csv(const std::string& path,
                                 const std::vector<std::array<double, 2>>& coords,
                                 const std::vector<std::string>& ids,
                                 const std::vector<std::string>& groups) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write projection csv: " + path);
    out << "id,x,y,group\n";
    char buf[64];
    for (std::size_t i = 0; i < coords.size(); ++i) {
        out << ids[i];
        std::snprintf(buf, sizeof(buf), ",%.10g,%.10g,", coords[i][0], coords[i][1]);
        out << buf << groups[i] << '\n';
    }
}

// Desk-scale analogue of the latent visualization experiment: pilot DfRs of
// many degradations of a few clean images, assigned to the nearest true-DfR
// centroid in the 2-D projection.
struct ClusteringResult {
    double accuracy = 0.0;
    PcaResult projection;            // centroids first, then pilots
    std::vector<std::string> ids;
    std::vector<std::string> groups;
};

inline ClusteringResult pilot_clustering(const nets::Encoder& dfr_encoder,
                                         const std::vector<ImageRGB>& cleans, int n_degradations,
                                         const isp::DegradationProfile& profile, std::uint64_t seed) {
    const int k = static_cast<int>(cleans.size());
    Rng rng(seed);

    std::vector<ImageRGB> all = cleans;  // centroids first
    std::vector<int> owner;
    for (int c = 0; c < k; ++c)
        for (int d = 0; d < n_degradations; ++d) {
            all.push_back(isp::degrade(cleans[static_cast<std::size_t>(c)], isp::sample_params(profile, rng)));
            owner.push_back(c);
        }

    const auto latents = detail::mean_latents(dfr_encoder, all);
    ClusteringResult res;
    res.projection = pca_project(latents, 2);

    int correct = 0;
    const int n_pilots = static_cast<int>(owner.size());
    for (int p = 0; p < n_pilots; ++p) {
        const auto& coord = res.projection.coords[static_cast<std::size_t>(k + p)];
        int best = 0;
        double best_d = std::numeric_limits<double>::max();
        for (int c = 0; c < k; ++c) {
            const auto& cent = res.projection.coords[static_cast<std::size_t>(c)];
            const double d = std::hypot(coord[0] - cent[0], coord[1] - cent[1]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best == owner[static_cast<std::size_t>(p)]) ++correct;
    }
    res.accuracy = static_cast<double>(correct) / n_pilots;

    for (int c = 0; c < k; ++c) {
        res.ids.push_back("dfr" + std::to_string(c));
        res.groups.push_back("reference" + std::to_string(c));
    }
    for (int p = 0; p < n_pilots; ++p) {
        res.ids.push_back("pilot" + std::to_string(p));
        res.groups.push_back("content" + std::to_string(owner[static_cast<std::size_t>(p)]));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Classification accuracy
// ---------------------------------------------------------------------------

inline double classification_accuracy(const nets::TaskHead& head, const std::vector<ImageRGB>& images,
                                      const std::vector<int>& labels) {
    if (images.empty() || images.size() != labels.size())
        throw std::invalid_argument("classification_accuracy: bad inputs");
    int correct = 0;
    constexpr std::size_t kChunk = 32;
    for (std::size_t start = 0; start < images.size(); start += kChunk) {
        const std::size_t stop = std::min(images.size(), start + kChunk);
        std::vector<ImageRGB> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                    images.begin() + static_cast<std::ptrdiff_t>(stop));
        const ag::Tensor logits = head.logits_value(to_tensor(chunk));
        const int k = logits.size(1);
        for (std::size_t n = 0; n < chunk.size(); ++n) {
            int arg = 0;
            for (int j = 1; j < k; ++j)
                if (logits[static_cast<std::int64_t>(n) * k + j] > logits[static_cast<std::int64_t>(n) * k + arg]) arg = j;
            if (arg == labels[start + n]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(images.size());
}

// ---------------------------------------------------------------------------
// Ablation report
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows;

    std::string to_csv() const {
        std::string out = "configuration,psnr,ssim\n";
        char buf[96];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f\n", r.name.c_str(), r.psnr, r.ssim);
            out += buf;
        }
        return out;
    }

    std::string to_text() const {
        char buf[96];
        std::string out = "configuration          PSNR(dB)   SSIM\n";
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%-22s %8.2f %6.4f\n", r.name.c_str(), r.psnr, r.ssim);
            out += buf;
        }
        return out;
    }
};

// Three-row ablation: decode(r0), decode(A(r0)) with a zeroed pilot, and
// decode(A(r0, pilot)). Evaluation uses posterior means. When a separately
// trained no-pilot checkpoint is supplied, the middle row uses its alignment
// network; otherwise the full model's alignment runs with the pilot zeroed.
inline AblationReport ablation_report(const nets::ModelBundle& bundle,
                                      const std::vector<corpus::ToySample>& test_set,
                                      const isp::DegradationProfile& profile, std::uint64_t seed,
                                      const nets::ModelBundle* no_pilot_bundle = nullptr) {
    if (test_set.empty()) throw std::invalid_argument("ablation_report: empty test set");
    Rng rng(seed);

    double p[3] = {0, 0, 0}, s[3] = {0, 0, 0};
    for (const auto& sample : test_set) {
        const ImageRGB x = isp::degrade(sample.clean, isp::sample_params(profile, rng));
        const ag::Tensor xt = to_tensor({x});

        const auto r0 = bundle.dir_encoder.encode_value(xt).mean;
        const auto pilot = bundle.dfr_encoder.encode_value(xt).mean;
        const ag::Tensor zero = ag::Tensor::zeros(r0.shape());

        const nets::ModelBundle& mid = no_pilot_bundle ? *no_pilot_bundle : bundle;

        const ImageRGB row0 = from_tensor(bundle.decoder.decode_value(r0), 0);
        const ImageRGB row1 = from_tensor(mid.decoder.decode_value(mid.alignment.forward_value(r0, zero)), 0);
        const ImageRGB row2 = from_tensor(bundle.decoder.decode_value(bundle.alignment.forward_value(r0, pilot)), 0);

        const ImageRGB rows[3] = {row0, row1, row2};
        for (int r = 0; r < 3; ++r) {
            p[r] += psnr(rows[r], sample.clean);
            s[r] += ssim(rows[r], sample.clean);
        }
    }

    const double n = static_cast<double>(test_set.size());
    AblationReport report;
    report.rows = {{"baseline r0", p[0] / n, s[0] / n},
                   {"+ alignment (no pilot)", p[1] / n, s[1] / n},
                   {"+ alignment + pilot", p[2] / n, s[2] / n}};
    return report;
}

}  // namespace dirlearn::eval
