#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dirlearn/image.hpp"
#include "dirlearn/png_io.hpp"
#include "dirlearn/rng.hpp"

namespace dirlearn::corpus {

inline constexpr int kPatchSize = 64;
inline constexpr int kMaxClasses = 10;

// One labeled clean image; regenerable bit-exactly from (seed, label).
struct ToySample {
    ImageRGB clean;
    int label = 0;
    std::uint64_t seed = 0;
    std::string id;
};

namespace detail {

struct Vec2 {
    double x, y;
};

// Signed distance to the shape family boundary, negative inside.
inline double shape_sdf(int family, double px, double py, double r, double angle) {
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double x = ca * px + sa * py;
    const double y = -sa * px + ca * py;
    switch (family) {
        case 0:  // disk
            return std::hypot(x, y) - r;
        case 1: {  // square
            const double dx = std::fabs(x) - r * 0.85, dy = std::fabs(y) - r * 0.85;
            return std::max(dx, dy);
        }
        case 2: {  // equilateral triangle
            const double k = std::sqrt(3.0);
            double qx = std::fabs(x) - r;
            double qy = y + r / k;
            if (qx + k * qy > 0.0) {
                const double nx = (qx - k * qy) / 2.0;
                const double ny = (-k * qx - qy) / 2.0;
                qx = nx;
                qy = ny;
            }
            qx -= std::min(std::max(qx, -2.0 * r), 0.0);
            return -std::hypot(qx, qy) * (qy > 0.0 ? 1.0 : -1.0);
        }
        case 3: {  // ring
            return std::fabs(std::hypot(x, y) - r * 0.8) - r * 0.3;
        }
        case 4: {  // cross of two bars
            const double bx = std::max(std::fabs(x) - r, std::fabs(y) - r * 0.35);
            const double by = std::max(std::fabs(y) - r, std::fabs(x) - r * 0.35);
            return std::min(bx, by);
        }
        case 5:  // diamond (L1 ball)
            return (std::fabs(x) + std::fabs(y)) - r;
        case 6: {  // horizontal bar
            return std::max(std::fabs(x) - r, std::fabs(y) - r * 0.4);
        }
        case 7: {  // hollow square frame
            const double dx = std::fabs(x), dy = std::fabs(y);
            const double outer = std::max(dx, dy) - r * 0.9;
            const double inner = r * 0.45 - std::max(dx, dy);
            return std::max(outer, inner);
        }
        case 8: {  // two disks
            const double d1 = std::hypot(x - r * 0.6, y) - r * 0.5;
            const double d2 = std::hypot(x + r * 0.6, y) - r * 0.5;
            return std::min(d1, d2);
        }
        case 9: {  // four-petal star: disk modulated by angle
            const double rad = std::hypot(x, y);
            const double th = std::atan2(y, x);
            return rad - r * (0.55 + 0.45 * std::fabs(std::cos(2.0 * th)));
        }
        default:
            throw std::invalid_argument("shape_sdf: unknown family");
    }
}

}  // namespace detail

// Renders one sample deterministically from its seed; the toy corpus is a
// function of (seed, label) only.
inline ImageRGB render_toy(std::uint64_t seed, int label) {
    Rng rng(seed);
    ImageRGB img(kPatchSize, kPatchSize);

    // smooth background: oriented gradient between two muted colors
    double bg0[3], bg1[3];
    for (int c = 0; c < 3; ++c) {
        bg0[c] = rng.uniform(0.10, 0.45);
        bg1[c] = rng.uniform(0.55, 0.90);
    }
    const double gdir = rng.uniform(0.0, 6.2831853);
    const double gx = std::cos(gdir), gy = std::sin(gdir);

    // shape placement and a saturated foreground color; canonical orientation
    // keeps the families learnable from a small corpus
    const double cx = rng.uniform(20.0, 44.0);
    const double cy = rng.uniform(20.0, 44.0);
    const double radius = rng.uniform(9.0, 16.0);
    const double angle = 0.0;
    double fg[3];
    const int hot = rng.uniform_int(0, 2);
    for (int c = 0; c < 3; ++c) fg[c] = (c == hot) ? rng.uniform(0.75, 1.0) : rng.uniform(0.0, 0.35);

    for (int y = 0; y < kPatchSize; ++y)
        for (int x = 0; x < kPatchSize; ++x) {
            const double t = 0.5 + 0.5 * ((x - 32.0) / 32.0 * gx + (y - 32.0) / 32.0 * gy);
            const double sd = detail::shape_sdf(label % kMaxClasses, x - cx, y - cy, radius, angle);
            // 1px smoothstep edge for anti-aliasing
            double a = 0.5 - sd;
            a = std::min(1.0, std::max(0.0, a));
            a = a * a * (3.0 - 2.0 * a);
            for (int c = 0; c < 3; ++c) {
                const double bg = bg0[c] + (bg1[c] - bg0[c]) * t;
                img.at(y, x, c) = clamp01(bg + (fg[c] - bg) * a);
            }
        }
    return img;
}

inline std::vector<ToySample> gen_toy_corpus(int n, int n_classes, Rng& rng) {
    if (n_classes < 2 || n_classes > kMaxClasses)
        throw std::invalid_argument("gen_toy_corpus: n_classes must be in [2,10]");
    if (n <= 0) throw std::invalid_argument("gen_toy_corpus: n must be positive");
    std::vector<ToySample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ToySample s;
        s.label = i % n_classes;  // exactly uniform class histogram
        s.seed = rng.bits();
        s.id = "toy" + std::to_string(i);
        s.clean = render_toy(s.seed, s.label);
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Folder ingestion (user-supplied PNG images)
// ---------------------------------------------------------------------------

inline std::vector<ImageRGB> load_folder(const std::string& path, int crops_per_image, Rng& rng) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path)) throw std::invalid_argument("load_folder: not a directory: " + path);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(path))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());

    std::vector<ImageRGB> patches;
    for (const auto& file : files) {
        ImageRGB img;
        try {
            img = read_image_png(file);
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping unreadable image " << file << " (" << e.what() << ")\n";
            continue;
        }
        if (img.height() < kPatchSize || img.width() < kPatchSize) {
            std::cerr << "warning: skipping undersized image " << file << "\n";
            continue;
        }
        for (int k = 0; k < crops_per_image; ++k) {
            const int y0 = img.height() == kPatchSize ? 0 : rng.uniform_int(0, img.height() - kPatchSize);
            const int x0 = img.width() == kPatchSize ? 0 : rng.uniform_int(0, img.width() - kPatchSize);
            ImageRGB patch(kPatchSize, kPatchSize);
            for (int y = 0; y < kPatchSize; ++y)
                for (int x = 0; x < kPatchSize; ++x)
                    for (int c = 0; c < 3; ++c) patch.at(y, x, c) = img.at(y0 + y, x0 + x, c);
            patches.push_back(std::move(patch));
        }
    }
    if (patches.empty()) throw std::runtime_error("load_folder: no usable images in " + path);
    return patches;
}

// ---------------------------------------------------------------------------
// Corpus manifest
// ---------------------------------------------------------------------------

inline void save_corpus(const std::string& dir, const std::vector<ToySample>& samples) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& s : samples) {
        const std::string file = s.id + ".png";
        write_image_png16(dir + "/" + file, s.clean);
        manifest.push_back({{"id", s.id}, {"label", s.label}, {"seed", s.seed}, {"file", file}});
    }
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + dir);
    out << manifest.dump(2) << '\n';
}

// Loading regenerates pixels from the recorded seeds, which reproduces the
// corpus bit-exactly rather than through PNG quantization.
inline std::vector<ToySample> load_corpus(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("no manifest.json in " + dir);
    nlohmann::json manifest;
    in >> manifest;
    std::vector<ToySample> out;
    for (const auto& entry : manifest) {
        ToySample s;
        s.id = entry.at("id").get<std::string>();
        s.label = entry.at("label").get<int>();
        s.seed = entry.at("seed").get<std::uint64_t>();
        s.clean = render_toy(s.seed, s.label);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace dirlearn::corpus
