#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dirlearn/autodiff.hpp"
#include "dirlearn/rng.hpp"

namespace dirlearn::dist {

inline constexpr double kLogVarMin = -14.0;
inline constexpr double kLogVarMax = 14.0;

// Diagonal Gaussian over a latent grid, parameterized inside the autodiff
// graph so every operation below is differentiable in mean and logvar.
struct GaussianVar {
    ag::Var mean;
    ag::Var logvar;

    const std::vector<int>& shape() const { return mean.shape(); }
};

// Plain-value counterpart used outside training graphs.
struct DiagonalGaussian {
    ag::Tensor mean;
    ag::Tensor logvar;

    GaussianVar as_var() const { return {ag::constant(mean), ag::constant(logvar)}; }
};

inline GaussianVar make_gaussian(ag::Var mean, ag::Var logvar) {
    ag::check_same_shape(mean.val(), logvar.val(), "make_gaussian");
    return {std::move(mean), ag::clamp(std::move(logvar), kLogVarMin, kLogVarMax)};
}

// Reparameterized draw: mean + exp(logvar/2) * eps.
inline ag::Var sample(const GaussianVar& g, Rng& rng) {
    ag::Tensor eps(g.mean.shape());
    for (std::int64_t i = 0; i < eps.numel(); ++i) eps[i] = rng.normal();
    return ag::add(g.mean, ag::mul(ag::exp_(ag::scale(g.logvar, 0.5)), ag::constant(eps)));
}

// Sum over elements of KL(g || N(0, I)).
inline ag::Var kl_to_standard_normal(const GaussianVar& g) {
    ag::Var term = ag::sub(ag::add(ag::exp_(g.logvar), ag::square(g.mean)), g.logvar);
    return ag::scale(ag::sum(ag::add_const(term, -1.0)), 0.5);
}

// Sum over elements of KL(g1 || g2), closed form for diagonal Gaussians.
inline ag::Var kl(const GaussianVar& g1, const GaussianVar& g2) {
    ag::check_same_shape(g1.mean.val(), g2.mean.val(), "kl");
    ag::Var dlv = ag::sub(g1.logvar, g2.logvar);
    ag::Var ratio = ag::exp_(dlv);
    ag::Var maha = ag::mul(ag::square(ag::sub(g2.mean, g1.mean)), ag::exp_(ag::neg(g2.logvar)));
    ag::Var term = ag::sub(ag::add(ratio, maha), dlv);
    return ag::scale(ag::sum(ag::add_const(term, -1.0)), 0.5);
}

// Product of experts: precisions add, means are precision-weighted.
inline GaussianVar poe(const GaussianVar& g1, const GaussianVar& g2) {
    ag::check_same_shape(g1.mean.val(), g2.mean.val(), "poe");
    ag::Var p1 = ag::exp_(ag::neg(g1.logvar));
    ag::Var p2 = ag::exp_(ag::neg(g2.logvar));
    ag::Var psum = ag::add(p1, p2);
    ag::Var mean = ag::div(ag::add(ag::mul(p1, g1.mean), ag::mul(p2, g2.mean)), psum);
    ag::Var logvar = ag::clamp(ag::neg(ag::log_(psum)), kLogVarMin, kLogVarMax);
    return {std::move(mean), std::move(logvar)};
}

// --- value-level conveniences -----------------------------------------------

inline ag::Tensor sample(const DiagonalGaussian& g, Rng& rng) {
    return sample(g.as_var(), rng).val();
}

inline double kl_to_standard_normal(const DiagonalGaussian& g) {
    return kl_to_standard_normal(g.as_var()).item();
}

inline double kl(const DiagonalGaussian& g1, const DiagonalGaussian& g2) {
    return kl(g1.as_var(), g2.as_var()).item();
}

inline DiagonalGaussian poe(const DiagonalGaussian& g1, const DiagonalGaussian& g2) {
    GaussianVar r = poe(g1.as_var(), g2.as_var());
    return {r.mean.val(), r.logvar.val()};
}

// --- latent grid serialization ----------------------------------------------
// One JSON header line, then raw little-endian float32 data.

inline void save_latent(const std::string& path, const ag::Tensor& latent, const std::string& role,
                        const std::string& source_id) {
    nlohmann::json header{{"shape", latent.shape()}, {"role", role}, {"source", source_id},
                          {"dtype", "f32le"}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write latent file: " + path);
    out << header.dump() << '\n';
    std::vector<float> buf(static_cast<std::size_t>(latent.numel()));
    for (std::int64_t i = 0; i < latent.numel(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(latent[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

struct LatentFile {
    ag::Tensor data;
    std::string role;
    std::string source_id;
};

inline LatentFile load_latent(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read latent file: " + path);
    std::string line;
    std::getline(in, line);
    const auto header = nlohmann::json::parse(line);
    LatentFile out;
    out.role = header.at("role").get<std::string>();
    out.source_id = header.at("source").get<std::string>();
    out.data = ag::Tensor(header.at("shape").get<std::vector<int>>());
    std::vector<float> buf(static_cast<std::size_t>(out.data.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw std::runtime_error("latent file truncated: " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) out.data[static_cast<std::int64_t>(i)] = buf[i];
    return out;
}

}  // namespace dirlearn::dist
