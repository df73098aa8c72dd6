#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dirlearn/autodiff.hpp"
#include "dirlearn/distributions.hpp"
#include "dirlearn/rng.hpp"

namespace dirlearn::mi {

// log(1 + e^t), overflow-safe at both ends.
inline double softplus(double t) { return ag::softplus_s(t); }

// Critic scores on samples of the joint and of the product of marginals.
struct CriticBatch {
    std::vector<double> joint_scores;
    std::vector<double> marginal_scores;
};

// Jensen-Shannon lower bound on mutual information:
//   E_J[-softplus(-F)] - E_M[softplus(F)].
// With F == 0 this evaluates to -2 ln 2; the supremum over critics is the
// quantity maximized as the MI surrogate.
inline ag::Var jsd_mi_lower_bound(const ag::Var& joint_scores, const ag::Var& marginal_scores) {
    ag::Var pos = ag::mean(ag::neg(ag::softplus(ag::neg(joint_scores))));
    ag::Var negv = ag::mean(ag::softplus(marginal_scores));
    return ag::sub(pos, negv);
}

inline double jsd_mi_lower_bound(const CriticBatch& batch) {
    if (batch.joint_scores.size() < 2 || batch.marginal_scores.size() < 2)
        throw std::invalid_argument("jsd_mi_lower_bound: need at least 2 scores per side");
    ag::Tensor j({static_cast<int>(batch.joint_scores.size())});
    ag::Tensor m({static_cast<int>(batch.marginal_scores.size())});
    for (std::size_t i = 0; i < batch.joint_scores.size(); ++i) j[static_cast<std::int64_t>(i)] = batch.joint_scores[i];
    for (std::size_t i = 0; i < batch.marginal_scores.size(); ++i) m[static_cast<std::int64_t>(i)] = batch.marginal_scores[i];
    return jsd_mi_lower_bound(ag::constant(j), ag::constant(m)).item();
}

// Seeded derangement (Sattolo's cycle): no index maps to itself for N >= 2.
// Realizes in-batch negative sampling for the product of marginals.
inline std::vector<int> derangement(int n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("derangement: need at least 2 elements");
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, i - 1);
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    return perm;
}

template <typename T>
std::vector<T> shuffle_pairing(const std::vector<T>& latents, Rng& rng) {
    const auto perm = derangement(static_cast<int>(latents.size()), rng);
    std::vector<T> out;
    out.reserve(latents.size());
    for (int p : perm) out.push_back(latents[static_cast<std::size_t>(p)]);
    return out;
}

// Variational upper bound on conditional MI: KL from the joint posterior to a
// single-view posterior.
inline ag::Var cmi_upper_bound(const dist::GaussianVar& joint, const dist::GaussianVar& conditional) {
    return dist::kl(joint, conditional);
}

inline double cmi_upper_bound(const dist::DiagonalGaussian& joint,
                              const dist::DiagonalGaussian& conditional) {
    return dist::kl(joint, conditional);
}

// Average of the two conditional-MI bounds.
inline ag::Var d_akl(const dist::GaussianVar& joint, const dist::GaussianVar& cond1,
                     const dist::GaussianVar& cond2) {
    return ag::scale(ag::add(dist::kl(joint, cond1), dist::kl(joint, cond2)), 0.5);
}

inline double d_akl(const dist::DiagonalGaussian& joint, const dist::DiagonalGaussian& cond1,
                    const dist::DiagonalGaussian& cond2) {
    return d_akl(joint.as_var(), cond1.as_var(), cond2.as_var()).item();
}

}  // namespace dirlearn::mi
