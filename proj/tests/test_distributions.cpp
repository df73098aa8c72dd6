#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dirlearn/distributions.hpp"
#include "test_util.hpp"

using namespace dirlearn;
using ag::Tensor;
using ag::Var;
using dist::DiagonalGaussian;
using testutil::random_tensor;

namespace {

DiagonalGaussian random_gaussian(std::vector<int> shape, Rng& rng) {
    DiagonalGaussian g;
    g.mean = random_tensor(shape, rng, 1.0);
    g.logvar = random_tensor(shape, rng, 0.7);
    return g;
}

// Monte-Carlo KL(g1||g2) by direct log-density sampling; the independent
// oracle for the closed forms.
double mc_kl(const DiagonalGaussian& g1, const DiagonalGaussian& g2, int draws, Rng& rng) {
    double acc = 0.0;
    for (int d = 0; d < draws; ++d) {
        for (std::int64_t i = 0; i < g1.mean.numel(); ++i) {
            const double eps = rng.normal();
            const double x = g1.mean[i] + std::exp(0.5 * g1.logvar[i]) * eps;
            const double log_p1 = -0.5 * (g1.logvar[i] + eps * eps);
            const double z = x - g2.mean[i];
            const double log_p2 = -0.5 * (g2.logvar[i] + z * z * std::exp(-g2.logvar[i]));
            acc += log_p1 - log_p2;
        }
    }
    return acc / draws;
}

DiagonalGaussian standard_normal(std::vector<int> shape) {
    DiagonalGaussian g;
    g.mean = Tensor::zeros(shape);
    g.logvar = Tensor::zeros(std::move(shape));
    return g;
}

}  // namespace

TEST_CASE("reparameterized sampling") {
    Rng rng(5);

    SECTION("vanishing variance collapses to the mean") {
        DiagonalGaussian g;
        g.mean = random_tensor({4, 2, 2}, rng);
        g.logvar = Tensor::full({4, 2, 2}, -14.0);
        Tensor s = dist::sample(g, rng);
        double mad = 0.0;
        for (std::int64_t i = 0; i < s.numel(); ++i) mad += std::fabs(s[i] - g.mean[i]);
        REQUIRE(mad / static_cast<double>(s.numel()) < 1e-3);
    }

    SECTION("empirical mean within 3 standard errors over 1e5 draws") {
        DiagonalGaussian g;
        g.mean = Tensor::full({2}, 0.7);
        g.logvar = Tensor::full({2}, 0.4);
        const int n = 100000;
        double acc[2] = {0, 0};
        for (int i = 0; i < n; ++i) {
            Tensor s = dist::sample(g, rng);
            acc[0] += s[0];
            acc[1] += s[1];
        }
        const double se = std::exp(0.2) / std::sqrt(static_cast<double>(n));
        REQUIRE(std::fabs(acc[0] / n - 0.7) < 3 * se);
        REQUIRE(std::fabs(acc[1] / n - 0.7) < 3 * se);
    }

    SECTION("fixed seed reproduces the draw") {
        DiagonalGaussian g = random_gaussian({3, 2, 2}, rng);
        Rng a(99), b(99);
        Tensor s1 = dist::sample(g, a);
        Tensor s2 = dist::sample(g, b);
        for (std::int64_t i = 0; i < s1.numel(); ++i) REQUIRE(s1[i] == s2[i]);
    }
}

TEST_CASE("kl to standard normal") {
    Rng rng(7);

    REQUIRE(dist::kl_to_standard_normal(standard_normal({4, 4})) == 0.0);

    DiagonalGaussian g;
    g.mean = Tensor::full({1}, 1.0);
    g.logvar = Tensor::zeros({1});
    REQUIRE(dist::kl_to_standard_normal(g) == Catch::Approx(0.5).epsilon(1e-12));

    SECTION("matches Monte-Carlo within 2% at 1e5 draws") {
        DiagonalGaussian h = random_gaussian({3, 2, 2}, rng);
        const double closed = dist::kl_to_standard_normal(h);
        const double mc = mc_kl(h, standard_normal({3, 2, 2}), 100000, rng);
        REQUIRE(mc == Catch::Approx(closed).epsilon(0.02));
    }
}

TEST_CASE("pairwise kl") {
    Rng rng(9);

    SECTION("kl(g,g) = 0") {
        for (int t = 0; t < 10; ++t) {
            DiagonalGaussian g = random_gaussian({2, 3}, rng);
            REQUIRE(dist::kl(g, g) == Catch::Approx(0.0).margin(1e-12));
        }
    }

    SECTION("scalar closed form: KL(N(0,1) || N(0,e)) = 1/(2e)") {
        DiagonalGaussian a = standard_normal({1});
        DiagonalGaussian b = standard_normal({1});
        b.logvar[0] = 1.0;
        REQUIRE(dist::kl(a, b) == Catch::Approx(1.0 / (2.0 * std::exp(1.0))).epsilon(1e-12));
        REQUIRE(dist::kl(a, b) == Catch::Approx(0.1839).margin(5e-4));
    }

    SECTION("matches Monte-Carlo within 2% on random pairs") {
        for (int t = 0; t < 3; ++t) {
            DiagonalGaussian a = random_gaussian({2, 2}, rng);
            DiagonalGaussian b = random_gaussian({2, 2}, rng);
            const double closed = dist::kl(a, b);
            const double mc = mc_kl(a, b, 100000, rng);
            REQUIRE(mc == Catch::Approx(closed).epsilon(0.02));
        }
    }

    SECTION("shape mismatch raises") {
        REQUIRE_THROWS_AS(dist::kl(standard_normal({2}), standard_normal({3})),
                          std::invalid_argument);
    }
}

TEST_CASE("product of experts") {
    Rng rng(11);

    SECTION("two standard normals fuse to N(0, 0.5) exactly") {
        DiagonalGaussian r = dist::poe(standard_normal({3}), standard_normal({3}));
        for (std::int64_t i = 0; i < 3; ++i) {
            REQUIRE(r.mean[i] == 0.0);
            REQUIRE(std::exp(r.logvar[i]) == Catch::Approx(0.5).epsilon(1e-12));
        }
    }

    SECTION("symmetric means cancel") {
        DiagonalGaussian a = standard_normal({2});
        DiagonalGaussian b = standard_normal({2});
        a.mean[0] = a.mean[1] = 1.0;
        b.mean[0] = b.mean[1] = -1.0;
        DiagonalGaussian r = dist::poe(a, b);
        REQUIRE(r.mean[0] == Catch::Approx(0.0).margin(1e-15));
        REQUIRE(std::exp(r.logvar[0]) == Catch::Approx(0.5).epsilon(1e-12));
    }

    SECTION("uninformative expert is absorbed") {
        DiagonalGaussian g = random_gaussian({2, 2}, rng);
        DiagonalGaussian wide;
        wide.mean = random_tensor({2, 2}, rng);
        wide.logvar = Tensor::full({2, 2}, 14.0);
        DiagonalGaussian r = dist::poe(g, wide);
        for (std::int64_t i = 0; i < 4; ++i) {
            REQUIRE(std::fabs(r.mean[i] - g.mean[i]) < 1e-3);
            REQUIRE(std::fabs(r.logvar[i] - g.logvar[i]) < 1e-3);
        }
    }

    SECTION("commutative; variance never exceeds either input") {
        for (int t = 0; t < 100; ++t) {
            DiagonalGaussian a = random_gaussian({2, 2}, rng);
            DiagonalGaussian b = random_gaussian({2, 2}, rng);
            DiagonalGaussian ab = dist::poe(a, b);
            DiagonalGaussian ba = dist::poe(b, a);
            for (std::int64_t i = 0; i < 4; ++i) {
                REQUIRE(ab.mean[i] == Catch::Approx(ba.mean[i]).margin(1e-14));
                REQUIRE(ab.logvar[i] == Catch::Approx(ba.logvar[i]).margin(1e-14));
                REQUIRE(ab.logvar[i] <= std::min(a.logvar[i], b.logvar[i]) + 1e-12);
            }
        }
    }
}

TEST_CASE("kl nonnegativity over 1000 random gaussians") {
    Rng rng(13);
    for (int t = 0; t < 1000; ++t) {
        DiagonalGaussian a = random_gaussian({4}, rng);
        DiagonalGaussian b = random_gaussian({4}, rng);
        REQUIRE(dist::kl(a, b) >= 0.0);
        REQUIRE(dist::kl_to_standard_normal(a) >= 0.0);
    }
}

TEST_CASE("gradients of sample, kl, kl_to_standard_normal match finite differences") {
    Rng rng(17);
    std::vector<ag::Tensor> in{random_tensor({2, 2}, rng, 0.8), random_tensor({2, 2}, rng, 0.5),
                               random_tensor({2, 2}, rng, 0.8), random_tensor({2, 2}, rng, 0.5)};

    SECTION("kl and prior kl") {
        auto build = [](std::vector<Var>& v) {
            dist::GaussianVar g1 = dist::make_gaussian(v[0], v[1]);
            dist::GaussianVar g2 = dist::make_gaussian(v[2], v[3]);
            return ag::add(dist::kl(g1, g2), dist::kl_to_standard_normal(g1));
        };
        REQUIRE(testutil::max_rel_grad_error(in, build) < 1e-4);
    }

    SECTION("reparameterized sample and poe") {
        auto build = [](std::vector<Var>& v) {
            dist::GaussianVar g1 = dist::make_gaussian(v[0], v[1]);
            dist::GaussianVar g2 = dist::make_gaussian(v[2], v[3]);
            dist::GaussianVar j = dist::poe(g1, g2);
            Rng draw(42);  // fixed noise: the gradient is through mean/logvar
            return ag::mean(ag::square(dist::sample(j, draw)));
        };
        REQUIRE(testutil::max_rel_grad_error(in, build) < 1e-4);
    }
}
