#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "dirlearn/networks.hpp"
#include "test_util.hpp"

using namespace dirlearn;
using testutil::random_tensor;

namespace {

nets::BundleConfig small_config() {
    nets::BundleConfig cfg;
    cfg.encoder = {3, 8, 3, 8};
    cfg.alignment = {2, 1, 2, 2, 3};
    cfg.n_classes = 4;
    cfg.task_width = 4;
    cfg.critic_width = 4;
    cfg.init_seed = 99;
    return cfg;
}

ag::Tensor random_images(int n, int hw, std::uint64_t seed) {
    Rng rng(seed);
    ag::Tensor t({n, 3, hw, hw});
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform01();
    return t;
}

}  // namespace

TEST_CASE("encoder produces the configured latent grid") {
    nets::BundleConfig cfg;
    cfg.encoder = {3, 32, 3, 64};  // spec defaults
    nets::ModelBundle bundle(cfg);

    const auto g = bundle.dir_encoder.encode_value(random_images(1, 64, 5));
    REQUIRE(g.mean.shape() == std::vector<int>{1, 64, 8, 8});
    REQUIRE(g.logvar.shape() == std::vector<int>{1, 64, 8, 8});

    SECTION("deterministic given parameters and input") {
        const auto g2 = bundle.dir_encoder.encode_value(random_images(1, 64, 5));
        for (std::int64_t i = 0; i < g.mean.numel(); ++i) {
            REQUIRE(g.mean[i] == g2.mean[i]);
            REQUIRE(g.logvar[i] == g2.logvar[i]);
        }
    }

    SECTION("indivisible spatial dims rejected") {
        nets::Binding bind;
        REQUIRE_THROWS_AS(bundle.dir_encoder.encode(bind, ag::constant(random_images(1, 60, 1))),
                          std::invalid_argument);
    }
}

TEST_CASE("shape contracts hold over configured sizes") {
    nets::ModelBundle bundle(small_config());
    for (int hw : {32, 64, 96}) {
        nets::Binding bind;
        ag::Var img = ag::constant(random_images(2, hw, static_cast<std::uint64_t>(hw)));
        dist::GaussianVar g = bundle.dir_encoder.encode(bind, img);
        const int s = hw / 8;
        REQUIRE(g.mean.shape() == std::vector<int>{2, 8, s, s});

        ag::Var out = bundle.decoder.decode(bind, g.mean);
        REQUIRE(out.shape() == std::vector<int>{2, 3, hw, hw});
        for (std::int64_t i = 0; i < out.val().numel(); ++i) {
            REQUIRE(out.val()[i] >= 0.0);
            REQUIRE(out.val()[i] <= 1.0);
        }

        ag::Var refined = bundle.alignment.forward(bind, g.mean, g.mean);
        REQUIRE(refined.shape() == g.mean.shape());
    }
}

TEST_CASE("encode_joint is a symmetric product of experts") {
    nets::ModelBundle bundle(small_config());
    const ag::Tensor a = random_images(2, 32, 11);
    const ag::Tensor b = random_images(2, 32, 13);

    nets::Binding bind;
    dist::GaussianVar j12 = nets::encode_joint(bundle.dir_encoder, bind, ag::constant(a), ag::constant(b));
    dist::GaussianVar j21 = nets::encode_joint(bundle.dir_encoder, bind, ag::constant(b), ag::constant(a));
    for (std::int64_t i = 0; i < j12.mean.val().numel(); ++i) {
        REQUIRE(j12.mean.val()[i] == Catch::Approx(j21.mean.val()[i]).margin(1e-13));
        REQUIRE(j12.logvar.val()[i] == Catch::Approx(j21.logvar.val()[i]).margin(1e-13));
    }

    SECTION("identical views halve the variance") {
        dist::GaussianVar single = bundle.dir_encoder.encode(bind, ag::constant(a));
        dist::GaussianVar joint = nets::encode_joint(bundle.dir_encoder, bind, ag::constant(a), ag::constant(a));
        for (std::int64_t i = 0; i < single.mean.val().numel(); ++i) {
            REQUIRE(std::exp(joint.logvar.val()[i]) ==
                    Catch::Approx(0.5 * std::exp(single.logvar.val()[i])).epsilon(1e-10));
            REQUIRE(joint.mean.val()[i] == Catch::Approx(single.mean.val()[i]).margin(1e-12));
        }
    }
}

TEST_CASE("alignment network internals") {
    nets::ModelBundle bundle(small_config());
    Rng rng(3);
    ag::Tensor r0 = random_tensor({2, 8, 4, 4}, rng, 0.5);
    ag::Tensor pilot = random_tensor({2, 8, 4, 4}, rng, 0.5);

    nets::Binding bind;
    auto parts = bundle.alignment.forward_parts(bind, ag::constant(r0), ag::constant(pilot));

    SECTION("attention map lies in [0,1]; kernels finite") {
        for (std::int64_t i = 0; i < parts.attention.val().numel(); ++i) {
            REQUIRE(parts.attention.val()[i] >= 0.0);
            REQUIRE(parts.attention.val()[i] <= 1.0);
        }
        for (std::int64_t i = 0; i < parts.refined.val().numel(); ++i)
            REQUIRE(std::isfinite(parts.refined.val()[i]));
    }

    SECTION("zero attention gates the attended path off") {
        // saturate the attention head: sigmoid(-1e9) == 0 exactly
        auto& set = bundle.alignment.params();
        for (auto& p : set.params()) {
            if (p.name.find("attn2") == std::string::npos) continue;
            for (std::int64_t i = 0; i < p.value.numel(); ++i)
                p.value[i] = p.name.back() == 'b' ? -1e9 : 0.0;
        }
        nets::Binding b2;
        auto gated = bundle.alignment.forward_parts(b2, ag::constant(r0), ag::constant(pilot));
        for (std::int64_t i = 0; i < gated.attended.val().numel(); ++i)
            REQUIRE(gated.attended.val()[i] == 0.0);
        // output now reduces to A3 over the G-Conv path alone
        for (std::int64_t i = 0; i < gated.guided.val().numel(); ++i)
            REQUIRE(std::isfinite(gated.guided.val()[i]));
    }

    SECTION("deterministic: identical inputs and parameters give identical outputs") {
        nets::Binding b2;
        auto again = bundle.alignment.forward_parts(b2, ag::constant(r0), ag::constant(pilot));
        for (std::int64_t i = 0; i < parts.refined.val().numel(); ++i)
            REQUIRE(parts.refined.val()[i] == again.refined.val()[i]);
    }

    SECTION("k must divide latent channels") {
        Rng r(1);
        REQUIRE_THROWS_AS(nets::Alignment("a", {2, 1, 2, 3, 3}, 8, r), std::invalid_argument);
    }
}

TEST_CASE("task head logits") {
    nets::ModelBundle bundle(small_config());
    const ag::Tensor imgs = random_images(3, 64, 21);
    const ag::Tensor logits = bundle.task_head.logits_value(imgs);
    REQUIRE(logits.shape() == std::vector<int>{3, 4});
    for (int n = 0; n < 3; ++n) {
        double m = logits.at(0, 0, 0, 0);  // placeholder; recompute below
        m = logits[n * 4];
        for (int k = 1; k < 4; ++k) m = std::max(m, logits[n * 4 + k]);
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += std::exp(logits[n * 4 + k] - m);
        double total = 0.0;
        for (int k = 0; k < 4; ++k) total += std::exp(logits[n * 4 + k] - m) / s;
        REQUIRE(total == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("freeze and checksum contracts") {
    nets::ModelBundle bundle(small_config());

    const auto sum = bundle.checksum("decoder");
    REQUIRE(sum == bundle.checksum("decoder"));

    SECTION("checksum changes iff a parameter changes") {
        auto& p = bundle.decoder.params().params().front();
        const double orig = p.value[0];
        p.value[0] += 1e-9;
        REQUIRE(bundle.checksum("decoder") != sum);
        p.value[0] = orig;
        REQUIRE(bundle.checksum("decoder") == sum);
    }

    SECTION("frozen sets produce no gradients") {
        bundle.freeze({"dir_encoder"});
        nets::Binding bind;
        dist::GaussianVar g = bundle.dir_encoder.encode(bind, ag::constant(random_images(2, 32, 3)));
        ag::Var loss = ag::mean(ag::square(g.mean));
        ag::backward(loss);
        for (const auto& p : bundle.dir_encoder.params().params())
            REQUIRE(bind.grad(p) == nullptr);
        bundle.freeze({"dir_encoder"}, false);
    }

    SECTION("unknown set name raises") {
        REQUIRE_THROWS_AS(bundle.checksum("nonexistent"), std::out_of_range);
    }
}

TEST_CASE("checkpoint round trip is bit-exact and embeds config") {
    const auto dir = std::filesystem::temp_directory_path() / "dirlearn_test_ckpt";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "bundle.ckpt").string();

    nets::ModelBundle bundle(small_config());
    bundle.save(path);

    const auto cfg = nets::ModelBundle::peek_config(path);
    REQUIRE(cfg.encoder.base_width == 8);
    REQUIRE(cfg.init_seed == 99);

    auto restored = nets::ModelBundle::from_checkpoint(path);
    for (const auto& name : nets::ModelBundle::set_names())
        REQUIRE(restored->checksum(name) == bundle.checksum(name));

    // bit-exact through a mutate/save/load cycle
    bundle.decoder.params().params().front().value[0] = 0.123456789123456789;
    bundle.save(path);
    auto again = nets::ModelBundle::from_checkpoint(path);
    REQUIRE(again->decoder.params().params().front().value[0] == 0.123456789123456789);

    std::filesystem::remove_all(dir);
}
