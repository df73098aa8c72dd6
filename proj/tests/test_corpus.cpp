#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>

#include "dirlearn/corpus.hpp"
#include "dirlearn/isp.hpp"

using namespace dirlearn;

TEST_CASE("toy corpus generation") {
    Rng rng(101);
    auto samples = corpus::gen_toy_corpus(1000, 4, rng);
    REQUIRE(samples.size() == 1000);

    SECTION("class histogram within 10% of uniform") {
        std::map<int, int> hist;
        for (const auto& s : samples) hist[s.label]++;
        for (const auto& [label, count] : hist) {
            REQUIRE(label >= 0);
            REQUIRE(label < 4);
            REQUIRE(std::abs(count - 250) <= 25);
        }
    }

    SECTION("pixels stay in [0,1] and patches are 64x64") {
        for (int i = 0; i < 50; ++i) {
            REQUIRE(samples[static_cast<std::size_t>(i)].clean.height() == 64);
            REQUIRE(samples[static_cast<std::size_t>(i)].clean.width() == 64);
            for (float v : samples[static_cast<std::size_t>(i)].clean.pixels()) {
                REQUIRE(v >= 0.f);
                REQUIRE(v <= 1.f);
            }
        }
    }

    SECTION("same seed regenerates the corpus bit-exactly") {
        Rng rng2(101);
        auto again = corpus::gen_toy_corpus(1000, 4, rng2);
        for (int i : {0, 17, 500, 999}) {
            REQUIRE(again[static_cast<std::size_t>(i)].seed == samples[static_cast<std::size_t>(i)].seed);
            REQUIRE(again[static_cast<std::size_t>(i)].clean.pixels() == samples[static_cast<std::size_t>(i)].clean.pixels());
        }
    }

    SECTION("samples regenerate from their own meta") {
        for (int i : {3, 42, 777}) {
            const auto& s = samples[static_cast<std::size_t>(i)];
            const ImageRGB again = corpus::render_toy(s.seed, s.label);
            REQUIRE(again.pixels() == s.clean.pixels());
        }
    }

    SECTION("all ten shape families render") {
        Rng r(7);
        auto ten = corpus::gen_toy_corpus(10, 10, r);
        for (const auto& s : ten)
            for (float v : s.clean.pixels()) REQUIRE(std::isfinite(v));
    }

    REQUIRE_THROWS_AS(corpus::gen_toy_corpus(10, 1, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(corpus::gen_toy_corpus(10, 11, rng), std::invalid_argument);
}

TEST_CASE("labels are degradation-invariant by construction") {
    Rng rng(5);
    auto samples = corpus::gen_toy_corpus(4, 4, rng);
    const auto profile = isp::DegradationProfile::preset_dark();
    for (const auto& s : samples) {
        // degradation acts on pixels only; the label rides along unchanged
        const ImageRGB degraded = isp::degrade(s.clean, isp::sample_params(profile, rng));
        REQUIRE(degraded.height() == s.clean.height());
        REQUIRE(s.label == samples[static_cast<std::size_t>(&s - samples.data())].label);
    }
}

TEST_CASE("corpus manifest round trip") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "dirlearn_corpus_test";
    fs::remove_all(dir);

    Rng rng(9);
    auto samples = corpus::gen_toy_corpus(6, 3, rng);
    corpus::save_corpus(dir.string(), samples);

    REQUIRE(fs::exists(dir / "manifest.json"));
    REQUIRE(fs::exists(dir / "toy0.png"));

    auto loaded = corpus::load_corpus(dir.string());
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        REQUIRE(loaded[i].label == samples[i].label);
        REQUIRE(loaded[i].seed == samples[i].seed);
        REQUIRE(loaded[i].clean.pixels() == samples[i].clean.pixels());  // regenerated, bit-exact
    }
    fs::remove_all(dir);
}

TEST_CASE("folder ingestion") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "dirlearn_folder_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    Rng rng(3);
    auto samples = corpus::gen_toy_corpus(3, 3, rng);
    write_image_png8((dir / "a.png").string(), samples[0].clean);
    write_image_png16((dir / "b.png").string(), samples[1].clean);
    {
        ImageRGB big(128, 96);
        for (int y = 0; y < 128; ++y)
            for (int x = 0; x < 96; ++x)
                for (int c = 0; c < 3; ++c) big.at(y, x, c) = static_cast<float>((x + y + c) % 97) / 96.f;
        write_image_png8((dir / "c.png").string(), big);
    }

    SECTION("two crops per image over three valid files") {
        Rng crop_rng(11);
        auto patches = corpus::load_folder(dir.string(), 2, crop_rng);
        REQUIRE(patches.size() == 6);
        for (const auto& p : patches) {
            REQUIRE(p.height() == 64);
            REQUIRE(p.width() == 64);
            for (float v : p.pixels()) {
                REQUIRE(v >= 0.f);
                REQUIRE(v <= 1.f);
            }
        }
    }

    SECTION("deterministic crops given seed") {
        Rng r1(21), r2(21);
        auto p1 = corpus::load_folder(dir.string(), 2, r1);
        auto p2 = corpus::load_folder(dir.string(), 2, r2);
        REQUIRE(p1.size() == p2.size());
        for (std::size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i].pixels() == p2[i].pixels());
    }

    SECTION("unreadable files are skipped with a warning") {
        std::ofstream bad(dir / "broken.png");
        bad << "not a png";
        bad.close();
        Rng r(31);
        auto patches = corpus::load_folder(dir.string(), 1, r);
        REQUIRE(patches.size() == 3);
    }

    SECTION("empty folder raises") {
        const auto empty = dir / "empty";
        fs::create_directories(empty);
        Rng r(41);
        REQUIRE_THROWS(corpus::load_folder(empty.string(), 1, r));
    }

    fs::remove_all(dir);
}
