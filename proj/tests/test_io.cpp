#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "dirlearn/distributions.hpp"
#include "dirlearn/isp.hpp"
#include "dirlearn/png_io.hpp"
#include "test_util.hpp"

using namespace dirlearn;

namespace {
const std::filesystem::path kDir = std::filesystem::temp_directory_path() / "dirlearn_io_test";
}

TEST_CASE("8-bit PNG round trip within quantization") {
    std::filesystem::create_directories(kDir);
    ImageRGB img = testutil::smooth_image(40, 24, 7);
    const std::string path = (kDir / "rgb8.png").string();
    write_image_png8(path, img);
    ImageRGB back = read_image_png(path);
    REQUIRE(back.height() == 40);
    REQUIRE(back.width() == 24);
    for (std::size_t i = 0; i < img.pixels().size(); ++i)
        REQUIRE(std::fabs(back.pixels()[i] - img.pixels()[i]) <= 0.5f / 255.f + 1e-6f);
}

TEST_CASE("16-bit PNG round trip within quantization") {
    std::filesystem::create_directories(kDir);
    ImageRGB img = testutil::smooth_image(16, 16, 9);
    const std::string path = (kDir / "rgb16.png").string();
    write_image_png16(path, img);
    ImageRGB back = read_image_png(path);
    for (std::size_t i = 0; i < img.pixels().size(); ++i)
        REQUIRE(std::fabs(back.pixels()[i] - img.pixels()[i]) <= 0.5f / 65535.f + 1e-7f);
}

TEST_CASE("raw frames persist as 16-bit gray PNG with a params sidecar") {
    std::filesystem::create_directories(kDir);
    ImageRGB img = testutil::smooth_image(32, 32, 11);
    BayerRaw raw = isp::mosaic(img);

    const std::string raw_path = (kDir / "frame.raw.png").string();
    write_raw_png16(raw_path, raw);
    BayerRaw back = read_raw_png16(raw_path);
    REQUIRE(back.height() == raw.height());
    REQUIRE(back.width() == raw.width());
    for (std::size_t i = 0; i < raw.pixels().size(); ++i)
        REQUIRE(std::fabs(back.pixels()[i] - raw.pixels()[i]) <= 0.5f / 65535.f + 1e-7f);

    Rng rng(3);
    const auto params = isp::sample_params(isp::DegradationProfile::preset_default(), rng);
    {
        std::ofstream out(kDir / "frame.json");
        out << isp::params_to_json(params).dump(2);
    }
    std::ifstream in(kDir / "frame.json");
    nlohmann::json j;
    in >> j;
    const auto loaded = isp::params_from_json(j);
    REQUIRE(loaded.seed == params.seed);
    REQUIRE(loaded.jpeg_qf == params.jpeg_qf);
}

TEST_CASE("latent dumps carry shape, role and source through a JSON header") {
    std::filesystem::create_directories(kDir);
    Rng rng(5);
    ag::Tensor latent = testutil::random_tensor({8, 4, 4}, rng);
    const std::string path = (kDir / "latent.bin").string();

    dist::save_latent(path, latent, "pilot", "toy17");
    const auto loaded = dist::load_latent(path);
    REQUIRE(loaded.role == "pilot");
    REQUIRE(loaded.source_id == "toy17");
    REQUIRE(loaded.data.shape() == latent.shape());
    for (std::int64_t i = 0; i < latent.numel(); ++i)
        REQUIRE(loaded.data[i] == Catch::Approx(latent[i]).margin(1e-6));

    std::filesystem::remove_all(kDir);
}
