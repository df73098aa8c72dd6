#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("DIRLEARN_CLI");
    return p ? p : "";
}

int run(const std::string& args) {
    const int rc = std::system((cli_path() + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("dirlearn_cli_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("cli subcommands", "[cli]") {
    if (cli_path().empty()) {
        SKIP("DIRLEARN_CLI not set");
    }
    TempDir tmp;
    const std::string corpus = (tmp.path / "corpus").string();

    SECTION("synth-data writes corpus, is seed-reproducible, refuses overwrites") {
        REQUIRE(run("synth-data --out " + corpus + " --n 8 --classes 4 --seed 3") == 0);
        REQUIRE(fs::exists(corpus + "/manifest.json"));
        int pngs = 0;
        for (const auto& e : fs::directory_iterator(corpus))
            if (e.path().extension() == ".png") ++pngs;
        REQUIRE(pngs == 8);

        // refusal without --force
        REQUIRE(run("synth-data --out " + corpus + " --n 8 --classes 4 --seed 3") != 0);

        const std::string manifest_before = slurp(corpus + "/manifest.json");
        const std::string png_before = slurp(corpus + "/toy0.png");
        REQUIRE(run("synth-data --out " + corpus + " --n 8 --classes 4 --seed 3 --force") == 0);
        REQUIRE(slurp(corpus + "/manifest.json") == manifest_before);
        REQUIRE(slurp(corpus + "/toy0.png") == png_before);

        // precondition: at least two classes
        REQUIRE(run("synth-data --out " + (tmp.path / "bad").string() + " --n 4 --classes 1") != 0);
    }

    SECTION("degrade honors profiles, pairs and sidecars") {
        REQUIRE(run("synth-data --out " + corpus + " --n 3 --classes 3 --seed 5") == 0);
        const std::string out = (tmp.path / "degraded").string();
        REQUIRE(run("degrade --in " + corpus + " --out " + out + " --profile dark --pairs --seed 11") == 0);

        int sidecars = 0;
        for (const auto& e : fs::directory_iterator(out))
            if (e.path().extension() == ".json") {
                ++sidecars;
                const auto j = nlohmann::json::parse(slurp(e.path()));
                const double sigma = j.at("gauss_sigma").get<double>();
                REQUIRE(sigma >= 0.15);
                REQUIRE(sigma <= 0.35);
            }
        REQUIRE(sidecars == 6);  // two views per input

        REQUIRE(run("degrade --in " + corpus + " --out " + out + " --profile nosuch") != 0);
    }

    SECTION("train and eval round trip with config file") {
        REQUIRE(run("synth-data --out " + corpus + " --n 8 --classes 3 --seed 7") == 0);
        const std::string cfg_path = (tmp.path / "cfg.toml").string();
        {
            std::ofstream cfg(cfg_path);
            cfg << "seed = 11\n[data]\ncorpus = \"" << corpus << "\"\nout = \""
                << (tmp.path / "run1").string() << "\"\n"
                << "[model]\nbase_width = 4\nlatent_channels = 4\ncritic_width = 4\ntask_width = 4\n"
                << "n_classes = 3\nm1 = 2\nm2 = 1\nm3 = 2\nk = 2\n"
                << "[stage1]\nmax_epochs = 1\nbatch_size = 4\nlr_drop_epoch = 1\n"
                << "[stage2]\nmax_epochs = 1\nbatch_size = 4\nlr_drop_epoch = 1\n";
        }

        // stage 2 without a stage-1 checkpoint: input error with a remedy hint
        const int rc_bad = std::system(
            (cli_path() + " train --stage 2 --config " + cfg_path + " 2> " + (tmp.path / "err.txt").string()).c_str());
        REQUIRE(WEXITSTATUS(rc_bad) != 0);
        REQUIRE(slurp(tmp.path / "err.txt").find("stage-1 checkpoint") != std::string::npos);

        REQUIRE(run("train --stage 1 --config " + cfg_path) == 0);
        REQUIRE(fs::exists(tmp.path / "run1" / "stage1.ckpt"));
        REQUIRE(fs::exists(tmp.path / "run1" / "config_resolved.toml"));
        REQUIRE(fs::exists(tmp.path / "run1" / "stage1_metrics.csv"));

        REQUIRE(run("train --stage 2 --config " + cfg_path + " --stage1-ckpt " +
                    (tmp.path / "run1" / "stage1.ckpt").string() + " --set data.out=" +
                    (tmp.path / "run2").string()) == 0);

        const std::string evalout = (tmp.path / "eval").string();
        REQUIRE(run("eval --ckpt " + (tmp.path / "run2" / "stage2.ckpt").string() + " --test " +
                    corpus + " --report ablation --out " + evalout) == 0);
        const std::string csv = slurp(evalout + "/ablation.csv");
        REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + exactly 3 rows

        // repeated invocation is identical
        const std::string first = csv;
        REQUIRE(run("eval --ckpt " + (tmp.path / "run2" / "stage2.ckpt").string() + " --test " +
                    corpus + " --report ablation --out " + evalout) == 0);
        REQUIRE(slurp(evalout + "/ablation.csv") == first);
    }

    SECTION("resume continues the epoch counter exactly") {
        REQUIRE(run("synth-data --out " + corpus + " --n 6 --classes 3 --seed 9") == 0);
        const std::string cfg_path = (tmp.path / "cfg.toml").string();
        {
            std::ofstream cfg(cfg_path);
            cfg << "seed = 12\n[data]\ncorpus = \"" << corpus << "\"\nout = \""
                << (tmp.path / "runr").string() << "\"\n"
                << "[model]\nbase_width = 4\nlatent_channels = 4\ncritic_width = 4\ntask_width = 4\n"
                << "n_classes = 3\nm1 = 2\nm2 = 1\nm3 = 2\nk = 2\n"
                << "[stage1]\nmax_epochs = 1\nbatch_size = 3\nlr_drop_epoch = 5\n";
        }
        REQUIRE(run("train --stage 1 --config " + cfg_path) == 0);
        REQUIRE(run("train --stage 1 --config " + cfg_path + " --resume " +
                    (tmp.path / "runr" / "stage1.ckpt").string() + " --set stage1.max_epochs=2") == 0);
        const std::string csv = slurp(tmp.path / "runr" / "stage1_metrics.csv");
        REQUIRE(csv.find("\n1,") != std::string::npos);  // epoch 1 rows appended
        std::istringstream lines(csv);
        std::string line;
        std::getline(lines, line);  // header
        std::getline(lines, line);
        REQUIRE(line.rfind("0,0,", 0) == 0);  // first segment started at epoch 0, step 0
    }
}
