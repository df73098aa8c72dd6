// dirlearn command-line interface: data synthesis, degradation, two-stage
// training, and evaluation reports, driven by a TOML config with flag
// overrides. Exit code 0 iff all requested outputs were written.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dirlearn/config.hpp"
#include "dirlearn/corpus.hpp"
#include "dirlearn/evaluation.hpp"
#include "dirlearn/isp.hpp"
#include "dirlearn/networks.hpp"
#include "dirlearn/png_io.hpp"
#include "dirlearn/training.hpp"

namespace fs = std::filesystem;
using namespace dirlearn;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

config::RunConfig resolve_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides, std::uint64_t seed,
                                 bool seed_given) {
    config::Toml toml = config_path.empty() ? config::Toml() : config::Toml::parse_file(config_path);
    if (seed_given) toml.set_raw("seed", std::to_string(seed));
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects section.key=value, got '" + kv + "'");
        toml.set_raw(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return config::RunConfig::from_toml(toml);
}

int cmd_synth_data(const std::string& out, int n, int classes, std::uint64_t seed, bool force) {
    if (fs::exists(out) && !fs::is_empty(out) && !force)
        throw std::runtime_error("output directory " + out + " is not empty (use --force to overwrite)");
    Rng rng(seed);
    const auto samples = corpus::gen_toy_corpus(n, classes, rng);
    corpus::save_corpus(out, samples);
    std::cout << "wrote " << samples.size() << " samples + manifest to " << out << "\n";
    return 0;
}

int cmd_degrade(const std::string& in, const std::string& out, const std::string& profile_name,
                bool pairs, std::uint64_t seed, bool save_raw, int crops) {
    const auto profile = isp::DegradationProfile::by_name(profile_name);
    fs::create_directories(out);
    Rng rng(seed);

    struct Item {
        std::string id;
        ImageRGB image;
    };
    std::vector<Item> items;
    if (fs::exists(fs::path(in) / "manifest.json")) {
        for (auto& s : corpus::load_corpus(in)) items.push_back({s.id, std::move(s.clean)});
    } else {
        auto patches = corpus::load_folder(in, crops, rng);
        for (std::size_t i = 0; i < patches.size(); ++i)
            items.push_back({"patch" + std::to_string(i), std::move(patches[i])});
    }

    int written = 0;
    for (const auto& item : items) {
        const int views = pairs ? 2 : 1;
        for (int v = 0; v < views; ++v) {
            const auto params = isp::sample_params(profile, rng);
            BayerRaw raw;
            const ImageRGB degraded = isp::degrade(item.image, params, &raw);
            const std::string stem = out + "/" + item.id + "_v" + std::to_string(v);
            write_image_png8(stem + ".png", degraded);
            write_text(stem + ".json", isp::params_to_json(params).dump(2) + "\n");
            if (save_raw) write_raw_png16(stem + "_raw.png", raw);
            ++written;
        }
    }
    std::cout << "wrote " << written << " degraded images to " << out << "\n";
    return 0;
}

int cmd_train(int stage, const std::string& config_path, const std::string& resume,
              const std::string& stage1_ckpt_flag, const std::vector<std::string>& overrides,
              std::uint64_t seed, bool seed_given) {
    config::RunConfig cfg = resolve_config(config_path, overrides, seed, seed_given);
    if (cfg.corpus_dir.empty())
        throw std::runtime_error("no corpus configured; set data.corpus or --set data.corpus=...");
    if (!stage1_ckpt_flag.empty()) cfg.stage1_checkpoint = stage1_ckpt_flag;

    const auto samples = corpus::load_corpus(cfg.corpus_dir);
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/config_resolved.toml", cfg.to_toml().dump());

    std::unique_ptr<nets::ModelBundle> bundle;
    int start_epoch = 0;
    if (!resume.empty()) {
        bundle = nets::ModelBundle::from_checkpoint(resume);
        const auto header = nets::ModelBundle::peek_header(resume);
        if (header.contains("metadata")) {
            const auto& meta = header["metadata"];
            if (meta.value("stage", stage) != stage)
                throw std::runtime_error("--resume checkpoint belongs to a different stage");
            start_epoch = meta.value("next_epoch", 0);
        }
        std::cout << "resuming from epoch " << start_epoch << "\n";
    }

    if (stage == 1) {
        if (!bundle) bundle = std::make_unique<nets::ModelBundle>(cfg.model);
        std::vector<ImageRGB> clean;
        for (const auto& s : samples) clean.push_back(s.clean);
        const auto res = train::train_stage1(clean, cfg.stage1, *bundle, cfg.out_dir, start_epoch);
        std::cout << "stage 1 done: " << res.checkpoint_path << "\n";
    } else {
        if (!bundle) {
            if (cfg.stage1_checkpoint.empty())
                throw std::runtime_error(
                    "stage 2 requires a stage-1 checkpoint; set stage2.stage1_checkpoint in the "
                    "config or pass --stage1-ckpt");
            bundle = nets::ModelBundle::from_checkpoint(cfg.stage1_checkpoint);
        }
        const auto res = train::train_stage2(samples, cfg.stage2, *bundle, cfg.out_dir, start_epoch);
        std::cout << "stage 2 done: " << res.checkpoint_path << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& test_dir, const std::string& report,
             const std::string& out, const std::string& nopilot_ckpt,
             const std::string& profile_name, std::uint64_t seed, int n_degradations) {
    auto bundle = nets::ModelBundle::from_checkpoint(ckpt);
    const auto test_set = corpus::load_corpus(test_dir);
    const auto profile = isp::DegradationProfile::by_name(profile_name);
    fs::create_directories(out);

    if (report == "ablation") {
        std::unique_ptr<nets::ModelBundle> nopilot;
        if (!nopilot_ckpt.empty()) nopilot = nets::ModelBundle::from_checkpoint(nopilot_ckpt);
        const auto rep = eval::ablation_report(*bundle, test_set, profile, seed, nopilot.get());
        write_text(out + "/ablation.csv", rep.to_csv());
        write_text(out + "/ablation.txt", rep.to_text());
        std::cout << rep.to_text();
        return 0;
    }

    if (report == "metrics") {
        Rng rng(seed);
        std::string csv = "id,psnr,ssim\n";
        double mp = 0, ms = 0;
        for (const auto& s : test_set) {
            const ImageRGB x = isp::degrade(s.clean, isp::sample_params(profile, rng));
            const ag::Tensor xt = to_tensor({x});
            const auto r0 = bundle->dir_encoder.encode_value(xt).mean;
            const auto pilot = bundle->dfr_encoder.encode_value(xt).mean;
            const ImageRGB restored =
                from_tensor(bundle->decoder.decode_value(bundle->alignment.forward_value(r0, pilot)), 0);
            const double p = eval::psnr(restored, s.clean);
            const double m = eval::ssim(restored, s.clean);
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f\n", s.id.c_str(), p, m);
            csv += buf;
            mp += p;
            ms += m;
        }
        char buf[128];
        std::snprintf(buf, sizeof(buf), "mean,%.4f,%.4f\n", mp / test_set.size(), ms / test_set.size());
        csv += buf;
        write_text(out + "/metrics_report.csv", csv);
        std::cout << "mean PSNR " << mp / test_set.size() << " dB, mean SSIM " << ms / test_set.size()
                  << " over " << test_set.size() << " images\n";
        return 0;
    }

    if (report == "latents") {
        const int k = std::min<int>(4, static_cast<int>(test_set.size()));
        std::vector<ImageRGB> cleans;
        for (int i = 0; i < k; ++i) cleans.push_back(test_set[static_cast<std::size_t>(i)].clean);
        const auto clustering =
            eval::pilot_clustering(bundle->dfr_encoder, cleans, n_degradations, profile, seed);
        eval::write_projection_csv(out + "/projection.csv", clustering.projection.coords,
                                   clustering.ids, clustering.groups);
        for (int i = 0; i < k; ++i) {
            const auto& s = test_set[static_cast<std::size_t>(i)];
            const ag::Tensor ct = to_tensor({s.clean});
            dist::save_latent(out + "/" + s.id + "_dfr.bin",
                              bundle->dfr_encoder.encode_value(ct).mean, "dfr", s.id);
            Rng drng(seed + static_cast<std::uint64_t>(i));
            const ImageRGB x = isp::degrade(s.clean, isp::sample_params(profile, drng));
            dist::save_latent(out + "/" + s.id + "_pilot.bin",
                              bundle->dfr_encoder.encode_value(to_tensor({x})).mean, "pilot", s.id);
        }
        std::cout << "pilot clustering accuracy " << clustering.accuracy << " over "
                  << k * n_degradations << " pilots\n";
        return 0;
    }

    throw std::runtime_error("unknown report: " + report);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"degradation-independent representation learning pipeline"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate the labeled toy corpus");
    std::string synth_out;
    int synth_n = 200, synth_classes = 4;
    std::uint64_t synth_seed = 42;
    bool synth_force = false;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n", synth_n, "number of samples");
    synth->add_option("--classes", synth_classes, "number of shape classes")
        ->check(CLI::Range(2, 10));
    synth->add_option("--seed", synth_seed, "random seed");
    synth->add_flag("--force", synth_force, "overwrite a non-empty output directory");

    // degrade
    auto* degrade = app.add_subcommand("degrade", "synthesize ISP-degraded copies");
    std::string deg_in, deg_out, deg_profile = "default";
    bool deg_pairs = false, deg_save_raw = false;
    std::uint64_t deg_seed = 42;
    int deg_crops = 1;
    degrade->add_option("--in", deg_in, "corpus directory (manifest) or folder of PNGs")->required();
    degrade->add_option("--out", deg_out, "output directory")->required();
    degrade->add_option("--profile", deg_profile, "degradation profile")
        ->check(CLI::IsMember({"default", "dark"}));
    degrade->add_flag("--pairs", deg_pairs, "emit two independent degradations per image");
    degrade->add_option("--seed", deg_seed, "random seed");
    degrade->add_flag("--save-raw", deg_save_raw, "also write the noisy RAW as 16-bit PNG");
    degrade->add_option("--crops", deg_crops, "crops per image for plain folders");

    // train
    auto* train_cmd = app.add_subcommand("train", "run a training stage");
    int train_stage = 1;
    std::string train_config, train_resume, train_stage1_ckpt;
    std::vector<std::string> train_sets;
    std::uint64_t train_seed = 42;
    train_cmd->add_option("--stage", train_stage, "training stage")->check(CLI::IsMember({1, 2}))->required();
    train_cmd->add_option("--config", train_config, "TOML config file");
    train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
    train_cmd->add_option("--stage1-ckpt", train_stage1_ckpt, "stage-1 checkpoint (stage 2 input)");
    train_cmd->add_option("--set", train_sets, "override a config key: section.key=value");
    auto* seed_opt = train_cmd->add_option("--seed", train_seed, "global seed override");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "produce evaluation reports");
    std::string eval_ckpt, eval_test, eval_report = "metrics", eval_out = "eval_out",
                eval_nopilot, eval_profile = "default";
    std::uint64_t eval_seed = 42;
    int eval_ndeg = 50;
    eval_cmd->add_option("--ckpt", eval_ckpt, "trained checkpoint")->required();
    eval_cmd->add_option("--test", eval_test, "test corpus directory")->required();
    eval_cmd->add_option("--report", eval_report, "report kind")
        ->check(CLI::IsMember({"ablation", "metrics", "latents"}));
    eval_cmd->add_option("--out", eval_out, "output directory");
    eval_cmd->add_option("--nopilot-ckpt", eval_nopilot, "separately trained no-pilot checkpoint");
    eval_cmd->add_option("--profile", eval_profile, "degradation profile")
        ->check(CLI::IsMember({"default", "dark"}));
    eval_cmd->add_option("--seed", eval_seed, "random seed");
    eval_cmd->add_option("--n-degradations", eval_ndeg, "degradations per clean image (latents)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth_data(synth_out, synth_n, synth_classes, synth_seed, synth_force);
        if (degrade->parsed())
            return cmd_degrade(deg_in, deg_out, deg_profile, deg_pairs, deg_seed, deg_save_raw,
                               deg_crops);
        if (train_cmd->parsed())
            return cmd_train(train_stage, train_config, train_resume, train_stage1_ckpt, train_sets,
                             train_seed, seed_opt->count() > 0);
        if (eval_cmd->parsed())
            return cmd_eval(eval_ckpt, eval_test, eval_report, eval_out, eval_nopilot, eval_profile,
                            eval_seed, eval_ndeg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
