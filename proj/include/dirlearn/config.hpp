#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dirlearn/networks.hpp"
#include "dirlearn/training.hpp"

namespace dirlearn::config {

// Minimal TOML reader covering this project's configuration surface:
// [section] tables, scalar key = value entries (integers, floats, booleans,
// quoted strings), and # comments. Keys address as "section.key".
class Toml {
public:
    Toml() = default;

    static Toml parse(const std::string& text) {
        Toml t;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = strip_comment(line);
            const std::string trimmed = trim(stripped);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw std::runtime_error("toml: bad table header at line " + std::to_string(lineno));
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("toml: expected key = value at line " + std::to_string(lineno));
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty() || value.empty())
                throw std::runtime_error("toml: empty key or value at line " + std::to_string(lineno));
            t.values_[section.empty() ? key : section + "." + key] = value;
        }
        return t;
    }

    static Toml parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    void set_raw(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::string v = it->second;
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
        return v;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw std::runtime_error("toml: expected number for " + key);
        }
    }

    int get_int(const std::string& key, int fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoi(it->second);
        } catch (...) {
            throw std::runtime_error("toml: expected integer for " + key);
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoull(it->second);
        } catch (...) {
            throw std::runtime_error("toml: expected integer for " + key);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true") return true;
        if (it->second == "false") return false;
        throw std::runtime_error("toml: expected true/false for " + key);
    }

    // Serialized grouped by section, keys sorted; parseable by parse().
    std::string dump() const {
        std::map<std::string, std::map<std::string, std::string>> grouped;
        for (const auto& [key, value] : values_) {
            const auto dot = key.find('.');
            if (dot == std::string::npos)
                grouped[""][key] = value;
            else
                grouped[key.substr(0, dot)][key.substr(dot + 1)] = value;
        }
        std::string out;
        for (const auto& [section, entries] : grouped) {
            if (!section.empty()) out += "[" + section + "]\n";
            for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
            out += "\n";
        }
        return out;
    }

private:
    static std::string strip_comment(const std::string& line) {
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) return line.substr(0, i);
        }
        return line;
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

// Full run configuration resolved from TOML plus CLI overrides. The global
// seed feeds every stage that does not pin its own.
struct RunConfig {
    std::uint64_t seed = 42;
    std::string corpus_dir;
    std::string out_dir = "runs/out";
    std::string stage1_checkpoint;
    nets::BundleConfig model;
    train::Stage1Config stage1;
    train::Stage2Config stage2;

    static RunConfig from_toml(const Toml& t) {
        RunConfig c;
        c.seed = t.get_u64("seed", c.seed);
        c.corpus_dir = t.get_string("data.corpus", c.corpus_dir);
        c.out_dir = t.get_string("data.out", c.out_dir);
        c.stage1_checkpoint = t.get_string("stage2.stage1_checkpoint", c.stage1_checkpoint);

        c.model.encoder.base_width = t.get_int("model.base_width", c.model.encoder.base_width);
        c.model.encoder.latent_channels = t.get_int("model.latent_channels", c.model.encoder.latent_channels);
        c.model.encoder.n_down = t.get_int("model.n_down", c.model.encoder.n_down);
        c.model.alignment.m1 = t.get_int("model.m1", c.model.alignment.m1);
        c.model.alignment.m2 = t.get_int("model.m2", c.model.alignment.m2);
        c.model.alignment.m3 = t.get_int("model.m3", c.model.alignment.m3);
        c.model.alignment.k = t.get_int("model.k", c.model.alignment.k);
        c.model.n_classes = t.get_int("model.n_classes", c.model.n_classes);
        c.model.task_width = t.get_int("model.task_width", c.model.task_width);
        c.model.critic_width = t.get_int("model.critic_width", c.model.critic_width);
        c.model.init_seed = t.get_u64("model.init_seed", c.seed);

        c.stage1.lambda_weight = t.get_double("stage1.lambda_weight", c.stage1.lambda_weight);
        c.stage1.beta_weight = t.get_double("stage1.beta_weight", c.stage1.beta_weight);
        c.stage1.beta_star = t.get_double("stage1.beta_star", c.stage1.beta_star);
        c.stage1.lr_initial = t.get_double("stage1.lr_initial", c.stage1.lr_initial);
        c.stage1.lr_final = t.get_double("stage1.lr_final", c.stage1.lr_final);
        c.stage1.lr_drop_epoch = t.get_int("stage1.lr_drop_epoch", c.stage1.lr_drop_epoch);
        c.stage1.max_epochs = t.get_int("stage1.max_epochs", c.stage1.max_epochs);
        c.stage1.batch_size = t.get_int("stage1.batch_size", c.stage1.batch_size);
        c.stage1.profile = t.get_string("stage1.profile", c.stage1.profile);
        c.stage1.seed = t.get_u64("stage1.seed", c.seed);

        if (t.get_string("stage2.task", "restoration") == "classification")
            c.stage2 = train::Stage2Config::classification_preset();
        c.stage2.gamma1 = t.get_double("stage2.gamma1", c.stage2.gamma1);
        c.stage2.gamma2 = t.get_double("stage2.gamma2", c.stage2.gamma2);
        c.stage2.lr_initial = t.get_double("stage2.lr_initial", c.stage2.lr_initial);
        c.stage2.lr_final = t.get_double("stage2.lr_final", c.stage2.lr_final);
        c.stage2.lr_drop_epoch = t.get_int("stage2.lr_drop_epoch", c.stage2.lr_drop_epoch);
        c.stage2.max_epochs = t.get_int("stage2.max_epochs", c.stage2.max_epochs);
        c.stage2.batch_size = t.get_int("stage2.batch_size", c.stage2.batch_size);
        c.stage2.profile = t.get_string("stage2.profile", c.stage2.profile);
        c.stage2.use_pilot = t.get_bool("stage2.use_pilot", c.stage2.use_pilot);
        c.stage2.task_pretrain_epochs = t.get_int("stage2.task_pretrain_epochs", c.stage2.task_pretrain_epochs);
        c.stage2.task_pretrain_lr = t.get_double("stage2.task_pretrain_lr", c.stage2.task_pretrain_lr);
        c.stage2.task_pretrain_samples = t.get_int("stage2.task_pretrain_samples", c.stage2.task_pretrain_samples);
        c.stage2.seed = t.get_u64("stage2.seed", c.seed);
        return c;
    }

    Toml to_toml() const {
        Toml t;
        auto num = [](double v) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "%.10g", v);
            return std::string(buf);
        };
        t.set_raw("seed", std::to_string(seed));
        t.set_raw("data.corpus", '"' + corpus_dir + '"');
        t.set_raw("data.out", '"' + out_dir + '"');
        t.set_raw("model.base_width", std::to_string(model.encoder.base_width));
        t.set_raw("model.latent_channels", std::to_string(model.encoder.latent_channels));
        t.set_raw("model.n_down", std::to_string(model.encoder.n_down));
        t.set_raw("model.m1", std::to_string(model.alignment.m1));
        t.set_raw("model.m2", std::to_string(model.alignment.m2));
        t.set_raw("model.m3", std::to_string(model.alignment.m3));
        t.set_raw("model.k", std::to_string(model.alignment.k));
        t.set_raw("model.n_classes", std::to_string(model.n_classes));
        t.set_raw("model.task_width", std::to_string(model.task_width));
        t.set_raw("model.critic_width", std::to_string(model.critic_width));
        t.set_raw("model.init_seed", std::to_string(model.init_seed));
        t.set_raw("stage1.lambda_weight", num(stage1.lambda_weight));
        t.set_raw("stage1.beta_weight", num(stage1.beta_weight));
        t.set_raw("stage1.beta_star", num(stage1.beta_star));
        t.set_raw("stage1.lr_initial", num(stage1.lr_initial));
        t.set_raw("stage1.lr_final", num(stage1.lr_final));
        t.set_raw("stage1.lr_drop_epoch", std::to_string(stage1.lr_drop_epoch));
        t.set_raw("stage1.max_epochs", std::to_string(stage1.max_epochs));
        t.set_raw("stage1.batch_size", std::to_string(stage1.batch_size));
        t.set_raw("stage1.profile", '"' + stage1.profile + '"');
        t.set_raw("stage1.seed", std::to_string(stage1.seed));
        t.set_raw("stage2.gamma1", num(stage2.gamma1));
        t.set_raw("stage2.gamma2", num(stage2.gamma2));
        t.set_raw("stage2.lr_initial", num(stage2.lr_initial));
        t.set_raw("stage2.lr_final", num(stage2.lr_final));
        t.set_raw("stage2.lr_drop_epoch", std::to_string(stage2.lr_drop_epoch));
        t.set_raw("stage2.max_epochs", std::to_string(stage2.max_epochs));
        t.set_raw("stage2.batch_size", std::to_string(stage2.batch_size));
        t.set_raw("stage2.task", '"' + stage2.task + '"');
        t.set_raw("stage2.profile", '"' + stage2.profile + '"');
        t.set_raw("stage2.use_pilot", stage2.use_pilot ? "true" : "false");
        t.set_raw("stage2.task_pretrain_epochs", std::to_string(stage2.task_pretrain_epochs));
        t.set_raw("stage2.task_pretrain_lr", num(stage2.task_pretrain_lr));
        t.set_raw("stage2.task_pretrain_samples", std::to_string(stage2.task_pretrain_samples));
        t.set_raw("stage2.seed", std::to_string(stage2.seed));
        if (!stage1_checkpoint.empty())
            t.set_raw("stage2.stage1_checkpoint", '"' + stage1_checkpoint + '"');
        return t;
    }
};

}  // namespace dirlearn::config
