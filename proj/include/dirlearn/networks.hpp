#pragma once

#include <cstdint>
#include <deque>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dirlearn/autodiff.hpp"
#include "dirlearn/distributions.hpp"
#include "dirlearn/image.hpp"
#include "dirlearn/rng.hpp"

namespace dirlearn::nets {

// ---------------------------------------------------------------------------
// Parameter storage
// ---------------------------------------------------------------------------

class ParamSet;

struct Param {
    std::string name;
    ag::Tensor value;
    const ParamSet* owner = nullptr;
};

class ParamSet {
public:
    explicit ParamSet(std::string name) : name_(std::move(name)) {}

    ParamSet(const ParamSet&) = delete;
    ParamSet& operator=(const ParamSet&) = delete;

    Param& add(const std::string& name, std::vector<int> shape) {
        params_.push_back(Param{name_ + "." + name, ag::Tensor(std::move(shape)), this});
        return params_.back();
    }

    const std::string& name() const { return name_; }
    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

    std::deque<Param>& params() { return params_; }
    const std::deque<Param>& params() const { return params_; }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    // FNV-1a over parameter bytes; changes whenever any parameter changes.
    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* data, std::size_t len) {
            const auto* bytes = static_cast<const unsigned char*>(data);
            for (std::size_t i = 0; i < len; ++i) {
                h ^= bytes[i];
                h *= 1099511628211ull;
            }
        };
        for (const auto& p : params_) {
            mix(p.name.data(), p.name.size());
            mix(p.value.data(), static_cast<std::size_t>(p.value.numel()) * sizeof(double));
        }
        return h;
    }

private:
    std::string name_;
    std::deque<Param> params_;  // deque: stable addresses for layer references
    bool frozen_ = false;
};

// Per-step association of parameters with graph leaves. Binding the same
// parameter twice returns the same leaf, so gradients from every use
// accumulate in one place.
class Binding {
public:
    ag::Var operator()(const Param& p) {
        auto it = map_.find(&p);
        if (it != map_.end()) return it->second;
        ag::Var v = ag::leaf(p.value, !p.owner->frozen());
        map_.emplace(&p, v);
        return v;
    }

    // Gradient for a parameter, if it participated in the backward pass.
    const ag::Tensor* grad(const Param& p) const {
        auto it = map_.find(&p);
        if (it == map_.end()) return nullptr;
        const ag::Tensor& g = it->second.grad();
        return g.numel() ? &g : nullptr;
    }

private:
    std::unordered_map<const Param*, ag::Var> map_;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

namespace detail {

inline void he_init(ag::Tensor& w, int fan_in, Rng& rng, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
}

struct Conv {
    Param* w = nullptr;
    Param* b = nullptr;
    int stride = 1;
    int pad = 1;

    static Conv make(ParamSet& set, const std::string& name, int in_ch, int out_ch, int k,
                     int stride, Rng& rng, double gain = 1.0) {
        Conv c;
        c.w = &set.add(name + ".w", {out_ch, in_ch, k, k});
        c.b = &set.add(name + ".b", {out_ch});
        c.stride = stride;
        c.pad = k / 2;
        he_init(c.w->value, in_ch * k * k, rng, gain);
        return c;
    }

    ag::Var operator()(Binding& bind, const ag::Var& x) const {
        return ag::conv2d(x, bind(*w), bind(*b), stride, pad);
    }
};

struct Dense {
    Param* w = nullptr;
    Param* b = nullptr;

    static Dense make(ParamSet& set, const std::string& name, int in_f, int out_f, Rng& rng,
                      double gain = 1.0) {
        Dense d;
        d.w = &set.add(name + ".w", {out_f, in_f});
        d.b = &set.add(name + ".b", {out_f});
        he_init(d.w->value, in_f, rng, gain);
        return d;
    }

    ag::Var operator()(Binding& bind, const ag::Var& x) const {
        return ag::linear(x, bind(*w), bind(*b));
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

struct EncoderConfig {
    int in_channels = 3;
    int base_width = 32;
    int n_down = 3;
    int latent_channels = 64;
};

struct AlignmentConfig {
    int m1 = 4;
    int m2 = 2;
    int m3 = 4;
    int k = 8;
    int kernel_size = 3;
};

struct BundleConfig {
    EncoderConfig encoder;
    AlignmentConfig alignment;
    int n_classes = 4;
    int task_width = 16;
    int critic_width = 16;
    std::uint64_t init_seed = 1;
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = {{"in_channels", c.in_channels},
         {"base_width", c.base_width},
         {"n_down", c.n_down},
         {"latent_channels", c.latent_channels}};
}
inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("base_width").get_to(c.base_width);
    j.at("n_down").get_to(c.n_down);
    j.at("latent_channels").get_to(c.latent_channels);
}
inline void to_json(nlohmann::json& j, const AlignmentConfig& c) {
    j = {{"m1", c.m1}, {"m2", c.m2}, {"m3", c.m3}, {"k", c.k}, {"kernel_size", c.kernel_size}};
}
inline void from_json(const nlohmann::json& j, AlignmentConfig& c) {
    j.at("m1").get_to(c.m1);
    j.at("m2").get_to(c.m2);
    j.at("m3").get_to(c.m3);
    j.at("k").get_to(c.k);
    j.at("kernel_size").get_to(c.kernel_size);
}
inline void to_json(nlohmann::json& j, const BundleConfig& c) {
    j = {{"encoder", c.encoder},       {"alignment", c.alignment},
         {"n_classes", c.n_classes},   {"task_width", c.task_width},
         {"critic_width", c.critic_width}, {"init_seed", c.init_seed}};
}
inline void from_json(const nlohmann::json& j, BundleConfig& c) {
    j.at("encoder").get_to(c.encoder);
    j.at("alignment").get_to(c.alignment);
    j.at("n_classes").get_to(c.n_classes);
    j.at("task_width").get_to(c.task_width);
    j.at("critic_width").get_to(c.critic_width);
    j.at("init_seed").get_to(c.init_seed);
}

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

// Convolutional VAE-style encoder: n_down stride-2 stages, then mean and
// logvar heads over the latent grid.
class Encoder {
public:
    Encoder(const std::string& set_name, const EncoderConfig& cfg, Rng& rng)
        : cfg_(cfg), set_(set_name) {
        int in = cfg.in_channels;
        for (int i = 0; i < cfg.n_down; ++i) {
            const int out = width_at(i);
            downs_.push_back(detail::Conv::make(set_, "down" + std::to_string(i), in, out, 3, 2, rng));
            in = out;
        }
        mean_head_ = detail::Conv::make(set_, "mean", in, cfg.latent_channels, 3, 1, rng);
        logvar_head_ = detail::Conv::make(set_, "logvar", in, cfg.latent_channels, 3, 1, rng, 0.01);
        // start with informative posteriors (var ~ e^-2)
        for (std::int64_t i = 0; i < logvar_head_.b->value.numel(); ++i)
            logvar_head_.b->value[i] = -2.0;
    }

    dist::GaussianVar encode(Binding& bind, const ag::Var& img) const {
        const auto& s = img.shape();
        const int div = 1 << cfg_.n_down;
        if (s.size() != 4 || s[2] % div != 0 || s[3] % div != 0)
            throw std::invalid_argument("encode: spatial dims must be divisible by 2^n_down");
        ag::Var h = img;
        for (const auto& conv : downs_) h = ag::silu(conv(bind, h));
        return dist::make_gaussian(mean_head_(bind, h), logvar_head_(bind, h));
    }

    dist::DiagonalGaussian encode_value(const ag::Tensor& imgs) const {
        Binding bind;
        dist::GaussianVar g = encode(bind, ag::constant(imgs));
        return {g.mean.val(), g.logvar.val()};
    }

    const EncoderConfig& config() const { return cfg_; }
    ParamSet& params() { return set_; }
    const ParamSet& params() const { return set_; }

    int width_at(int stage) const {
        return stage == 0 ? cfg_.base_width : 2 * cfg_.base_width;
    }

private:
    EncoderConfig cfg_;
    ParamSet set_;
    std::vector<detail::Conv> downs_;
    detail::Conv mean_head_, logvar_head_;
};

// Joint posterior over two views of the same content: product of experts of
// the shared single-view encoder, symmetric in its arguments.
inline dist::GaussianVar encode_joint(const Encoder& enc, Binding& bind, const ag::Var& x1,
                                      const ag::Var& x2) {
    return dist::poe(enc.encode(bind, x1), enc.encode(bind, x2));
}

// Mirror of the encoder: 3x upsample-conv stages, sigmoid output in [0,1].
class Decoder {
public:
    Decoder(const std::string& set_name, const EncoderConfig& cfg, Rng& rng)
        : cfg_(cfg), set_(set_name) {
        const int w2 = 2 * cfg.base_width;
        in_ = detail::Conv::make(set_, "in", cfg.latent_channels, w2, 3, 1, rng);
        int in_ch = w2;
        for (int i = 0; i < cfg.n_down; ++i) {
            const int out = (i < cfg.n_down - 2) ? w2 : cfg.base_width;
            ups_.push_back(detail::Conv::make(set_, "up" + std::to_string(i), in_ch, out, 3, 1, rng));
            in_ch = out;
        }
        out_ = detail::Conv::make(set_, "out", in_ch, cfg.in_channels, 3, 1, rng);
    }

    ag::Var decode(Binding& bind, const ag::Var& latent) const {
        if (latent.shape().size() != 4 || latent.shape()[1] != cfg_.latent_channels)
            throw std::invalid_argument("decode: latent channel mismatch");
        ag::Var h = ag::silu(in_(bind, latent));
        for (const auto& up : ups_) h = ag::silu(up(bind, ag::upsample2x(h)));
        return ag::sigmoid(out_(bind, h));
    }

    ag::Tensor decode_value(const ag::Tensor& latent) const {
        Binding bind;
        return decode(bind, ag::constant(latent)).val();
    }

    ParamSet& params() { return set_; }
    const ParamSet& params() const { return set_; }

private:
    EncoderConfig cfg_;
    ParamSet set_;
    detail::Conv in_;
    std::vector<detail::Conv> ups_;
    detail::Conv out_;
};

// Critic F_w for the JSD bound: image branch (3 stride-2 convs, pooled),
// latent branch (pooled), concatenated into a 2-layer MLP scalar head. The
// head starts at zero so an untrained critic scores exactly F == 0.
class Critic {
public:
    Critic(const std::string& set_name, int width, int latent_channels, Rng& rng)
        : set_(set_name) {
        img1_ = detail::Conv::make(set_, "img1", 3, width, 3, 2, rng);
        img2_ = detail::Conv::make(set_, "img2", width, 2 * width, 3, 2, rng);
        img3_ = detail::Conv::make(set_, "img3", 2 * width, 2 * width, 3, 2, rng);
        fc1_ = detail::Dense::make(set_, "fc1", 2 * width + latent_channels, 2 * width, rng);
        fc2_ = detail::Dense::make(set_, "fc2", 2 * width, 1, rng, 0.0);
    }

    // Scores (N,1) for image/latent pairs.
    ag::Var score(Binding& bind, const ag::Var& img, const ag::Var& latent) const {
        ag::Var feats = image_features(bind, img);
        return score_from_features(bind, feats, latent);
    }

    // Image features can be shared between joint and shuffled pairings.
    ag::Var image_features(Binding& bind, const ag::Var& img) const {
        ag::Var h = ag::silu(img1_(bind, img));
        h = ag::silu(img2_(bind, h));
        h = ag::silu(img3_(bind, h));
        return ag::gap(h);
    }

    ag::Var score_from_features(Binding& bind, const ag::Var& img_features,
                                const ag::Var& latent) const {
        ag::Var z = ag::gap(latent);
        ag::Var h = ag::silu(fc1_(bind, ag::concat_cols(img_features, z)));
        return fc2_(bind, h);
    }

    ParamSet& params() { return set_; }
    const ParamSet& params() const { return set_; }

private:
    ParamSet set_;
    detail::Conv img1_, img2_, img3_;
    detail::Dense fc1_, fc2_;
};

// Guided alignment network A(r0, pilot):
//   A1: m1 convs over r0 -> features f
//   A2: (a) pilot -> m2 convs -> spatial average pool -> k adaptive kernels,
//           applied to f as a grouped convolution -> f_k
//       (b) spatial attention in [0,1] conditioned on (f, pilot) -> f_a
//       fused by addition
//   A3: m3 convs -> refined latent
class Alignment {
public:
    Alignment(const std::string& set_name, const AlignmentConfig& cfg, int latent_channels, Rng& rng)
        : cfg_(cfg), channels_(latent_channels), set_(set_name) {
        if (cfg.m1 < 1 || cfg.m2 < 1 || cfg.m3 < 1 || cfg.k < 1)
            throw std::invalid_argument("AlignmentConfig: layer counts and k must be >= 1");
        if (latent_channels % cfg.k != 0)
            throw std::invalid_argument("AlignmentConfig: k must divide latent_channels");
        const int C = latent_channels;
        for (int i = 0; i < cfg.m1; ++i)
            a1_.push_back(detail::Conv::make(set_, "a1." + std::to_string(i), C, C, 3, 1, rng));
        for (int i = 0; i < cfg.m2; ++i)
            guide_.push_back(detail::Conv::make(set_, "guide." + std::to_string(i), C, C, 3, 1, rng));
        kernel_gen_ = detail::Dense::make(set_, "kernel_gen", C, cfg.k * cfg.kernel_size * cfg.kernel_size, rng, 0.3);
        attn1_ = detail::Conv::make(set_, "attn1", 2 * C, C, 3, 1, rng);
        attn2_ = detail::Conv::make(set_, "attn2", C, 1, 3, 1, rng);
        for (int i = 0; i < cfg.m3; ++i)
            a3_.push_back(detail::Conv::make(set_, "a3." + std::to_string(i), C, C, 3, 1, rng));
    }

    struct Parts {
        ag::Var features;    // f after A1
        ag::Var guided;      // f_k
        ag::Var attention;   // map in [0,1]
        ag::Var attended;    // f_a
        ag::Var refined;     // r+
    };

    Parts forward_parts(Binding& bind, const ag::Var& r0, const ag::Var& pilot) const {
        ag::check_same_shape(r0.val(), pilot.val(), "align");
        const int N = r0.shape()[0];

        ag::Var f = r0;
        for (const auto& conv : a1_) f = ag::silu(conv(bind, f));

        ag::Var g = pilot;
        for (const auto& conv : guide_) g = ag::silu(conv(bind, g));
        ag::Var kernels = ag::reshape(kernel_gen_(bind, ag::gap(g)),
                                      {N, cfg_.k, cfg_.kernel_size, cfg_.kernel_size});
        ag::Var f_k = ag::adaptive_group_conv(f, kernels);

        ag::Var attn = ag::sigmoid(attn2_(bind, ag::silu(attn1_(bind, ag::concat_channels(f, pilot)))));
        ag::Var f_a = ag::scale_by_map(f, attn);

        ag::Var h = ag::add(f_k, f_a);
        for (std::size_t i = 0; i + 1 < a3_.size(); ++i) h = ag::silu(a3_[i](bind, h));
        ag::Var refined = a3_.back()(bind, h);
        return {f, f_k, attn, f_a, refined};
    }

    ag::Var forward(Binding& bind, const ag::Var& r0, const ag::Var& pilot) const {
        return forward_parts(bind, r0, pilot).refined;
    }

    ag::Tensor forward_value(const ag::Tensor& r0, const ag::Tensor& pilot) const {
        Binding bind;
        return forward(bind, ag::constant(r0), ag::constant(pilot)).val();
    }

    const AlignmentConfig& config() const { return cfg_; }
    int channels() const { return channels_; }
    ParamSet& params() { return set_; }
    const ParamSet& params() const { return set_; }

    // Zero grid standing in for a disabled pilot.
    ag::Tensor zero_pilot(const std::vector<int>& latent_shape) const {
        return ag::Tensor::zeros(latent_shape);
    }

private:
    AlignmentConfig cfg_;
    int channels_;
    ParamSet set_;
    std::vector<detail::Conv> a1_, guide_;
    detail::Dense kernel_gen_;
    detail::Conv attn1_, attn2_;
    std::vector<detail::Conv> a3_;
};

// Small classifier over toy shape classes.
class TaskHead {
public:
    TaskHead(const std::string& set_name, int width, int n_classes, Rng& rng)
        : n_classes_(n_classes), set_(set_name) {
        c1_ = detail::Conv::make(set_, "c1", 3, width, 3, 2, rng);
        c2_ = detail::Conv::make(set_, "c2", width, 2 * width, 3, 2, rng);
        c3_ = detail::Conv::make(set_, "c3", 2 * width, 2 * width, 3, 2, rng);
        c4_ = detail::Conv::make(set_, "c4", 2 * width, 2 * width, 3, 2, rng);
        fc1_ = detail::Dense::make(set_, "fc1", 2 * width, 2 * width, rng);
        fc2_ = detail::Dense::make(set_, "fc2", 2 * width, n_classes, rng);
    }

    ag::Var logits(Binding& bind, const ag::Var& img) const {
        ag::Var h = ag::silu(c1_(bind, img));
        h = ag::silu(c2_(bind, h));
        h = ag::silu(c3_(bind, h));
        h = ag::silu(c4_(bind, h));
        return fc2_(bind, ag::silu(fc1_(bind, ag::gap(h))));
    }

    ag::Tensor logits_value(const ag::Tensor& imgs) const {
        Binding bind;
        return logits(bind, ag::constant(imgs)).val();
    }

    int n_classes() const { return n_classes_; }
    ParamSet& params() { return set_; }
    const ParamSet& params() const { return set_; }

private:
    int n_classes_;
    ParamSet set_;
    detail::Conv c1_, c2_, c3_, c4_;
    detail::Dense fc1_, fc2_;
};

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

// The five trainable networks plus the task head, addressable by name.
class ModelBundle {
public:
    explicit ModelBundle(const BundleConfig& cfg)
        : cfg_(cfg),
          master_rng_(cfg.init_seed),
          dir_encoder("dir_encoder", cfg.encoder, master_rng_),
          dfr_encoder("dfr_encoder", cfg.encoder, master_rng_),
          decoder("decoder", cfg.encoder, master_rng_),
          critic("critic", cfg.critic_width, cfg.encoder.latent_channels, master_rng_),
          alignment("alignment", cfg.alignment, cfg.encoder.latent_channels, master_rng_),
          task_head("task_head", cfg.task_width, cfg.n_classes, master_rng_) {}

    ModelBundle(const ModelBundle&) = delete;
    ModelBundle& operator=(const ModelBundle&) = delete;

    static const std::vector<std::string>& set_names() {
        static const std::vector<std::string> names{"dir_encoder", "dfr_encoder", "decoder",
                                                    "critic",      "alignment",   "task_head"};
        return names;
    }

    ParamSet& set(const std::string& name) {
        if (name == "dir_encoder") return dir_encoder.params();
        if (name == "dfr_encoder") return dfr_encoder.params();
        if (name == "decoder") return decoder.params();
        if (name == "critic") return critic.params();
        if (name == "alignment") return alignment.params();
        if (name == "task_head") return task_head.params();
        throw std::out_of_range("unknown parameter set: " + name);
    }
    const ParamSet& set(const std::string& name) const {
        return const_cast<ModelBundle*>(this)->set(name);
    }

    void freeze(const std::vector<std::string>& names, bool frozen = true) {
        for (const auto& n : names) set(n).set_frozen(frozen);
    }

    std::uint64_t checksum(const std::string& name) const { return set(name).checksum(); }

    const BundleConfig& config() const { return cfg_; }

    // Checkpoint: one JSON header line (config + format version), then each
    // parameter as (name, shape, raw little-endian doubles). Round-trips
    // bit-exactly.
    void save(const std::string& path, const nlohmann::json& metadata = {}) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
        nlohmann::json header{
            {"format", "dirlearn-checkpoint"}, {"version", kCheckpointVersion}, {"config", cfg_}};
        if (!metadata.empty()) header["metadata"] = metadata;
        out << header.dump() << '\n';
        for (const auto& name : set_names())
            for (const auto& p : set(name).params()) {
                const std::uint32_t len = static_cast<std::uint32_t>(p.name.size());
                out.write(reinterpret_cast<const char*>(&len), sizeof(len));
                out.write(p.name.data(), len);
                const std::uint32_t rank = static_cast<std::uint32_t>(p.value.shape().size());
                out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
                for (int d : p.value.shape()) {
                    const std::int32_t dd = d;
                    out.write(reinterpret_cast<const char*>(&dd), sizeof(dd));
                }
                out.write(reinterpret_cast<const char*>(p.value.data()),
                          static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
            }
        if (!out) throw std::runtime_error("checkpoint write failed: " + path);
    }

    static nlohmann::json peek_header(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
        std::string line;
        std::getline(in, line);
        const auto header = nlohmann::json::parse(line);
        if (header.at("format").get<std::string>() != "dirlearn-checkpoint")
            throw std::runtime_error("not a dirlearn checkpoint: " + path);
        if (header.at("version").get<std::uint32_t>() != kCheckpointVersion)
            throw std::runtime_error("unsupported checkpoint version in " + path);
        return header;
    }

    static BundleConfig peek_config(const std::string& path) {
        return peek_header(path).at("config").get<BundleConfig>();
    }

    void load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
        std::string line;
        std::getline(in, line);
        std::unordered_map<std::string, Param*> by_name;
        for (const auto& name : set_names())
            for (auto& p : set(name).params()) by_name[p.name] = &p;
        std::size_t loaded = 0;
        while (true) {
            std::uint32_t len = 0;
            in.read(reinterpret_cast<char*>(&len), sizeof(len));
            if (!in) break;
            std::string name(len, '\0');
            in.read(name.data(), len);
            std::uint32_t rank = 0;
            in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
            std::vector<int> shape(rank);
            for (auto& d : shape) {
                std::int32_t dd = 0;
                in.read(reinterpret_cast<char*>(&dd), sizeof(dd));
                d = dd;
            }
            auto it = by_name.find(name);
            if (it == by_name.end()) throw std::runtime_error("checkpoint has unknown parameter " + name);
            if (it->second->value.shape() != shape)
                throw std::runtime_error("checkpoint shape mismatch for " + name);
            in.read(reinterpret_cast<char*>(it->second->value.data()),
                    static_cast<std::streamsize>(it->second->value.numel() * sizeof(double)));
            if (!in) throw std::runtime_error("checkpoint truncated at " + name);
            ++loaded;
        }
        if (loaded != by_name.size())
            throw std::runtime_error("checkpoint is missing parameters (" + std::to_string(loaded) +
                                     "/" + std::to_string(by_name.size()) + ")");
    }

    static std::unique_ptr<ModelBundle> from_checkpoint(const std::string& path) {
        auto bundle = std::make_unique<ModelBundle>(peek_config(path));
        bundle->load(path);
        return bundle;
    }

private:
    BundleConfig cfg_;
    Rng master_rng_;

public:
    Encoder dir_encoder;
    Encoder dfr_encoder;
    Decoder decoder;
    Critic critic;
    Alignment alignment;
    TaskHead task_head;
};

}  // namespace dirlearn::nets
