#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dirlearn/corpus.hpp"
#include "dirlearn/isp.hpp"
#include "dirlearn/mi.hpp"
#include "dirlearn/networks.hpp"

namespace dirlearn::train {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct Stage1Config {
    double lambda_weight = 1.0;  // D_AKL trade-off
    double beta_weight = 0.01;   // prior KL trade-off
    double beta_star = 1.0;
    double lr_initial = 1e-4;
    double lr_final = 1e-6;
    int lr_drop_epoch = 200;
    int max_epochs = 30;
    int batch_size = 16;
    std::uint64_t seed = 0;
    std::string profile = "default";

    void validate() const {
        if (lambda_weight < 0 || beta_weight < 0 || beta_star < 0)
            throw std::invalid_argument("Stage1Config: weights must be nonnegative");
        if (lr_final > lr_initial)
            throw std::invalid_argument("Stage1Config: lr_final must not exceed lr_initial");
        if (batch_size < 2)
            throw std::invalid_argument("Stage1Config: batch_size must be >= 2 for in-batch negatives");
    }
};

struct Stage2Config {
    double gamma1 = 0.0;
    double gamma2 = 1.0;
    double lr_initial = 1e-3;
    double lr_final = 1e-6;
    int lr_drop_epoch = 300;
    int max_epochs = 30;
    int batch_size = 16;
    std::uint64_t seed = 0;
    std::string task = "restoration";  // restoration | classification
    std::string profile = "default";
    bool use_pilot = true;  // false trains the alignment with a zeroed pilot
    int task_pretrain_epochs = 12;
    double task_pretrain_lr = 3e-3;
    int task_pretrain_samples = 2000;  // generated labels are free

    static Stage2Config restoration_preset() {
        Stage2Config c;
        c.gamma1 = 0.0;
        c.gamma2 = 1.0;
        c.task = "restoration";
        return c;
    }

    static Stage2Config classification_preset() {
        Stage2Config c;
        c.gamma1 = 2.0;
        c.gamma2 = 1.0;
        c.task = "classification";
        return c;
    }

    void validate() const {
        if (gamma1 < 0 || gamma2 < 0)
            throw std::invalid_argument("Stage2Config: weights must be nonnegative");
        if (lr_final > lr_initial)
            throw std::invalid_argument("Stage2Config: lr_final must not exceed lr_initial");
        if (task != "restoration" && task != "classification")
            throw std::invalid_argument("Stage2Config: unknown task " + task);
        if (batch_size < 1) throw std::invalid_argument("Stage2Config: batch_size must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const Stage1Config& c) {
    j = {{"lambda_weight", c.lambda_weight}, {"beta_weight", c.beta_weight},
         {"beta_star", c.beta_star},         {"lr_initial", c.lr_initial},
         {"lr_final", c.lr_final},           {"lr_drop_epoch", c.lr_drop_epoch},
         {"max_epochs", c.max_epochs},       {"batch_size", c.batch_size},
         {"seed", c.seed},                   {"profile", c.profile}};
}
inline void from_json(const nlohmann::json& j, Stage1Config& c) {
    j.at("lambda_weight").get_to(c.lambda_weight);
    j.at("beta_weight").get_to(c.beta_weight);
    j.at("beta_star").get_to(c.beta_star);
    j.at("lr_initial").get_to(c.lr_initial);
    j.at("lr_final").get_to(c.lr_final);
    j.at("lr_drop_epoch").get_to(c.lr_drop_epoch);
    j.at("max_epochs").get_to(c.max_epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("seed").get_to(c.seed);
    j.at("profile").get_to(c.profile);
}
inline void to_json(nlohmann::json& j, const Stage2Config& c) {
    j = {{"gamma1", c.gamma1},
         {"gamma2", c.gamma2},
         {"lr_initial", c.lr_initial},
         {"lr_final", c.lr_final},
         {"lr_drop_epoch", c.lr_drop_epoch},
         {"max_epochs", c.max_epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"task", c.task},
         {"profile", c.profile},
         {"use_pilot", c.use_pilot},
         {"task_pretrain_epochs", c.task_pretrain_epochs},
         {"task_pretrain_lr", c.task_pretrain_lr},
         {"task_pretrain_samples", c.task_pretrain_samples}};
}
inline void from_json(const nlohmann::json& j, Stage2Config& c) {
    j.at("gamma1").get_to(c.gamma1);
    j.at("gamma2").get_to(c.gamma2);
    j.at("lr_initial").get_to(c.lr_initial);
    j.at("lr_final").get_to(c.lr_final);
    j.at("lr_drop_epoch").get_to(c.lr_drop_epoch);
    j.at("max_epochs").get_to(c.max_epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("seed").get_to(c.seed);
    j.at("task").get_to(c.task);
    j.at("profile").get_to(c.profile);
    j.at("use_pilot").get_to(c.use_pilot);
    j.at("task_pretrain_epochs").get_to(c.task_pretrain_epochs);
    j.at("task_pretrain_lr").get_to(c.task_pretrain_lr);
    j.at("task_pretrain_samples").get_to(c.task_pretrain_samples);
}

// Piecewise-constant schedule with the drop exactly at the configured epoch.
inline double lr_at_epoch(int epoch, double lr_initial, double lr_final, int drop_epoch) {
    return epoch < drop_epoch ? lr_initial : lr_final;
}

// ---------------------------------------------------------------------------
// Loss reporting
// ---------------------------------------------------------------------------

struct LossReport {
    double total = 0.0;
    std::map<std::string, double> parts;
    std::map<std::string, double> weights;

    static const std::vector<std::string>& part_names() {
        static const std::vector<std::string> names{"mi_x1",    "mi_x2", "d_akl", "prior_kl",
                                                    "recon",    "latent_l1", "task"};
        return names;
    }

    double weighted_sum() const {
        double s = 0.0;
        for (const auto& [name, value] : parts) {
            auto it = weights.find(name);
            s += (it == weights.end() ? 0.0 : it->second) * value;
        }
        return s;
    }

    void check_finite(const std::string& context) const {
        for (const auto& [name, value] : parts)
            if (!std::isfinite(value))
                throw std::runtime_error("non-finite loss part '" + name + "' in " + context);
        if (!std::isfinite(total))
            throw std::runtime_error("non-finite loss total in " + context);
    }
};

struct LossResult {
    ag::Var total;
    LossReport report;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

// Adam with default moments; one instance per trainable group.
class Adam {
public:
    explicit Adam(std::vector<nets::ParamSet*> sets, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : sets_(std::move(sets)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(nets::Binding& bind, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (nets::ParamSet* set : sets_) {
            if (set->frozen()) continue;
            for (auto& p : set->params()) {
                const ag::Tensor* g = bind.grad(p);
                if (!g) continue;
                State& st = state_[&p];
                if (!st.m.numel()) {
                    st.m = ag::Tensor::zeros(p.value.shape());
                    st.v = ag::Tensor::zeros(p.value.shape());
                }
                for (std::int64_t i = 0; i < p.value.numel(); ++i) {
                    st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * (*g)[i];
                    st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * (*g)[i] * (*g)[i];
                    const double mhat = st.m[i] / bc1;
                    const double vhat = st.v[i] / bc2;
                    p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
                }
            }
        }
    }

private:
    struct State {
        ag::Tensor m, v;
    };
    std::vector<nets::ParamSet*> sets_;
    std::unordered_map<const nets::Param*, State> state_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Freeze contract
// ---------------------------------------------------------------------------

struct FrozenChecksums {
    std::map<std::string, std::uint64_t> expected;

    static FrozenChecksums capture(const nets::ModelBundle& bundle,
                                   const std::vector<std::string>& names) {
        FrozenChecksums f;
        for (const auto& n : names) f.expected[n] = bundle.checksum(n);
        return f;
    }

    void verify(const nets::ModelBundle& bundle) const {
        for (const auto& [name, sum] : expected)
            if (bundle.checksum(name) != sum)
                throw std::runtime_error("frozen-violation: parameter set '" + name +
                                         "' changed during Stage II");
    }
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace detail {

inline ag::Var l1_mean(const ag::Var& a, const ag::Var& b) {
    return ag::mean(ag::abs_(ag::sub(a, b)));
}

}  // namespace detail

// Stage-I DiR objective over a two-view batch:
//   L0 = -(I(r0;x1)+I(r0;x2))/2 + lambda*D_AKL + beta*KL(joint || N(0,I)),
// with the MI terms estimated by the JSD bound on critic scores and the joint
// posterior realized as the product of experts of the shared encoder. The
// bound is ascended cooperatively: one step updates encoder and critic.
inline LossResult loss_dir(nets::ModelBundle& bundle, nets::Binding& bind, const ag::Tensor& x1,
                           const ag::Tensor& x2, const Stage1Config& cfg, Rng& rng) {
    const int n = x1.size(0);
    ag::Var vx1 = ag::constant(x1);
    ag::Var vx2 = ag::constant(x2);

    dist::GaussianVar g1 = bundle.dir_encoder.encode(bind, vx1);
    dist::GaussianVar g2 = bundle.dir_encoder.encode(bind, vx2);
    dist::GaussianVar joint = dist::poe(g1, g2);
    ag::Var r0 = dist::sample(joint, rng);

    ag::Var feats1 = bundle.critic.image_features(bind, vx1);
    ag::Var feats2 = bundle.critic.image_features(bind, vx2);
    ag::Var mi1 = mi::jsd_mi_lower_bound(
        bundle.critic.score_from_features(bind, feats1, r0),
        bundle.critic.score_from_features(bind, feats1, ag::permute_batch(r0, mi::derangement(n, rng))));
    ag::Var mi2 = mi::jsd_mi_lower_bound(
        bundle.critic.score_from_features(bind, feats2, r0),
        bundle.critic.score_from_features(bind, feats2, ag::permute_batch(r0, mi::derangement(n, rng))));

    // KL quantities are element sums; the loss aggregates them as per-element
    // means so the trade-off weights act on scales comparable to the
    // per-pixel reconstruction terms.
    const double inv_elems = 1.0 / static_cast<double>(joint.mean.val().numel());
    ag::Var dakl = ag::scale(mi::d_akl(joint, g1, g2), inv_elems);
    ag::Var prior = ag::scale(dist::kl_to_standard_normal(joint), inv_elems);

    ag::Var total = ag::add(ag::add(ag::scale(ag::add(mi1, mi2), -0.5),
                                    ag::scale(dakl, cfg.lambda_weight)),
                            ag::scale(prior, cfg.beta_weight));

    LossReport report;
    report.total = total.item();
    report.parts = {{"mi_x1", mi1.item()},
                    {"mi_x2", mi2.item()},
                    {"d_akl", dakl.item()},
                    {"prior_kl", prior.item()}};
    report.weights = {{"mi_x1", -0.5},
                      {"mi_x2", -0.5},
                      {"d_akl", cfg.lambda_weight},
                      {"prior_kl", cfg.beta_weight}};
    return {total, report};
}

// Stage-I DfR objective (InfoVAE-style):
//   L* = -I(r*;y*) + E[ |D*(r*) - y*|_1 ] + beta* * KL(p(r*) || N(0,I)),
// with the L1 norm summed over pixels and the KL summed over latent elements
// (both averaged over the batch), so the reconstruction term dominates the
// prior at beta* = 1 exactly as in the published objective. The report keeps
// the per-pixel MAE as the part value with the pixel count as its weight.
// The shared critic is read but not updated in this step.
inline LossResult loss_dfr(nets::ModelBundle& bundle, nets::Binding& bind, const ag::Tensor& y_star,
                           const Stage1Config& cfg, Rng& rng) {
    const int n = y_star.size(0);
    ag::Var vy = ag::constant(y_star);

    dist::GaussianVar g = bundle.dfr_encoder.encode(bind, vy);
    ag::Var r = dist::sample(g, rng);
    ag::Var recon = bundle.decoder.decode(bind, r);
    ag::Var recon_l1 = detail::l1_mean(recon, vy);
    const double n_pix = static_cast<double>(y_star.numel() / n);

    ag::Var feats = bundle.critic.image_features(bind, vy);
    ag::Var mi_term = mi::jsd_mi_lower_bound(
        bundle.critic.score_from_features(bind, feats, r),
        bundle.critic.score_from_features(bind, feats, ag::permute_batch(r, mi::derangement(n, rng))));

    ag::Var prior = ag::scale(dist::kl_to_standard_normal(g), 1.0 / static_cast<double>(n));

    ag::Var total = ag::add(ag::add(ag::neg(mi_term), ag::scale(recon_l1, n_pix)),
                            ag::scale(prior, cfg.beta_star));

    LossReport report;
    report.total = total.item();
    report.parts = {{"mi_x1", mi_term.item()}, {"recon", recon_l1.item()}, {"prior_kl", prior.item()}};
    report.weights = {{"mi_x1", -1.0}, {"recon", n_pix}, {"prior_kl", cfg.beta_star}};
    return {total, report};
}

// Stage-II alignment objective:
//   L+ = E|r+ - r*|_1 + gamma1*L_task(T(D*(r+)), label) + gamma2*E|D*(r+) - y*|_1
// where r+ = A(r0, pilot), everything upstream of A frozen. Latents feeding A
// are posterior samples during training; the regression target r* is the
// posterior mean.
inline LossResult loss_align(nets::ModelBundle& bundle, nets::Binding& bind, const ag::Tensor& x,
                             const ag::Tensor& y_star, const std::vector<int>& labels,
                             const Stage2Config& cfg, Rng& rng,
                             const FrozenChecksums* frozen = nullptr) {
    if (frozen) frozen->verify(bundle);
    ag::Var vx = ag::constant(x);
    ag::Var vy = ag::constant(y_star);

    ag::Var r0 = dist::sample(bundle.dir_encoder.encode(bind, vx), rng);
    ag::Var pilot = cfg.use_pilot
                        ? dist::sample(bundle.dfr_encoder.encode(bind, vx), rng)
                        : ag::constant(bundle.alignment.zero_pilot(r0.shape()));
    ag::Var r_star = bundle.dfr_encoder.encode(bind, vy).mean;

    ag::Var r_plus = bundle.alignment.forward(bind, r0, pilot);
    ag::Var latent_l1 = detail::l1_mean(r_plus, r_star);

    ag::Var recon = bundle.decoder.decode(bind, r_plus);
    ag::Var recon_l1 = detail::l1_mean(recon, vy);

    ag::Var total = ag::add(latent_l1, ag::scale(recon_l1, cfg.gamma2));
    LossReport report;
    report.parts = {{"latent_l1", latent_l1.item()}, {"recon", recon_l1.item()}};
    report.weights = {{"latent_l1", 1.0}, {"recon", cfg.gamma2}, {"task", cfg.gamma1}};

    if (cfg.gamma1 > 0.0) {
        ag::Var task = ag::cross_entropy_mean(bundle.task_head.logits(bind, recon), labels);
        total = ag::add(total, ag::scale(task, cfg.gamma1));
        report.parts["task"] = task.item();
    }

    report.total = total.item();
    return {total, report};
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

class MetricsCsv {
public:
    explicit MetricsCsv(const std::string& path, bool append = false)
        : out_(path, append ? std::ios::app : std::ios::out) {
        if (!out_) throw std::runtime_error("cannot write metrics csv: " + path);
        if (!append) {
            out_ << "epoch,step,loss_total";
            for (const auto& name : LossReport::part_names()) out_ << ',' << name;
            out_ << ",lr,wall_ms\n";
        }
    }

    void append(int epoch, int step, const LossReport& report, double lr, double wall_ms) {
        char buf[64];
        auto fmt = [&buf](double v) {
            std::snprintf(buf, sizeof(buf), "%.10g", v);
            return std::string(buf);
        };
        out_ << epoch << ',' << step << ',' << fmt(report.total);
        for (const auto& name : LossReport::part_names()) {
            auto it = report.parts.find(name);
            out_ << ',' << fmt(it == report.parts.end() ? 0.0 : it->second);
        }
        out_ << ',' << fmt(lr) << ',' << fmt(wall_ms) << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Stage loops
// ---------------------------------------------------------------------------

// Epoch-indexed stream so a resumed run replays the exact randomness of an
// uninterrupted one from the same checkpointed boundary.
inline Rng epoch_rng(std::uint64_t seed, int stage, int epoch) {
    std::uint64_t h = seed ^ (0x9E3779B97F4A7C15ull *
                              (static_cast<std::uint64_t>(stage) * 1000003ull +
                               static_cast<std::uint64_t>(epoch) + 1ull));
    h ^= h >> 33;
    h *= 0xFF51AFD7ED558CCDull;
    h ^= h >> 33;
    return Rng(h);
}

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

inline double wall_ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

struct StageResult {
    std::string checkpoint_path;
    std::string metrics_path;
    LossReport last_report;
};

// Algorithm stage I: alternate one DiR step (encoder + critic) and one DfR
// step (encoder + decoder) per batch of synthesized two-view pairs.
inline StageResult train_stage1(const std::vector<ImageRGB>& clean_corpus, const Stage1Config& cfg,
                                nets::ModelBundle& bundle, const std::string& out_dir,
                                int start_epoch = 0) {
    cfg.validate();
    if (clean_corpus.empty()) throw std::invalid_argument("train_stage1: empty corpus");
    std::filesystem::create_directories(out_dir);

    const auto profile = isp::DegradationProfile::by_name(cfg.profile);
    Adam adam_dir({&bundle.dir_encoder.params(), &bundle.critic.params()});
    Adam adam_dfr({&bundle.dfr_encoder.params(), &bundle.decoder.params()});

    MetricsCsv csv(out_dir + "/stage1_metrics.csv", start_epoch > 0);
    {
        std::ofstream echo(out_dir + "/stage1_config.json");
        echo << nlohmann::json(cfg).dump(2) << '\n';
    }

    const int steps_per_epoch = 2 * static_cast<int>(clean_corpus.size() / static_cast<std::size_t>(cfg.batch_size) +
                                                     (clean_corpus.size() % static_cast<std::size_t>(cfg.batch_size) >= 2 ? 1 : 0));
    StageResult result;
    int step = start_epoch * steps_per_epoch;
    for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
        Rng rng = epoch_rng(cfg.seed, 1, epoch);
        const double lr = lr_at_epoch(epoch, cfg.lr_initial, cfg.lr_final, cfg.lr_drop_epoch);
        const auto order = detail::shuffled_indices(clean_corpus.size(), rng);
        for (std::size_t start = 0; start + 2 <= order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            if (stop - start < 2) break;  // in-batch negatives need two samples

            std::vector<ImageRGB> v1, v2, ystar;
            for (std::size_t i = start; i < stop; ++i) {
                const ImageRGB& clean = clean_corpus[order[i]];
                auto [a, b] = isp::make_pair(clean, profile, rng);
                v1.push_back(std::move(a));
                v2.push_back(std::move(b));
                ystar.push_back(clean);
            }
            const ag::Tensor x1 = to_tensor(v1);
            const ag::Tensor x2 = to_tensor(v2);
            const ag::Tensor ys = to_tensor(ystar);

            const auto t0 = std::chrono::steady_clock::now();
            {
                nets::Binding bind;
                LossResult dir = loss_dir(bundle, bind, x1, x2, cfg, rng);
                dir.report.check_finite("loss_dir epoch " + std::to_string(epoch));
                ag::backward(dir.total);
                adam_dir.step(bind, lr);
                csv.append(epoch, step++, dir.report, lr, detail::wall_ms_since(t0));
                result.last_report = dir.report;
            }
            const auto t1 = std::chrono::steady_clock::now();
            {
                nets::Binding bind;
                LossResult dfr = loss_dfr(bundle, bind, ys, cfg, rng);
                dfr.report.check_finite("loss_dfr epoch " + std::to_string(epoch));
                ag::backward(dfr.total);
                adam_dfr.step(bind, lr);
                csv.append(epoch, step++, dfr.report, lr, detail::wall_ms_since(t1));
            }
        }
    }

    result.checkpoint_path = out_dir + "/stage1.ckpt";
    result.metrics_path = out_dir + "/stage1_metrics.csv";
    bundle.save(result.checkpoint_path, {{"stage", 1}, {"next_epoch", cfg.max_epochs}});
    return result;
}

// Supervised warm-up of the task head on clean labeled images.
inline void pretrain_task_head(const std::vector<corpus::ToySample>& samples,
                               nets::ModelBundle& bundle, int epochs, double lr, int batch_size,
                               Rng& rng) {
    Adam adam({&bundle.task_head.params()});
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto order = detail::shuffled_indices(samples.size(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
            std::vector<ImageRGB> imgs;
            std::vector<int> labels;
            for (std::size_t i = start; i < stop; ++i) {
                imgs.push_back(samples[order[i]].clean);
                labels.push_back(samples[order[i]].label);
            }
            nets::Binding bind;
            ag::Var loss = ag::cross_entropy_mean(bundle.task_head.logits(bind, ag::constant(to_tensor(imgs))), labels);
            ag::backward(loss);
            adam.step(bind, lr);
        }
    }
}

// Algorithm stage II: freeze DiRNet, DfRNet and the decoder, then train the
// alignment network (and the task head when the task loss is active).
inline StageResult train_stage2(const std::vector<corpus::ToySample>& samples,
                                const Stage2Config& cfg, nets::ModelBundle& bundle,
                                const std::string& out_dir, int start_epoch = 0) {
    cfg.validate();
    if (samples.empty()) throw std::invalid_argument("train_stage2: empty corpus");
    std::filesystem::create_directories(out_dir);

    const auto profile = isp::DegradationProfile::by_name(cfg.profile);

    if (start_epoch == 0 && cfg.task == "classification" && cfg.task_pretrain_epochs > 0) {
        Rng pre_rng = epoch_rng(cfg.seed, 20, 0);
        std::vector<corpus::ToySample> pretrain_set = samples;
        if (cfg.task_pretrain_samples > static_cast<int>(samples.size())) {
            Rng gen_rng = epoch_rng(cfg.seed, 21, 0);
            pretrain_set = corpus::gen_toy_corpus(cfg.task_pretrain_samples,
                                                  bundle.config().n_classes, gen_rng);
        }
        pretrain_task_head(pretrain_set, bundle, cfg.task_pretrain_epochs, cfg.task_pretrain_lr,
                           cfg.batch_size, pre_rng);
    }

    const std::vector<std::string> frozen_names{"dir_encoder", "dfr_encoder", "decoder"};
    bundle.freeze(frozen_names);
    const auto frozen = FrozenChecksums::capture(bundle, frozen_names);

    std::vector<nets::ParamSet*> trainable{&bundle.alignment.params()};
    if (cfg.gamma1 > 0.0) trainable.push_back(&bundle.task_head.params());
    Adam adam(trainable);

    MetricsCsv csv(out_dir + "/stage2_metrics.csv", start_epoch > 0);
    {
        std::ofstream echo(out_dir + "/stage2_config.json");
        echo << nlohmann::json(cfg).dump(2) << '\n';
    }

    const int steps_per_epoch = static_cast<int>((samples.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                                 static_cast<std::size_t>(cfg.batch_size));
    StageResult result;
    int step = start_epoch * steps_per_epoch;
    for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
        Rng rng = epoch_rng(cfg.seed, 2, epoch);
        const double lr = lr_at_epoch(epoch, cfg.lr_initial, cfg.lr_final, cfg.lr_drop_epoch);
        const auto order = detail::shuffled_indices(samples.size(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));

            std::vector<ImageRGB> degraded, clean;
            std::vector<int> labels;
            for (std::size_t i = start; i < stop; ++i) {
                const auto& s = samples[order[i]];
                degraded.push_back(isp::degrade(s.clean, isp::sample_params(profile, rng)));
                clean.push_back(s.clean);
                labels.push_back(s.label);
            }
            const ag::Tensor x = to_tensor(degraded);
            const ag::Tensor ys = to_tensor(clean);

            const auto t0 = std::chrono::steady_clock::now();
            nets::Binding bind;
            LossResult align = loss_align(bundle, bind, x, ys, labels, cfg, rng, &frozen);
            align.report.check_finite("loss_align epoch " + std::to_string(epoch));
            ag::backward(align.total);
            adam.step(bind, lr);
            csv.append(epoch, step++, align.report, lr, detail::wall_ms_since(t0));
            result.last_report = align.report;
        }
        frozen.verify(bundle);
    }

    frozen.verify(bundle);
    result.checkpoint_path = out_dir + "/stage2.ckpt";
    result.metrics_path = out_dir + "/stage2_metrics.csv";
    bundle.save(result.checkpoint_path, {{"stage", 2}, {"next_epoch", cfg.max_epochs}});
    return result;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

// Central finite differences (step 1e-5) against analytic gradients for every
// parameter the named loss trains, on a miniature instantiation (16x16
// images, 4x2x2 latents). Returns the max relative error. The denominator is
// floored at the finite-difference noise scale (machine epsilon times the
// loss magnitude over the step, relative to the tolerance), below which
// central differences cannot certify a gradient in double precision.
inline double grad_check(const std::string& loss_name, double tolerance = 1e-4,
                         double fd_step = 1e-5) {
    nets::BundleConfig mini;
    mini.encoder = {3, 4, 3, 4};
    mini.alignment = {2, 1, 2, 2, 3};
    mini.n_classes = 3;
    mini.task_width = 4;
    mini.critic_width = 4;
    mini.init_seed = 20240901;
    nets::ModelBundle bundle(mini);

    // synthetic 16x16 batch
    Rng data_rng(77);
    auto mk_img = [&data_rng](double offset) {
        ag::Tensor t({2, 3, 16, 16});
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t[i] = 0.5 + 0.35 * std::sin(offset + 0.11 * static_cast<double>(i)) +
                   0.05 * data_rng.normal();
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = std::min(1.0, std::max(0.0, t[i]));
        return t;
    };
    ag::Tensor x1 = mk_img(0.3), x2 = mk_img(1.7), ys = mk_img(3.9);
    // keep reconstruction residuals away from the |.| kink: the untrained
    // decoder emits values near 0.5, so targets live in [0.04, 0.29]
    for (std::int64_t i = 0; i < ys.numel(); ++i) ys[i] = 0.04 + 0.25 * ys[i];
    const std::vector<int> labels{0, 2};

    Stage1Config s1;
    s1.lambda_weight = 1.0;
    s1.beta_weight = 0.01;
    Stage2Config s2 = Stage2Config::classification_preset();

    std::vector<std::string> trainable;
    if (loss_name == "loss_dir") {
        trainable = {"dir_encoder", "critic"};
    } else if (loss_name == "loss_dfr") {
        trainable = {"dfr_encoder", "decoder"};
    } else if (loss_name == "loss_align") {
        trainable = {"alignment", "task_head"};
        bundle.freeze({"dir_encoder", "dfr_encoder", "decoder"});
    } else {
        throw std::invalid_argument("grad_check: unknown loss " + loss_name);
    }

    auto build = [&](nets::Binding& bind) -> ag::Var {
        Rng rng(4242);  // same noise/derangement draws on every evaluation
        if (loss_name == "loss_dir") return loss_dir(bundle, bind, x1, x2, s1, rng).total;
        if (loss_name == "loss_dfr") return loss_dfr(bundle, bind, ys, s1, rng).total;
        return loss_align(bundle, bind, x1, ys, labels, s2, rng).total;
    };

    nets::Binding bind;
    ag::Var loss = build(bind);
    ag::backward(loss);

    const double fd_noise_floor =
        10.0 * 2.2e-16 * (1.0 + std::fabs(loss.item())) / (fd_step * tolerance);
    double worst = 0.0;
    for (const auto& set_name : trainable) {
        for (auto& p : bundle.set(set_name).params()) {
            const ag::Tensor* g = bind.grad(p);
            for (std::int64_t i = 0; i < p.value.numel(); ++i) {
                const double orig = p.value[i];
                auto eval = [&](double v) {
                    p.value[i] = v;
                    nets::Binding b2;
                    const double out = build(b2).item();
                    p.value[i] = orig;
                    return out;
                };
                const double fd = (eval(orig + fd_step) - eval(orig - fd_step)) / (2.0 * fd_step);
                const double an = g ? (*g)[i] : 0.0;
                const double err = std::fabs(fd - an) /
                                   std::max({1e-6, fd_noise_floor, std::fabs(fd), std::fabs(an)});
                worst = std::max(worst, err);
            }
        }
    }
    return worst;
}

}  // namespace dirlearn::train
