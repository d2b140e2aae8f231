#pragma once

/**
 * @file garmnet/training.hpp
 * @brief Parameter initialisation, Adadelta, the training loop and a
 *        finite-difference gradient check.
 */

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "garmnet/checkpoint.hpp"
#include "garmnet/dataset.hpp"
#include "garmnet/evaluation.hpp"
#include "garmnet/losses.hpp"
#include "garmnet/network.hpp"

namespace garmnet {

/// Raised when the loss stops being finite.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// splitmix64 finaliser over a combined key; used to derive per-example seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    std::uint64_t z = a * 0x9E3779B97F4A7C15ULL ^ (b + 0x632BE59BD9B4E019ULL) ^ (c * 0xD1B54A32D192ED03ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct InitConfig {
    double kernel_std = 0.01;
    double bias_value = 1.0;
};

/// Kernels ~ N(0, kernel_std), biases = bias_value, frozen buffers untouched;
/// then the backbone is overwritten with pretrained weights when configured.
template <typename T>
void init_parameters(GarmNet<T>& model, std::uint64_t seed, const InitConfig& init = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, init.kernel_std);
    for (Param<T>* p : model.parameters()) {
        if (p->kind == ParamKind::kernel)
            for (T& v : p->value.vec()) v = T(normal(rng));
        else if (p->kind == ParamKind::bias)
            p->value.fill(T(init.bias_value));
        if (p->trainable()) p->zero_grad();
    }
    if (model.config().backbone.pretrained_weights) load_backbone_weights(model, *model.config().backbone.pretrained_weights);
}

struct AdadeltaConfig {
    double learning_rate = 1.0;
    double rho = 0.95;
    double epsilon = 1e-7;
};

template <typename T>
class Adadelta {
public:
    explicit Adadelta(AdadeltaConfig cfg = {}) : cfg_(cfg) {}

    void step(const ParamList<T>& params) {
        if (acc_grad_.empty()) {
            for (const Param<T>* p : params) {
                acc_grad_.emplace_back(p->trainable() ? p->value.size() : 0, T(0));
                acc_delta_.emplace_back(p->trainable() ? p->value.size() : 0, T(0));
            }
        }
        if (acc_grad_.size() != params.size()) throw std::logic_error("Adadelta: parameter list changed");
        const T rho = T(cfg_.rho), eps = T(cfg_.epsilon), lr = T(cfg_.learning_rate);
        for (std::size_t k = 0; k < params.size(); ++k) {
            Param<T>* p = params[k];
            if (!p->trainable()) continue;
            auto& eg = acc_grad_[k];
            auto& ed = acc_delta_[k];
            for (std::size_t i = 0; i < eg.size(); ++i) {
                const T g = p->grad[i];
                eg[i] = rho * eg[i] + (T(1) - rho) * g * g;
                const T dx = -std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps) * g;
                ed[i] = rho * ed[i] + (T(1) - rho) * dx * dx;
                p->value[i] += lr * dx;
            }
        }
    }

private:
    AdadeltaConfig cfg_;
    std::vector<std::vector<T>> acc_grad_, acc_delta_;
};

struct TrainConfig {
    NetworkConfig network;
    InitConfig init;
    AdadeltaConfig optimizer;
    std::size_t batch_size = 30;
    std::size_t epochs = 40;
    LossWeights loss_weights;
    TargetConfig targets;
    AugmentConfig augmentation;
    bool balance = false;
    std::uint64_t data_seed = 1;
    std::uint64_t init_seed = 2;
    std::uint64_t sampling_seed = 3;
    bool strict_determinism = false;
    bool validate_every_epoch = true;
    MatchRule match;  // box_side follows the network unless set explicitly
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t steps = 0;
    LossBundle train;
    std::optional<LossBundle> validation;
    std::optional<EvalReport> metrics;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::vector<LossBundle> steps;  // per-step batch means, in order

    std::size_t size() const { return epochs.size(); }
};

template <typename T>
struct TrainResult {
    GarmNet<T> model;       // parameters after the last epoch
    GarmNet<T> best_model;  // lowest validation (else training) total loss
    std::size_t best_epoch = 0;
    TrainHistory history;
    std::size_t steps_taken = 0;
};

inline nlohmann::json bundle_to_json(const LossBundle& b) {
    return {{"landmark_reg", b.landmark_reg},
            {"landmark_cls", b.landmark_cls},
            {"garment_cls", b.garment_cls},
            {"garment_reg", b.garment_reg},
            {"total", b.total}};
}

/// Wall time is left out so reruns produce identical files.
inline nlohmann::json epoch_to_json(const EpochRecord& r) {
    nlohmann::json j{{"epoch", r.epoch}, {"steps", r.steps}, {"train", bundle_to_json(r.train)}};
    if (r.validation) j["validation"] = bundle_to_json(*r.validation);
    if (r.metrics)
        j["metrics"] = {{"garment_classification_error", r.metrics->garment_classification_error},
                        {"garment_cls_loc_error", r.metrics->garment_cls_loc_error},
                        {"mean_ap", r.metrics->mean_ap},
                        {"duplicate_rate", r.metrics->duplicate_rate}};
    return j;
}

namespace detail {

/// Flush denormals to zero while alive. Adadelta accumulators decay into the
/// denormal range late in training and otherwise slow every step several-fold.
class DenormalGuard {
public:
#if defined(__SSE2__)
    DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }  // FTZ | DAZ
    ~DenormalGuard() { _mm_setcsr(saved_); }

private:
    unsigned saved_;
#endif
};

struct BundleSum {
    double v[5] = {0, 0, 0, 0, 0};
    std::size_t n = 0;

    void add(const LossBundle& b) {
        v[0] += b.landmark_reg, v[1] += b.landmark_cls, v[2] += b.garment_cls, v[3] += b.garment_reg, v[4] += b.total;
        ++n;
    }
    LossBundle mean(const LossWeights& w) const {
        const double d = n ? double(n) : 1.0;
        LossBundle b{v[0] / d, v[1] / d, v[2] / d, v[3] / d, v[4] / d, w};
        return b;
    }
};

template <typename T>
struct PreparedExample {
    Tensor<T> input;
    ExampleTargets targets;
    std::string id;
};

template <typename T>
PreparedExample<T> prepare_example(const Example& src, const GarmNet<T>& model, const AnchorGrid& grid,
                                   const TrainConfig& cfg, std::uint64_t aug_seed, std::uint64_t mask_seed,
                                   bool augment_now) {
    const auto& bc = model.config().backbone;
    const Example e = augment_now ? augment(src, aug_seed, cfg.augmentation) : src;
    PreparedExample<T> p;
    p.id = e.id;
    p.input = image_to_tensor<T>(e.image, bc.mean, bc.std);
    const auto pts = e.class_points();
    p.targets = make_targets(grid, pts, e.garment_class, e.garment_box, model.box_codec(),
                             OffsetCodec{model.config().normalize_offsets}, cfg.targets, mask_seed);
    return p;
}

template <typename T>
bool finite_bundle(const LossBundle& b) {
    return std::isfinite(b.total) && std::isfinite(b.landmark_reg) && std::isfinite(b.landmark_cls) &&
           std::isfinite(b.garment_cls) && std::isfinite(b.garment_reg);
}

}  // namespace detail

/// Mean loss over a batch and the matching accumulated gradients (already divided by the batch size).
template <typename T>
LossBundle accumulate_batch_gradients(GarmNet<T>& model, const std::vector<Tensor<T>>& inputs,
                                      const std::vector<ExampleTargets>& targets, const LossWeights& w,
                                      bool with_grad = true) {
    detail::BundleSum sum;
    const T inv = T(1) / T(inputs.size());
    const bool sc = model.config().spatial_constraint;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        typename GarmNet<T>::Cache cache;
        const HeadOutputs<T> out = model.forward(inputs[i], with_grad ? &cache : nullptr);
        HeadGrads<T> g;
        const LossBundle b = compute_example_loss(out, targets[i], w, sc, model.config().n_landmarks,
                                                  with_grad ? &g : nullptr);
        sum.add(b);
        if (!with_grad) continue;
        for (auto* v : {&g.landmark_logits.vec(), &g.landmark_offsets.vec(), &g.garment_logits, &g.garment_box})
            for (T& x : *v) x *= inv;
        model.backward(cache, g);
    }
    return sum.mean(w);
}

/**
 * Optimise a freshly initialised model.
 *
 * Each epoch shuffles the training set (data seed), re-draws the background
 * anchors of every loss mask (sampling seed) and, when enabled, re-draws the
 * photometric augmentation. When out_dir is given, best.ckpt, final.ckpt and
 * history.jsonl are written there.
 */
template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                     const Taxonomy& taxonomy = Taxonomy::default_taxonomy(),
                     const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    if (cfg.batch_size == 0 || cfg.epochs == 0) throw std::invalid_argument("train: batch_size and epochs must be >= 1");
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    const detail::DenormalGuard denormals;

    std::vector<Example> data = train_set;
    if (cfg.balance)
        data = balance_by_class(train_set, cfg.network.n_garments, [](const Example& e) { return e.garment_class; });

    TrainResult<T> res{GarmNet<T>(cfg.network), GarmNet<T>(), 0, {}, 0};
    GarmNet<T>& model = res.model;
    init_parameters(model, cfg.init_seed, cfg.init);
    const AnchorGrid grid = model.anchor_grid();
    MatchRule rule = cfg.match;
    rule.box_side = cfg.network.box_side;
    Adadelta<T> opt(cfg.optimizer);
    const ParamList<T> params = model.parameters();
    double best_loss = std::numeric_limits<double>::infinity();

    std::ofstream history_out;
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        history_out.open(*out_dir / "history.jsonl");
    }

    // Validation inputs and masks are fixed across epochs.
    std::vector<detail::PreparedExample<T>> val_prepared;
    for (std::size_t i = 0; i < val_set.size(); ++i)
        val_prepared.push_back(detail::prepare_example(val_set[i], model, grid, cfg, 0,
                                                       mix_seed(cfg.sampling_seed, 0xFFFFFFFFULL, i), false));

    std::vector<std::size_t> order(data.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(mix_seed(cfg.data_seed, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        const std::size_t n_steps = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
        auto prepare_batch = [&, epoch](std::size_t step) {
            std::vector<detail::PreparedExample<T>> batch;
            const std::size_t lo = step * cfg.batch_size, hi = std::min(data.size(), lo + cfg.batch_size);
            for (std::size_t k = lo; k < hi; ++k) {
                const std::size_t idx = order[k];
                batch.push_back(detail::prepare_example(data[idx], model, grid, cfg,
                                                        mix_seed(cfg.data_seed, epoch + 1, idx),
                                                        mix_seed(cfg.sampling_seed, epoch, idx),
                                                        cfg.augmentation.enabled));
            }
            return batch;
        };

        detail::BundleSum epoch_sum;
        std::future<std::vector<detail::PreparedExample<T>>> next;
        if (!cfg.strict_determinism) next = std::async(std::launch::async, prepare_batch, 0);
        for (std::size_t step = 0; step < n_steps; ++step) {
            auto batch = cfg.strict_determinism ? prepare_batch(step) : next.get();
            if (!cfg.strict_determinism && step + 1 < n_steps)
                next = std::async(std::launch::async, prepare_batch, step + 1);

            std::vector<Tensor<T>> inputs;
            std::vector<ExampleTargets> targets;
            for (auto& p : batch) {
                inputs.push_back(std::move(p.input));
                targets.push_back(std::move(p.targets));
            }
            model.zero_grad();
            const LossBundle b = accumulate_batch_gradients(model, inputs, targets, cfg.loss_weights);
            if (!detail::finite_bundle<T>(b)) {
                std::string ids;
                for (const auto& p : batch) ids += (ids.empty() ? "" : ",") + p.id;
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                                     std::to_string(step + 1) + "; examples: " + ids);
            }
            opt.step(params);
            epoch_sum.add(b);
            res.history.steps.push_back(b);
            ++res.steps_taken;
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.steps = n_steps;
        rec.train = epoch_sum.mean(cfg.loss_weights);
        if (!val_prepared.empty() && (cfg.validate_every_epoch || epoch + 1 == cfg.epochs)) {
            detail::BundleSum vs;
            std::vector<PredictionSet> preds;
            for (const auto& p : val_prepared) {
                const HeadOutputs<T> out = model.forward(p.input);
                vs.add(compute_example_loss(out, p.targets, cfg.loss_weights, cfg.network.spatial_constraint,
                                            cfg.network.n_landmarks));
                preds.push_back(decode_predictions(out, grid, model.config()));
            }
            rec.validation = vs.mean(cfg.loss_weights);
            rec.metrics = evaluate_predictions(preds, val_set, rule, cfg.network.n_landmarks, taxonomy.landmarks);
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const double score = rec.validation ? rec.validation->total : rec.train.total;
        if (score < best_loss || res.best_epoch == 0) {
            best_loss = score;
            res.best_epoch = rec.epoch;
            res.best_model = model;
            if (out_dir) save_checkpoint(model, taxonomy, *out_dir / "best.ckpt", {{"epoch", rec.epoch}});
        }
        if (history_out) history_out << epoch_to_json(rec).dump() << '\n' << std::flush;
        if (on_epoch) on_epoch(rec);
        res.history.epochs.push_back(std::move(rec));
    }
    if (out_dir) save_checkpoint(model, taxonomy, *out_dir / "final.ckpt", {{"epoch", cfg.epochs}});
    return res;
}

struct GradientSample {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradientReport {
    double max_rel_error = 0.0;
    std::vector<GradientSample> samples;
};

/**
 * Compare analytic gradients of the weighted batch loss with central
 * differences on up to max_samples randomly chosen trainable scalars.
 * Relative error is |a - n| / max(|a|, |n|, abs_floor); the floor sits well
 * above the round-off of a central difference at this step (~1e-9), so
 * near-zero gradients do not count as mismatches. With the bridge enabled the
 * numeric derivative also sees the garment loss through the landmark
 * probabilities, which the analytic gradient deliberately ignores; check that
 * variant with zero garment weights.
 */
template <typename T>
GradientReport gradient_sanity(GarmNet<T>& model, const std::vector<Tensor<T>>& inputs,
                               const std::vector<ExampleTargets>& targets, const LossWeights& w,
                               std::size_t max_samples = 100, std::uint64_t seed = 0, double step = 1e-5,
                               double abs_floor = 1e-6) {
    if (inputs.empty()) throw std::invalid_argument("gradient_sanity: empty batch");
    model.zero_grad();
    accumulate_batch_gradients(model, inputs, targets, w);
    ParamList<T> params;
    std::size_t total = 0;
    for (Param<T>* p : model.parameters())
        if (p->trainable()) {
            params.push_back(p);
            total += p->value.size();
        }

    std::vector<std::size_t> flat(total);
    std::iota(flat.begin(), flat.end(), 0);
    std::vector<std::size_t> picked;
    std::mt19937_64 rng(seed);
    std::sample(flat.begin(), flat.end(), std::back_inserter(picked), std::min(max_samples, total), rng);

    GradientReport rep;
    for (std::size_t f : picked) {
        std::size_t k = 0;
        while (f >= params[k]->value.size()) f -= params[k++]->value.size();
        Param<T>* p = params[k];
        const T orig = p->value[f];
        p->value[f] = orig + T(step);
        const double up = accumulate_batch_gradients(model, inputs, targets, w, false).total;
        p->value[f] = orig - T(step);
        const double down = accumulate_batch_gradients(model, inputs, targets, w, false).total;
        p->value[f] = orig;
        GradientSample s{p->name, f, double(p->grad[f]), (up - down) / (2 * step), 0.0};
        s.rel_error = std::abs(s.analytic - s.numeric) /
                      std::max({std::abs(s.analytic), std::abs(s.numeric), abs_floor});
        rep.max_rel_error = std::max(rep.max_rel_error, s.rel_error);
        rep.samples.push_back(s);
    }
    return rep;
}

}  // namespace garmnet
