#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "icfsr/adam.hpp"
#include "icfsr/checkpoint.hpp"
#include "icfsr/config.hpp"
#include "icfsr/imageio.hpp"
#include "icfsr/losses.hpp"
#include "icfsr/model.hpp"
#include "icfsr/rng.hpp"

namespace icfsr {

/// Which of the two reconstruction chains contribute to the objective.
/// up_down: f(stop(f(x|s)) | 1/s) vs x, plus the color term on f(x|s).
/// down_up: f(stop(f(x|1/s)) | s) vs x, plus the color term on f(x|1/s).
struct ChainSelection {
    bool up_down = true;
    bool down_up = true;
};

template <class T>
struct GradientResult {
    LossReport report;
    Gradients<T> grads;
};

namespace detail {

struct SampleLoss {
    double cons = 0.0;
    double color = 0.0;
};

/// Both chains for one patch at one scale. Gradients of
/// weight * (L_cons + lambda * L_color) are accumulated into `g`.
template <class T>
SampleLoss sample_chains(const ParameterSet<T>& p, const Tensor<T>& x, int s, double lambda,
                         ChainSelection chains, double weight, Gradients<T>& g) {
    const auto up = ScaleCondition::up(s), down = ScaleCondition::down(s);
    SampleLoss loss;
    if (chains.up_down) {
        ForwardResult<T> first = forward_train(p, x, up);
        {
            // gradient-stop: the second pass sees a constant input
            ForwardResult<T> second = forward_train(p, first.output, down);
            Tensor<T> grad;
            loss.cons += mean_l1(second.output, x, &grad, weight);
            backward(p, second.tape, grad, g);
        }
        const Tensor<T> p_up = avg_pool(first.output, 4 * s, 4 * s);
        const Tensor<T> p_x = avg_pool(x, 4, 4);
        Tensor<T> g_pool;
        loss.color += mean_l1(p_up, p_x, &g_pool, weight * lambda);
        if (lambda != 0.0) {
            Tensor<T> grad(first.output.channels, first.output.height, first.output.width);
            avg_pool_adjoint_add(g_pool, 4 * s, grad);
            backward(p, first.tape, grad, g);
        }
    }
    if (chains.down_up) {
        ForwardResult<T> first = forward_train(p, x, down);
        {
            ForwardResult<T> second = forward_train(p, first.output, up);
            Tensor<T> grad;
            loss.cons += mean_l1(second.output, x, &grad, weight);
            backward(p, second.tape, grad, g);
        }
        const Tensor<T> p_down = avg_pool(first.output, 4, 4);
        const Tensor<T> p_x = avg_pool(x, 4 * s, 4 * s);
        Tensor<T> g_pool;
        loss.color += mean_l1(p_down, p_x, &g_pool, weight * lambda);
        if (lambda != 0.0) {
            Tensor<T> grad(first.output.channels, first.output.height, first.output.width);
            avg_pool_adjoint_add(g_pool, 4, grad);
            backward(p, first.tape, grad, g);
        }
    }
    return loss;
}

template <class F>
void parallel_for(int n, int threads, F&& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                try {
                    for (int i = t; i < n; i += threads) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Loss and batch-averaged gradient of L_total summed over `scales`.
/// Per-sample gradients are reduced in sample order, so the result does
/// not depend on `threads`.
template <class T>
GradientResult<T> compute_gradients(const ParameterSet<T>& params,
                                    const std::vector<Tensor<T>>& batch,
                                    const std::vector<int>& scales, double lambda_color,
                                    ChainSelection chains = {}, int threads = 1) {
    detail::require(!batch.empty(), "batch must not be empty");
    detail::require(!scales.empty(), "at least one scale is required");
    for (int s : scales) {
        detail::require(params.config().has_scale(s),
                        "scale " + std::to_string(s) + " is not in the model's scale set");
        for (const auto& x : batch) {
            detail::require(x.channels == 3, "patches must have 3 channels");
            detail::require(x.height % s == 0 && x.width % s == 0 && x.height >= 4 * s &&
                                x.width >= 4 * s,
                            "patch " + dims_string(x.height, x.width) + " does not fit scale " +
                                std::to_string(s));
        }
    }
    const int n = static_cast<int>(batch.size());
    const double weight = 1.0 / n;
    std::vector<Gradients<T>> per_sample(n, Gradients<T>(params.config()));
    std::vector<std::vector<detail::SampleLoss>> losses(n, std::vector<detail::SampleLoss>(scales.size()));
    detail::parallel_for(n, threads, [&](int i) {
        for (std::size_t k = 0; k < scales.size(); ++k)
            losses[i][k] = detail::sample_chains(params, batch[i], scales[k], lambda_color, chains,
                                                 weight, per_sample[i]);
    });

    GradientResult<T> r{LossReport{}, Gradients<T>(params.config())};
    for (int i = 0; i < n; ++i) r.grads.add_scaled(per_sample[i], T(1));
    r.report.lambda_color = lambda_color;
    for (std::size_t k = 0; k < scales.size(); ++k) {
        ScaleLoss sl;
        sl.scale = scales[k];
        for (int i = 0; i < n; ++i) {
            sl.l_cons += losses[i][k].cons * weight;
            sl.l_color += losses[i][k].color * weight;
        }
        r.report.l_cons += sl.l_cons;
        r.report.l_color += sl.l_color;
        r.report.per_scale.push_back(sl);
    }
    r.report.l_total = total_loss(r.report.l_cons, r.report.l_color, lambda_color);
    return r;
}

/// One Adam step on the given scales. Throws NonFiniteLoss, leaving
/// params and opt untouched, if the loss or any gradient is not finite.
template <class T>
LossReport train_step_scales(ParameterSet<T>& params, OptimizerState<T>& opt,
                             const std::vector<Tensor<T>>& batch, const std::vector<int>& scales,
                             const TrainConfig& cfg, double lr) {
    for (const auto& x : batch)
        detail::require(x.height == cfg.patch_size && x.width == cfg.patch_size,
                        "patch " + dims_string(x.height, x.width) + " does not match patch_size " +
                            std::to_string(cfg.patch_size));
    GradientResult<T> r = compute_gradients(params, batch, scales, cfg.lambda_color, {}, cfg.threads);
    if (!std::isfinite(r.report.l_total) || !r.grads.all_finite())
        throw NonFiniteLoss("non-finite loss or gradient; step rejected");
    adam_update(params, r.grads, opt, lr, cfg.adam);
    return r.report;
}

/// Single-scale step: the up-down and down-up chains at scale s.
template <class T>
LossReport train_step(ParameterSet<T>& params, OptimizerState<T>& opt,
                      const std::vector<Tensor<T>>& batch, int s, const TrainConfig& cfg,
                      double lr) {
    return train_step_scales(params, opt, batch, std::vector<int>{s}, cfg, lr);
}

/// Multi-scale step: chains for every scale in cfg.scale_set, one update.
template <class T>
LossReport train_step_multiscale(ParameterSet<T>& params, OptimizerState<T>& opt,
                                 const std::vector<Tensor<T>>& batch, const TrainConfig& cfg,
                                 double lr) {
    return train_step_scales(params, opt, batch, cfg.scale_set, cfg, lr);
}

/// Image-uniform, then position-uniform, then one of the 8 dihedral maps.
template <class T>
std::vector<Tensor<T>> draw_batch(const std::vector<Image>& dataset, const TrainConfig& cfg, Rng& rng) {
    std::vector<Tensor<T>> batch;
    batch.reserve(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
        const auto& img = dataset[rng.uniform_int(dataset.size())];
        Image patch = random_patch(img, cfg.patch_size, rng);
        if (cfg.augment) patch = dihedral(patch, static_cast<int>(rng.uniform_int(8)));
        batch.push_back(tensor_cast<T>(patch));
    }
    return batch;
}

inline int resolve_steps_per_epoch(const std::vector<Image>& dataset, const TrainConfig& cfg) {
    if (cfg.steps_per_epoch > 0) return cfg.steps_per_epoch;
    long long patches = 0;
    for (const auto& img : dataset)
        patches += static_cast<long long>(img.height / cfg.patch_size) * (img.width / cfg.patch_size);
    return static_cast<int>(std::max<long long>(1, (patches + cfg.batch_size - 1) / cfg.batch_size));
}

struct StepInfo {
    int epoch = 0;
    int step_in_epoch = 0;
    std::int64_t global_step = 0;
    double lr = 0.0;
    LossReport report;
};

template <class T>
struct TrainHooks {
    std::function<void(const StepInfo&)> on_step;
    /// Called after each completed epoch with a resumable snapshot.
    std::function<void(const Checkpoint<T>&)> on_epoch;
    std::function<void(const std::string&)> log;
};

inline std::uint64_t sampling_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

inline constexpr int kMaxNonFiniteRetries = 3;

/// Self-supervised training on LR images only. With `resume`, continues
/// from its epoch, weights, moments and sampler state.
template <class T>
Checkpoint<T> train(const std::vector<Image>& dataset, const ModelConfig& model_cfg,
                    const TrainConfig& cfg, const TrainHooks<T>& hooks = {},
                    const Checkpoint<T>* resume = nullptr) {
    cfg.validate();
    model_cfg.validate();
    if (dataset.empty()) throw DataError("training set is empty");
    for (int s : cfg.scale_set)
        detail::require(model_cfg.has_scale(s), "training scale " + std::to_string(s) +
                                                    " is not in the model's scale set");
    for (const auto& img : dataset) {
        check_image(img);
        if (img.channels != 3) throw DataError("training images must be RGB");
        if (img.height < cfg.patch_size || img.width < cfg.patch_size)
            throw DataError("training image " + dims_string(img.height, img.width) +
                            " is smaller than patch_size " + std::to_string(cfg.patch_size));
    }

    Checkpoint<T> ck;
    ck.model = model_cfg;
    ck.train = cfg;
    ck.config_digest = config_digest(cfg);
    Rng rng(sampling_seed(cfg.seed));
    if (resume) {
        if (!(resume->model == model_cfg))
            throw InvalidArgument("checkpoint model config differs from the requested one");
        if (resume->config_digest != ck.config_digest)
            throw InvalidArgument("checkpoint was trained with a different TrainConfig");
        ck.params = resume->params;
        ck.opt = resume->opt;
        ck.epoch = resume->epoch;
        rng.set_state(resume->rng_state);
    } else {
        ck.params = init_parameters<T>(model_cfg, cfg.seed);
        ck.opt = make_optimizer_state(ck.params);
    }

    const int steps = resolve_steps_per_epoch(dataset, cfg);
    std::int64_t global = static_cast<std::int64_t>(ck.epoch) * steps;
    for (int epoch = ck.epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        for (int step = 0; step < steps; ++step) {
            LossReport report;
            for (int attempt = 0;; ++attempt) {
                const auto batch = draw_batch<T>(dataset, cfg, rng);
                try {
                    report = cfg.scale_set.size() == 1
                                 ? train_step(ck.params, ck.opt, batch, cfg.scale_set[0], cfg, lr)
                                 : train_step_multiscale(ck.params, ck.opt, batch, cfg, lr);
                    break;
                } catch (const NonFiniteLoss&) {
                    if (attempt + 1 >= kMaxNonFiniteRetries) throw;
                    if (hooks.log) hooks.log("non-finite loss; redrawing batch");
                }
            }
            ++global;
            if (hooks.on_step) hooks.on_step({epoch, step, global, lr, report});
        }
        ck.epoch = epoch + 1;
        ck.rng_state = rng.state();
        if (hooks.on_epoch) hooks.on_epoch(ck);
    }
    ck.rng_state = rng.state();
    return ck;
}

}  // namespace icfsr
