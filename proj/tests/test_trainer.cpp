#include <gtest/gtest.h>

#include <cmath>

#include "icfsr/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace icfsr;

namespace {

ModelConfig tiny(std::vector<int> scales = {2}) {
    ModelConfig c;
    c.n_resblocks = 1;
    c.n_channels = 4;
    c.scale_set = std::move(scales);
    return c;
}

template <class T>
std::vector<Tensor<T>> random_batch(int n, int size, std::uint64_t seed) {
    std::vector<Tensor<T>> b;
    for (int i = 0; i < n; ++i) b.push_back(testutil::random_tensor<T>(3, size, size, seed + i));
    return b;
}

template <class T>
bool all_zero(const ParamTensor<T>& t) {
    for (T v : t.values)
        if (v != T(0)) return false;
    return true;
}

bool is_tail(const std::string& name, const std::string& dir) {
    return name.rfind("tail.x2." + dir + ".", 0) == 0;
}

}  // namespace

TEST(Adam, MatchesScalarReference) {
    ParameterSet<double> p(tiny());
    auto& w = p.tensors()[0].values;
    w[0] = 0.5;
    w[1] = -0.25;
    Gradients<double> g(p.config());
    auto opt = make_optimizer_state(p);
    AdamConfig cfg;
    // independent scalar recurrence
    double rw[2] = {0.5, -0.25}, rm[2] = {}, rv[2] = {};
    const double grads[3][2] = {{0.1, -2.0}, {0.3, 0.0}, {-0.05, 1.0}};
    for (int t = 1; t <= 3; ++t) {
        g.tensors()[0].values[0] = grads[t - 1][0];
        g.tensors()[0].values[1] = grads[t - 1][1];
        adam_update(p, g, opt, 1e-3, cfg);
        for (int j = 0; j < 2; ++j) {
            rm[j] = 0.9 * rm[j] + 0.1 * grads[t - 1][j];
            rv[j] = 0.999 * rv[j] + 0.001 * grads[t - 1][j] * grads[t - 1][j];
            const double mh = rm[j] / (1 - std::pow(0.9, t)), vh = rv[j] / (1 - std::pow(0.999, t));
            rw[j] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
        }
        EXPECT_NEAR(w[0], rw[0], 1e-15);
        EXPECT_NEAR(w[1], rw[1], 1e-15);
    }
    EXPECT_EQ(opt.step, 3);
    EXPECT_EQ(w[2], 0.0);  // zero gradient leaves an untouched weight in place
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParameterSet<double> p(tiny());
    Gradients<double> g(p.config());
    g.tensors()[0].values[0] = 3.0;
    g.tensors()[0].values[1] = -1e-3;
    auto opt = make_optimizer_state(p);
    adam_update(p, g, opt, 1e-4, AdamConfig{});
    EXPECT_NEAR(p.tensors()[0].values[0], -1e-4, 1e-12);
    EXPECT_NEAR(p.tensors()[0].values[1], 1e-4, 1e-9);
}

TEST(Schedule, HalvesEveryTwoHundredEpochs) {
    TrainConfig c;
    EXPECT_DOUBLE_EQ(lr_at_epoch(c, 0), 1e-4);
    EXPECT_DOUBLE_EQ(lr_at_epoch(c, 199), 1e-4);
    EXPECT_DOUBLE_EQ(lr_at_epoch(c, 200), 5e-5);
    EXPECT_DOUBLE_EQ(lr_at_epoch(c, 399), 5e-5);
    EXPECT_DOUBLE_EQ(lr_at_epoch(c, 400), 2.5e-5);
    EXPECT_DOUBLE_EQ(lr_at_epoch(c, 1000), 1e-4 / 32);
}

TEST(GradientStop, FirstPassOnlyTailGetsGradientOnlyFromColorTerm) {
    const auto p = init_parameters<double>(tiny(), 3);
    const auto batch = random_batch<double>(2, 16, 40);
    for (const char* dir : {"up", "down"}) {
        const ChainSelection chains{std::string(dir) == "up", std::string(dir) == "down"};
        const auto g0 = compute_gradients(p, batch, {2}, 0.0, chains);
        const auto g1 = compute_gradients(p, batch, {2}, 0.2, chains);
        bool any_nonzero = false;
        for (std::size_t t = 0; t < p.tensors().size(); ++t) {
            const auto& name = p.tensors()[t].name;
            if (!is_tail(name, dir)) continue;
            EXPECT_TRUE(all_zero(g0.grads.tensors()[t])) << name;
            if (name.find(".weight") != std::string::npos)
                EXPECT_FALSE(all_zero(g1.grads.tensors()[t])) << name;
            any_nonzero = any_nonzero || !all_zero(g1.grads.tensors()[t]);
        }
        EXPECT_TRUE(any_nonzero);
    }
}

TEST(Gradients, MatchFrozenFirstPassFiniteDifferences) {
    const auto p = init_parameters<double>(tiny(), 8);
    const auto batch = random_batch<double>(2, 8, 50);
    const std::vector<int> scales{2};
    const auto r = compute_gradients(p, batch, scales, 0.2);
    const auto frozen = oracle::first_passes(p, batch, scales);
    EXPECT_NEAR(r.report.l_total, oracle::total_with_frozen_first(p, batch, scales, 0.2, frozen), 1e-12);
    Rng rng(99);
    for (int probe = 0; probe < 15; ++probe) {
        const std::size_t t = rng.uniform_int(p.tensors().size());
        const std::size_t i = rng.uniform_int(p.tensors()[t].values.size());
        auto q = p;
        const double eps = 1e-6, w0 = q.tensors()[t].values[i];
        q.tensors()[t].values[i] = w0 + eps;
        const double plus = oracle::total_with_frozen_first(q, batch, scales, 0.2, frozen);
        q.tensors()[t].values[i] = w0 - eps;
        const double minus = oracle::total_with_frozen_first(q, batch, scales, 0.2, frozen);
        const double num = (plus - minus) / (2 * eps);
        EXPECT_NEAR(r.grads.tensors()[t].values[i], num, 1e-5 * std::max(1.0, std::abs(num)))
            << p.tensors()[t].name << "[" << i << "]";
    }
}

TEST(Gradients, IndependentOfThreadCount) {
    const auto p = init_parameters<float>(tiny(), 4);
    const auto batch = random_batch<float>(5, 16, 60);
    const auto a = compute_gradients(p, batch, {2}, 0.2, {}, 1);
    const auto b = compute_gradients(p, batch, {2}, 0.2, {}, 3);
    EXPECT_EQ(a.grads, b.grads);
    EXPECT_EQ(a.report.l_total, b.report.l_total);
}

TEST(Gradients, PerScaleComponentsSumToTotal) {
    const auto p = init_parameters<float>(tiny({2, 4}), 4);
    const auto batch = random_batch<float>(2, 16, 70);
    const auto r = compute_gradients(p, batch, {2, 4}, 0.2);
    ASSERT_EQ(r.report.per_scale.size(), 2u);
    double cons = 0, color = 0;
    for (const auto& s : r.report.per_scale) {
        EXPECT_TRUE(std::isfinite(s.l_cons) && std::isfinite(s.l_color));
        cons += s.l_cons;
        color += s.l_color;
    }
    EXPECT_DOUBLE_EQ(cons, r.report.l_cons);
    EXPECT_DOUBLE_EQ(color, r.report.l_color);
    EXPECT_DOUBLE_EQ(r.report.l_total, r.report.l_cons + 0.2 * r.report.l_color);
    // the multi-scale gradient is the sum of the single-scale ones
    auto sum = compute_gradients(p, batch, {2}, 0.2).grads;
    sum.add_scaled(compute_gradients(p, batch, {4}, 0.2).grads, 1.0f);
    for (std::size_t t = 0; t < sum.tensors().size(); ++t)
        for (std::size_t i = 0; i < sum.tensors()[t].values.size(); ++i)
            ASSERT_NEAR(sum.tensors()[t].values[i], r.grads.tensors()[t].values[i], 1e-6);
}

TEST(Gradients, Errors) {
    const auto p = init_parameters<float>(tiny({2}), 4);
    EXPECT_THROW(compute_gradients(p, random_batch<float>(1, 16, 1), {3}, 0.2), InvalidArgument);
    EXPECT_THROW(compute_gradients(p, random_batch<float>(1, 6, 1), {2}, 0.2), InvalidArgument);
    EXPECT_THROW(compute_gradients(p, {}, {2}, 0.2), InvalidArgument);
}

TEST(TrainStep, NonFiniteLossLeavesStateUntouched) {
    auto p = init_parameters<float>(tiny(), 4);
    p.tensors()[0].values[0] = std::numeric_limits<float>::quiet_NaN();
    auto opt = make_optimizer_state(p);
    TrainConfig cfg;
    cfg.patch_size = 16;
    const auto before = p;
    const auto opt_before = opt;
    EXPECT_THROW(train_step(p, opt, random_batch<float>(2, 16, 3), 2, cfg, 1e-4), NonFiniteLoss);
    EXPECT_EQ(opt, opt_before);
    EXPECT_EQ(p.tensors()[1], before.tensors()[1]);
}

TEST(TrainStep, MultiscaleWithSingleScaleEqualsTrainStep) {
    TrainConfig cfg;
    cfg.patch_size = 16;
    const auto p0 = init_parameters<float>(tiny(), 4);
    const auto batch = random_batch<float>(2, 16, 3);
    auto p1 = p0, p2 = p0;
    auto o1 = make_optimizer_state(p1), o2 = make_optimizer_state(p2);
    const auto r1 = train_step(p1, o1, batch, 2, cfg, 1e-3);
    const auto r2 = train_step_multiscale(p2, o2, batch, cfg, 1e-3);
    EXPECT_EQ(p1, p2);
    EXPECT_EQ(r1.l_total, r2.l_total);
    EXPECT_FALSE(p1 == p0);
}

TEST(DrawBatch, DeterministicShapesAndSeedSensitive) {
    std::vector<Image> data{testutil::random_image(40, 50, 1), testutil::random_image(33, 33, 2)};
    TrainConfig cfg;
    cfg.patch_size = 32;
    cfg.batch_size = 6;
    Rng a(5), b(5), c(6);
    const auto x = draw_batch<float>(data, cfg, a);
    EXPECT_EQ(x, draw_batch<float>(data, cfg, b));
    EXPECT_NE(x, draw_batch<float>(data, cfg, c));
    for (const auto& t : x) EXPECT_EQ(t.height, 32);
}

TEST(StepsPerEpoch, ProxyCountsNonOverlappingPatches) {
    std::vector<Image> data{Image(3, 100, 100), Image(3, 48, 96)};
    TrainConfig cfg;
    cfg.steps_per_epoch = 0;
    cfg.batch_size = 2;
    EXPECT_EQ(resolve_steps_per_epoch(data, cfg), 3);  // (4 + 2) / 2
    cfg.steps_per_epoch = 7;
    EXPECT_EQ(resolve_steps_per_epoch(data, cfg), 7);
}

namespace {

TrainConfig small_run() {
    TrainConfig cfg;
    cfg.patch_size = 16;
    cfg.batch_size = 2;
    cfg.steps_per_epoch = 2;
    cfg.epochs = 3;
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST(Train, DeterministicAndLogsEverySteps) {
    const std::vector<Image> data{testutil::random_image(24, 24, 9)};
    std::vector<StepInfo> steps;
    TrainHooks<float> hooks;
    hooks.on_step = [&](const StepInfo& s) { steps.push_back(s); };
    const auto a = train<float>(data, tiny(), small_run(), hooks);
    const auto b = train<float>(data, tiny(), small_run());
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.epoch, 3);
    EXPECT_EQ(a.opt.step, 6);
    ASSERT_EQ(steps.size(), 6u);
    EXPECT_EQ(steps.back().global_step, 6);
    auto other = small_run();
    other.seed = 18;
    EXPECT_FALSE(train<float>(data, tiny(), other).params == a.params);
}

TEST(Train, ResumeMatchesUninterrupted) {
    const std::vector<Image> data{testutil::random_image(24, 24, 9)};
    auto cfg = small_run();
    const auto full = train<float>(data, tiny(), cfg);
    cfg.epochs = 1;
    const auto part = train<float>(data, tiny(), cfg);
    cfg.epochs = 3;
    const auto resumed = train<float>(data, tiny(), cfg, {}, &part);
    EXPECT_EQ(resumed, full);
}

TEST(Train, ResumeRejectsDifferentConfig) {
    const std::vector<Image> data{testutil::random_image(24, 24, 9)};
    auto cfg = small_run();
    cfg.epochs = 1;
    const auto part = train<float>(data, tiny(), cfg);
    cfg.lambda_color = 0.3;
    EXPECT_THROW(train<float>(data, tiny(), cfg, {}, &part), InvalidArgument);
    cfg.lambda_color = 0.2;
    auto m = tiny();
    m.n_channels = 8;
    EXPECT_THROW(train<float>(data, m, cfg, {}, &part), InvalidArgument);
}

TEST(Train, DataErrors) {
    EXPECT_THROW(train<float>({}, tiny(), small_run()), DataError);
    EXPECT_THROW(train<float>({Image(3, 8, 8)}, tiny(), small_run()), DataError);
    auto cfg = small_run();
    cfg.scale_set = {3};
    EXPECT_THROW(train<float>({Image(3, 24, 24)}, tiny(), cfg), InvalidArgument);
}
