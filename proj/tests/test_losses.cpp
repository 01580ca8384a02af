#include <gtest/gtest.h>

#include <cmath>

#include "icfsr/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace icfsr;

TEST(Consistency, WorkedExample) {
    const Image x(3, 4, 4, 0.0);
    const Image hat(3, 4, 4, 0.1), check(3, 4, 4, -0.2);
    EXPECT_NEAR(consistency_loss(hat, check, x), 0.3, 1e-15);
    EXPECT_EQ(consistency_loss(x, x, x), 0.0);
}

TEST(Consistency, GradientIsSignOverCountWithZeroAtKink) {
    Image x(1, 1, 4, 0.5), hat(1, 1, 4), check(1, 1, 4, 0.5);
    hat.data = {0.1, 0.5, 0.9, 0.7};
    Image gh, gc;
    consistency_loss(hat, check, x, &gh, &gc, 2.0);
    EXPECT_EQ(gh.data, (std::vector<double>{-0.5, 0.0, 0.5, 0.5}));
    EXPECT_EQ(gc.data, (std::vector<double>{0, 0, 0, 0}));
}

TEST(Consistency, ShapeMismatchThrows) {
    EXPECT_THROW(consistency_loss(Image(3, 4, 4), Image(3, 4, 5), Image(3, 4, 4)), InvalidArgument);
}

TEST(Color, ZeroForConstantImages) {
    const int s = 2;
    const Image x(3, 16, 16, 0.5), up(3, 32, 32, 0.5), down(3, 8, 8, 0.5);
    EXPECT_EQ(color_loss(up, down, x, s), 0.0);
}

TEST(Color, MatchesBruteForceOracle) {
    for (int s : {2, 3, 4}) {
        const int n = 48;
        const auto x = testutil::random_tensor<double>(3, n, n, 1 + s);
        const auto up = testutil::random_tensor<double>(3, n * s, n * s, 10 + s);
        const auto down = testutil::random_tensor<double>(3, n / s, n / s, 20 + s);
        EXPECT_NEAR(color_loss(up, down, x, s), oracle::color_term(up, down, x, s), 1e-12) << s;
    }
}

TEST(Color, FloorModeWhenWindowDoesNotDivide) {
    // scale 8 on 48x48: 48 / 32 leaves a remainder
    const auto x = testutil::random_tensor<double>(3, 48, 48, 3);
    const auto up = testutil::random_tensor<double>(3, 384, 384, 4);
    const auto down = testutil::random_tensor<double>(3, 6, 6, 5);
    EXPECT_NEAR(color_loss(up, down, x, 8), oracle::color_term(up, down, x, 8), 1e-12);
    EXPECT_THROW(color_loss(up, down, Image(3, 28, 28), 8), InvalidArgument);
}

TEST(Color, InvariantToPermutationInsideAPoolingBlock) {
    const int s = 2;
    const auto x = testutil::random_tensor<double>(3, 16, 16, 7);
    auto up = testutil::random_tensor<double>(3, 32, 32, 8);
    const auto down = testutil::random_tensor<double>(3, 8, 8, 9);
    const double before = color_loss(up, down, x, s);
    std::swap(up(1, 0, 0), up(1, 7, 7));  // same 8x8 block
    std::swap(up(2, 9, 17), up(2, 14, 22));
    EXPECT_NEAR(color_loss(up, down, x, s), before, 1e-14);
}

TEST(Color, GradientMatchesFiniteDifferences) {
    const int s = 2;
    const auto x = testutil::random_tensor<double>(3, 16, 16, 11);
    const auto up = testutil::random_tensor<double>(3, 32, 32, 12);
    const auto down = testutil::random_tensor<double>(3, 8, 8, 13);
    Image gu, gd;
    color_loss(up, down, x, s, &gu, &gd, 0.7);
    Rng rng(5);
    const double eps = 1e-7;
    for (int probe = 0; probe < 20; ++probe) {
        auto a = up, b = up;
        const std::size_t i = rng.uniform_int(up.size());
        a.data[i] += eps;
        b.data[i] -= eps;
        const double num = 0.7 * (color_loss(a, down, x, s) - color_loss(b, down, x, s)) / (2 * eps);
        EXPECT_NEAR(gu.data[i], num, 1e-7);
        auto c = down, d = down;
        const std::size_t j = rng.uniform_int(down.size());
        c.data[j] += eps;
        d.data[j] -= eps;
        const double num2 = 0.7 * (color_loss(up, c, x, s) - color_loss(up, d, x, s)) / (2 * eps);
        EXPECT_NEAR(gd.data[j], num2, 1e-7);
    }
}

TEST(Total, WeightedSum) {
    EXPECT_DOUBLE_EQ(total_loss(0.3, 0.5, 0.2), 0.4);
    EXPECT_DOUBLE_EQ(total_loss(0.3, 0.5, 0.0), 0.3);
}
