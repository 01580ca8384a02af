#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "icfsr/imageio.hpp"
#include "test_util.hpp"

using namespace icfsr;
namespace fs = std::filesystem;

TEST(ImageIo, AllWhitePngLoadsAsOnes) {
    testutil::TempDir dir;
    Image img(3, 2, 2, 1.0);
    save_image(img, dir / "white.png");
    const Image back = load_image(dir / "white.png");
    ASSERT_EQ(back.height, 2);
    ASSERT_EQ(back.width, 2);
    for (double v : back.data) EXPECT_EQ(v, 1.0);
}

TEST(ImageIo, EightBitValueMapsByDivision) {
    testutil::TempDir dir;
    Image img(3, 1, 1, 128.0 / 255.0);
    save_image(img, dir / "mid.png");
    const Image back = load_image(dir / "mid.png");
    EXPECT_DOUBLE_EQ(back(0, 0, 0), 128.0 / 255.0);
    EXPECT_NEAR(back(0, 0, 0), 0.50196, 1e-5);
}

TEST(ImageIo, SaveClampsAndRoundsHalfAwayFromZero) {
    EXPECT_EQ(quantize8(1.2), 255);
    EXPECT_EQ(quantize8(0.5), 128);
    EXPECT_EQ(quantize8(0.0), 0);
    EXPECT_EQ(quantize8(-0.3), 0);
    EXPECT_EQ(quantize8(std::nan("")), 0);
}

TEST(ImageIo, RoundTripIsPixelExactOnRandomImage) {
    testutil::TempDir dir;
    Rng rng(11);
    Image img(3, 17, 23);
    for (auto& v : img.data) v = static_cast<double>(rng.uniform_int(256)) / 255.0;
    save_image(img, dir / "a.png");
    const Image once = load_image(dir / "a.png");
    EXPECT_EQ(once, img);
    save_image(once, dir / "b.png");
    EXPECT_EQ(testutil::read_bytes(dir / "a.png"), testutil::read_bytes(dir / "b.png"));
}

TEST(ImageIo, GrayscaleIsReplicatedAndSixteenBitScaled) {
    testutil::TempDir dir;
    Image gray(1, 3, 2, 0.25);
    save_image(gray, dir / "g.png");
    const Image back = load_image(dir / "g.png");
    ASSERT_EQ(back.channels, 3);
    for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(back(c, 1, 1), 64.0 / 255.0);

    const auto p16 = dir / "g16.png";
    testutil::write_png16_gray(p16, 2, 2, {0, 1000, 65535, 32768});
    const Image b16 = load_image(p16);
    EXPECT_DOUBLE_EQ(b16(0, 0, 1), 1000.0 / 65535.0);
    EXPECT_DOUBLE_EQ(b16(2, 1, 0), 1.0);
}

TEST(ImageIo, LoadErrors) {
    testutil::TempDir dir;
    EXPECT_THROW(load_image(dir / "missing.png"), DataError);
    {
        std::ofstream(dir / "junk.png") << "definitely not a png";
    }
    EXPECT_THROW(load_image(dir / "junk.png"), DataError);
    EXPECT_THROW(save_image(Image(3, 2, 2), dir / "no" / "such" / "dir.png"), DataError);
}

TEST(ImageIo, LuminanceMatchesClosedForm) {
    // Y = (65.738 R + 129.057 G + 25.064 B) / 256 + 16 on the 255 scale.
    const double white = (65.738 + 129.057 + 25.064) * 255.0 / 256.0 + 16.0;
    EXPECT_NEAR(white, 235.0, 1e-3);
    EXPECT_NEAR(to_luminance(Image(3, 1, 1, 1.0))(0, 0, 0), white / 255.0, 1e-12);
    EXPECT_DOUBLE_EQ(to_luminance(Image(3, 1, 1, 0.0))(0, 0, 0), 16.0 / 255.0);
    const double gray = (65.738 + 129.057 + 25.064) * 127.5 / 256.0 + 16.0;
    EXPECT_NEAR(to_luminance(Image(3, 1, 1, 0.5))(0, 0, 0), gray / 255.0, 1e-12);
    EXPECT_THROW(to_luminance(Image(1, 2, 2)), InvalidArgument);
}

TEST(ImageIo, LuminanceOfConstantGrayIsConstant) {
    const Image y = to_luminance(Image(3, 5, 7, 0.3));
    for (double v : y.data) EXPECT_DOUBLE_EQ(v, y.data[0]);
}

TEST(RandomPatch, WholeImageWhenSizesMatch) {
    Rng rng(1);
    Image img = testutil::random_image(48, 48, 5);
    EXPECT_EQ(random_patch(img, 48, rng), img);
}

TEST(RandomPatch, TooSmallImageIsDataError) {
    Rng rng(1);
    EXPECT_THROW(random_patch(Image(3, 47, 47), 48, rng), DataError);
}

TEST(RandomPatch, CornersOf49x49AreUniform) {
    // Label each pixel with its index so the patch reveals its corner.
    Image img(1, 49, 49);
    for (int y = 0; y < 49; ++y)
        for (int x = 0; x < 49; ++x) img(0, y, x) = y * 49 + x;
    Rng rng(2024);
    int counts[4] = {};
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Image p = random_patch(img, 48, rng);
        const int top = static_cast<int>(p(0, 0, 0)) / 49, left = static_cast<int>(p(0, 0, 0)) % 49;
        ASSERT_TRUE(top <= 1 && left <= 1);
        ++counts[top * 2 + left];
    }
    const double expect = n / 4.0, sigma = std::sqrt(n * 0.25 * 0.75);
    for (int c : counts) EXPECT_LT(std::abs(c - expect), 3 * sigma);
}

TEST(Dihedral, IdentityAndRotation) {
    Image img(1, 2, 2);
    img.data = {1, 2, 3, 4};
    EXPECT_EQ(dihedral(img, 0), img);
    EXPECT_EQ(dihedral(img, 1).data, (std::vector<double>{2, 4, 1, 3}));
    EXPECT_EQ(dihedral(img, 4).data, (std::vector<double>{2, 1, 4, 3}));
    EXPECT_THROW(dihedral(img, 8), InvalidArgument);
    EXPECT_THROW(dihedral(img, -1), InvalidArgument);
}

TEST(Dihedral, FlipIsInvolutionAndRotationHasOrderFour) {
    const Image img = testutil::random_image(5, 7, 9);
    EXPECT_EQ(dihedral(dihedral(img, 4), 4), img);
    Image r = img;
    for (int i = 0; i < 4; ++i) r = dihedral(r, 1);
    EXPECT_EQ(r, img);
    EXPECT_EQ(dihedral(img, 1).height, 7);
}

TEST(Dihedral, AllEightElementsAreDistinctAndPreserveValues) {
    const Image img = testutil::random_image(6, 6, 3);
    std::vector<double> sorted = img.data;
    std::sort(sorted.begin(), sorted.end());
    std::vector<Image> seen;
    for (int k = 0; k < 8; ++k) {
        const Image d = dihedral(img, k);
        std::vector<double> s = d.data;
        std::sort(s.begin(), s.end());
        EXPECT_EQ(s, sorted) << "k=" << k;
        for (const auto& prev : seen) EXPECT_NE(prev, d) << "k=" << k;
        seen.push_back(d);
    }
}
