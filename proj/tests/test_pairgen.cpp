#include <gtest/gtest.h>

#include <fstream>

#include "icfsr/pairgen.hpp"
#include "test_util.hpp"

using namespace icfsr;
namespace fs = std::filesystem;

namespace {

ParameterSet<float> tiny_params() {
    ModelConfig c;
    c.n_resblocks = 1;
    c.n_channels = 4;
    c.scale_set = {2, 4};
    return init_parameters<float>(c, 2);
}

}  // namespace

TEST(PairGen, ShapesFollowScale) {
    const auto p = tiny_params();
    const std::vector<Image> imgs{testutil::random_image(32, 48, 1), testutil::random_image(16, 16, 2)};
    const auto pairs = generate_lr_hr(p, imgs, 4);
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_EQ(pairs[0].lr.height, 8);
    EXPECT_EQ(pairs[0].lr.width, 12);
    EXPECT_EQ(pairs[0].hr, imgs[0]);
    EXPECT_EQ(pairs[1].lr, forward(p, imgs[1], ScaleCondition::down(4)));
    EXPECT_THROW(generate_lr_hr(p, imgs, 3), InvalidArgument);
}

TEST(PairGen, CropsIndivisibleInputsWithWarning) {
    const auto p = tiny_params();
    std::vector<std::string> warnings;
    const auto pairs = generate_llr_lr(p, {testutil::random_image(33, 35, 1)}, 2,
                                       [&](const std::string& w) { warnings.push_back(w); });
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("32x34"), std::string::npos);
    EXPECT_EQ(pairs[0].hr.height, 32);
    EXPECT_EQ(pairs[0].lr.width, 17);
}

TEST(PairGen, ExpandName) {
    EXPECT_EQ(expand_name("####", 7), "0007");
    EXPECT_EQ(expand_name("img_##_x", 123), "img_123_x");
    EXPECT_EQ(expand_name("fixed", 3), "fixed");
}

TEST(PairGen, ExportWritesImagesAndManifest) {
    testutil::TempDir dir;
    const auto p = tiny_params();
    const std::vector<Image> imgs{testutil::random_image(16, 16, 1), testutil::random_image(16, 24, 2),
                                  testutil::random_image(32, 16, 3)};
    const auto pairs = generate_lr_hr(p, imgs, 2);
    const auto manifest = export_dataset(pairs, dir.path(), "pair_###");
    int pngs = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir.path()))
        if (e.path().extension() == ".png") ++pngs;
    EXPECT_EQ(pngs, 6);
    EXPECT_EQ(testutil::read_bytes(manifest),
              "pair_000\t8x8\t16x16\t2\npair_001\t8x12\t16x24\t2\npair_002\t16x8\t32x16\t2\n");
    const Image lr = load_image(dir / "LR" / "pair_001.png");
    EXPECT_EQ(lr.width, 12);
    // idempotent
    const std::string first = testutil::read_bytes(dir / "HR" / "pair_002.png");
    export_dataset(pairs, dir.path(), "pair_###");
    EXPECT_EQ(testutil::read_bytes(dir / "HR" / "pair_002.png"), first);
}

TEST(PairGen, NameCollisionIsRejectedBeforeWriting) {
    testutil::TempDir dir;
    const auto pairs = generate_lr_hr(tiny_params(), {Image(3, 8, 8, 0.5), Image(3, 8, 8, 0.2)}, 2);
    EXPECT_THROW(export_dataset(pairs, dir / "out", "same"), InvalidArgument);
    EXPECT_FALSE(fs::exists(dir / "out"));
}
