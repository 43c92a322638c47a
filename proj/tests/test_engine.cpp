// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "swiftface/detect.hpp"
#include "swiftface/engine.hpp"

using namespace swiftface;

namespace {

RgbImage random_image(std::mt19937& rng, int w, int h) {
    RgbImage img(w, h);
    for (auto& p : img.pixels)
        p = static_cast<std::uint8_t>(rng() & 0xff);
    return img;
}

NetworkSpec builtin_at(int side) {
    auto spec = builtin_swiftface();
    spec.input_height = spec.input_width = side;
    return spec;
}

} // namespace

TEST(Preprocess, SameSizeIsExactScaling) {
    std::mt19937 rng(1);
    const auto img = random_image(rng, 512, 512);
    const auto pre = preprocess(img, builtin_swiftface());
    ASSERT_EQ(pre.tensor.shape(), (Shape{512, 512, 3}));
    for (int y = 0; y < 512; y += 7)
        for (int x = 0; x < 512; ++x)
            for (int c = 0; c < 3; ++c)
                ASSERT_EQ(pre.tensor(y, x, c), static_cast<float>(img.at(x, y)[c]) / 255.0f);
    EXPECT_EQ(pre.original_width, 512);
    EXPECT_EQ(pre.original_height, 512);
}

TEST(Preprocess, ConstantImageStaysConstant) {
    for (auto [w, h] : {std::pair{37, 91}, std::pair{1, 1}, std::pair{1000, 3}}) {
        RgbImage img(w, h);
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            img.pixels[i] = static_cast<std::uint8_t>(i % 3 == 0 ? 200 : i % 3 == 1 ? 17 : 0);
        const auto pre = preprocess(img, builtin_swiftface());
        for (int y = 0; y < 512; ++y)
            for (int x = 0; x < 512; ++x) {
                ASSERT_EQ(pre.tensor(y, x, 0), 200 / 255.0f);
                ASSERT_EQ(pre.tensor(y, x, 1), 17 / 255.0f);
                ASSERT_EQ(pre.tensor(y, x, 2), 0.0f);
            }
    }
}

TEST(Preprocess, DownsampledCheckerboardMatchesBilinearFormula) {
    RgbImage img(1024, 1024);
    for (int y = 0; y < 1024; ++y)
        for (int x = 0; x < 1024; ++x) {
            const std::uint8_t v = ((x / 3 + y / 5) % 2) ? 255 : 0;
            auto* p = img.at(x, y);
            p[0] = v;
            p[1] = static_cast<std::uint8_t>(255 - v);
            p[2] = static_cast<std::uint8_t>(v / 2);
        }
    const auto pre = preprocess(img, builtin_swiftface());
    double worst = 0;
    for (int y = 0; y < 512; ++y)
        for (int x = 0; x < 512; ++x)
            for (int c = 0; c < 3; ++c)
                worst = std::max(worst, std::fabs(pre.tensor(y, x, c) - oracle::bilinear_sample(img, 512, 512, x, y, c)));
    EXPECT_LE(worst, 1e-5);
}

TEST(Preprocess, ZeroSizedRejected) { EXPECT_THROW(preprocess(RgbImage{}, builtin_swiftface()), ShapeError); }

TEST(Preprocess, LetterboxInverseMapping) {
    std::mt19937 rng(2);
    const auto img = random_image(rng, 200, 100);
    const auto pre = preprocess(img, builtin_swiftface(), ResizeMode::letterbox);
    EXPECT_EQ(pre.tensor(0, 0, 0), 0.5f); // padding band
    EXPECT_DOUBLE_EQ(pre.offset_y, 128.0);
    // A box covering the whole picture area maps back to the full original frame.
    const BBox net{256, 256, 512, 256};
    const BBox orig = to_original(net, pre);
    EXPECT_NEAR(orig.cx, 100, 1e-4);
    EXPECT_NEAR(orig.cy, 50, 1e-4);
    EXPECT_NEAR(orig.w, 200, 1e-4);
    EXPECT_NEAR(orig.h, 100, 1e-4);
}

TEST(Forward, BuiltinHeadShapes) {
    const auto spec = builtin_swiftface();
    const Model model(spec, random_init(spec, 7));
    std::mt19937 rng(3);
    const auto res = forward(model, preprocess(random_image(rng, 640, 480), spec));
    ASSERT_EQ(res.heads.size(), 2u);
    EXPECT_EQ(res.heads[0].layer, 12);
    EXPECT_EQ(res.heads[0].tensor.shape(), (Shape{16, 16, 18}));
    EXPECT_EQ(res.heads[1].layer, 19);
    EXPECT_EQ(res.heads[1].tensor.shape(), (Shape{32, 32, 18}));
    for (const auto& h : res.heads)
        for (float v : h.tensor.data())
            ASSERT_TRUE(std::isfinite(v));
}

TEST(Forward, ZeroNetworkGivesZeroHeads) {
    const auto spec = builtin_at(128);
    const Model model(spec, zero_init(spec));
    std::mt19937 rng(4);
    const auto res = forward(model, preprocess(random_image(rng, 50, 70), spec));
    for (const auto& h : res.heads)
        for (float v : h.tensor.data())
            ASSERT_EQ(v, 0.0f);
}

TEST(Forward, ToyGraphEqualsManualComposition) {
    NetworkSpec spec;
    spec.input_height = spec.input_width = 4;
    spec.layers = {{0, ConvLayer{5, 3, 1, Activation::leaky, true}},
                   {1, MaxPoolLayer{}},
                   {2, ConvLayer{2, 1, 1, Activation::linear, false}}};
    auto params = random_init(spec, 8);
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> d(0.5f, 1.5f);
    for (auto& v : params.convs[0].batchnorm->variance)
        v = d(rng);
    for (auto& v : params.convs[0].batchnorm->mean)
        v = d(rng) - 1.0f;
    for (auto& v : params.convs[1].bias)
        v = d(rng);

    const Model model(spec, params);
    PreprocessedImage img;
    img.tensor = oracle::random_tensor(rng, 4, 4, 3, 0.0f, 1.0f);
    ForwardOptions opts;
    opts.diagnostics = true;
    const auto res = forward(model, img, opts);

    const auto k0 = make_kernel(params.convs[0], Activation::leaky);
    const auto k2 = make_kernel(params.convs[1], Activation::linear);
    const Tensor want = oracle::conv2d(oracle::maxpool(oracle::conv2d(img.tensor, k0)), k2);
    EXPECT_LE(oracle::max_rel_err(res.layer_outputs->back(), want), 1e-5f);
}

TEST(Forward, EveryLayerMatchesInferredShape) {
    const auto spec = builtin_at(128);
    const Model model(spec, random_init(spec, 1));
    std::mt19937 rng(6);
    ForwardOptions opts;
    opts.diagnostics = true;
    const auto res = forward(model, preprocess(random_image(rng, 128, 128), spec), opts);
    const auto shapes = infer_shapes(spec);
    ASSERT_EQ(res.layer_outputs->size(), shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i)
        EXPECT_EQ((*res.layer_outputs)[i].shape(), shapes[i]) << "layer " << i;
}

TEST(Forward, RouteInputsEqualPrefixReexecution) {
    const auto spec = builtin_at(64);
    const auto params = random_init(spec, 2);
    const Model model(spec, params);
    std::mt19937 rng(7);
    const auto img = preprocess(random_image(rng, 64, 64), spec);
    ForwardOptions diag;
    diag.diagnostics = true;
    const auto full = forward(model, img, diag);

    for (int source : {8, 9, 15}) {
        NetworkSpec prefix = spec;
        prefix.layers.resize(source + 1);
        ModelParams sub;
        sub.header = params.header;
        for (const auto& p : params.convs)
            if (p.layer <= source)
                sub.convs.push_back(p);
        const auto again = forward(Model(prefix, sub), img, diag);
        EXPECT_EQ(again.layer_outputs->back(), (*full.layer_outputs)[source]) << "source " << source;
    }
}

TEST(Forward, CachePruning) {
    const auto spec = builtin_at(64);
    const Model model(spec, random_init(spec, 3));
    std::mt19937 rng(8);
    const auto img = preprocess(random_image(rng, 64, 64), spec);
    const auto pruned = forward(model, img);
    for (std::size_t i = 10; i < pruned.cache_sizes.size(); ++i)
        EXPECT_LE(pruned.cache_sizes[i], 3u) << "after layer " << i;
    EXPECT_EQ(pruned.cache_sizes.back(), 0u);

    ForwardOptions keep;
    keep.prune_cache = false;
    const auto unpruned = forward(model, img, keep);
    EXPECT_EQ(unpruned.cache_sizes.back(), 3u); // 8, 9, 15 stay resident
    for (std::size_t h = 0; h < 2; ++h)
        EXPECT_EQ(unpruned.heads[h].tensor, pruned.heads[h].tensor);
}

TEST(Forward, DeterministicAndPathIndependent) {
    const auto spec = builtin_at(96);
    const Model model(spec, random_init(spec, 4));
    std::mt19937 rng(9);
    const auto img = preprocess(random_image(rng, 120, 90), spec);
    const auto a = forward(model, img), b = forward(model, img);
    ForwardOptions ref;
    ref.reference_conv = true;
    const auto c = forward(model, img, ref);
    for (std::size_t h = 0; h < 2; ++h) {
        EXPECT_EQ(a.heads[h].tensor, b.heads[h].tensor);
        EXPECT_LE(oracle::max_rel_err(a.heads[h].tensor, c.heads[h].tensor), 1e-5f);
    }
}

TEST(Forward, RejectsWrongInputShape) {
    const auto spec = builtin_at(64);
    const Model model(spec, random_init(spec, 4));
    PreprocessedImage img;
    img.tensor = Tensor(32, 32, 3);
    EXPECT_THROW(forward(model, img), ShapeError);
}

TEST(Model, RejectsMismatchedParams) {
    const auto spec = builtin_swiftface();
    auto params = random_init(spec, 1);
    params.convs.pop_back();
    EXPECT_THROW(Model(spec, params), FormatError);
}
