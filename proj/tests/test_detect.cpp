// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "swiftface/detect.hpp"

using namespace swiftface;

namespace {

const YoloHeadConfig& coarse_head() {
    static const YoloHeadConfig cfg = std::get<YoloLayer>(builtin_swiftface().layers[12].kind).head;
    return cfg;
}

std::vector<Detection> random_dets(std::mt19937& rng, int n) {
    std::uniform_real_distribution<float> pos(0, 100), size(5, 40), conf(0, 1);
    std::vector<Detection> out;
    for (int i = 0; i < n; ++i) {
        Detection d;
        d.bbox = {pos(rng), pos(rng), size(rng), size(rng)};
        // Coarse confidence grid so ties occur.
        d.confidence = std::round(conf(rng) * 10) / 10;
        d.objectness = d.confidence;
        d.class_prob = 1;
        out.push_back(d);
    }
    return out;
}

} // namespace

TEST(DecodeHead, ZeroHeadFirstCell) {
    const auto dets = decode_head(Tensor(16, 16, 18), coarse_head(), 512);
    ASSERT_EQ(dets.size(), 768u);
    // Cell (0,0), slot 1 -> mask[1] = 4 -> anchor (135, 169); stride 512 / 16 = 32.
    const auto& d = dets[1];
    EXPECT_FLOAT_EQ(d.bbox.cx, 16.0f);
    EXPECT_FLOAT_EQ(d.bbox.cy, 16.0f);
    EXPECT_FLOAT_EQ(d.bbox.w, 135.0f);
    EXPECT_FLOAT_EQ(d.bbox.h, 169.0f);
    EXPECT_FLOAT_EQ(d.objectness, 0.5f);
    for (const auto& e : dets)
        EXPECT_FLOAT_EQ(e.confidence, 0.25f);
}

TEST(DecodeHead, MatchesPerCellFormula) {
    std::mt19937 rng(1);
    const Tensor head = oracle::random_tensor(rng, 2, 2, 18, -3, 3);
    const auto dets = decode_head(head, coarse_head(), 512);
    ASSERT_EQ(dets.size(), 12u);
    std::size_t n = 0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int a = 0; a < 3; ++a) {
                const auto want = oracle::decode_cell(head, coarse_head(), 512, i, j, a);
                const auto& d = dets[n++];
                EXPECT_NEAR(d.bbox.cx, want.cx, 1e-6 * std::max(1.0, want.cx));
                EXPECT_NEAR(d.bbox.cy, want.cy, 1e-6 * std::max(1.0, want.cy));
                EXPECT_NEAR(d.bbox.w, want.w, 1e-6 * std::max(1.0, want.w));
                EXPECT_NEAR(d.bbox.h, want.h, 1e-6 * std::max(1.0, want.h));
                EXPECT_NEAR(d.objectness, want.objectness, 1e-6);
                EXPECT_NEAR(d.class_prob, want.class_prob, 1e-6);
                EXPECT_NEAR(d.confidence, want.objectness * want.class_prob, 1e-6);
            }
}

TEST(DecodeHead, RangesOnRandomHeads) {
    std::mt19937 rng(2);
    for (int t = 0; t < 10; ++t) {
        const Tensor head = oracle::random_tensor(rng, 4, 4, 18, -4, 4);
        const auto dets = decode_head(head, coarse_head(), 512);
        for (std::size_t n = 0; n < dets.size(); ++n) {
            const int j = static_cast<int>(n / 3 % 4);
            EXPECT_GT(dets[n].objectness, 0);
            EXPECT_LT(dets[n].objectness, 1);
            EXPECT_GT(dets[n].bbox.cx, j * 128.0f);
            EXPECT_LT(dets[n].bbox.cx, (j + 1) * 128.0f);
        }
    }
}

TEST(DecodeHead, ChannelCountChecked) {
    EXPECT_THROW(decode_head(Tensor(16, 16, 17), coarse_head(), 512), ShapeError);
}

TEST(Iou, Basics) {
    const BBox a{1, 1, 2, 2}, b{2, 2, 2, 2}, far{50, 50, 2, 2};
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, far), 0.0);
    EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 7.0);
    EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
}

TEST(Iou, SymmetricOnRandomBoxes) {
    std::mt19937 rng(3);
    for (const auto& d : random_dets(rng, 30)) {
        const BBox other{d.bbox.cy, d.bbox.cx, d.bbox.h + 1, d.bbox.w};
        EXPECT_DOUBLE_EQ(iou(d.bbox, other), iou(other, d.bbox));
        EXPECT_DOUBLE_EQ(iou(d.bbox, d.bbox), 1.0);
        EXPECT_NEAR(iou(d.bbox, other), oracle::box_iou(d.bbox, other), 1e-12);
    }
}

TEST(Nms, SingleDetection) {
    Detection d;
    d.bbox = {5, 5, 3, 3};
    d.confidence = 0.4f;
    EXPECT_EQ(nms({d}, 0.45), std::vector<Detection>{d});
}

TEST(Nms, IdenticalBoxesKeepBest) {
    Detection a, b;
    a.bbox = b.bbox = {10, 10, 4, 4};
    a.confidence = 0.8f;
    b.confidence = 0.9f;
    const auto kept = nms({a, b}, 0.45);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_FLOAT_EQ(kept[0].confidence, 0.9f);
}

TEST(Nms, MatchesGreedyOracle) {
    std::mt19937 rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto dets = random_dets(rng, 50);
        const auto kept = nms(dets, 0.3);
        EXPECT_EQ(kept, oracle::nms(dets, 0.3));
        for (std::size_t i = 1; i < kept.size(); ++i)
            EXPECT_GE(kept[i - 1].confidence, kept[i].confidence);
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t j = i + 1; j < kept.size(); ++j)
                EXPECT_LE(iou(kept[i].bbox, kept[j].bbox), 0.3);
    }
}

namespace {

ForwardResult zero_heads() {
    ForwardResult r;
    r.heads.push_back({12, Tensor(16, 16, 18)});
    r.heads.push_back({19, Tensor(32, 32, 18)});
    return r;
}

PreprocessedImage identity_image() {
    PreprocessedImage img;
    img.original_width = img.original_height = 512;
    return img;
}

} // namespace

TEST(Postprocess, ZeroNetworkAboveThresholdIsEmpty) {
    EXPECT_TRUE(postprocess(zero_heads(), builtin_swiftface(), identity_image(), 0.3, 0.45).empty());
    // Strictly-greater filter: 0.25 is not above 0.25.
    EXPECT_TRUE(postprocess(zero_heads(), builtin_swiftface(), identity_image(), 0.25, 0.45).empty());
}

TEST(Postprocess, ZeroNetworkCandidateCount) {
    EXPECT_EQ(collect_candidates(zero_heads(), builtin_swiftface(), 0.2).size(), 768u + 3072u);
}

TEST(Postprocess, PlantedCell) {
    auto heads = zero_heads();
    // Fine head, cell row 5 col 9, slot 2 (anchor index 3 = 81x82).
    float* t = &heads.heads[1].tensor(5, 9, 12);
    t[0] = 0.0f;   // sigma = 0.5
    t[1] = 2.0f;
    t[2] = std::log(2.0f);
    t[3] = 0.0f;
    t[4] = 8.0f;
    t[5] = 8.0f;
    PreprocessedImage img;
    img.original_width = 1024;
    img.original_height = 256;
    img.scale_x = 512.0 / 1024;
    img.scale_y = 512.0 / 256;
    const auto dets = postprocess(heads, builtin_swiftface(), img, 0.3, 0.45);
    ASSERT_EQ(dets.size(), 1u);
    const double s = 1.0 / (1.0 + std::exp(-2.0));
    const double obj = 1.0 / (1.0 + std::exp(-8.0));
    EXPECT_NEAR(dets[0].bbox.cx, (9 + 0.5) * 16 * 2, 1e-3);
    EXPECT_NEAR(dets[0].bbox.cy, (5 + s) * 16 * 0.5, 1e-3);
    EXPECT_NEAR(dets[0].bbox.w, 81 * 2 * 2, 1e-3);
    EXPECT_NEAR(dets[0].bbox.h, 82 * 0.5, 1e-3);
    EXPECT_NEAR(dets[0].confidence, obj * obj, 1e-6);
}

TEST(Postprocess, MonotoneInConfidenceThreshold) {
    std::mt19937 rng(5);
    ForwardResult r;
    r.heads.push_back({12, oracle::random_tensor(rng, 16, 16, 18, -3, 3)});
    r.heads.push_back({19, oracle::random_tensor(rng, 32, 32, 18, -3, 3)});
    std::size_t prev = SIZE_MAX;
    for (double c = 0.05; c < 1.0; c += 0.1) {
        const auto n = postprocess(r, builtin_swiftface(), identity_image(), c, 0.45).size();
        EXPECT_LE(n, prev);
        prev = n;
    }
}
