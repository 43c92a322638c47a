// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <string>

#include "swiftface/bench.hpp"
#include "swiftface/image.hpp"
#include "swiftface/json_io.hpp"

using namespace swiftface;

TEST(Bench, FpsIsImagesOverSeconds) {
    const auto r = make_bench_report(100, 4.0);
    EXPECT_DOUBLE_EQ(r.fps, 25.0);
    EXPECT_EQ(format_fps(r.fps), "25.0");
}

TEST(Bench, PublishedRows) {
    EXPECT_EQ(format_fps(make_bench_report(16067, 407).fps), "39.5");
    EXPECT_EQ(format_fps(make_bench_report(16067, 1329).fps), "12.1");
    EXPECT_EQ(format_fps(make_bench_report(16067, 533).fps), "30.1");
}

TEST(Bench, RejectsDegenerateInput) {
    EXPECT_THROW(make_bench_report(0, 1.0), std::invalid_argument);
    EXPECT_THROW(make_bench_report(5, 0.0), std::invalid_argument);
    EXPECT_THROW(make_bench_report(5, -1.0), std::invalid_argument);
}

TEST(Bench, JsonFields) {
    const auto j = bench_report_to_json(make_bench_report(10, 2.0, {0.1, 1.5, 0.4}));
    EXPECT_EQ(j["n_images"], 10);
    EXPECT_DOUBLE_EQ(j["fps"].get<double>(), 5.0);
    EXPECT_DOUBLE_EQ(j["stages"]["forward_s"].get<double>(), 1.5);
}

TEST(DetectionsJson, RoundTrip) {
    Detection d;
    d.bbox = BBox::from_corner(12.5, 30.25, 40, 22.75);
    d.confidence = 0.875f;
    const std::vector<ImageDetections> in{{"a/b.ppm", {d, d}}, {"c.ppm", {}}};
    const auto j = detections_to_json(in);
    EXPECT_EQ(j.dump(), detections_to_json(in).dump());
    EXPECT_DOUBLE_EQ(j[0]["detections"][0]["x"].get<double>(), 12.5);
    EXPECT_DOUBLE_EQ(j[0]["detections"][0]["y"].get<double>(), 30.25);

    const auto back = detections_from_json(nlohmann::json::parse(j.dump()));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].image, "a/b.ppm");
    ASSERT_EQ(back[0].detections.size(), 2u);
    EXPECT_FLOAT_EQ(back[0].detections[0].bbox.left(), 12.5f);
    EXPECT_FLOAT_EQ(back[0].detections[0].bbox.h, 22.75f);
    EXPECT_FLOAT_EQ(back[0].detections[0].confidence, 0.875f);
    EXPECT_TRUE(back[1].detections.empty());
    EXPECT_EQ(detections_to_json(back).dump(), j.dump());
}

TEST(DetectionsJson, KeyOrderAndRounding) {
    Detection d;
    d.bbox = BBox::from_corner(1.0 / 3.0, 0, 2, 2);
    d.confidence = 0.5f;
    const auto text = detections_to_json({{"x.ppm", {d}}}).dump();
    EXPECT_EQ(text, R"([{"image":"x.ppm","detections":[{"x":0.3333,"y":0.0,"w":2.0,"h":2.0,"confidence":0.5}]}])");
}

TEST(DetectionsJson, SingleObjectAccepted) {
    const auto v = detections_from_json(nlohmann::json::parse(
        R"({"image": "one.ppm", "detections": [{"x": 1, "y": 2, "w": 3, "h": 4, "confidence": 0.9}]})"));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_FLOAT_EQ(v[0].detections[0].bbox.cx, 2.5f);
}

TEST(DetectionsJson, SchemaErrorsNameTheField) {
    auto message = [](const char* text) -> std::string {
        try {
            detections_from_json(nlohmann::json::parse(text));
        } catch (const SchemaError& e) {
            return e.what();
        }
        return {};
    };
    EXPECT_NE(message(R"([{"detections": []}])").find("\"image\""), std::string::npos);
    EXPECT_NE(message(R"([{"image": "a", "detections": [{"x": 1, "y": 2, "w": 3, "h": 4}]}])").find("confidence"),
              std::string::npos);
    EXPECT_NE(message(R"([{"image": "a", "detections": [{"x": "1", "y": 2, "w": 3, "h": 4, "confidence": 1}]}])")
                  .find("\"x\""),
              std::string::npos);
    EXPECT_NE(message("[3]").find("[0]"), std::string::npos);
}

TEST(EvalJson, Fields) {
    EvalReport r;
    r.ap_per_iou[0] = 0.75;
    r.map_5095 = 0.3;
    r.matched = 4;
    const auto j = eval_report_to_json(r);
    EXPECT_DOUBLE_EQ(j["ap50"].get<double>(), 0.75);
    EXPECT_TRUE(j.contains("ap95"));
    EXPECT_DOUBLE_EQ(j["map_5095"].get<double>(), 0.3);
    EXPECT_EQ(j["counts"]["matched"], 4);
}

TEST(GroupByImage, MergesRepeatedPaths) {
    Detection d;
    const auto g = group_by_image({{"a", {d}}, {"b", {}}, {"a", {d, d}}});
    EXPECT_EQ(g.at("a").size(), 3u);
    EXPECT_TRUE(g.at("b").empty());
}

TEST(Pnm, PpmRoundTrip) {
    RgbImage img(3, 2);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(i * 13);
    EXPECT_EQ(decode_pnm(encode_ppm(img)), img);
}

TEST(Pnm, GrayWithCommentAndMaxval) {
    const std::string text = std::string("P5\n# made by hand\n2 1\n15\n") + '\x0f' + '\x00';
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    const auto img = decode_pnm(bytes);
    ASSERT_EQ(img.width, 2);
    EXPECT_EQ(img.at(0, 0)[0], 255);
    EXPECT_EQ(img.at(0, 0)[2], 255);
    EXPECT_EQ(img.at(1, 0)[1], 0);
}

TEST(Pnm, Errors) {
    auto decode = [](const std::string& s) { return decode_pnm(std::vector<std::uint8_t>(s.begin(), s.end())); };
    EXPECT_THROW(decode("P3\n1 1\n255\n0 0 0"), ImageError);
    EXPECT_THROW(decode("P6\n2 2\n255\nabc"), ImageError);
    EXPECT_THROW(decode("P6\n1 1\n65535\n......"), ImageError);
    EXPECT_THROW(decode("P6\n0 1\n255\n"), ImageError);
    EXPECT_THROW(decode("P6\nx"), ImageError);
}

TEST(DrawBox, OutlineOnly) {
    RgbImage img(10, 10);
    draw_box(img, 2, 2, 6, 6, 1);
    EXPECT_EQ(img.at(2, 2)[0], 255);
    EXPECT_EQ(img.at(7, 5)[0], 255);
    EXPECT_EQ(img.at(5, 7)[0], 255);
    EXPECT_EQ(img.at(4, 4)[0], 0);
    EXPECT_EQ(img.at(8, 8)[0], 0);
}

TEST(DrawBox, ClipsToImage) {
    RgbImage img(4, 4);
    draw_box(img, -10, -10, 100, 100, 1);
    EXPECT_EQ(img.at(0, 0)[0], 255);
    EXPECT_EQ(img.at(3, 3)[0], 255);
    EXPECT_EQ(img.at(1, 1)[0], 0);
    RgbImage untouched(4, 4);
    draw_box(untouched, 50, 50, 5, 5);
    EXPECT_EQ(untouched, RgbImage(4, 4));
}
