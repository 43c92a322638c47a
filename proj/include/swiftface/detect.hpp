// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "engine.hpp"
#include "error.hpp"
#include "network.hpp"
#include "tensor.hpp"

namespace swiftface {

/// Center-convention box in pixels.
struct BBox {
    float cx = 0;
    float cy = 0;
    float w = 0;
    float h = 0;

    double left() const noexcept { return static_cast<double>(cx) - w / 2.0; }
    double top() const noexcept { return static_cast<double>(cy) - h / 2.0; }
    double right() const noexcept { return static_cast<double>(cx) + w / 2.0; }
    double bottom() const noexcept { return static_cast<double>(cy) + h / 2.0; }

    static BBox from_corner(double left, double top, double w, double h) {
        return {static_cast<float>(left + w / 2.0), static_cast<float>(top + h / 2.0), static_cast<float>(w),
                static_cast<float>(h)};
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
    BBox bbox;
    float objectness = 0;
    float class_prob = 0;
    float confidence = 0; // objectness * class_prob

    friend bool operator==(const Detection&, const Detection&) = default;
};

inline float sigmoid(float x) noexcept { return 1.0f / (1.0f + std::exp(-x)); }

inline double iou(const BBox& a, const BBox& b) noexcept {
    const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (iw <= 0 || ih <= 0)
        return 0.0;
    const double inter = iw * ih;
    const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
    return uni > 0 ? inter / uni : 0.0;
}

/// Decodes an S x S head. Each masked anchor owns a contiguous block of
/// (5 + classes) channels: tx, ty, tw, th, objectness logit, class logits.
/// Output order is row, column, anchor.
inline std::vector<Detection> decode_head(const Tensor& head, const YoloHeadConfig& cfg, int input_dim) {
    const int block = cfg.classes + 5;
    if (head.channels() != cfg.expected_channels())
        throw ShapeError("yolo head has " + std::to_string(head.channels()) + " channels, expected " +
                         std::to_string(cfg.expected_channels()));
    if (head.height() != head.width())
        throw ShapeError("yolo head must be square, got " + head.shape().str());
    for (int m : cfg.mask)
        if (m < 0 || m >= static_cast<int>(cfg.anchors.size()))
            throw ShapeError("yolo mask index " + std::to_string(m) + " has no anchor");

    const int grid = head.height();
    const float stride = static_cast<float>(input_dim) / grid;
    std::vector<Detection> out;
    out.reserve(static_cast<std::size_t>(grid) * grid * cfg.mask.size());
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            for (std::size_t a = 0; a < cfg.mask.size(); ++a) {
                const float* t = &head(i, j, static_cast<int>(a) * block);
                const Anchor& anchor = cfg.anchors[cfg.mask[a]];
                Detection d;
                d.bbox.cx = (static_cast<float>(j) + sigmoid(t[0])) * stride;
                d.bbox.cy = (static_cast<float>(i) + sigmoid(t[1])) * stride;
                d.bbox.w = anchor.width * std::exp(t[2]);
                d.bbox.h = anchor.height * std::exp(t[3]);
                d.objectness = sigmoid(t[4]);
                d.class_prob = sigmoid(t[5]);
                for (int c = 1; c < cfg.classes; ++c)
                    d.class_prob = std::max(d.class_prob, sigmoid(t[5 + c]));
                d.confidence = d.objectness * d.class_prob;
                out.push_back(d);
            }
        }
    }
    return out;
}

/// Greedy class-agnostic NMS. Candidates are visited by confidence (input order on
/// ties); a candidate is dropped if its IoU with any kept box exceeds the threshold.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    std::vector<Detection> kept;
    std::vector<bool> removed(dets.size(), false);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (removed[i])
            continue;
        kept.push_back(dets[i]);
        for (std::size_t j = i + 1; j < dets.size(); ++j)
            if (!removed[j] && iou(dets[i].bbox, dets[j].bbox) > iou_threshold)
                removed[j] = true;
    }
    return kept;
}

/// Heads of `result` decoded with their layer's config and filtered with conf > threshold.
inline std::vector<Detection> collect_candidates(const ForwardResult& result, const NetworkSpec& spec,
                                                 double conf_threshold) {
    std::vector<Detection> candidates;
    for (const auto& head : result.heads) {
        const auto& cfg = std::get<YoloLayer>(spec.layers.at(head.layer).kind).head;
        for (const auto& d : decode_head(head.tensor, cfg, spec.input_width))
            if (d.confidence > conf_threshold)
                candidates.push_back(d);
    }
    return candidates;
}

/// Maps a network-space box back onto the source image.
inline BBox to_original(const BBox& b, const PreprocessedImage& image) {
    return {static_cast<float>((b.cx - image.offset_x) / image.scale_x),
            static_cast<float>((b.cy - image.offset_y) / image.scale_y), static_cast<float>(b.w / image.scale_x),
            static_cast<float>(b.h / image.scale_y)};
}

inline constexpr double kDefaultConfThreshold = 0.25;
inline constexpr double kDefaultNmsThreshold = 0.45;

/// decode -> confidence filter -> NMS over both heads -> original-image pixels.
inline std::vector<Detection> postprocess(const ForwardResult& result, const NetworkSpec& spec,
                                          const PreprocessedImage& image,
                                          double conf_threshold = kDefaultConfThreshold,
                                          double nms_threshold = kDefaultNmsThreshold) {
    auto kept = nms(collect_candidates(result, spec, conf_threshold), nms_threshold);
    for (auto& d : kept)
        d.bbox = to_original(d.bbox, image);
    return kept;
}

} // namespace swiftface
