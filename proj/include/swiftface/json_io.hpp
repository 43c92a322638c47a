// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON documents exchanged by the command-line tools.
//
// Detections: an array of {"image": path, "detections": [{"x", "y", "w", "h", "confidence"}]}
// with (x, y) the top-left corner in original-image pixels, values rounded to 4 decimals.
// A single image object (not wrapped in an array) is also accepted on input.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "bench.hpp"
#include "detect.hpp"
#include "eval.hpp"

namespace swiftface {

struct ImageDetections {
    std::string image;
    std::vector<Detection> detections;
};

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double round4(double v) { return std::round(v * 1e4) / 1e4; }

inline nlohmann::ordered_json detections_to_json(const std::vector<ImageDetections>& images) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& img : images) {
        nlohmann::ordered_json entry;
        entry["image"] = img.image;
        auto dets = nlohmann::ordered_json::array();
        for (const auto& d : img.detections) {
            nlohmann::ordered_json j;
            j["x"] = round4(d.bbox.left());
            j["y"] = round4(d.bbox.top());
            j["w"] = round4(d.bbox.w);
            j["h"] = round4(d.bbox.h);
            j["confidence"] = round4(d.confidence);
            dets.push_back(std::move(j));
        }
        entry["detections"] = std::move(dets);
        arr.push_back(std::move(entry));
    }
    return arr;
}

namespace json_detail {

inline double number(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end())
        throw SchemaError(where + ": missing field \"" + key + "\"");
    if (!it->is_number())
        throw SchemaError(where + ": field \"" + key + "\" must be a number");
    return it->get<double>();
}

} // namespace json_detail

inline std::vector<ImageDetections> detections_from_json(const nlohmann::json& doc) {
    std::vector<ImageDetections> out;
    const auto parse_entry = [&](const nlohmann::json& e, const std::string& where) {
        if (!e.is_object())
            throw SchemaError(where + ": expected an object");
        const auto img = e.find("image");
        if (img == e.end() || !img->is_string())
            throw SchemaError(where + ": field \"image\" must be a string");
        const auto dets = e.find("detections");
        if (dets == e.end() || !dets->is_array())
            throw SchemaError(where + ": field \"detections\" must be an array");
        ImageDetections entry{img->get<std::string>(), {}};
        for (std::size_t k = 0; k < dets->size(); ++k) {
            const auto& d = (*dets)[k];
            const std::string dw = where + ".detections[" + std::to_string(k) + "]";
            if (!d.is_object())
                throw SchemaError(dw + ": expected an object");
            Detection det;
            det.bbox = BBox::from_corner(json_detail::number(d, "x", dw), json_detail::number(d, "y", dw),
                                         json_detail::number(d, "w", dw), json_detail::number(d, "h", dw));
            det.confidence = static_cast<float>(json_detail::number(d, "confidence", dw));
            det.objectness = det.confidence;
            det.class_prob = 1.0f;
            entry.detections.push_back(det);
        }
        out.push_back(std::move(entry));
    };
    if (doc.is_array()) {
        for (std::size_t i = 0; i < doc.size(); ++i)
            parse_entry(doc[i], "[" + std::to_string(i) + "]");
    } else {
        parse_entry(doc, "document");
    }
    return out;
}

inline DetectionsByImage group_by_image(const std::vector<ImageDetections>& images) {
    DetectionsByImage out;
    for (const auto& img : images) {
        auto& v = out[img.image];
        v.insert(v.end(), img.detections.begin(), img.detections.end());
    }
    return out;
}

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    for (std::size_t t = 0; t < kIouThresholdsPercent.size(); ++t)
        j["ap" + std::to_string(kIouThresholdsPercent[t])] = r.ap_per_iou[t];
    j["map_5095"] = r.map_5095;
    j["counts"] = {{"detections", r.detections},
                   {"ground_truths", r.ground_truths},
                   {"matched", r.matched},
                   {"excluded", r.excluded}};
    return j;
}

inline nlohmann::ordered_json bench_report_to_json(const BenchReport& r) {
    nlohmann::ordered_json j;
    j["n_images"] = r.n_images;
    j["total_time_s"] = r.total_time_s;
    j["fps"] = r.fps;
    j["stages"] = {{"preprocess_s", r.stages.preprocess_s},
                   {"forward_s", r.stages.forward_s},
                   {"postprocess_s", r.stages.postprocess_s}};
    return j;
}

} // namespace swiftface
