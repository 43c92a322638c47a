// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "detect.hpp"
#include "error.hpp"

namespace swiftface {

/// One annotated face. Flags follow the WIDER FACE column order.
struct GroundTruthBox {
    BBox box;
    int blur = 0;
    int expression = 0;
    int illumination = 0;
    int invalid = 0;
    int occlusion = 0;
    int pose = 0;

    /// Boxes that take part in matching and count toward the ground-truth total.
    bool usable() const noexcept { return invalid == 0 && box.w > 0 && box.h > 0; }
};

struct GroundTruthSet {
    std::map<std::string, std::vector<GroundTruthBox>> entries;

    std::size_t usable_count() const {
        std::size_t n = 0;
        for (const auto& [path, boxes] : entries)
            n += static_cast<std::size_t>(std::count_if(boxes.begin(), boxes.end(),
                                                        [](const auto& b) { return b.usable(); }));
        return n;
    }
    std::size_t excluded_count() const {
        std::size_t n = 0;
        for (const auto& [path, boxes] : entries)
            n += static_cast<std::size_t>(std::count_if(boxes.begin(), boxes.end(),
                                                        [](const auto& b) { return !b.usable(); }));
        return n;
    }
};

namespace eval_detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

inline bool parse_numbers(std::string_view line, std::vector<double>& out) {
    out.clear();
    while (true) {
        const auto start = line.find_first_not_of(" \t");
        if (start == std::string_view::npos)
            return true;
        line.remove_prefix(start);
        double v = 0;
        auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (ec != std::errc{})
            return false;
        const auto used = static_cast<std::size_t>(ptr - line.data());
        if (used < line.size() && line[used] != ' ' && line[used] != '\t')
            return false;
        out.push_back(v);
        line.remove_prefix(used);
    }
}

} // namespace eval_detail

/// Parses WIDER FACE annotation text: a path line, a count line N, then N lines of
/// "x y w h blur expression illumination invalid occlusion pose". A record with N == 0
/// is followed by a single placeholder line of zeros, which is skipped.
inline GroundTruthSet parse_widerface(std::string_view text) {
    std::vector<std::string_view> lines;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        lines.push_back(eval_detail::trim(text.substr(0, nl)));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    }

    GroundTruthSet gts;
    std::vector<double> nums;
    std::size_t i = 0;
    auto next_nonblank = [&] {
        while (i < lines.size() && lines[i].empty())
            ++i;
        return i < lines.size();
    };
    while (next_nonblank()) {
        const std::string path(lines[i++]);
        if (i >= lines.size())
            throw ParseError(i, "record for '" + path + "' is missing its box count");
        const auto count_line = lines[i++];
        long count = -1;
        auto [ptr, ec] = std::from_chars(count_line.data(), count_line.data() + count_line.size(), count);
        if (ec != std::errc{} || ptr != count_line.data() + count_line.size() || count < 0)
            throw ParseError(i, "malformed box count '" + std::string(count_line) + "' for '" + path + "'");

        auto& boxes = gts.entries[path];
        if (count == 0) {
            if (i < lines.size() && eval_detail::parse_numbers(lines[i], nums) && nums.size() >= 4 &&
                std::all_of(nums.begin(), nums.end(), [](double v) { return v == 0; }))
                ++i;
            continue;
        }
        for (long b = 0; b < count; ++b) {
            if (i >= lines.size())
                throw ParseError(i, "record for '" + path + "' ends after " + std::to_string(b) + " of " +
                                        std::to_string(count) + " boxes");
            const auto line = lines[i++];
            if (!eval_detail::parse_numbers(line, nums) || nums.size() < 4)
                throw ParseError(i, "malformed box line '" + std::string(line) + "'");
            GroundTruthBox g;
            g.box = BBox::from_corner(nums[0], nums[1], nums[2], nums[3]);
            int* flags[] = {&g.blur, &g.expression, &g.illumination, &g.invalid, &g.occlusion, &g.pose};
            for (std::size_t f = 0; f < 6 && f + 4 < nums.size(); ++f)
                *flags[f] = static_cast<int>(nums[f + 4]);
            boxes.push_back(g);
        }
    }
    return gts;
}

struct MatchResult {
    float confidence = 0;
    bool true_positive = false;
};

/// Greedy matching in the given (confidence-descending) order: each detection takes
/// its highest-IoU still-unmatched truth if that IoU reaches the threshold.
inline std::vector<MatchResult> match_detections(const std::vector<Detection>& dets, const std::vector<BBox>& gts,
                                                 double iou_threshold) {
    std::vector<bool> taken(gts.size(), false);
    std::vector<MatchResult> out;
    out.reserve(dets.size());
    for (const auto& d : dets) {
        double best = -1.0;
        std::size_t best_index = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g])
                continue;
            const double v = iou(d.bbox, gts[g]);
            if (v > best) {
                best = v;
                best_index = g;
            }
        }
        const bool tp = best_index < gts.size() && best >= iou_threshold;
        if (tp)
            taken[best_index] = true;
        out.push_back({d.confidence, tp});
    }
    return out;
}

/// 101-point interpolated AP: mean over r in {0, 0.01, ..., 1} of the best precision
/// reached at recall >= r (0 where recall r is never reached).
inline double average_precision(std::vector<MatchResult> matches, std::size_t num_gt) {
    if (num_gt == 0 || matches.empty())
        return 0.0;
    std::stable_sort(matches.begin(), matches.end(),
                     [](const MatchResult& a, const MatchResult& b) { return a.confidence > b.confidence; });
    const std::size_t n = matches.size();
    std::vector<double> precision(n), recall(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += matches[i].true_positive ? 1 : 0;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    }
    for (std::size_t i = n - 1; i > 0; --i)
        precision[i - 1] = std::max(precision[i - 1], precision[i]);

    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end())
            sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / 101.0;
}

inline constexpr std::array<int, 10> kIouThresholdsPercent{50, 55, 60, 65, 70, 75, 80, 85, 90, 95};

struct EvalReport {
    std::array<double, 10> ap_per_iou{}; // indexed like kIouThresholdsPercent
    double map_5095 = 0.0;
    std::size_t detections = 0;
    std::size_t ground_truths = 0;
    std::size_t matched = 0; // true positives at IoU 0.50
    std::size_t excluded = 0; // invalid or degenerate truths left out of matching
};

using DetectionsByImage = std::map<std::string, std::vector<Detection>>;

/// Resolves detection image paths to annotation keys. Exact matches win; then paths
/// compared without extension where one is a '/'-aligned suffix of the other; then a
/// file stem shared with exactly one annotation key (so "out/0_Parade_1.ppm" finds
/// "0--Parade/0_Parade_1.jpg").
class ImageKeyResolver {
public:
    explicit ImageKeyResolver(const GroundTruthSet& gts) : gts_(gts) {
        for (const auto& [key, boxes] : gts.entries)
            by_stem_[basename_stem(key)].push_back(key);
    }

    const std::string* resolve(const std::string& path) const {
        if (gts_.entries.count(path))
            return &gts_.entries.find(path)->first;
        const auto it = by_stem_.find(basename_stem(path));
        if (it == by_stem_.end())
            return nullptr;
        const auto want = strip_extension(normalize(path));
        for (const auto& key : it->second) {
            const auto have = strip_extension(normalize(key));
            if (aligned_suffix(want, have) || aligned_suffix(have, want))
                return &key;
        }
        if (it->second.size() == 1)
            return &it->second.front();
        return nullptr;
    }

private:
    static std::string normalize(std::string p) {
        std::replace(p.begin(), p.end(), '\\', '/');
        return p;
    }
    static std::string strip_extension(const std::string& p) {
        const auto slash = p.rfind('/');
        const auto dot = p.rfind('.');
        if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
            return p;
        return p.substr(0, dot);
    }
    static std::string basename_stem(const std::string& p) {
        const auto n = strip_extension(normalize(p));
        const auto slash = n.rfind('/');
        return slash == std::string::npos ? n : n.substr(slash + 1);
    }
    static bool aligned_suffix(const std::string& longer, const std::string& shorter) {
        if (shorter.size() > longer.size() || longer.compare(longer.size() - shorter.size(), shorter.size(), shorter) != 0)
            return false;
        return shorter.size() == longer.size() || longer[longer.size() - shorter.size() - 1] == '/';
    }

    const GroundTruthSet& gts_;
    std::unordered_map<std::string, std::vector<std::string>> by_stem_;
};

/// Dataset-level AP at IoU 0.50:0.05:0.95 with matches pooled over all images, and
/// their mean. Detections on images without annotations count as false positives.
inline EvalReport map_5095(const DetectionsByImage& dets, const GroundTruthSet& gts) {
    const ImageKeyResolver resolver(gts);
    EvalReport report;
    report.ground_truths = gts.usable_count();
    report.excluded = gts.excluded_count();

    struct ImageWork {
        std::vector<Detection> dets;
        std::vector<BBox> truths;
    };
    std::vector<ImageWork> work;
    for (const auto& [path, image_dets] : dets) {
        ImageWork w;
        w.dets = image_dets;
        std::stable_sort(w.dets.begin(), w.dets.end(),
                         [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
        if (const auto* key = resolver.resolve(path))
            for (const auto& g : gts.entries.at(*key))
                if (g.usable())
                    w.truths.push_back(g.box);
        report.detections += w.dets.size();
        work.push_back(std::move(w));
    }

    double sum = 0.0;
    for (std::size_t t = 0; t < kIouThresholdsPercent.size(); ++t) {
        const double threshold = kIouThresholdsPercent[t] / 100.0;
        std::vector<MatchResult> pooled;
        for (const auto& w : work) {
            const auto m = match_detections(w.dets, w.truths, threshold);
            pooled.insert(pooled.end(), m.begin(), m.end());
        }
        if (t == 0)
            report.matched = static_cast<std::size_t>(
                std::count_if(pooled.begin(), pooled.end(), [](const auto& m) { return m.true_positive; }));
        report.ap_per_iou[t] = average_precision(std::move(pooled), report.ground_truths);
        sum += report.ap_per_iou[t];
    }
    report.map_5095 = sum / static_cast<double>(kIouThresholdsPercent.size());
    return report;
}

} // namespace swiftface
