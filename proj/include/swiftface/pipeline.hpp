// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "bench.hpp"
#include "detect.hpp"
#include "engine.hpp"
#include "image.hpp"

namespace swiftface {

inline bool has_image_extension(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

/// Expands --input: a directory (its PPM/PGM files, sorted), a single image, or a list
/// file with one path per line and '#' comments. Relative list entries that do not
/// exist from the working directory are tried relative to the list file.
inline std::vector<std::filesystem::path> list_inputs(const std::filesystem::path& input) {
    namespace fs = std::filesystem;
    std::vector<fs::path> out;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::directory_iterator(input))
            if (entry.is_regular_file() && has_image_extension(entry.path()))
                out.push_back(entry.path());
        std::sort(out.begin(), out.end());
        return out;
    }
    if (has_image_extension(input)) {
        if (!fs::is_regular_file(input))
            throw std::runtime_error("no such image " + input.string());
        return {input};
    }

    std::ifstream in(input);
    if (!in)
        throw std::runtime_error("cannot open input list " + input.string());
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos)
            continue;
        line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
        fs::path p(line);
        if (p.is_relative() && !fs::exists(p) && fs::exists(input.parent_path() / p))
            p = input.parent_path() / p;
        out.push_back(p);
    }
    return out;
}

struct DetectOptions {
    double conf_threshold = kDefaultConfThreshold;
    double nms_threshold = kDefaultNmsThreshold;
    int threads = 1;
    ResizeMode resize = ResizeMode::stretch;
    bool keep_images = false; // retain decoded images (for drawing)
};

struct ImageResult {
    std::filesystem::path path;
    bool ok = false;
    std::string error;
    std::vector<Detection> detections;
    StageTimes times;
    RgbImage image;
};

struct DetectRun {
    std::vector<ImageResult> results; // input order
    double wall_time_s = 0;
};

inline ImageResult detect_image(const Model& model, const std::filesystem::path& path, const DetectOptions& opts) {
    ImageResult r;
    r.path = path;
    try {
        Stopwatch sw;
        RgbImage img = read_pnm(path);
        const auto pre = preprocess(img, model.spec(), opts.resize);
        r.times.preprocess_s = sw.seconds();

        Stopwatch fw;
        const auto raw = forward(model, pre);
        r.times.forward_s = fw.seconds();

        Stopwatch pw;
        r.detections = postprocess(raw, model.spec(), pre, opts.conf_threshold, opts.nms_threshold);
        r.times.postprocess_s = pw.seconds();
        r.ok = true;
        if (opts.keep_images)
            r.image = std::move(img);
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    return r;
}

/// Runs detection over all paths with a pool of `opts.threads` workers. Results are
/// stored by input position, so output order never depends on scheduling.
inline DetectRun run_detection(const Model& model, const std::vector<std::filesystem::path>& paths,
                               const DetectOptions& opts) {
    DetectRun run;
    run.results.resize(paths.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < paths.size(); i = next++)
            run.results[i] = detect_image(model, paths[i], opts);
    };

    Stopwatch wall;
    const int threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(paths.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    run.wall_time_s = wall.seconds();
    return run;
}

} // namespace swiftface
