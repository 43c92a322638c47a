// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace swiftface {

struct StageTimes {
    double preprocess_s = 0;
    double forward_s = 0;
    double postprocess_s = 0;
};

/// Throughput over one pass of a dataset. `fps` is kept unrounded.
struct BenchReport {
    std::size_t n_images = 0;
    double total_time_s = 0;
    double fps = 0;
    StageTimes stages;
};

inline BenchReport make_bench_report(std::size_t n_images, double total_time_s, StageTimes stages = {}) {
    if (n_images == 0)
        throw std::invalid_argument("benchmark needs at least one image");
    if (!(total_time_s > 0))
        throw std::invalid_argument("benchmark wall time must be positive");
    return {n_images, total_time_s, static_cast<double>(n_images) / total_time_s, stages};
}

/// FPS as displayed: one decimal place.
inline std::string format_fps(double fps) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", fps);
    return buf;
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

} // namespace swiftface
