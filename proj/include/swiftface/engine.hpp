// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "kernels.hpp"
#include "network.hpp"
#include "tensor.hpp"
#include "weights.hpp"

namespace swiftface {

enum class ResizeMode { stretch, letterbox };

/// Network-ready input plus what is needed to map boxes back onto the source image.
/// A network-space coordinate u maps to original pixels as (u - offset) / scale.
struct PreprocessedImage {
    Tensor tensor;
    int original_width = 0;
    int original_height = 0;
    double scale_x = 1.0;
    double scale_y = 1.0;
    double offset_x = 0.0;
    double offset_y = 0.0;
};

namespace engine_detail {

// Bilinear sample of `img` (align-corners grid) into a w x h region of `out`.
inline void resize_into(const RgbImage& img, Tensor& out, int left, int top, int w, int h) {
    const double sx = w > 1 ? static_cast<double>(img.width - 1) / (w - 1) : 0.0;
    const double sy = h > 1 ? static_cast<double>(img.height - 1) / (h - 1) : 0.0;
    for (int y = 0; y < h; ++y) {
        const double fy_src = y * sy;
        const int y0 = std::min(static_cast<int>(fy_src), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float fy = static_cast<float>(fy_src - y0);
        for (int x = 0; x < w; ++x) {
            const double fx_src = x * sx;
            const int x0 = std::min(static_cast<int>(fx_src), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const float fx = static_cast<float>(fx_src - x0);
            for (int c = 0; c < 3; ++c) {
                const float p00 = img.at(x0, y0)[c], p01 = img.at(x1, y0)[c];
                const float p10 = img.at(x0, y1)[c], p11 = img.at(x1, y1)[c];
                const float top_row = p00 + fx * (p01 - p00);
                const float bottom_row = p10 + fx * (p11 - p10);
                out(top + y, left + x, c) = (top_row + fy * (bottom_row - top_row)) / 255.0f;
            }
        }
    }
}

} // namespace engine_detail

/// Resizes an RGB image to the network input and scales values to [0, 1].
/// Stretch ignores aspect ratio; letterbox fits the image inside a 0.5-gray canvas.
inline PreprocessedImage preprocess(const RgbImage& img, const NetworkSpec& spec,
                                    ResizeMode mode = ResizeMode::stretch) {
    if (img.width <= 0 || img.height <= 0 || img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw ShapeError("cannot preprocess a zero-sized or malformed image");
    if (spec.input_channels != 3)
        throw ShapeError("preprocess produces 3 channels, network expects " + std::to_string(spec.input_channels));

    PreprocessedImage out;
    out.original_width = img.width;
    out.original_height = img.height;
    const int nw = spec.input_width, nh = spec.input_height;

    if (mode == ResizeMode::stretch) {
        out.tensor = Tensor(nh, nw, 3);
        engine_detail::resize_into(img, out.tensor, 0, 0, nw, nh);
        out.scale_x = static_cast<double>(nw) / img.width;
        out.scale_y = static_cast<double>(nh) / img.height;
        return out;
    }

    const double scale = std::min(static_cast<double>(nw) / img.width, static_cast<double>(nh) / img.height);
    const int rw = std::clamp(static_cast<int>(std::lround(img.width * scale)), 1, nw);
    const int rh = std::clamp(static_cast<int>(std::lround(img.height * scale)), 1, nh);
    const int left = (nw - rw) / 2, top = (nh - rh) / 2;
    out.tensor = Tensor(nh, nw, 3, 0.5f);
    engine_detail::resize_into(img, out.tensor, left, top, rw, rh);
    out.scale_x = static_cast<double>(rw) / img.width;
    out.scale_y = static_cast<double>(rh) / img.height;
    out.offset_x = left;
    out.offset_y = top;
    return out;
}

/// A network bound to its parameters. Conv kernels are materialized once here,
/// with batchnorm folded in unless `fold` is false.
class Model {
public:
    Model(NetworkSpec spec, const ModelParams& params, bool fold = true) : spec_(std::move(spec)) {
        infer_layer_shapes(spec_);
        check_params(params, spec_);
        kernels_.resize(spec_.layers.size());
        for (const auto& p : params.convs) {
            const auto& conv = std::get<ConvLayer>(spec_.layers[p.layer].kind);
            ConvKernel k = make_kernel(p, conv.activation);
            kernels_[p.layer] = fold ? fold_batchnorm(k) : std::move(k);
        }
        // A layer's output is cached until the last route that reads it has run.
        last_reader_.assign(spec_.layers.size(), -1);
        for (const auto& layer : spec_.layers)
            if (const auto* r = std::get_if<RouteLayer>(&layer.kind))
                for (int s : r->sources)
                    last_reader_[s] = std::max(last_reader_[s], layer.index);
    }

    const NetworkSpec& spec() const noexcept { return spec_; }
    const std::optional<ConvKernel>& kernel(int layer) const { return kernels_.at(layer); }
    int last_reader(int layer) const { return last_reader_.at(layer); }

private:
    NetworkSpec spec_;
    std::vector<std::optional<ConvKernel>> kernels_;
    std::vector<int> last_reader_;
};

struct ForwardOptions {
    /// Keep every layer's output in ForwardResult::layer_outputs.
    bool diagnostics = false;
    /// Use the direct-loop convolution instead of im2col + matrix multiply.
    bool reference_conv = false;
    /// Drop cached outputs once no later route reads them.
    bool prune_cache = true;
};

struct HeadOutput {
    int layer = 0;
    Tensor tensor;
};

struct ForwardResult {
    std::vector<HeadOutput> heads;
    std::optional<std::vector<Tensor>> layer_outputs;
    /// Number of route-cache entries alive after each layer executed.
    std::vector<std::size_t> cache_sizes;
};

inline ForwardResult forward(const Model& model, const PreprocessedImage& image, const ForwardOptions& opts = {}) {
    const auto& spec = model.spec();
    if (image.tensor.shape() != spec.input_shape())
        throw ShapeError("input tensor " + image.tensor.shape().str() + " does not match network input " +
                         spec.input_shape().str());

    ForwardResult result;
    if (opts.diagnostics)
        result.layer_outputs.emplace();
    std::map<int, Tensor> cache;
    Tensor current = image.tensor;

    for (const auto& layer : spec.layers) {
        const int i = layer.index;
        if (std::holds_alternative<ConvLayer>(layer.kind)) {
            const auto& k = *model.kernel(i);
            current = opts.reference_conv ? conv2d_reference(current, k) : conv2d(current, k);
        } else if (std::holds_alternative<MaxPoolLayer>(layer.kind)) {
            current = maxpool2x2(current);
        } else if (std::holds_alternative<UpsampleLayer>(layer.kind)) {
            current = upsample2x(current);
        } else if (const auto* route = std::get_if<RouteLayer>(&layer.kind)) {
            Tensor merged = cache.at(route->sources.front());
            for (std::size_t s = 1; s < route->sources.size(); ++s)
                merged = concat_channels(merged, cache.at(route->sources[s]));
            current = std::move(merged);
        } else if (std::holds_alternative<YoloLayer>(layer.kind)) {
            result.heads.push_back({i, current});
        }

        if (model.last_reader(i) > i)
            cache.emplace(i, current);
        if (opts.prune_cache)
            std::erase_if(cache, [&](const auto& entry) { return model.last_reader(entry.first) <= i; });
        result.cache_sizes.push_back(cache.size());
        if (opts.diagnostics)
            result.layer_outputs->push_back(current);
    }
    return result;
}

} // namespace swiftface
