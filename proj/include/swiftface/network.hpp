// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "error.hpp"
#include "kernels.hpp"
#include "tensor.hpp"

namespace swiftface {

struct Anchor {
    float width = 0;
    float height = 0;
    friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// Detection head parameters. jitter, ignore_thresh, truth_thresh and random are
/// training-only; they are carried for round-tripping and never read at inference.
struct YoloHeadConfig {
    std::vector<int> mask;
    std::vector<Anchor> anchors;
    int classes = 1;
    int num = 6;
    float jitter = 0.3f;
    float ignore_thresh = 0.7f;
    float truth_thresh = 1.0f;
    int random = 1;

    /// Channels a head tensor must carry: per masked anchor, 4 box terms + objectness + classes.
    int expected_channels() const noexcept { return static_cast<int>(mask.size()) * (classes + 5); }

    friend bool operator==(const YoloHeadConfig&, const YoloHeadConfig&) = default;
};

struct ConvLayer {
    int filters = 0;
    int kernel_size = 3;
    int stride = 1;
    Activation activation = Activation::leaky;
    bool batchnorm = true;
    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct MaxPoolLayer {
    int size = 2;
    int stride = 2;
    friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};

struct UpsampleLayer {
    int factor = 2;
    friend bool operator==(const UpsampleLayer&, const UpsampleLayer&) = default;
};

/// Concatenates the outputs of earlier layers (absolute indices) in listed order.
struct RouteLayer {
    std::vector<int> sources;
    friend bool operator==(const RouteLayer&, const RouteLayer&) = default;
};

struct YoloLayer {
    YoloHeadConfig head;
    friend bool operator==(const YoloLayer&, const YoloLayer&) = default;
};

using LayerKind = std::variant<ConvLayer, MaxPoolLayer, UpsampleLayer, RouteLayer, YoloLayer>;

struct LayerSpec {
    int index = 0;
    LayerKind kind;
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct TrainingMeta {
    int max_batches = 15000;
    std::pair<int, int> steps{12000, 13500};
    std::string dataset_name = "WIDERFACE";
    friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct NetworkSpec {
    int input_height = 512;
    int input_width = 512;
    int input_channels = 3;
    std::vector<LayerSpec> layers;
    TrainingMeta training;

    Shape input_shape() const noexcept { return {input_height, input_width, input_channels}; }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Short layer kind name as printed in shape tables ("conv", "max", ...).
inline const char* kind_name(const LayerKind& kind) {
    struct Visitor {
        const char* operator()(const ConvLayer&) const { return "conv"; }
        const char* operator()(const MaxPoolLayer&) const { return "max"; }
        const char* operator()(const UpsampleLayer&) const { return "upsample"; }
        const char* operator()(const RouteLayer&) const { return "route"; }
        const char* operator()(const YoloLayer&) const { return "yolo"; }
    };
    return std::visit(Visitor{}, kind);
}

inline const std::array<Anchor, 6>& swiftface_anchors() {
    static const std::array<Anchor, 6> anchors{
        {{10, 14}, {23, 27}, {37, 58}, {81, 82}, {135, 169}, {344, 319}}};
    return anchors;
}

/// The built-in SwiftFace graph with the dimension-chain corrections applied:
/// layer 5 pools 64 channels, layer 10 has 512 filters, route 16 reads {15, 8},
/// and a second yolo head (mask 1,2,3) closes the fine-scale branch as layer 19.
inline NetworkSpec builtin_swiftface() {
    NetworkSpec spec;
    auto head = [](std::vector<int> mask) {
        YoloHeadConfig h;
        h.mask = std::move(mask);
        h.anchors.assign(swiftface_anchors().begin(), swiftface_anchors().end());
        return YoloLayer{h};
    };
    auto conv = [](int filters, int size) { return ConvLayer{filters, size, 1, Activation::leaky, true}; };
    auto head_conv = [] { return ConvLayer{18, 1, 1, Activation::linear, false}; };

    const std::vector<LayerKind> kinds{
        conv(16, 3),  MaxPoolLayer{}, conv(32, 3),  MaxPoolLayer{}, conv(64, 3),  MaxPoolLayer{},
        conv(128, 3), MaxPoolLayer{}, conv(256, 3), MaxPoolLayer{}, conv(512, 3), head_conv(),
        head({3, 4, 5}),
        RouteLayer{{9}},
        conv(128, 1),
        UpsampleLayer{},
        RouteLayer{{15, 8}},
        conv(256, 3),
        head_conv(),
        head({1, 2, 3}),
    };
    for (std::size_t i = 0; i < kinds.size(); ++i)
        spec.layers.push_back({static_cast<int>(i), kinds[i]});
    return spec;
}

/// Input and output shape of one layer. Route layers have no single input; their
/// `input` is left zeroed.
struct LayerShapes {
    Shape input;
    Shape output;
};

/// Runs the shape chain through the graph. Throws ShapeError naming the layer on
/// any inconsistency.
inline std::vector<LayerShapes> infer_layer_shapes(const NetworkSpec& spec) {
    if (spec.layers.empty())
        throw ShapeError("network has no layers");
    const Shape in0 = spec.input_shape();
    if (in0.height <= 0 || in0.width <= 0 || in0.channels <= 0)
        throw ShapeError("invalid network input " + in0.str());

    std::vector<LayerShapes> shapes;
    shapes.reserve(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& layer = spec.layers[i];
        const std::string where = "layer " + std::to_string(i);
        if (layer.index != static_cast<int>(i))
            throw ShapeError(where + ": index field is " + std::to_string(layer.index));
        const Shape in = i == 0 ? in0 : shapes.back().output;

        struct Visitor {
            const std::string& where;
            const Shape& in;
            const std::vector<LayerShapes>& prior;
            int index;

            LayerShapes operator()(const ConvLayer& c) const {
                if (c.filters <= 0)
                    throw ShapeError(where + " (conv): filters must be positive, got " + std::to_string(c.filters));
                if (c.kernel_size != 1 && c.kernel_size != 3)
                    throw ShapeError(where + " (conv): kernel size must be 1 or 3, got " +
                                     std::to_string(c.kernel_size));
                if (c.stride != 1)
                    throw ShapeError(where + " (conv): stride must be 1, got " + std::to_string(c.stride));
                return {in, {in.height, in.width, c.filters}};
            }
            LayerShapes operator()(const MaxPoolLayer& m) const {
                if (m.size != 2 || m.stride != 2)
                    throw ShapeError(where + " (max): only 2x2/2 pooling is supported, got " +
                                     std::to_string(m.size) + "x" + std::to_string(m.size) + "/" +
                                     std::to_string(m.stride));
                if (in.height % 2 != 0 || in.width % 2 != 0)
                    throw ShapeError(where + " (max): expected even spatial dims, got input " + in.str());
                return {in, {in.height / 2, in.width / 2, in.channels}};
            }
            LayerShapes operator()(const UpsampleLayer& u) const {
                if (u.factor != 2)
                    throw ShapeError(where + " (upsample): factor must be 2, got " + std::to_string(u.factor));
                return {in, {in.height * 2, in.width * 2, in.channels}};
            }
            LayerShapes operator()(const RouteLayer& r) const {
                if (r.sources.empty())
                    throw ShapeError(where + " (route): no source layers");
                Shape out{};
                for (std::size_t s = 0; s < r.sources.size(); ++s) {
                    const int src = r.sources[s];
                    if (src < 0 || src >= index)
                        throw ShapeError(where + " (route): source " + std::to_string(src) +
                                         " is not an earlier layer");
                    const Shape& ss = prior[src].output;
                    if (s == 0) {
                        out = ss;
                    } else if (ss.height != out.height || ss.width != out.width) {
                        throw ShapeError(where + " (route): source " + std::to_string(src) + " is " +
                                         ss.str() + ", expected spatial " + std::to_string(out.height) +
                                         "x" + std::to_string(out.width));
                    } else {
                        out.channels += ss.channels;
                    }
                }
                return {Shape{}, out};
            }
            LayerShapes operator()(const YoloLayer& y) const {
                const auto& h = y.head;
                if (h.classes < 1)
                    throw ShapeError(where + " (yolo): classes must be positive");
                if (static_cast<int>(h.anchors.size()) != h.num)
                    throw ShapeError(where + " (yolo): num=" + std::to_string(h.num) + " but " +
                                     std::to_string(h.anchors.size()) + " anchors given");
                for (int m : h.mask)
                    if (m < 0 || m >= h.num)
                        throw ShapeError(where + " (yolo): mask index " + std::to_string(m) +
                                         " outside [0, " + std::to_string(h.num) + ")");
                if (in.channels != h.expected_channels())
                    throw ShapeError(where + " (yolo): expected input channels " +
                                     std::to_string(h.expected_channels()) + ", got input " + in.str());
                if (in.height != in.width)
                    throw ShapeError(where + " (yolo): head grid must be square, got " + in.str());
                return {in, in};
            }
        };
        shapes.push_back(std::visit(Visitor{where, in, shapes, static_cast<int>(i)}, layer.kind));
    }
    return shapes;
}

/// Output shape of every layer, in order.
inline std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
    std::vector<Shape> out;
    for (const auto& s : infer_layer_shapes(spec))
        out.push_back(s.output);
    return out;
}

/// Full structural validation: shapes plus the two-head SwiftFace contract.
inline void validate_swiftface(const NetworkSpec& spec) {
    const auto shapes = infer_layer_shapes(spec);
    int heads = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto* yolo = std::get_if<YoloLayer>(&spec.layers[i].kind);
        if (!yolo)
            continue;
        ++heads;
        if (yolo->head.classes != 1)
            throw ShapeError("layer " + std::to_string(i) + " (yolo): expected a single class");
        const auto* feeder = i > 0 ? std::get_if<ConvLayer>(&spec.layers[i - 1].kind) : nullptr;
        if (!feeder || feeder->filters != yolo->head.expected_channels())
            throw ShapeError("layer " + std::to_string(i) + " (yolo): must be fed by a conv with " +
                             std::to_string(yolo->head.expected_channels()) + " filters");
    }
    if (heads != 2)
        throw ShapeError("expected exactly two yolo layers, found " + std::to_string(heads));
}

/// One row per layer: index, kind, filters (route: sources), size/stride, input, output.
/// Columns are single-space separated; "-" marks a column that does not apply.
inline std::string shape_table(const NetworkSpec& spec) {
    const auto shapes = infer_layer_shapes(spec);
    std::string out = "layer kind filters size/stride input output\n";
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& kind = spec.layers[i].kind;
        std::string filters = "-", geometry = "-", input = shapes[i].input.str();
        if (const auto* c = std::get_if<ConvLayer>(&kind)) {
            filters = std::to_string(c->filters);
            geometry = std::to_string(c->kernel_size) + "x" + std::to_string(c->kernel_size) + "/" +
                       std::to_string(c->stride);
        } else if (const auto* m = std::get_if<MaxPoolLayer>(&kind)) {
            geometry = std::to_string(m->size) + "x" + std::to_string(m->size) + "/" + std::to_string(m->stride);
        } else if (const auto* u = std::get_if<UpsampleLayer>(&kind)) {
            geometry = std::to_string(u->factor) + "x/1";
        } else if (const auto* r = std::get_if<RouteLayer>(&kind)) {
            filters.clear();
            for (std::size_t s = 0; s < r->sources.size(); ++s)
                filters += (s ? "," : "") + std::to_string(r->sources[s]);
            input = "-";
        }
        out += std::to_string(i) + " " + kind_name(kind) + " " + filters + " " + geometry + " " + input + " " +
               shapes[i].output.str() + "\n";
    }
    return out;
}

} // namespace swiftface
