// SPDX-License-Identifier: Apache-2.0

#pragma once

// Darknet-style sectioned text format for NetworkSpec:
//
//   [net]            height, width, channels, max_batches, steps, dataset
//   [convolutional]  filters, size, stride, pad, batch_normalize, activation
//   [maxpool]        size, stride
//   [upsample]       stride
//   [route]          layers (absolute or negative-relative, comma separated)
//   [yolo]           mask, anchors, classes, num, jitter, ignore_thresh, truth_thresh, random
//
// '#' and ';' start comments. Unknown [net] keys (training hyperparameters) are
// skipped; unknown keys anywhere else are errors.

#include <charconv>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "error.hpp"
#include "network.hpp"

namespace swiftface {

namespace config_detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, std::string_view key) {
    text = trim(text);
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty())
        throw ParseError(line, "bad value '" + std::string(text) + "' for key '" + std::string(key) + "'");
    return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view text, std::size_t line, std::string_view key) {
    std::vector<T> out;
    while (true) {
        const auto comma = text.find(',');
        const auto item = trim(text.substr(0, comma));
        if (!item.empty())
            out.push_back(parse_number<T>(item, line, key));
        else if (comma != std::string_view::npos)
            throw ParseError(line, "empty entry in list for key '" + std::string(key) + "'");
        if (comma == std::string_view::npos)
            break;
        text.remove_prefix(comma + 1);
    }
    if (out.empty())
        throw ParseError(line, "empty list for key '" + std::string(key) + "'");
    return out;
}

template <typename T>
std::string format_number(T value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i)
            out += ',';
        out += format_number(values[i]);
    }
    return out;
}

struct Entry {
    std::string key;
    std::string value;
    std::size_t line;
};

struct Section {
    std::string name;
    std::size_t line;
    std::vector<Entry> entries;
};

inline std::vector<Section> split_sections(std::string_view text) {
    std::vector<Section> sections;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;

        if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;

        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ParseError(line_no, "malformed section header '" + std::string(line) + "'");
            sections.push_back({std::string(trim(line.substr(1, line.size() - 2))), line_no, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError(line_no, "expected key=value, got '" + std::string(line) + "'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ParseError(line_no, "malformed key=value '" + std::string(line) + "'");
        if (sections.empty())
            throw ParseError(line_no, "key '" + std::string(key) + "' outside of any section");
        sections.back().entries.push_back({std::string(key), std::string(value), line_no});
    }
    return sections;
}

inline Activation parse_activation(const Entry& e) {
    if (e.value == "leaky")
        return Activation::leaky;
    if (e.value == "linear")
        return Activation::linear;
    throw ParseError(e.line, "unsupported activation '" + e.value + "'");
}

[[noreturn]] inline void unknown_key(const Section& s, const Entry& e) {
    throw ParseError(e.line, "unknown key '" + e.key + "' in [" + s.name + "]");
}

inline ConvLayer parse_conv(const Section& s) {
    ConvLayer c{0, 1, 1, Activation::linear, false};
    std::optional<int> pad;
    std::size_t pad_line = s.line;
    for (const auto& e : s.entries) {
        if (e.key == "filters")
            c.filters = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "size")
            c.kernel_size = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "stride")
            c.stride = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "pad") {
            pad = parse_number<int>(e.value, e.line, e.key);
            pad_line = e.line;
        } else if (e.key == "batch_normalize")
            c.batchnorm = parse_number<int>(e.value, e.line, e.key) != 0;
        else if (e.key == "activation")
            c.activation = parse_activation(e);
        else
            unknown_key(s, e);
    }
    if (c.filters <= 0)
        throw ParseError(s.line, "[convolutional] needs a positive 'filters'");
    if (pad && *pad == 0 && c.kernel_size > 1)
        throw ParseError(pad_line, "only same-padded convolution is supported (pad=1)");
    return c;
}

inline MaxPoolLayer parse_maxpool(const Section& s) {
    MaxPoolLayer m;
    for (const auto& e : s.entries) {
        if (e.key == "size")
            m.size = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "stride")
            m.stride = parse_number<int>(e.value, e.line, e.key);
        else
            unknown_key(s, e);
    }
    return m;
}

inline UpsampleLayer parse_upsample(const Section& s) {
    UpsampleLayer u;
    for (const auto& e : s.entries) {
        if (e.key == "stride")
            u.factor = parse_number<int>(e.value, e.line, e.key);
        else
            unknown_key(s, e);
    }
    return u;
}

inline RouteLayer parse_route(const Section& s, int index) {
    RouteLayer r;
    for (const auto& e : s.entries) {
        if (e.key != "layers")
            unknown_key(s, e);
        for (int v : parse_list<int>(e.value, e.line, e.key)) {
            const int src = v < 0 ? index + v : v;
            if (src < 0 || src >= index)
                throw ParseError(e.line, "route layer " + std::to_string(index) + " references " +
                                             std::to_string(v) + ", which is not an earlier layer");
            r.sources.push_back(src);
        }
    }
    if (r.sources.empty())
        throw ParseError(s.line, "[route] needs 'layers'");
    return r;
}

inline YoloLayer parse_yolo(const Section& s) {
    YoloHeadConfig h;
    h.mask.clear();
    h.anchors.clear();
    std::optional<int> num;
    bool have_mask = false;
    for (const auto& e : s.entries) {
        if (e.key == "mask") {
            h.mask = parse_list<int>(e.value, e.line, e.key);
            have_mask = true;
        } else if (e.key == "anchors") {
            const auto v = parse_list<float>(e.value, e.line, e.key);
            if (v.size() % 2 != 0)
                throw ParseError(e.line, "anchors need (width, height) pairs, got " +
                                             std::to_string(v.size()) + " values");
            for (std::size_t i = 0; i < v.size(); i += 2)
                h.anchors.push_back({v[i], v[i + 1]});
        } else if (e.key == "classes")
            h.classes = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "num")
            num = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "jitter")
            h.jitter = parse_number<float>(e.value, e.line, e.key);
        else if (e.key == "ignore_thresh")
            h.ignore_thresh = parse_number<float>(e.value, e.line, e.key);
        else if (e.key == "truth_thresh")
            h.truth_thresh = parse_number<float>(e.value, e.line, e.key);
        else if (e.key == "random")
            h.random = parse_number<int>(e.value, e.line, e.key);
        else
            unknown_key(s, e);
    }
    h.num = num.value_or(static_cast<int>(h.anchors.size()));
    if (!have_mask)
        for (int i = 0; i < h.num; ++i)
            h.mask.push_back(i);
    return YoloLayer{h};
}

inline void parse_net(const Section& s, NetworkSpec& spec) {
    for (const auto& e : s.entries) {
        if (e.key == "height")
            spec.input_height = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "width")
            spec.input_width = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "channels")
            spec.input_channels = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "max_batches")
            spec.training.max_batches = parse_number<int>(e.value, e.line, e.key);
        else if (e.key == "steps") {
            const auto v = parse_list<int>(e.value, e.line, e.key);
            if (v.size() != 2)
                throw ParseError(e.line, "steps needs exactly two values");
            spec.training.steps = {v[0], v[1]};
        } else if (e.key == "dataset")
            spec.training.dataset_name = e.value;
    }
}

} // namespace config_detail

/// Parses config text into a NetworkSpec. Negative route indices are resolved to
/// absolute ones. Shape consistency is not checked here; see infer_shapes.
inline NetworkSpec parse_config(std::string_view text) {
    using namespace config_detail;
    NetworkSpec spec;
    bool seen_net = false;
    for (const auto& s : split_sections(text)) {
        if (s.name == "net" || s.name == "network") {
            if (seen_net || !spec.layers.empty())
                throw ParseError(s.line, "[net] must appear once, before any layer");
            seen_net = true;
            parse_net(s, spec);
            continue;
        }
        const int index = static_cast<int>(spec.layers.size());
        LayerSpec layer{index, ConvLayer{}};
        if (s.name == "convolutional" || s.name == "conv")
            layer.kind = parse_conv(s);
        else if (s.name == "maxpool" || s.name == "max")
            layer.kind = parse_maxpool(s);
        else if (s.name == "upsample")
            layer.kind = parse_upsample(s);
        else if (s.name == "route")
            layer.kind = parse_route(s, index);
        else if (s.name == "yolo")
            layer.kind = parse_yolo(s);
        else
            throw ParseError(s.line, "unknown section [" + s.name + "]");
        spec.layers.push_back(std::move(layer));
    }
    return spec;
}

/// Canonical text form; byte-stable for a given spec.
inline std::string serialize_config(const NetworkSpec& spec) {
    using config_detail::format_number;
    using config_detail::join;
    std::ostringstream out;
    out << "[net]\n"
        << "height=" << spec.input_height << "\n"
        << "width=" << spec.input_width << "\n"
        << "channels=" << spec.input_channels << "\n"
        << "max_batches=" << spec.training.max_batches << "\n"
        << "steps=" << spec.training.steps.first << "," << spec.training.steps.second << "\n"
        << "dataset=" << spec.training.dataset_name << "\n";

    for (const auto& layer : spec.layers) {
        out << "\n# " << layer.index << "\n";
        if (const auto* c = std::get_if<ConvLayer>(&layer.kind)) {
            out << "[convolutional]\n"
                << "batch_normalize=" << (c->batchnorm ? 1 : 0) << "\n"
                << "filters=" << c->filters << "\n"
                << "size=" << c->kernel_size << "\n"
                << "stride=" << c->stride << "\n"
                << "pad=1\n"
                << "activation=" << (c->activation == Activation::leaky ? "leaky" : "linear") << "\n";
        } else if (const auto* m = std::get_if<MaxPoolLayer>(&layer.kind)) {
            out << "[maxpool]\nsize=" << m->size << "\nstride=" << m->stride << "\n";
        } else if (const auto* u = std::get_if<UpsampleLayer>(&layer.kind)) {
            out << "[upsample]\nstride=" << u->factor << "\n";
        } else if (const auto* r = std::get_if<RouteLayer>(&layer.kind)) {
            out << "[route]\nlayers=" << join(r->sources) << "\n";
        } else if (const auto* y = std::get_if<YoloLayer>(&layer.kind)) {
            const auto& h = y->head;
            std::vector<float> anchors;
            for (const auto& a : h.anchors) {
                anchors.push_back(a.width);
                anchors.push_back(a.height);
            }
            out << "[yolo]\n"
                << "mask=" << join(h.mask) << "\n"
                << "anchors=" << join(anchors) << "\n"
                << "classes=" << h.classes << "\n"
                << "num=" << h.num << "\n"
                << "jitter=" << format_number(h.jitter) << "\n"
                << "ignore_thresh=" << format_number(h.ignore_thresh) << "\n"
                << "truth_thresh=" << format_number(h.truth_thresh) << "\n"
                << "random=" << h.random << "\n";
        }
    }
    return out.str();
}

} // namespace swiftface
