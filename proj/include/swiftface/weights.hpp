// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary parameter container, little-endian throughout:
//
//   offset 0   int32  major
//   offset 4   int32  minor
//   offset 8   int32  revision
//   offset 12  int64  seen (images seen during training)
//   then, per conv layer in graph order:
//     batchnorm layers:  beta[out] gamma[out] mean[out] variance[out] weights[out*in*k*k]
//     other layers:      bias[out] weights[out*in*k*k]
//   all parameters float32, no padding, no footer.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "kernels.hpp"
#include "network.hpp"

namespace swiftface {

static_assert(std::endian::native == std::endian::little, "weights I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

struct WeightsHeader {
    std::int32_t major = 0;
    std::int32_t minor = 2;
    std::int32_t revision = 0;
    std::int64_t seen = 0;
    friend bool operator==(const WeightsHeader&, const WeightsHeader&) = default;
};

inline constexpr std::size_t kWeightsHeaderBytes = 20;

/// Batchnorm statistics as stored on disk; the shift (beta) lives in ConvParams::bias.
struct BatchNormStats {
    std::vector<float> scale;
    std::vector<float> mean;
    std::vector<float> variance;
    friend bool operator==(const BatchNormStats&, const BatchNormStats&) = default;
};

struct ConvParams {
    int layer = 0;
    int out_channels = 0;
    int in_channels = 0;
    int kernel_size = 1;
    std::vector<float> bias;
    std::optional<BatchNormStats> batchnorm;
    std::vector<float> weights;
    friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct ModelParams {
    WeightsHeader header;
    std::vector<ConvParams> convs;
    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

namespace weights_detail {

/// (layer index, conv layer, input channels) for every conv in graph order.
struct ConvSlot {
    int layer;
    ConvLayer conv;
    int in_channels;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(conv.filters) * in_channels * conv.kernel_size * conv.kernel_size;
    }
    std::size_t param_count() const {
        return weight_count() + static_cast<std::size_t>(conv.filters) * (conv.batchnorm ? 4 : 1);
    }
};

inline std::vector<ConvSlot> conv_slots(const NetworkSpec& spec) {
    std::vector<ConvSlot> slots;
    if (spec.layers.empty())
        return slots;
    const auto shapes = infer_layer_shapes(spec);
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (const auto* c = std::get_if<ConvLayer>(&spec.layers[i].kind))
            slots.push_back({static_cast<int>(i), *c, shapes[i].input.channels});
    return slots;
}

class Reader {
public:
    explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    template <typename T>
    T scalar(const std::string& what) {
        T v;
        need(sizeof v, what);
        std::memcpy(&v, bytes_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }

    std::vector<float> floats(std::size_t n, const std::string& what) {
        need(n * sizeof(float), what);
        std::vector<float> v(n);
        if (n)
            std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
        return v;
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const std::string& what) const {
        if (remaining() < n)
            throw FormatError("weights truncated at byte offset " + std::to_string(pos_) + " reading " +
                              what + ": need " + std::to_string(n) + " bytes, " +
                              std::to_string(remaining()) + " left");
    }

    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

template <typename T>
void put(std::vector<std::byte>& out, const T& v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out.insert(out.end(), p, p + sizeof v);
}

inline void put(std::vector<std::byte>& out, const std::vector<float>& v) {
    const auto* p = reinterpret_cast<const std::byte*>(v.data());
    out.insert(out.end(), p, p + v.size() * sizeof(float));
}

} // namespace weights_detail

/// Total stored float count: per conv, out*in*k*k weights + out biases, plus
/// 3*out more (gamma, mean, variance) with batchnorm.
inline std::size_t count_params(const NetworkSpec& spec) {
    std::size_t total = 0;
    for (const auto& slot : weights_detail::conv_slots(spec))
        total += slot.param_count();
    return total;
}

inline bool weights_version_supported(const WeightsHeader& h) {
    // 64-bit "seen" counter exists from 0.2 on; 1000+ marks a transposed legacy layout.
    return h.major >= 0 && h.minor >= 0 && h.major * 10 + h.minor >= 2 && h.major < 1000;
}

inline ModelParams load_weights(std::span<const std::byte> bytes, const NetworkSpec& spec) {
    weights_detail::Reader in(bytes);
    ModelParams params;
    params.header.major = in.scalar<std::int32_t>("header major");
    params.header.minor = in.scalar<std::int32_t>("header minor");
    params.header.revision = in.scalar<std::int32_t>("header revision");
    if (!weights_version_supported(params.header))
        throw FormatError("unsupported weights version " + std::to_string(params.header.major) + "." +
                          std::to_string(params.header.minor) + "." +
                          std::to_string(params.header.revision));
    params.header.seen = in.scalar<std::int64_t>("header seen");

    for (const auto& slot : weights_detail::conv_slots(spec)) {
        const std::string layer = "layer " + std::to_string(slot.layer);
        const auto out = static_cast<std::size_t>(slot.conv.filters);
        ConvParams p;
        p.layer = slot.layer;
        p.out_channels = slot.conv.filters;
        p.in_channels = slot.in_channels;
        p.kernel_size = slot.conv.kernel_size;
        p.bias = in.floats(out, layer + (slot.conv.batchnorm ? " batchnorm shift" : " bias"));
        if (slot.conv.batchnorm) {
            BatchNormStats bn;
            bn.scale = in.floats(out, layer + " batchnorm scale");
            bn.mean = in.floats(out, layer + " batchnorm mean");
            bn.variance = in.floats(out, layer + " batchnorm variance");
            p.batchnorm = std::move(bn);
        }
        p.weights = in.floats(slot.weight_count(), layer + " weights");
        params.convs.push_back(std::move(p));
    }
    if (in.remaining() != 0)
        throw FormatError("weights have " + std::to_string(in.remaining()) +
                          " trailing bytes after offset " + std::to_string(in.offset()));
    return params;
}

inline std::vector<std::byte> save_weights(const ModelParams& params) {
    std::vector<std::byte> out;
    weights_detail::put(out, params.header.major);
    weights_detail::put(out, params.header.minor);
    weights_detail::put(out, params.header.revision);
    weights_detail::put(out, params.header.seen);
    for (const auto& p : params.convs) {
        weights_detail::put(out, p.bias);
        if (p.batchnorm) {
            weights_detail::put(out, p.batchnorm->scale);
            weights_detail::put(out, p.batchnorm->mean);
            weights_detail::put(out, p.batchnorm->variance);
        }
        weights_detail::put(out, p.weights);
    }
    return out;
}

/// Checks that params carry one correctly sized entry per conv layer of `spec`.
inline void check_params(const ModelParams& params, const NetworkSpec& spec) {
    const auto slots = weights_detail::conv_slots(spec);
    if (slots.size() != params.convs.size())
        throw FormatError("network has " + std::to_string(slots.size()) + " conv layers, params have " +
                          std::to_string(params.convs.size()));
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& s = slots[i];
        const auto& p = params.convs[i];
        const auto out = static_cast<std::size_t>(s.conv.filters);
        const bool ok = p.layer == s.layer && p.out_channels == s.conv.filters &&
                        p.in_channels == s.in_channels && p.kernel_size == s.conv.kernel_size &&
                        p.bias.size() == out && p.weights.size() == s.weight_count() &&
                        p.batchnorm.has_value() == s.conv.batchnorm &&
                        (!p.batchnorm || (p.batchnorm->scale.size() == out && p.batchnorm->mean.size() == out &&
                                          p.batchnorm->variance.size() == out));
        if (!ok)
            throw FormatError("params for layer " + std::to_string(s.layer) + " do not match the network");
    }
}

/// He-uniform weights in [-s, s], s = sqrt(2 / fan_in); zero biases; identity batchnorm.
/// Uses mt19937_64 and an explicit bits-to-float mapping so the stream is the same
/// on every standard library.
inline ModelParams random_init(const NetworkSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform01 = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    ModelParams params;
    for (const auto& slot : weights_detail::conv_slots(spec)) {
        ConvParams p;
        p.layer = slot.layer;
        p.out_channels = slot.conv.filters;
        p.in_channels = slot.in_channels;
        p.kernel_size = slot.conv.kernel_size;
        const auto out = static_cast<std::size_t>(slot.conv.filters);
        p.bias.assign(out, 0.0f);
        if (slot.conv.batchnorm)
            p.batchnorm = BatchNormStats{std::vector<float>(out, 1.0f), std::vector<float>(out, 0.0f),
                                         std::vector<float>(out, 1.0f)};
        const double fan_in = static_cast<double>(slot.in_channels) * slot.conv.kernel_size * slot.conv.kernel_size;
        const float bound = static_cast<float>(std::sqrt(2.0 / fan_in));
        p.weights.resize(slot.weight_count());
        for (auto& w : p.weights)
            w = std::clamp(static_cast<float>((2.0 * uniform01() - 1.0) * bound), -bound, bound);
        params.convs.push_back(std::move(p));
    }
    return params;
}

/// All-zero parameters (zero weights, zero biases, identity batchnorm statistics).
inline ModelParams zero_init(const NetworkSpec& spec) {
    ModelParams params = random_init(spec, 0);
    for (auto& p : params.convs)
        std::fill(p.weights.begin(), p.weights.end(), 0.0f);
    return params;
}

/// Builds the executable kernel for one conv entry.
inline ConvKernel make_kernel(const ConvParams& p, Activation activation) {
    ConvKernel k;
    k.out_channels = p.out_channels;
    k.in_channels = p.in_channels;
    k.kernel_size = p.kernel_size;
    k.stride = 1;
    k.pad = (p.kernel_size - 1) / 2;
    k.weights = p.weights;
    k.bias = p.bias;
    k.activation = activation;
    if (p.batchnorm)
        k.batchnorm = BatchNorm{p.batchnorm->scale, p.bias, p.batchnorm->mean, p.batchnorm->variance, 1e-5f};
    return k;
}

} // namespace swiftface
