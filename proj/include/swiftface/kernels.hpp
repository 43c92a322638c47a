// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace swiftface {

enum class Activation { leaky, linear };

inline constexpr float kLeakySlope = 0.1f;

inline float activate(float x, Activation kind) noexcept {
    if (kind == Activation::leaky)
        return x > 0.0f ? x : kLeakySlope * x;
    return x;
}

/// Per-output-channel batch normalization statistics.
struct BatchNorm {
    std::vector<float> scale;     // gamma
    std::vector<float> shift;     // beta
    std::vector<float> mean;
    std::vector<float> variance;
    float epsilon = 1e-5f;
};

/// Square "same"-padded convolution. Weights are laid out [out][in][ky][kx].
/// When `batchnorm` is set, its shift plays the role of the bias and `bias` is ignored.
struct ConvKernel {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_size = 1;
    int stride = 1;
    int pad = 0;
    std::vector<float> weights;
    std::vector<float> bias;
    Activation activation = Activation::linear;
    std::optional<BatchNorm> batchnorm;

    std::size_t weight_count() const noexcept {
        return static_cast<std::size_t>(out_channels) * static_cast<std::size_t>(in_channels) *
               static_cast<std::size_t>(kernel_size) * static_cast<std::size_t>(kernel_size);
    }
};

namespace detail {

inline void validate(const ConvKernel& k) {
    if (k.out_channels <= 0 || k.in_channels <= 0)
        throw ShapeError("conv kernel needs positive channel counts, got out=" +
                         std::to_string(k.out_channels) + " in=" + std::to_string(k.in_channels));
    if (k.kernel_size != 1 && k.kernel_size != 3)
        throw ShapeError("conv kernel size must be 1 or 3, got " + std::to_string(k.kernel_size));
    if (k.stride != 1)
        throw ShapeError("only stride-1 convolution is supported, got " + std::to_string(k.stride));
    if (k.pad != (k.kernel_size - 1) / 2)
        throw ShapeError("conv pad must be " + std::to_string((k.kernel_size - 1) / 2) +
                         " for a " + std::to_string(k.kernel_size) + "x" +
                         std::to_string(k.kernel_size) + " kernel, got " + std::to_string(k.pad));
    if (k.weights.size() != k.weight_count())
        throw ShapeError("conv expects " + std::to_string(k.weight_count()) + " weights, got " +
                         std::to_string(k.weights.size()));
    const auto out = static_cast<std::size_t>(k.out_channels);
    if (k.batchnorm) {
        const auto& bn = *k.batchnorm;
        if (bn.scale.size() != out || bn.shift.size() != out || bn.mean.size() != out ||
            bn.variance.size() != out)
            throw ShapeError("batchnorm statistics must have " + std::to_string(out) + " entries");
    } else if (k.bias.size() != out) {
        throw ShapeError("conv expects " + std::to_string(out) + " biases, got " +
                         std::to_string(k.bias.size()));
    }
}

inline void check_input(const Tensor& input, const ConvKernel& k) {
    if (input.channels() != k.in_channels)
        throw ShapeError("conv input " + input.shape().str() + " has " +
                         std::to_string(input.channels()) + " channels, kernel expects " +
                         std::to_string(k.in_channels) + " (kernel " + std::to_string(k.out_channels) +
                         "x" + std::to_string(k.in_channels) + "x" + std::to_string(k.kernel_size) +
                         "x" + std::to_string(k.kernel_size) + ")");
    validate(k);
}

/// Maps a raw accumulator to the layer output for channel `o`.
inline float finish(float acc, const ConvKernel& k, int o) noexcept {
    float v;
    if (k.batchnorm) {
        const auto& bn = *k.batchnorm;
        v = (acc - bn.mean[o]) / std::sqrt(bn.variance[o] + bn.epsilon) * bn.scale[o] + bn.shift[o];
    } else {
        v = acc + k.bias[o];
    }
    return activate(v, k.activation);
}

} // namespace detail

/// Direct convolution: one accumulator per output cell, summed over (c, dy, dx).
/// Slow; kept as the reference path.
inline Tensor conv2d_reference(const Tensor& input, const ConvKernel& k) {
    detail::check_input(input, k);
    const int h = input.height(), w = input.width(), cin = k.in_channels, ks = k.kernel_size;
    Tensor out(h, w, k.out_channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int o = 0; o < k.out_channels; ++o) {
                float acc = 0.0f;
                for (int c = 0; c < cin; ++c) {
                    for (int dy = 0; dy < ks; ++dy) {
                        for (int dx = 0; dx < ks; ++dx) {
                            const int iy = y + dy - k.pad, ix = x + dx - k.pad;
                            const float v = (iy < 0 || iy >= h || ix < 0 || ix >= w) ? 0.0f : input(iy, ix, c);
                            acc += k.weights[((static_cast<std::size_t>(o) * cin + c) * ks + dy) * ks + dx] * v;
                        }
                    }
                }
                out(y, x, o) = detail::finish(acc, k, o);
            }
        }
    }
    return out;
}

/// im2col + matrix multiply. Each output row is unrolled into a [width][cin*k*k] patch
/// matrix and multiplied against the transposed weights, several pixels at a time.
/// The per-cell reduction order is the same (c, dy, dx) order as conv2d_reference.
inline Tensor conv2d(const Tensor& input, const ConvKernel& k) {
    detail::check_input(input, k);
    const int h = input.height(), w = input.width(), cin = k.in_channels, ks = k.kernel_size;
    const int cout = k.out_channels;
    const std::size_t depth = static_cast<std::size_t>(cin) * ks * ks;

    // [depth][cout] so the innermost loop runs over contiguous output channels.
    std::vector<float> wt(depth * cout);
    for (int o = 0; o < cout; ++o)
        for (std::size_t d = 0; d < depth; ++d)
            wt[d * cout + o] = k.weights[o * depth + d];

    constexpr int kBlock = 8;
    std::vector<float> cols(static_cast<std::size_t>(w) * depth);
    std::vector<float> acc(static_cast<std::size_t>(kBlock) * cout);
    Tensor out(h, w, cout);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float* col = cols.data() + static_cast<std::size_t>(x) * depth;
            for (int c = 0; c < cin; ++c) {
                for (int dy = 0; dy < ks; ++dy) {
                    const int iy = y + dy - k.pad;
                    for (int dx = 0; dx < ks; ++dx) {
                        const int ix = x + dx - k.pad;
                        *col++ = (iy < 0 || iy >= h || ix < 0 || ix >= w) ? 0.0f : input(iy, ix, c);
                    }
                }
            }
        }

        for (int x0 = 0; x0 < w; x0 += kBlock) {
            const int n = std::min(kBlock, w - x0);
            std::fill(acc.begin(), acc.end(), 0.0f);
            for (std::size_t d = 0; d < depth; ++d) {
                const float* wrow = wt.data() + d * cout;
                for (int i = 0; i < n; ++i) {
                    const float a = cols[static_cast<std::size_t>(x0 + i) * depth + d];
                    float* dst = acc.data() + static_cast<std::size_t>(i) * cout;
                    for (int o = 0; o < cout; ++o)
                        dst[o] += wrow[o] * a;
                }
            }
            for (int i = 0; i < n; ++i) {
                float* dst = &out(y, x0 + i, 0);
                const float* src = acc.data() + static_cast<std::size_t>(i) * cout;
                for (int o = 0; o < cout; ++o)
                    dst[o] = detail::finish(src[o], k, o);
            }
        }
    }
    return out;
}

/// Absorbs batchnorm into weights and bias:
/// w' = w * g / sqrt(var + eps), b' = beta - g * mean / sqrt(var + eps).
inline ConvKernel fold_batchnorm(const ConvKernel& k) {
    if (!k.batchnorm)
        return k;
    detail::validate(k);
    const auto& bn = *k.batchnorm;
    ConvKernel folded = k;
    folded.batchnorm.reset();
    folded.bias.assign(k.out_channels, 0.0f);
    const std::size_t per_out = k.weight_count() / k.out_channels;
    for (int o = 0; o < k.out_channels; ++o) {
        const double norm = std::sqrt(static_cast<double>(bn.variance[o]) + bn.epsilon);
        const double factor = bn.scale[o] / norm;
        for (std::size_t i = 0; i < per_out; ++i) {
            auto& wv = folded.weights[o * per_out + i];
            wv = static_cast<float>(wv * factor);
        }
        folded.bias[o] = static_cast<float>(bn.shift[o] - bn.scale[o] * bn.mean[o] / norm);
    }
    return folded;
}

inline Tensor maxpool2x2(const Tensor& input) {
    if (input.height() % 2 != 0 || input.width() % 2 != 0)
        throw ShapeError("maxpool 2x2/2 needs even spatial dims, got " + input.shape().str());
    const int h = input.height() / 2, w = input.width() / 2, c = input.channels();
    Tensor out(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                out(y, x, ch) = std::max(std::max(input(2 * y, 2 * x, ch), input(2 * y, 2 * x + 1, ch)),
                                         std::max(input(2 * y + 1, 2 * x, ch), input(2 * y + 1, 2 * x + 1, ch)));
    return out;
}

/// Nearest-neighbour 2x upsampling.
inline Tensor upsample2x(const Tensor& input) {
    const int h = input.height() * 2, w = input.width() * 2, c = input.channels();
    Tensor out(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            std::copy_n(&input(y / 2, x / 2, 0), c, &out(y, x, 0));
    return out;
}

/// Stacks `b`'s channels after `a`'s.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.height() != b.height() || a.width() != b.width())
        throw ShapeError("cannot concatenate " + a.shape().str() + " with " + b.shape().str() +
                         ": spatial dims differ");
    const int ca = a.channels(), cb = b.channels();
    Tensor out(a.height(), a.width(), ca + cb);
    if (out.size() == 0)
        return out;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            float* dst = &out(y, x, 0);
            if (ca > 0)
                std::copy_n(&a(y, x, 0), ca, dst);
            if (cb > 0)
                std::copy_n(&b(y, x, 0), cb, dst + ca);
        }
    }
    return out;
}

} // namespace swiftface
