// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace swiftface {

/// Height x width x channels triple.
struct Shape {
    int height = 0;
    int width = 0;
    int channels = 0;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }

    std::string str() const {
        return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
    }

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense HWC tensor of 32-bit floats, row-major (h, then w, then c).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape), data_(checked(shape).size(), fill) {}

    Tensor(int height, int width, int channels, float fill = 0.0f)
        : Tensor(Shape{height, width, channels}, fill) {}

    Tensor(Shape shape, std::vector<float> data) : shape_(checked(shape)), data_(std::move(data)) {
        if (data_.size() != shape_.size())
            throw ShapeError("tensor " + shape_.str() + " needs " + std::to_string(shape_.size()) +
                             " values, got " + std::to_string(data_.size()));
    }

    const Shape& shape() const noexcept { return shape_; }
    int height() const noexcept { return shape_.height; }
    int width() const noexcept { return shape_.width; }
    int channels() const noexcept { return shape_.channels; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    std::size_t index(int y, int x, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(shape_.channels) +
               static_cast<std::size_t>(c);
    }

    float& operator()(int y, int x, int c) noexcept { return data_[index(y, x, c)]; }
    const float& operator()(int y, int x, int c) const noexcept { return data_[index(y, x, c)]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    // Zero channels is allowed (the neutral element of channel concatenation).
    static Shape checked(Shape s) {
        if (s.height <= 0 || s.width <= 0 || s.channels < 0)
            throw ShapeError("invalid tensor shape " + s.str());
        return s;
    }

    Shape shape_{};
    std::vector<float> data_;
};

} // namespace swiftface
