// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace swiftface {

/// Tensor or layer dimensions that cannot be combined.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input (model config, annotation file). Carries the 1-based line.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Malformed binary weights stream.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace swiftface
