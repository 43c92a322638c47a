// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace swiftface {

/// 8-bit interleaved RGB image.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // width * height * 3

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

class ImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace pnm_detail {

class Cursor {
public:
    explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    // Skips whitespace and '#' comments between header tokens.
    void skip_space() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
                    ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int read_uint() {
        skip_space();
        if (pos_ >= bytes_.size() || bytes_[pos_] < '0' || bytes_[pos_] > '9')
            throw ImageError("pnm: expected an integer in the header");
        long v = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_++] - '0');
            if (v > 1 << 24)
                throw ImageError("pnm: header value too large");
        }
        return static_cast<int>(v);
    }

    std::size_t& position() { return pos_; }
    std::span<const std::uint8_t> bytes() const { return bytes_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace pnm_detail

/// Decodes binary PGM (P5) or PPM (P6) with maxval <= 255. Gray is replicated to RGB.
inline RgbImage decode_pnm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw ImageError("not a binary PGM/PPM (P5/P6) image");
    const bool color = bytes[1] == '6';
    pnm_detail::Cursor cur(bytes.subspan(2));
    const int width = cur.read_uint();
    const int height = cur.read_uint();
    const int maxval = cur.read_uint();
    if (width <= 0 || height <= 0)
        throw ImageError("pnm: zero-sized image");
    if (maxval <= 0 || maxval > 255)
        throw ImageError("pnm: only 8-bit images are supported (maxval " + std::to_string(maxval) + ")");
    // Exactly one whitespace byte separates the header from the raster.
    auto& pos = cur.position();
    if (pos >= cur.bytes().size())
        throw ImageError("pnm: missing raster");
    ++pos;

    const std::size_t channels = color ? 3 : 1;
    const std::size_t need = static_cast<std::size_t>(width) * height * channels;
    const auto raster = cur.bytes().subspan(pos);
    if (raster.size() < need)
        throw ImageError("pnm: raster truncated (" + std::to_string(raster.size()) + " of " +
                         std::to_string(need) + " bytes)");

    RgbImage img(width, height);
    for (std::size_t i = 0, n = static_cast<std::size_t>(width) * height; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            int v = raster[i * channels + (color ? c : 0)];
            if (maxval != 255)
                v = std::min(255, (v * 255 + maxval / 2) / maxval);
            img.pixels[i * 3 + c] = static_cast<std::uint8_t>(v);
        }
    }
    return img;
}

inline RgbImage read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ImageError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_pnm(bytes);
    } catch (const ImageError& e) {
        throw ImageError(path.string() + ": " + e.what());
    }
}

inline std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
    const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    const auto bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw ImageError("cannot write " + path.string());
}

/// Draws an axis-aligned rectangle outline, `thickness` pixels wide, inside the box
/// [left, left+w) x [top, top+h) (pixel coordinates, clipped to the image).
inline void draw_box(RgbImage& img, double left, double top, double w, double h, int thickness = 2,
                     std::uint8_t r = 255, std::uint8_t g = 0, std::uint8_t b = 0) {
    const int x0 = std::max(0, static_cast<int>(std::lround(left)));
    const int y0 = std::max(0, static_cast<int>(std::lround(top)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::lround(left + w)) - 1);
    const int y1 = std::min(img.height - 1, static_cast<int>(std::lround(top + h)) - 1);
    if (x0 > x1 || y0 > y1)
        return;
    auto plot = [&](int x, int y) {
        auto* p = img.at(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    };
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const bool edge = x - x0 < thickness || x1 - x < thickness || y - y0 < thickness || y1 - y < thickness;
            if (edge)
                plot(x, y);
        }
    }
}

} // namespace swiftface
