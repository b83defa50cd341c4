#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpat/error.hpp"

namespace cpat {

// 8-bit RGB image, row-major, top-left origin.
struct ImageRGB {
    int64_t width = 0;
    int64_t height = 0;
    std::vector<uint8_t> pixels; // width*height*3 bytes

    bool valid() const {
        return width > 0 && height > 0 &&
               pixels.size() == static_cast<size_t>(width * height * 3);
    }

    uint8_t& at(int64_t y, int64_t x, int64_t c) {
        return pixels[static_cast<size_t>((y * width + x) * 3 + c)];
    }
    uint8_t at(int64_t y, int64_t x, int64_t c) const {
        return pixels[static_cast<size_t>((y * width + x) * 3 + c)];
    }
};

// Lossless 8-bit PNG. Reading accepts truecolor with or without alpha
// (alpha is dropped); anything else is rejected with an explicit error.
// Malformed files raise DataError with the byte offset of the problem.
ImageRGB load_png(const std::string& path);
void save_png(const ImageRGB& img, const std::string& path);

ImageRGB decode_png(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_png(const ImageRGB& img);

} // namespace cpat
