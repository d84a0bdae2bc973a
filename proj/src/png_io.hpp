#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "image.hpp"

namespace dmrf::tasks {

// 8-bit, non-interlaced PNG. Reading accepts gray, gray+alpha, RGB and RGBA
// (alpha stripped); writing emits gray or RGB with unfiltered rows and stored
// deflate blocks.
ImageBuffer read_png(const std::string& path);
void write_png(const ImageBuffer& img, const std::string& path);

ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);

// RFC 1950/1951 decompressor, exposed for tests.
std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* data, std::size_t size);

} // namespace dmrf::tasks
