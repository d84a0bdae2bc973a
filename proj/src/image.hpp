#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace dmrf::tasks {

// Row-major, channel-interleaved sample buffer with values in [0,1].
// 8-bit quantization happens only at the file boundary.
struct ImageBuffer {
    int height = 0;
    int width = 0;
    int channels = 0;  // 1 grayscale, 3 color
    std::vector<float> samples;

    ImageBuffer() = default;
    ImageBuffer(int h, int w, int c) : height(h), width(w), channels(c) {
        require(h >= 1 && w >= 1 && (c == 1 || c == 3), Status::InvalidArg,
                "ImageBuffer: bad dimensions");
        samples.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
    }

    float& at(int r, int c, int ch = 0) {
        return samples[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    float at(int r, int c, int ch = 0) const {
        return samples[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    std::size_t sample_count() const { return samples.size(); }
};

// Binary PGM (P5) / PPM (P6), maxval 255.
ImageBuffer read_pnm(const std::string& path);
void write_pnm(const ImageBuffer& img, const std::string& path);

// Dispatch on extension: .pgm/.ppm/.pnm or .png.
ImageBuffer read_image(const std::string& path);
void write_image(const ImageBuffer& img, const std::string& path);

// 8-bit quantization helpers shared by the codecs.
std::uint8_t quantize8(float v);
std::vector<std::uint8_t> to_bytes(const ImageBuffer& img);
ImageBuffer from_bytes(int height, int width, int channels, const std::uint8_t* bytes);

} // namespace dmrf::tasks
