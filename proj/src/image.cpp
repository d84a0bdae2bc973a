#include "image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "png_io.hpp"

namespace dmrf::tasks {

std::uint8_t quantize8(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::vector<std::uint8_t> to_bytes(const ImageBuffer& img) {
    std::vector<std::uint8_t> out(img.sample_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = quantize8(img.samples[i]);
    return out;
}

ImageBuffer from_bytes(int height, int width, int channels, const std::uint8_t* bytes) {
    ImageBuffer img(height, width, channels);
    for (std::size_t i = 0; i < img.sample_count(); ++i)
        img.samples[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int read_pnm_int(std::istream& in, const std::string& path) {
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    require(ch != EOF && std::isdigit(ch), Status::Format, "pnm: malformed header in " + path);
    int value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        ch = in.get();
    }
    return value;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    std::string tail = s.substr(s.size() - suffix.size());
    std::transform(tail.begin(), tail.end(), tail.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return tail == suffix;
}

} // namespace

ImageBuffer read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Status::Io, "cannot open " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    require(in.good() && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6'), Status::Format,
            "pnm: expected binary P5/P6 magic in " + path);
    const int channels = magic[1] == '5' ? 1 : 3;
    const int width = read_pnm_int(in, path);
    const int height = read_pnm_int(in, path);
    const int maxval = read_pnm_int(in, path);
    require(maxval == 255, Status::Format, "pnm: only maxval 255 supported in " + path);
    require(width >= 1 && height >= 1, Status::Format, "pnm: bad dimensions in " + path);

    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<std::size_t>(in.gcount()) == bytes.size(), Status::Format,
            "pnm: truncated pixel data in " + path);
    return from_bytes(height, width, channels, bytes.data());
}

void write_pnm(const ImageBuffer& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Status::Io, "cannot open " + path + " for writing");
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    const std::vector<std::uint8_t> bytes = to_bytes(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), Status::Io, "short write to " + path);
}

ImageBuffer read_image(const std::string& path) {
    if (has_suffix(path, ".png")) return read_png(path);
    if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm") || has_suffix(path, ".pnm"))
        return read_pnm(path);
    throw Error(Status::InvalidArg, "unsupported image extension: " + path);
}

void write_image(const ImageBuffer& img, const std::string& path) {
    if (has_suffix(path, ".png")) {
        write_png(img, path);
        return;
    }
    if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm") || has_suffix(path, ".pnm")) {
        require(!(has_suffix(path, ".pgm") && img.channels != 1), Status::InvalidArg,
                "pgm requires a 1-channel image: " + path);
        require(!(has_suffix(path, ".ppm") && img.channels != 3), Status::InvalidArg,
                "ppm requires a 3-channel image: " + path);
        write_pnm(img, path);
        return;
    }
    throw Error(Status::InvalidArg, "unsupported image extension: " + path);
}

} // namespace dmrf::tasks
