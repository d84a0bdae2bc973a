#include "imageops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dmrf::tasks {

namespace {

// Keys cubic, a = -0.5.
double cubic_weight(double t) {
    const double x = std::abs(t);
    if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

// One separable pass along a single axis.
void resample_axis(const std::vector<double>& src, int n_in, int n_lines, int stride_in,
                   int line_stride_in, std::vector<double>& dst, int n_out, int stride_out,
                   int line_stride_out, int channels) {
    const double scale = static_cast<double>(n_in) / n_out;
    for (int o = 0; o < n_out; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        const int base = static_cast<int>(std::floor(center)) - 1;
        double w[4];
        for (int k = 0; k < 4; ++k) w[k] = cubic_weight(center - (base + k));
        for (int line = 0; line < n_lines; ++line) {
            for (int ch = 0; ch < channels; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    const int idx = std::clamp(base + k, 0, n_in - 1);
                    acc += w[k] * src[static_cast<std::size_t>(line) * line_stride_in +
                                      static_cast<std::size_t>(idx) * stride_in + ch];
                }
                dst[static_cast<std::size_t>(line) * line_stride_out +
                    static_cast<std::size_t>(o) * stride_out + ch] = acc;
            }
        }
    }
}

} // namespace

ImageBuffer bicubic_resize(const ImageBuffer& img, int out_height, int out_width) {
    require(out_height >= 1 && out_width >= 1, Status::InvalidArg, "bicubic_resize: bad output size");
    const int ch = img.channels;

    std::vector<double> src(img.samples.begin(), img.samples.end());
    // Horizontal pass: height x out_width.
    std::vector<double> mid(static_cast<std::size_t>(img.height) * out_width * ch);
    resample_axis(src, img.width, img.height, ch, img.width * ch, mid, out_width, ch,
                  out_width * ch, ch);
    // Vertical pass: out_height x out_width. Lines are now columns.
    std::vector<double> fin(static_cast<std::size_t>(out_height) * out_width * ch);
    resample_axis(mid, img.height, out_width, out_width * ch, ch, fin, out_height, out_width * ch,
                  ch, ch);

    ImageBuffer out(out_height, out_width, ch);
    for (std::size_t i = 0; i < fin.size(); ++i)
        out.samples[i] = static_cast<float>(std::clamp(fin[i], 0.0, 1.0));
    return out;
}

ImageBuffer rgb_to_ycbcr(const ImageBuffer& img) {
    require(img.channels == 3, Status::InvalidArg, "rgb_to_ycbcr: 3-channel input required");
    ImageBuffer out(img.height, img.width, 3);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const float red = img.at(r, c, 0), green = img.at(r, c, 1), blue = img.at(r, c, 2);
            const float y = 0.299f * red + 0.587f * green + 0.114f * blue;
            out.at(r, c, 0) = y;
            out.at(r, c, 1) = 0.5f + (blue - y) / 1.772f;
            out.at(r, c, 2) = 0.5f + (red - y) / 1.402f;
        }
    }
    return out;
}

ImageBuffer ycbcr_to_rgb(const ImageBuffer& img) {
    require(img.channels == 3, Status::InvalidArg, "ycbcr_to_rgb: 3-channel input required");
    ImageBuffer out(img.height, img.width, 3);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const float y = img.at(r, c, 0);
            const float cb = img.at(r, c, 1) - 0.5f;
            const float cr = img.at(r, c, 2) - 0.5f;
            const float red = y + 1.402f * cr;
            const float blue = y + 1.772f * cb;
            const float green = (y - 0.299f * red - 0.114f * blue) / 0.587f;
            out.at(r, c, 0) = std::clamp(red, 0.0f, 1.0f);
            out.at(r, c, 1) = std::clamp(green, 0.0f, 1.0f);
            out.at(r, c, 2) = std::clamp(blue, 0.0f, 1.0f);
        }
    }
    return out;
}

ImageBuffer luminance(const ImageBuffer& img) {
    require(img.channels == 3, Status::InvalidArg, "luminance: 3-channel input required");
    ImageBuffer out(img.height, img.width, 1);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            out.at(r, c) =
                0.299f * img.at(r, c, 0) + 0.587f * img.at(r, c, 1) + 0.114f * img.at(r, c, 2);
    return out;
}

ImageBuffer combine_luma_chroma(const ImageBuffer& luma, const ImageBuffer& cb_cr_source) {
    require(luma.channels == 1 && cb_cr_source.channels == 3, Status::InvalidArg,
            "combine_luma_chroma: expects 1-channel luma and 3-channel ycbcr");
    require(luma.height == cb_cr_source.height && luma.width == cb_cr_source.width,
            Status::Dimension, "combine_luma_chroma: size mismatch");
    ImageBuffer out = cb_cr_source;
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c) out.at(r, c, 0) = luma.at(r, c);
    return out;
}

} // namespace dmrf::tasks
