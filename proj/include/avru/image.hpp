#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "avru/errors.hpp"

namespace avru {

// Row-major grayscale raster with intensities in [0, 1].
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> px;

    Image() = default;
    Image(int height, int width, float fill = 0.0f)
        : h(height), w(width), px(static_cast<std::size_t>(height) * width, fill) {}

    float& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
    bool empty() const { return h == 0 || w == 0; }
};

inline bool operator==(const Image& a, const Image& b) {
    return a.h == b.h && a.w == b.w && a.px == b.px;
}

// Copies src into dst with its top-left corner at (y0, x0). Caller
// guarantees the destination rectangle is in bounds.
inline void blit(Image& dst, const Image& src, int y0, int x0) {
    assert(y0 >= 0 && x0 >= 0 && y0 + src.h <= dst.h && x0 + src.w <= dst.w);
    for (int y = 0; y < src.h; ++y) {
        const float* s = src.px.data() + static_cast<std::size_t>(y) * src.w;
        float* d = dst.px.data() + static_cast<std::size_t>(y0 + y) * dst.w + x0;
        std::copy(s, s + src.w, d);
    }
}

inline std::uint8_t to_u8(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

inline float from_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

inline std::vector<std::uint8_t> image_to_bytes(const Image& img) {
    std::vector<std::uint8_t> out(img.px.size());
    for (std::size_t i = 0; i < img.px.size(); ++i)
        out[i] = to_u8(img.px[i]);
    return out;
}

// Snaps every intensity onto the 8-bit lattice k/255.
inline void quantize_u8(Image& img) {
    for (float& v : img.px)
        v = from_u8(to_u8(v));
}

// Bilinear sample at continuous (y, x) with edge clamping. Output pixel
// centres map to source coordinates via (i + 0.5) / scale - 0.5, so a
// scale of exactly 1 reproduces the input bit-for-bit.
inline float sample_bilinear(const Image& img, double y, double x) {
    const double yc = std::clamp(y, 0.0, static_cast<double>(img.h - 1));
    const double xc = std::clamp(x, 0.0, static_cast<double>(img.w - 1));
    int y0 = static_cast<int>(std::floor(yc));
    int x0 = static_cast<int>(std::floor(xc));
    y0 = std::min(y0, img.h - 2 >= 0 ? img.h - 2 : 0);
    x0 = std::min(x0, img.w - 2 >= 0 ? img.w - 2 : 0);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const int x1 = std::min(x0 + 1, img.w - 1);
    const double fy = yc - y0;
    const double fx = xc - x0;
    const double top = (1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
    const double bot = (1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
    return static_cast<float>((1.0 - fy) * top + fy * bot);
}

inline Image resize_bilinear(const Image& img, int out_h, int out_w) {
    assert(!img.empty() && out_h > 0 && out_w > 0);
    Image out(out_h, out_w);
    const double sy = static_cast<double>(img.h) / out_h;
    const double sx = static_cast<double>(img.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double srcy = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double srcx = (x + 0.5) * sx - 0.5;
            out.at(y, x) = sample_bilinear(img, srcy, srcx);
        }
    }
    return out;
}

// Scales img by s = min(target_h/h, target_w/w), keeping the aspect ratio,
// and centres the result on a background-filled target canvas.
inline Image resize_preserve_aspect(const Image& img, int target_h, int target_w,
                                    float background) {
    if (img.empty())
        throw ConfigError("resize_preserve_aspect: empty input image");
    if (target_h <= 0 || target_w <= 0)
        throw ConfigError("resize_preserve_aspect: target dimensions must be positive");
    const double s = std::min(static_cast<double>(target_h) / img.h,
                              static_cast<double>(target_w) / img.w);
    const int out_h = std::max(1, static_cast<int>(std::lround(s * img.h)));
    const int out_w = std::max(1, static_cast<int>(std::lround(s * img.w)));
    Image scaled = (out_h == img.h && out_w == img.w) ? img : resize_bilinear(img, out_h, out_w);
    Image canvas(target_h, target_w, background);
    blit(canvas, scaled, (target_h - out_h) / 2, (target_w - out_w) / 2);
    return canvas;
}

} // namespace avru
