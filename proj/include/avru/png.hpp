#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "avru/errors.hpp"
#include "avru/image.hpp"

namespace avru {

namespace detail {

inline void push_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                       const std::vector<std::uint8_t>& payload) {
    push_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    push_u32_be(out, static_cast<std::uint32_t>(crc));
}

} // namespace detail

// Encodes an 8-bit grayscale PNG (colour type 0, no alpha). Fixed zlib
// compression level keeps the byte stream reproducible run to run.
inline std::vector<std::uint8_t> encode_gray_png(const std::vector<std::uint8_t>& pixels, int h,
                                                 int w) {
    if (h <= 0 || w <= 0 || pixels.size() != static_cast<std::size_t>(h) * w)
        throw ConfigError("encode_gray_png: pixel buffer does not match dimensions");

    // Raw scanlines, filter byte 0 per row.
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h) * (w + 1));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), pixels.begin() + static_cast<std::size_t>(y) * w,
                   pixels.begin() + static_cast<std::size_t>(y + 1) * w);
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(comp_len);
    if (compress2(compressed.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) !=
        Z_OK)
        throw IoError("encode_gray_png: zlib compression failed");
    compressed.resize(comp_len);

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    detail::push_u32_be(ihdr, static_cast<std::uint32_t>(w));
    detail::push_u32_be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(0); // grayscale
    ihdr.push_back(0); // deflate
    ihdr.push_back(0); // filter method
    ihdr.push_back(0); // no interlace
    detail::push_chunk(out, "IHDR", ihdr);
    detail::push_chunk(out, "IDAT", compressed);
    detail::push_chunk(out, "IEND", {});
    return out;
}

inline void write_gray_png(const std::string& path, const Image& img) {
    const auto bytes = encode_gray_png(image_to_bytes(img), img.h, img.w);
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw IoError("write failed: " + path);
}

} // namespace avru
