#pragma once

#include <array>
#include <cstdint>

#include "avru/image.hpp"

namespace avru {

// Embedded 7x9 bitmap font covering the answer labels 'A'-'H' and the
// placeholder '?'. One byte per row, bit 6 = leftmost column.
inline constexpr int kGlyphW = 7;
inline constexpr int kGlyphH = 9;

namespace detail {

struct Glyph {
    char ch;
    std::array<std::uint8_t, kGlyphH> rows;
};

inline constexpr std::array<Glyph, 9> kGlyphs = {{
    {'A', {0b0011100, 0b0100010, 0b1000001, 0b1000001, 0b1111111, 0b1000001, 0b1000001, 0b1000001,
           0b1000001}},
    {'B', {0b1111110, 0b1000001, 0b1000001, 0b1111110, 0b1000001, 0b1000001, 0b1000001, 0b1000001,
           0b1111110}},
    {'C', {0b0111110, 0b1000001, 0b1000000, 0b1000000, 0b1000000, 0b1000000, 0b1000000, 0b1000001,
           0b0111110}},
    {'D', {0b1111110, 0b1000001, 0b1000001, 0b1000001, 0b1000001, 0b1000001, 0b1000001, 0b1000001,
           0b1111110}},
    {'E', {0b1111111, 0b1000000, 0b1000000, 0b1111110, 0b1000000, 0b1000000, 0b1000000, 0b1000000,
           0b1111111}},
    {'F', {0b1111111, 0b1000000, 0b1000000, 0b1111110, 0b1000000, 0b1000000, 0b1000000, 0b1000000,
           0b1000000}},
    {'G', {0b0111110, 0b1000001, 0b1000000, 0b1000000, 0b1001111, 0b1000001, 0b1000001, 0b1000001,
           0b0111110}},
    {'H', {0b1000001, 0b1000001, 0b1000001, 0b1111111, 0b1000001, 0b1000001, 0b1000001, 0b1000001,
           0b1000001}},
    {'?', {0b0111110, 0b1000001, 0b0000001, 0b0000010, 0b0000100, 0b0001000, 0b0001000, 0b0000000,
           0b0001000}},
}};

inline const Glyph& find_glyph(char ch) {
    for (const auto& g : kGlyphs)
        if (g.ch == ch)
            return g;
    throw ConfigError(std::string("no glyph for character '") + ch + "'");
}

} // namespace detail

// Draws ch into the box of size (box_h, box_w) anchored at (y0, x0),
// nearest-neighbour scaled from the 7x9 master bitmap.
inline void draw_glyph(Image& img, char ch, int y0, int x0, int box_h, int box_w, float ink) {
    const auto& glyph = detail::find_glyph(ch);
    for (int y = 0; y < box_h; ++y) {
        const int gy = y * kGlyphH / box_h;
        for (int x = 0; x < box_w; ++x) {
            const int gx = x * kGlyphW / box_w;
            if (glyph.rows[gy] >> (kGlyphW - 1 - gx) & 1)
                img.at(y0 + y, x0 + x) = ink;
        }
    }
}

// Box size for a glyph whose height should be `height`, preserving the 7:9
// master aspect ratio.
inline std::pair<int, int> glyph_box(int height) {
    const int h = std::max(height, 1);
    const int w = std::max(h * kGlyphW / kGlyphH, 1);
    return {h, w};
}

} // namespace avru
