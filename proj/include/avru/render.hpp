#pragma once

#include <utility>
#include <vector>

#include "avru/errors.hpp"
#include "avru/font.hpp"
#include "avru/image.hpp"
#include "avru/instance.hpp"

namespace avru {

// Layout constants for compositing a problem instance into one image.
// Margins are in source-resolution pixels, before the final aspect-
// preserving resize onto the canvas.
struct RenderLayout {
    int margin = 2;           // gap between panels within a grid
    int grid_gap = 4;         // vertical gap between context and answer grids
    float background = 1.0f;  // white
    float ink = 0.0f;         // black
    double label_band_frac = 0.25; // label band height as fraction of panel height
    double qmark_frac = 0.5;       // '?' glyph height as fraction of panel height
};

// Single-image view of an instance: the model's sole input.
struct UnifiedSample {
    Image canvas;
    int label = 0;
    RuleVector rules;
    int n_a = 0;
};

// Canvas rule: width fixed at 416; height 384 for VAPs, 448 for RPMs with
// n_a <= 4, 544 for RPMs with 4 < n_a <= 8. All divisible by 16.
inline std::pair<int, int> canvas_size(const TaskStructure& s) {
    if (s.n_a < 2 || s.n_a > 8)
        throw ConfigError("canvas_size: n_a " + std::to_string(s.n_a) + " outside [2, 8]");
    switch (s.family) {
    case TaskFamily::vap2x3:
        return {384, 416};
    case TaskFamily::rpm3x3:
        return {s.n_a <= 4 ? 448 : 544, 416};
    }
    throw ConfigError("canvas_size: unsupported task family");
}

// Context panels placed row-major; the missing slot holds a blank panel
// with a centred question mark.
inline Image compose_context_grid(const MatrixInstance& inst, const TaskStructure& s,
                                  const RenderLayout& layout) {
    if (static_cast<int>(inst.context.size()) != s.n_context)
        throw ConfigError("compose_context_grid: expected " + std::to_string(s.n_context) +
                          " context panels, got " + std::to_string(inst.context.size()));
    const int ph = inst.context.front().h;
    const int pw = inst.context.front().w;
    const int rows = s.context_rows;
    const int cols = s.context_cols;
    Image grid(rows * ph + (rows - 1) * layout.margin, cols * pw + (cols - 1) * layout.margin,
               layout.background);

    std::size_t next = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int y0 = r * (ph + layout.margin);
            const int x0 = c * (pw + layout.margin);
            if (std::make_pair(r, c) == s.missing_slot) {
                const auto [gh, gw] = glyph_box(static_cast<int>(ph * layout.qmark_frac));
                draw_glyph(grid, '?', y0 + (ph - gh) / 2, x0 + (pw - gw) / 2, gh, gw, layout.ink);
            } else {
                blit(grid, inst.context[next++], y0, x0);
            }
        }
    }
    return grid;
}

// Answer panels row-major, up to 4 per row, each with its letter label in
// a band above the panel.
inline Image compose_answer_grid(const std::vector<Panel>& answers, const RenderLayout& layout) {
    const int n = static_cast<int>(answers.size());
    if (n < 2 || n > 8)
        throw ConfigError("compose_answer_grid: answer count " + std::to_string(n) +
                          " outside [2, 8]");
    const int ph = answers.front().h;
    const int pw = answers.front().w;
    const int band = std::max(1, static_cast<int>(ph * layout.label_band_frac));
    const int cell_h = band + ph;
    const int rows = (n + 3) / 4;
    const int cols = std::min(n, 4);
    Image grid(rows * cell_h + (rows - 1) * layout.margin,
               cols * pw + (cols - 1) * layout.margin, layout.background);

    for (int i = 0; i < n; ++i) {
        const int r = i / 4;
        const int c = i % 4;
        const int y0 = r * (cell_h + layout.margin);
        const int x0 = c * (pw + layout.margin);
        const auto [gh, gw] = glyph_box(band > 2 ? band - 2 : band);
        draw_glyph(grid, static_cast<char>('A' + i), y0 + (band - gh) / 2, x0 + (pw - gw) / 2, gh,
                   gw, layout.ink);
        blit(grid, answers[static_cast<std::size_t>(i)], y0 + band, x0);
    }
    return grid;
}

// Full composite at source resolution: context grid above answer grid,
// both centred on the common width.
inline Image compose_instance(const MatrixInstance& inst, const TaskStructure& s,
                              const RenderLayout& layout) {
    const Image ctx = compose_context_grid(inst, s, layout);
    const Image ans = compose_answer_grid(inst.answers, layout);
    const int w = std::max(ctx.w, ans.w);
    Image out(ctx.h + layout.grid_gap + ans.h, w, layout.background);
    blit(out, ctx, 0, (w - ctx.w) / 2);
    blit(out, ans, ctx.h + layout.grid_gap, (w - ans.w) / 2);
    return out;
}

// Rendering algorithm: composite, resize onto the target canvas keeping
// the aspect ratio, quantize to the 8-bit lattice. Pure function of its
// inputs, so identical inputs yield byte-identical canvases.
inline UnifiedSample render_unified_to(const MatrixInstance& inst, const TaskStructure& s,
                                       const RenderLayout& layout, int target_h, int target_w) {
    const auto report = validate_instance(inst, s);
    if (!report.empty())
        throw ConfigError("render_unified: invalid instance: " + report.front());
    UnifiedSample sample;
    sample.canvas = resize_preserve_aspect(compose_instance(inst, s, layout), target_h, target_w,
                                           layout.background);
    quantize_u8(sample.canvas);
    sample.label = inst.correct;
    sample.rules = inst.rules;
    sample.n_a = inst.n_a();
    return sample;
}

inline UnifiedSample render_unified(const MatrixInstance& inst, const TaskStructure& s,
                                    const RenderLayout& layout = {}) {
    const auto [h, w] = canvas_size(s);
    return render_unified_to(inst, s, layout, h, w);
}

} // namespace avru
