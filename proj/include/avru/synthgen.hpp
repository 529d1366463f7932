#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "avru/dataset_io.hpp"
#include "avru/errors.hpp"
#include "avru/instance.hpp"
#include "avru/rng.hpp"

namespace avru {

// Kind order doubles as the perturbation wheel for distractors.
enum class ShapeKind { circle = 0, triangle = 1, pentagon = 2, hexagon = 3, square = 4 };
enum class Attr { kind = 0, size = 1, shade = 2, rotation = 3 };
enum class RuleKind { constant = 0, progression = 1, distribute_three = 2 };

inline constexpr int kNumKinds = 5;
inline constexpr int kNumLevels = 5;    // size and shade levels 1..5
inline constexpr int kNumRotations = 8; // multiples of 45 degrees

inline const char* attr_name(Attr a) {
    switch (a) {
    case Attr::kind: return "kind";
    case Attr::size: return "size";
    case Attr::shade: return "shade";
    case Attr::rotation: return "rotation";
    }
    return "?";
}

inline const char* rule_name(RuleKind r) {
    switch (r) {
    case RuleKind::constant: return "constant";
    case RuleKind::progression: return "progression";
    case RuleKind::distribute_three: return "distribute_three";
    }
    return "?";
}

// One shape per panel, centred; the whole attribute state of a panel.
struct ShapeSpec {
    ShapeKind kind = ShapeKind::circle;
    int size = 3;     // ordinal 1..5
    int shade = 1;    // ordinal 1..5
    int rotation = 0; // ordinal 0..7

    bool operator==(const ShapeSpec& o) const {
        return kind == o.kind && size == o.size && shade == o.shade && rotation == o.rotation;
    }
};

struct RuleSpec {
    RuleKind rule = RuleKind::constant;
    Attr attr = Attr::size;
    int direction = 0; // +1/-1 for progression, 0 otherwise

    bool operator==(const RuleSpec& o) const {
        return rule == o.rule && attr == o.attr && direction == o.direction;
    }
};

struct GeneratorConfig {
    TaskFamily family = TaskFamily::rpm3x3;
    int panel_h = 64;
    int panel_w = 64;
    int n_a = 4;
    int rules_min = 1;
    int rules_max = 1;
    std::int64_t n_train = 0;
    std::int64_t n_val = 0;
    std::int64_t n_test = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (panel_h < 16 || panel_w < 16)
            throw ConfigError("generator: panel dimensions must be at least 16x16");
        if (n_a < 2 || n_a > 8)
            throw ConfigError("generator: n_a must be in [2, 8]");
        if (rules_min < 1 || rules_max > 3 || rules_min > rules_max)
            throw ConfigError("generator: rules-per-instance range must satisfy 1 <= min <= max <= 3");
        if (family == TaskFamily::vap2x3 && (rules_min != 1 || rules_max != 1))
            throw ConfigError("generator: VAP instances carry exactly one transferred rule");
        if (n_train < 0 || n_val < 0 || n_test < 0)
            throw ConfigError("generator: split counts must be non-negative");
    }
};

// ---------------------------------------------------------------------------
// Legal rule table and vocabulary
// ---------------------------------------------------------------------------

// Progression is undefined on kind. VAP drops constancy: a constant row
// carries no pattern worth transferring across attributes.
inline bool rule_legal(TaskFamily family, RuleKind r, Attr a) {
    if (r == RuleKind::progression && a == Attr::kind)
        return false;
    if (family == TaskFamily::vap2x3 && r == RuleKind::constant)
        return false;
    return true;
}

inline std::vector<std::pair<RuleKind, Attr>> legal_pairs(TaskFamily family) {
    std::vector<std::pair<RuleKind, Attr>> out;
    for (RuleKind r : {RuleKind::constant, RuleKind::progression, RuleKind::distribute_three})
        for (Attr a : {Attr::kind, Attr::size, Attr::shade, Attr::rotation})
            if (rule_legal(family, r, a))
                out.emplace_back(r, a);
    return out;
}

inline std::vector<std::string> rule_vocabulary(TaskFamily family) {
    std::vector<std::string> out;
    for (const auto& [r, a] : legal_pairs(family))
        out.push_back(std::string(rule_name(r)) + ":" + attr_name(a));
    return out;
}

// Multi-hot vector: bit i set iff vocabulary[i] names a (rule, attr) pair
// present in specs.
inline RuleVector encode_rules(const std::vector<RuleSpec>& specs,
                               const std::vector<std::string>& vocabulary) {
    RuleVector out;
    out.bits.assign(vocabulary.size(), 0);
    for (const auto& spec : specs) {
        const std::string name = std::string(rule_name(spec.rule)) + ":" + attr_name(spec.attr);
        const auto it = std::find(vocabulary.begin(), vocabulary.end(), name);
        if (it == vocabulary.end())
            throw ConfigError("encode_rules: pair not in vocabulary: " + name);
        out.bits[static_cast<std::size_t>(it - vocabulary.begin())] = 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rule sampling
// ---------------------------------------------------------------------------

namespace detail {

inline int attr_rule_count(TaskFamily family, Attr a) {
    int n = 0;
    for (RuleKind r : {RuleKind::constant, RuleKind::progression, RuleKind::distribute_three})
        if (rule_legal(family, r, a))
            ++n;
    return n;
}

inline RuleSpec make_rule(Rng& rng, TaskFamily family, Attr a) {
    std::vector<RuleKind> options;
    for (RuleKind r : {RuleKind::constant, RuleKind::progression, RuleKind::distribute_three})
        if (rule_legal(family, r, a))
            options.push_back(r);
    RuleSpec spec;
    spec.attr = a;
    spec.rule = options[rng.uniform_index(options.size())];
    spec.direction = spec.rule == RuleKind::progression ? (rng.bernoulli(0.5) ? 1 : -1) : 0;
    return spec;
}

} // namespace detail

// Draws 1-3 rules with pairwise-distinct attributes such that every legal
// (rule, attr) pair has the same marginal frequency. With the RPM table
// (kind supports 2 rules, the other attributes 3 each, 11 pairs total) a
// uniform draw over valid rule sets would under-represent the non-kind
// pairs, so kind's inclusion is decided first with probability
// k * w_kind / W, which makes every pair's marginal exactly k / |pairs|.
inline std::vector<RuleSpec> sample_rules(Rng& rng, const GeneratorConfig& config) {
    const TaskFamily family = config.family;
    if (family == TaskFamily::vap2x3) {
        // One transferred rule: the same rule kind instantiated on a source
        // attribute (row 1) and a different target attribute (row 2).
        // Marginals over the 7-pair VAP vocabulary stay flat when the rule
        // kind is drawn with probability proportional to its attr count.
        std::vector<Attr> prog_attrs = {Attr::size, Attr::shade, Attr::rotation};
        std::vector<Attr> d3_attrs = {Attr::kind, Attr::size, Attr::shade, Attr::rotation};
        const bool use_prog = rng.uniform_int(0, 6) < 3;
        const auto& attrs = use_prog ? prog_attrs : d3_attrs;
        const auto pick = rng.sample_without_replacement(attrs.size(), 2);
        RuleSpec src, tgt;
        src.rule = tgt.rule = use_prog ? RuleKind::progression : RuleKind::distribute_three;
        src.attr = attrs[pick[0]];
        tgt.attr = attrs[pick[1]];
        src.direction = tgt.direction = use_prog ? (rng.bernoulli(0.5) ? 1 : -1) : 0;
        return {src, tgt};
    }

    const int k = rng.uniform_int(config.rules_min, config.rules_max);
    const int w_kind = detail::attr_rule_count(family, Attr::kind);
    const int total_pairs = static_cast<int>(legal_pairs(family).size());
    const bool with_kind = rng.uniform_int(0, total_pairs - 1) < k * w_kind;

    std::vector<Attr> others = {Attr::size, Attr::shade, Attr::rotation};
    const std::size_t n_other = static_cast<std::size_t>(with_kind ? k - 1 : k);
    const auto pick = rng.sample_without_replacement(others.size(), n_other);

    std::vector<RuleSpec> rules;
    if (with_kind)
        rules.push_back(detail::make_rule(rng, family, Attr::kind));
    for (std::size_t i : pick)
        rules.push_back(detail::make_rule(rng, family, others[i]));
    return rules;
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

namespace detail {

// cos/sin for multiples of 45 degrees, exact up to the float literal, so
// that rotations mapping a polygon onto itself reproduce the vertex set
// bit-for-bit (e.g. a square rotated by 90 degrees).
inline bool axis45_trig(int degrees, double& c, double& s) {
    int d = degrees % 360;
    if (d < 0)
        d += 360;
    if (d % 45 != 0)
        return false;
    static const double k = 0.70710678118654752440084436210485;
    static const double table[8][2] = {{1, 0},  {k, k},  {0, 1},  {-k, k},
                                       {-1, 0}, {-k, -k}, {0, -1}, {k, -k}};
    c = table[d / 45][0];
    s = table[d / 45][1];
    return true;
}

inline void vertex_at(int degrees, double cx, double cy, double radius, double& x, double& y) {
    double c, s;
    if (!axis45_trig(degrees, c, s)) {
        const double rad = degrees * (3.14159265358979323846 / 180.0);
        c = std::cos(rad);
        s = std::sin(rad);
    }
    x = cx + radius * c;
    y = cy + radius * s;
}

inline bool point_in_polygon(const std::vector<std::pair<double, double>>& verts, double px,
                             double py) {
    bool inside = false;
    const std::size_t n = verts.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [x1, y1] = verts[i];
        const auto& [x2, y2] = verts[(i + 1) % n];
        if ((y1 > py) != (y2 > py)) {
            const double t = (py - y1) / (y2 - y1);
            if (px < x1 + t * (x2 - x1))
                inside = !inside;
        }
    }
    return inside;
}

} // namespace detail

inline double size_radius_fraction(int size_level) {
    static const double fractions[kNumLevels] = {0.15, 0.25, 0.35, 0.45, 0.55};
    return fractions[size_level - 1];
}

inline float shade_intensity(int shade_level) {
    static const float values[kNumLevels] = {0.0f, 0.2f, 0.4f, 0.6f, 0.8f};
    return values[shade_level - 1];
}

// Scanline fill of the shape on a white panel, no anti-aliasing. Size maps
// to a radius fraction of the panel half-extent, rotation to multiples of
// 45 degrees about the centroid.
inline Panel rasterize_shape(const ShapeSpec& spec, int h, int w) {
    if (h < 16 || w < 16)
        throw ConfigError("rasterize_shape: panel must be at least 16x16");
    Panel panel(h, w, 1.0f);
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;
    const double radius = size_radius_fraction(spec.size) * (std::min(h, w) / 2.0);
    const float ink = shade_intensity(spec.shade);

    if (spec.kind == ShapeKind::circle) {
        const double r2 = radius * radius;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2)
                    panel.at(y, x) = ink;
        return panel;
    }

    int n_verts = 0, base = 0, step = 0;
    switch (spec.kind) {
    case ShapeKind::triangle: n_verts = 3; base = -90; step = 120; break;
    case ShapeKind::pentagon: n_verts = 5; base = -90; step = 72; break;
    case ShapeKind::hexagon: n_verts = 6; base = -90; step = 60; break;
    case ShapeKind::square: n_verts = 4; base = 45; step = 90; break;
    case ShapeKind::circle: break;
    }
    std::vector<std::pair<double, double>> verts(static_cast<std::size_t>(n_verts));
    for (int i = 0; i < n_verts; ++i)
        detail::vertex_at(base + i * step + spec.rotation * 45, cx, cy, radius,
                          verts[static_cast<std::size_t>(i)].first,
                          verts[static_cast<std::size_t>(i)].second);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (detail::point_in_polygon(verts, x, y))
                panel.at(y, x) = ink;
    return panel;
}

// ---------------------------------------------------------------------------
// Instance generation
// ---------------------------------------------------------------------------

struct GeneratedTrace {
    MatrixInstance instance;
    std::vector<ShapeSpec> grid;         // full grid row-major, missing slot = correct answer
    std::vector<ShapeSpec> answer_specs; // aligned with instance.answers
    std::vector<RuleSpec> rules;         // for VAP: [source, target]
};

namespace detail {

inline int attr_domain_size(Attr a, int n_kinds) {
    switch (a) {
    case Attr::kind: return n_kinds;
    case Attr::size:
    case Attr::shade: return kNumLevels;
    case Attr::rotation: return kNumRotations;
    }
    return 0;
}

inline int get_attr(const ShapeSpec& s, Attr a, const std::vector<ShapeKind>& kind_wheel) {
    switch (a) {
    case Attr::kind: {
        const auto it = std::find(kind_wheel.begin(), kind_wheel.end(), s.kind);
        return static_cast<int>(it - kind_wheel.begin());
    }
    case Attr::size: return s.size - 1;
    case Attr::shade: return s.shade - 1;
    case Attr::rotation: return s.rotation;
    }
    return 0;
}

inline void set_attr(ShapeSpec& s, Attr a, int idx, const std::vector<ShapeKind>& kind_wheel) {
    switch (a) {
    case Attr::kind: s.kind = kind_wheel[static_cast<std::size_t>(idx)]; break;
    case Attr::size: s.size = idx + 1; break;
    case Attr::shade: s.shade = idx + 1; break;
    case Attr::rotation: s.rotation = idx; break;
    }
}

// Per-row attribute values realizing one rule across a grid of `rows` rows
// of 3, as 0-based indices into the attribute's domain.
inline std::vector<std::array<int, 3>> instantiate_rule(Rng& rng, const RuleSpec& rule, int rows,
                                                        int domain) {
    std::vector<std::array<int, 3>> out(static_cast<std::size_t>(rows));
    switch (rule.rule) {
    case RuleKind::constant: {
        const int v = rng.uniform_int(0, domain - 1);
        for (auto& row : out)
            row = {v, v, v};
        break;
    }
    case RuleKind::progression: {
        for (auto& row : out) {
            const int start = rule.direction > 0 ? rng.uniform_int(0, domain - 3)
                                                 : rng.uniform_int(2, domain - 1);
            row = {start, start + rule.direction, start + 2 * rule.direction};
        }
        break;
    }
    case RuleKind::distribute_three: {
        const auto values = rng.sample_without_replacement(static_cast<std::size_t>(domain), 3);
        for (auto& row : out) {
            std::array<int, 3> perm = {static_cast<int>(values[0]), static_cast<int>(values[1]),
                                       static_cast<int>(values[2])};
            for (int i = 2; i > 0; --i)
                std::swap(perm[static_cast<std::size_t>(i)],
                          perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
            row = perm;
        }
        break;
    }
    }
    return out;
}

// Distractors perturb one governed attribute of the correct answer. The
// first attempts step by +/-1 on the attribute wheel to keep distractors
// hard; once those collide, the offset widens to any nonzero step so that
// instances with few governed attributes can still fill n_a - 1 slots.
inline std::vector<ShapeSpec> make_distractors(Rng& rng, const ShapeSpec& correct,
                                               const std::vector<Attr>& governed, int count,
                                               const std::vector<ShapeKind>& kind_wheel) {
    std::vector<ShapeSpec> out;
    int attempts = 0;
    const int near_attempts = 4 * count;
    while (static_cast<int>(out.size()) < count) {
        if (++attempts > 100)
            throw GenerationError("distractor retry limit exceeded");
        const Attr attr = governed[rng.uniform_index(governed.size())];
        const int domain = attr_domain_size(attr, static_cast<int>(kind_wheel.size()));
        const int cur = get_attr(correct, attr, kind_wheel);
        int offset;
        if (attempts <= near_attempts)
            offset = rng.bernoulli(0.5) ? 1 : domain - 1;
        else
            offset = rng.uniform_int(1, domain - 1);
        ShapeSpec cand = correct;
        set_attr(cand, attr, (cur + offset) % domain, kind_wheel);
        if (cand == correct)
            continue;
        if (std::find(out.begin(), out.end(), cand) != out.end())
            continue;
        out.push_back(cand);
    }
    return out;
}

inline bool has_attr(const std::vector<RuleSpec>& rules, Attr a) {
    return std::any_of(rules.begin(), rules.end(),
                       [a](const RuleSpec& r) { return r.attr == a; });
}

inline bool has_pair(const std::vector<RuleSpec>& rules, RuleKind rk, Attr a) {
    return std::any_of(rules.begin(), rules.end(),
                       [&](const RuleSpec& r) { return r.rule == rk && r.attr == a; });
}

} // namespace detail

// Builds one instance: context panels realize every sampled rule row-wise,
// the correct answer completes the last row under all of them, and each
// distractor breaks at least one. Attributes not governed by any rule are
// held constant across the instance.
//
// When rotation is governed, panel kinds are restricted to triangles and
// pentagons: no multiple of 45 degrees maps either onto itself, so every
// rotation level stays visually distinct. Rule sets combining a rotation
// rule with distribute_three on kind are resampled (two kinds cannot
// yield three distinct values).
inline GeneratedTrace generate_instance_traced(Rng& rng, const GeneratorConfig& config) {
    config.validate();
    static const std::vector<ShapeKind> all_kinds = {ShapeKind::circle, ShapeKind::triangle,
                                                     ShapeKind::pentagon, ShapeKind::hexagon,
                                                     ShapeKind::square};
    static const std::vector<ShapeKind> rotation_safe_kinds = {ShapeKind::triangle,
                                                               ShapeKind::pentagon};
    const bool is_vap = config.family == TaskFamily::vap2x3;
    const int rows = is_vap ? 2 : 3;
    const int cols = 3;

    for (int attempt = 0; attempt < 100; ++attempt) {
        const std::vector<RuleSpec> rules = sample_rules(rng, config);
        if (detail::has_attr(rules, Attr::rotation) &&
            detail::has_pair(rules, RuleKind::distribute_three, Attr::kind))
            continue;
        const auto& kind_wheel =
            detail::has_attr(rules, Attr::rotation) ? rotation_safe_kinds : all_kinds;

        // The target rule governs the answer's row; for RPMs every rule does.
        std::vector<Attr> governed;
        if (is_vap)
            governed = {rules[1].attr};
        else
            for (const auto& r : rules)
                governed.push_back(r.attr);

        // Distractor capacity check: each governed attribute contributes at
        // most domain-1 distinct perturbations.
        int capacity = 0;
        for (Attr a : governed)
            capacity += detail::attr_domain_size(a, static_cast<int>(kind_wheel.size())) - 1;
        if (capacity < config.n_a - 1)
            continue;

        // Ungoverned attributes: one value for the whole instance.
        std::vector<ShapeSpec> grid(static_cast<std::size_t>(rows * cols));
        {
            ShapeSpec base;
            base.kind = kind_wheel[rng.uniform_index(kind_wheel.size())];
            base.size = rng.uniform_int(1, kNumLevels);
            base.shade = rng.uniform_int(1, kNumLevels);
            base.rotation = rng.uniform_int(0, kNumRotations - 1);
            std::fill(grid.begin(), grid.end(), base);
        }

        for (std::size_t ri = 0; ri < rules.size(); ++ri) {
            const RuleSpec& rule = rules[ri];
            const int domain =
                detail::attr_domain_size(rule.attr, static_cast<int>(kind_wheel.size()));
            // VAP: rules[0] acts on row 1 only, rules[1] on row 2 only.
            const int row_lo = is_vap ? static_cast<int>(ri) : 0;
            const int row_hi = is_vap ? static_cast<int>(ri) + 1 : rows;
            const auto values = detail::instantiate_rule(rng, rule, row_hi - row_lo, domain);
            for (int r = row_lo; r < row_hi; ++r)
                for (int c = 0; c < cols; ++c)
                    detail::set_attr(grid[static_cast<std::size_t>(r * cols + c)], rule.attr,
                                     values[static_cast<std::size_t>(r - row_lo)]
                                           [static_cast<std::size_t>(c)],
                                     kind_wheel);
        }

        const std::size_t missing = static_cast<std::size_t>(rows * cols - 1);
        const ShapeSpec correct = grid[missing];
        std::vector<ShapeSpec> distractors;
        try {
            distractors =
                detail::make_distractors(rng, correct, governed, config.n_a - 1, kind_wheel);
        } catch (const GenerationError&) {
            continue;
        }

        GeneratedTrace trace;
        trace.rules = rules;
        trace.grid = grid;

        // Shuffle the correct answer among the distractors.
        trace.answer_specs.assign(distractors.begin(), distractors.end());
        const int correct_pos = rng.uniform_int(0, config.n_a - 1);
        trace.answer_specs.insert(trace.answer_specs.begin() + correct_pos, correct);

        MatrixInstance inst;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (i != missing)
                inst.context.push_back(rasterize_shape(grid[i], config.panel_h, config.panel_w));
        for (const auto& spec : trace.answer_specs)
            inst.answers.push_back(rasterize_shape(spec, config.panel_h, config.panel_w));
        inst.correct = correct_pos;
        inst.rules = encode_rules(rules, rule_vocabulary(config.family));
        trace.instance = std::move(inst);
        return trace;
    }
    throw GenerationError("instance retry limit exceeded (degenerate rule configuration)");
}

inline MatrixInstance generate_instance(Rng& rng, const GeneratorConfig& config) {
    return generate_instance_traced(rng, config).instance;
}

// Pure function of (master seed, split, index): regenerating any record
// reproduces it byte-exactly.
inline MatrixInstance generate_nth(const GeneratorConfig& config, Split split, std::int64_t index) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(split) + 1,
                        static_cast<std::uint64_t>(index)));
    return generate_instance(rng, config);
}

inline Dataset generate_dataset(const GeneratorConfig& config) {
    config.validate();
    Dataset ds;
    ds.manifest.structure = TaskStructure::of(config.family, config.n_a);
    ds.manifest.panel_h = config.panel_h;
    ds.manifest.panel_w = config.panel_w;
    ds.manifest.rule_vocab = rule_vocabulary(config.family);
    ds.manifest.splits = {config.n_train, config.n_val, config.n_test};
    ds.manifest.seed = config.seed;

    const std::int64_t counts[3] = {config.n_train, config.n_val, config.n_test};
    for (int s = 0; s < 3; ++s) {
        auto& out = ds.splits[static_cast<std::size_t>(s)];
        out.resize(static_cast<std::size_t>(counts[s]));
        for (std::int64_t i = 0; i < counts[s]; ++i)
            out[static_cast<std::size_t>(i)] = generate_nth(config, static_cast<Split>(s), i);
    }
    return ds;
}

} // namespace avru
