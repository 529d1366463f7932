#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avru/errors.hpp"
#include "avru/image.hpp"
#include "avru/rng.hpp"

namespace avru {

// Panels are plain grayscale rasters; per-instance invariants (range,
// uniform dimensions) are enforced by validate_instance.
using Panel = Image;

enum class TaskFamily { rpm3x3, vap2x3 };

inline const char* family_name(TaskFamily f) {
    return f == TaskFamily::rpm3x3 ? "RPM3x3" : "VAP2x3";
}

inline TaskFamily family_from_name(const std::string& s) {
    if (s == "RPM3x3")
        return TaskFamily::rpm3x3;
    if (s == "VAP2x3")
        return TaskFamily::vap2x3;
    throw ConfigError("unknown task family: " + s);
}

// Grid geometry and panel-role metadata shared by all instances of a task.
struct TaskStructure {
    TaskFamily family = TaskFamily::rpm3x3;
    int context_rows = 3;
    int context_cols = 3;
    int n_context = 8;
    int n_a = 8;
    std::pair<int, int> missing_slot = {2, 2};

    static TaskStructure rpm(int n_answers) {
        return {TaskFamily::rpm3x3, 3, 3, 8, n_answers, {2, 2}};
    }
    static TaskStructure vap(int n_answers) {
        return {TaskFamily::vap2x3, 2, 3, 5, n_answers, {1, 2}};
    }
    static TaskStructure of(TaskFamily f, int n_answers) {
        return f == TaskFamily::rpm3x3 ? rpm(n_answers) : vap(n_answers);
    }
};

// Multi-hot encoding of the rules governing an instance, over the ordered
// rule vocabulary recorded in the dataset manifest.
struct RuleVector {
    std::vector<std::uint8_t> bits;

    bool operator==(const RuleVector& other) const { return bits == other.bits; }
};

struct MatrixInstance {
    std::vector<Panel> context;
    std::vector<Panel> answers;
    int correct = 0;
    RuleVector rules;

    int n_a() const { return static_cast<int>(answers.size()); }
};

struct SplitCounts {
    std::int64_t train = 0;
    std::int64_t val = 0;
    std::int64_t test = 0;
};

struct DatasetManifest {
    TaskStructure structure;
    int panel_h = 0;
    int panel_w = 0;
    std::vector<std::string> rule_vocab;
    SplitCounts splits;
    std::uint64_t seed = 0;
    int version = 1;
};

// Report-style validation: empty result means the instance satisfies every
// type invariant and matches the task structure.
inline std::vector<std::string> validate_instance(const MatrixInstance& inst,
                                                  const TaskStructure& s) {
    std::vector<std::string> report;
    if (static_cast<int>(inst.context.size()) != s.n_context)
        report.push_back("context panel count " + std::to_string(inst.context.size()) +
                         " does not match structure n_context " + std::to_string(s.n_context));
    if (inst.n_a() < 2)
        report.push_back("fewer than 2 answer panels");
    if (s.n_a != 0 && inst.n_a() != s.n_a)
        report.push_back("answer panel count " + std::to_string(inst.n_a()) +
                         " does not match structure n_a " + std::to_string(s.n_a));
    if (inst.correct < 0 || inst.correct >= inst.n_a())
        report.push_back("answer index out of range");

    int h = -1, w = -1;
    bool dims_reported = false, range_reported = false;
    auto check_panel = [&](const Panel& p) {
        if (p.h < 1 || p.w < 1) {
            if (!dims_reported)
                report.push_back("panel with empty dimensions");
            dims_reported = true;
            return;
        }
        if (h < 0) {
            h = p.h;
            w = p.w;
        } else if ((p.h != h || p.w != w) && !dims_reported) {
            report.push_back("panel dimensions not uniform");
            dims_reported = true;
        }
        if (!range_reported) {
            for (float v : p.px) {
                if (!(v >= 0.0f && v <= 1.0f)) {
                    report.push_back("intensity out of [0,1]");
                    range_reported = true;
                    break;
                }
            }
        }
    };
    for (const auto& p : inst.context)
        check_panel(p);
    for (const auto& p : inst.answers)
        check_panel(p);
    return report;
}

// Deletes n_a - target_n_a answer panels, sampled uniformly without
// replacement from the incorrect ones. The correct panel always survives,
// surviving answers keep their relative order, and the correct index is
// remapped accordingly.
inline MatrixInstance reduce_answers(const MatrixInstance& inst, int target_n_a, Rng& rng) {
    const int n = inst.n_a();
    if (target_n_a < 2 || target_n_a > n)
        throw ConfigError("reduce_answers: target " + std::to_string(target_n_a) +
                          " outside [2, " + std::to_string(n) + "]");
    if (target_n_a == n)
        return inst;

    std::vector<std::size_t> incorrect;
    incorrect.reserve(n - 1);
    for (int i = 0; i < n; ++i)
        if (i != inst.correct)
            incorrect.push_back(static_cast<std::size_t>(i));

    const std::size_t n_remove = static_cast<std::size_t>(n - target_n_a);
    const auto pick = rng.sample_without_replacement(incorrect.size(), n_remove);
    std::vector<bool> removed(static_cast<std::size_t>(n), false);
    for (std::size_t k : pick)
        removed[incorrect[k]] = true;

    MatrixInstance out;
    out.context = inst.context;
    out.rules = inst.rules;
    for (int i = 0; i < n; ++i) {
        if (removed[static_cast<std::size_t>(i)])
            continue;
        if (i == inst.correct)
            out.correct = static_cast<int>(out.answers.size());
        out.answers.push_back(inst.answers[static_cast<std::size_t>(i)]);
    }
    return out;
}

} // namespace avru
