#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avru/errors.hpp"
#include "avru/instance.hpp"

namespace avru {

enum class Split { train = 0, val = 1, test = 2 };

inline constexpr std::array<const char*, 3> kSplitNames = {"train", "val", "test"};

inline Split split_from_name(const std::string& s) {
    for (std::size_t i = 0; i < kSplitNames.size(); ++i)
        if (s == kSplitNames[i])
            return static_cast<Split>(i);
    throw ConfigError("unknown split: " + s);
}

// In-memory dataset: manifest plus one instance vector per split.
struct Dataset {
    DatasetManifest manifest;
    std::array<std::vector<MatrixInstance>, 3> splits;

    const std::vector<MatrixInstance>& split(Split s) const {
        return splits[static_cast<std::size_t>(s)];
    }
    std::vector<MatrixInstance>& split(Split s) { return splits[static_cast<std::size_t>(s)]; }
};

namespace detail {

inline constexpr char kRecordMagic[4] = {'A', 'V', 'R', 'U'};
inline constexpr std::uint16_t kRecordVersion = 1;

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

class ByteReader {
  public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    bool at_end() const { return pos_ >= size_; }

    const std::uint8_t* take(std::size_t n, const char* what) {
        if (pos_ + n > size_)
            throw FormatError(FormatError::Kind::truncated,
                              std::string("truncated record: expected ") + what);
        const std::uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    std::uint16_t u16(const char* what) {
        const std::uint8_t* p = take(2, what);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

  private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline void append_panel(std::vector<std::uint8_t>& out, const Panel& p) {
    for (float v : p.px)
        out.push_back(to_u8(v));
}

inline Panel read_panel(ByteReader& r, int h, int w) {
    Panel p(h, w);
    const std::uint8_t* bytes = r.take(static_cast<std::size_t>(h) * w, "panel pixels");
    for (std::size_t i = 0; i < p.px.size(); ++i)
        p.px[i] = from_u8(bytes[i]);
    return p;
}

} // namespace detail

// One record: little-endian header (magic "AVRU", u16 version, u16 n_context,
// u16 n_a, u16 h, u16 w, u16 |r|, u16 correct), raw 8-bit panels (context
// then answers, row-major), then |r| rule bytes.
inline void append_record(std::vector<std::uint8_t>& out, const MatrixInstance& inst, int panel_h,
                          int panel_w) {
    out.insert(out.end(), detail::kRecordMagic, detail::kRecordMagic + 4);
    detail::put_u16(out, detail::kRecordVersion);
    detail::put_u16(out, static_cast<std::uint16_t>(inst.context.size()));
    detail::put_u16(out, static_cast<std::uint16_t>(inst.answers.size()));
    detail::put_u16(out, static_cast<std::uint16_t>(panel_h));
    detail::put_u16(out, static_cast<std::uint16_t>(panel_w));
    detail::put_u16(out, static_cast<std::uint16_t>(inst.rules.bits.size()));
    detail::put_u16(out, static_cast<std::uint16_t>(inst.correct));
    for (const auto& p : inst.context)
        detail::append_panel(out, p);
    for (const auto& p : inst.answers)
        detail::append_panel(out, p);
    out.insert(out.end(), inst.rules.bits.begin(), inst.rules.bits.end());
}

inline MatrixInstance read_record(detail::ByteReader& reader, const DatasetManifest& manifest) {
    const std::uint8_t* magic = reader.take(4, "record magic");
    if (std::memcmp(magic, detail::kRecordMagic, 4) != 0)
        throw FormatError(FormatError::Kind::bad_magic, "bad record magic bytes");
    const std::uint16_t version = reader.u16("record version");
    if (version != detail::kRecordVersion)
        throw FormatError(FormatError::Kind::bad_version,
                          "unsupported record version " + std::to_string(version));
    const int n_context = reader.u16("n_context");
    const int n_a = reader.u16("n_a");
    const int h = reader.u16("panel height");
    const int w = reader.u16("panel width");
    const int r_len = reader.u16("rule vector length");
    const int correct = reader.u16("correct index");

    if (n_context != manifest.structure.n_context || h != manifest.panel_h ||
        w != manifest.panel_w || r_len != static_cast<int>(manifest.rule_vocab.size()))
        throw FormatError(FormatError::Kind::inconsistent,
                          "record header disagrees with manifest");

    MatrixInstance inst;
    inst.context.reserve(static_cast<std::size_t>(n_context));
    for (int i = 0; i < n_context; ++i)
        inst.context.push_back(detail::read_panel(reader, h, w));
    inst.answers.reserve(static_cast<std::size_t>(n_a));
    for (int i = 0; i < n_a; ++i)
        inst.answers.push_back(detail::read_panel(reader, h, w));
    inst.correct = correct;
    const std::uint8_t* bits = reader.take(static_cast<std::size_t>(r_len), "rule bytes");
    inst.rules.bits.assign(bits, bits + r_len);
    return inst;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    return nlohmann::json{{"family", family_name(m.structure.family)},
                          {"context_rows", m.structure.context_rows},
                          {"context_cols", m.structure.context_cols},
                          {"n_context", m.structure.n_context},
                          {"n_a", m.structure.n_a},
                          {"panel_h", m.panel_h},
                          {"panel_w", m.panel_w},
                          {"rule_vocab", m.rule_vocab},
                          {"splits",
                           {{"train", m.splits.train}, {"val", m.splits.val}, {"test", m.splits.test}}},
                          {"seed", m.seed},
                          {"version", m.version}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        const TaskFamily family = family_from_name(j.at("family").get<std::string>());
        m.structure = TaskStructure::of(family, j.at("n_a").get<int>());
        if (j.at("context_rows").get<int>() != m.structure.context_rows ||
            j.at("context_cols").get<int>() != m.structure.context_cols ||
            j.at("n_context").get<int>() != m.structure.n_context)
            throw FormatError(FormatError::Kind::inconsistent,
                              "manifest grid geometry does not match family");
        m.panel_h = j.at("panel_h").get<int>();
        m.panel_w = j.at("panel_w").get<int>();
        m.rule_vocab = j.at("rule_vocab").get<std::vector<std::string>>();
        m.splits.train = j.at("splits").at("train").get<std::int64_t>();
        m.splits.val = j.at("splits").at("val").get<std::int64_t>();
        m.splits.test = j.at("splits").at("test").get<std::int64_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.version = j.at("version").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatError::Kind::inconsistent,
                          std::string("malformed manifest.json: ") + e.what());
    }
    return m;
}

// Writes `manifest.json` plus one binary record file per split into `dir`.
inline void write_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create dataset directory: " + dir);

    const std::int64_t counts[3] = {ds.manifest.splits.train, ds.manifest.splits.val,
                                    ds.manifest.splits.test};
    for (std::size_t s = 0; s < 3; ++s) {
        if (static_cast<std::int64_t>(ds.splits[s].size()) != counts[s])
            throw FormatError(FormatError::Kind::count_mismatch,
                              std::string("split ") + kSplitNames[s] + " has " +
                                  std::to_string(ds.splits[s].size()) + " instances, manifest says " +
                                  std::to_string(counts[s]));
        for (const auto& inst : ds.splits[s]) {
            const auto report = validate_instance(inst, ds.manifest.structure);
            if (!report.empty())
                throw ConfigError("invalid instance in split " + std::string(kSplitNames[s]) + ": " +
                                  report.front());
        }
    }

    {
        std::ofstream f(fs::path(dir) / "manifest.json");
        if (!f)
            throw IoError("cannot write manifest.json in " + dir);
        f << manifest_to_json(ds.manifest).dump(2) << "\n";
    }
    for (std::size_t s = 0; s < 3; ++s) {
        std::vector<std::uint8_t> bytes;
        for (const auto& inst : ds.splits[s])
            append_record(bytes, inst, ds.manifest.panel_h, ds.manifest.panel_w);
        std::ofstream f(fs::path(dir) / (std::string(kSplitNames[s]) + ".bin"), std::ios::binary);
        if (!f)
            throw IoError(std::string("cannot write split file ") + kSplitNames[s] + ".bin");
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        if (!f)
            throw IoError(std::string("write failed for split ") + kSplitNames[s]);
    }
}

inline Dataset read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    Dataset ds;
    {
        std::ifstream f(fs::path(dir) / "manifest.json");
        if (!f)
            throw IoError("cannot open manifest.json in " + dir);
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(FormatError::Kind::inconsistent,
                              std::string("malformed manifest.json: ") + e.what());
        }
        ds.manifest = manifest_from_json(j);
    }
    const std::int64_t counts[3] = {ds.manifest.splits.train, ds.manifest.splits.val,
                                    ds.manifest.splits.test};
    for (std::size_t s = 0; s < 3; ++s) {
        std::ifstream f(fs::path(dir) / (std::string(kSplitNames[s]) + ".bin"), std::ios::binary);
        if (!f)
            throw IoError(std::string("cannot open split file ") + kSplitNames[s] + ".bin");
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
        detail::ByteReader reader(bytes.data(), bytes.size());
        auto& out = ds.splits[s];
        while (!reader.at_end())
            out.push_back(read_record(reader, ds.manifest));
        if (static_cast<std::int64_t>(out.size()) != counts[s])
            throw FormatError(FormatError::Kind::count_mismatch,
                              std::string("split ") + kSplitNames[s] + " holds " +
                                  std::to_string(out.size()) + " records, manifest says " +
                                  std::to_string(counts[s]));
    }
    return ds;
}

// FNV-1a over the manifest and record bytes; recorded in checkpoint
// provenance so a run can be tied to its exact dataset.
inline std::uint64_t dataset_fingerprint(const Dataset& ds) {
    std::uint64_t hash = 1469598103934665603ULL;
    auto feed = [&hash](const std::uint8_t* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            hash ^= p[i];
            hash *= 1099511628211ULL;
        }
    };
    const std::string mj = manifest_to_json(ds.manifest).dump();
    feed(reinterpret_cast<const std::uint8_t*>(mj.data()), mj.size());
    for (const auto& split : ds.splits) {
        std::vector<std::uint8_t> bytes;
        for (const auto& inst : split)
            append_record(bytes, inst, ds.manifest.panel_h, ds.manifest.panel_w);
        feed(bytes.data(), bytes.size());
    }
    return hash;
}

} // namespace avru
