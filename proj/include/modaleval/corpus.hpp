#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modaleval/csv.hpp"
#include "modaleval/errors.hpp"
#include "modaleval/tasks.hpp"

namespace modaleval {

struct MissingColumnError : Error {
    std::string column;
    explicit MissingColumnError(std::string c)
        : Error("MissingColumn", "required column '" + c + "' not found"), column(std::move(c)) {}
};

struct MalformedRowError : Error {
    std::size_t line_no;
    MalformedRowError(std::size_t line, const std::string& reason)
        : Error("MalformedRow", "line " + std::to_string(line) + ": " + reason), line_no(line) {}
};

struct DuplicateParticipantError : Error {
    int participant_id;
    explicit DuplicateParticipantError(int id)
        : Error("DuplicateParticipant", "participant " + std::to_string(id) + " appears twice"),
          participant_id(id) {}
};

struct OutOfRangeError : Error {
    OutOfRangeError(int score, const std::string& scale)
        : Error("OutOfRange",
                "score " + std::to_string(score) + " outside scale '" + scale + "'") {}
};

// One interview session. Screening scores: PHQ-8 total 0-24 with binary
// cutoff >= 10; PCL-C total 17-85 with binary cutoff > 44. ptsd_severity
// holds the raw PCL-C total (values below 17 are admitted at load and
// clamped by the correction pass).
struct ParticipantRecord {
    int participant_id = 0;
    int phq_score = 0;
    int phq_binary = 0;
    int pclc_binary = 0;
    int ptsd_severity = 0;
    Split split = Split::all;
    std::string transcript_path; // empty = missing
    std::string audio_path;      // empty = missing
};

struct SeverityBin {
    int label = 0;
    int lo = 0;
    int hi = 0; // inclusive
};

struct SeverityScale {
    std::string name;
    std::vector<SeverityBin> bins;

    // Validates the bins invariant: labels 0..k-1 in ascending interval
    // order, intervals contiguous and non-overlapping.
    static SeverityScale make(std::string name, std::vector<SeverityBin> bins) {
        if (bins.empty()) throw Error("ConfigInvalid", "scale '" + name + "' has no bins");
        for (std::size_t i = 0; i < bins.size(); ++i) {
            if (bins[i].label != static_cast<int>(i))
                throw Error("ConfigInvalid", "scale '" + name + "': labels must be 0..k-1 ascending");
            if (bins[i].lo > bins[i].hi)
                throw Error("ConfigInvalid", "scale '" + name + "': bin " + std::to_string(i) +
                                                 " has lo > hi");
            if (i > 0 && bins[i].lo != bins[i - 1].hi + 1)
                throw Error("ConfigInvalid", "scale '" + name + "': bins must be contiguous (gap or "
                                                 "overlap at label " +
                                                 std::to_string(i) + ")");
        }
        SeverityScale s;
        s.name = std::move(name);
        s.bins = std::move(bins);
        return s;
    }

    int lo() const { return bins.front().lo; }
    int hi() const { return bins.back().hi; }
    int width() const { return hi() - lo(); }
    std::size_t label_count() const { return bins.size(); }
};

inline const SeverityScale& depression_phq8_scale() {
    static const SeverityScale s = SeverityScale::make(
        "depression_phq8", {{0, 0, 4}, {1, 5, 9}, {2, 10, 14}, {3, 15, 19}, {4, 20, 24}});
    return s;
}

inline const SeverityScale& ptsd_reference_scale() {
    static const SeverityScale s =
        SeverityScale::make("ptsd_reference", {{0, 17, 29}, {1, 30, 44}, {2, 45, 85}});
    return s;
}

inline int map_severity(int score, const SeverityScale& scale) {
    for (const auto& b : scale.bins)
        if (score >= b.lo && score <= b.hi) return b.label;
    throw OutOfRangeError(score, scale.name);
}

struct Correction {
    int participant_id = 0;
    std::string field;
    std::string old_value;
    std::string new_value;
};

struct DatasetManifest {
    std::vector<ParticipantRecord> records;
    std::string source_note;
    std::vector<Correction> correction_log;

    const ParticipantRecord* find(int participant_id) const {
        for (const auto& r : records)
            if (r.participant_id == participant_id) return &r;
        return nullptr;
    }
};

enum class ManifestLayout { edaic_csv, generic_csv };

inline ManifestLayout layout_from_string(std::string_view s) {
    if (s == "edaic_csv") return ManifestLayout::edaic_csv;
    if (s == "generic_csv") return ManifestLayout::generic_csv;
    throw Error("ConfigInvalid", "unknown manifest layout '" + std::string(s) + "'");
}

namespace detail {

inline int parse_int_field(const std::string& v, std::size_t line, const std::string& col) {
    if (v.empty()) throw MalformedRowError(line, "empty " + col);
    std::size_t i = (v[0] == '-') ? 1 : 0;
    if (i == v.size()) throw MalformedRowError(line, "bad integer in " + col + ": '" + v + "'");
    std::int64_t out = 0;
    for (; i < v.size(); ++i) {
        if (v[i] < '0' || v[i] > '9')
            throw MalformedRowError(line, "bad integer in " + col + ": '" + v + "'");
        out = out * 10 + (v[i] - '0');
        if (out > 1000000) throw MalformedRowError(line, col + " out of range: '" + v + "'");
    }
    return v[0] == '-' ? static_cast<int>(-out) : static_cast<int>(out);
}

inline std::string resolve_relative(const std::string& base_dir, const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return p;
    return (std::filesystem::path(base_dir) / fp).lexically_normal().string();
}

} // namespace detail

// Canonical header: Participant_ID, PHQ_Score, PHQ_Binary, PCL-C,
// PTSD_Severity, Split, Transcript_Path, Audio_Path (the last three are
// optional). The edaic_csv layout additionally accepts the corpus's native
// spellings ("PCL-C (PTSD)", "PTSD Severity", no split/path columns) and
// derives media paths from the {id}_AUDIO.wav / {id}_Transcript.csv
// convention next to the manifest.
inline DatasetManifest load_manifest(const std::string& path, ManifestLayout layout) {
    std::string text = read_file(path);
    auto rows = parse_csv(text);
    if (rows.empty()) throw MissingColumnError("Participant_ID");

    const auto& header = rows[0].fields;
    auto col_of = [&](std::initializer_list<const char*> names) -> std::optional<std::size_t> {
        for (const char* n : names)
            for (std::size_t i = 0; i < header.size(); ++i)
                if (header[i] == n) return i;
        return std::nullopt;
    };

    bool edaic = layout == ManifestLayout::edaic_csv;
    auto require = [&](std::initializer_list<const char*> names) -> std::size_t {
        auto c = col_of(names);
        if (!c) throw MissingColumnError(*names.begin());
        return *c;
    };

    std::size_t c_id = require({"Participant_ID"});
    std::size_t c_phq_score = require({"PHQ_Score"});
    std::size_t c_phq_bin = require({"PHQ_Binary"});
    std::size_t c_pclc = edaic ? require({"PCL-C", "PCL-C (PTSD)"}) : require({"PCL-C"});
    std::size_t c_ptsd = edaic ? require({"PTSD_Severity", "PTSD Severity"})
                               : require({"PTSD_Severity"});
    auto c_split = col_of({"Split"});
    auto c_transcript = col_of({"Transcript_Path"});
    auto c_audio = col_of({"Audio_Path"});

    std::string base_dir = std::filesystem::path(path).parent_path().string();
    if (base_dir.empty()) base_dir = ".";

    DatasetManifest m;
    m.source_note = "loaded from " + path;
    std::map<int, bool> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        auto field = [&](std::size_t c) -> const std::string& {
            static const std::string empty;
            return c < row.fields.size() ? row.fields[c] : empty;
        };
        ParticipantRecord rec;
        rec.participant_id = detail::parse_int_field(field(c_id), row.line_no, "Participant_ID");
        if (rec.participant_id < 0)
            throw MalformedRowError(row.line_no, "negative Participant_ID");
        if (seen[rec.participant_id]) throw DuplicateParticipantError(rec.participant_id);
        seen[rec.participant_id] = true;

        rec.phq_score = detail::parse_int_field(field(c_phq_score), row.line_no, "PHQ_Score");
        if (rec.phq_score < 0 || rec.phq_score > 24)
            throw MalformedRowError(row.line_no, "PHQ_Score outside 0-24");
        rec.phq_binary = detail::parse_int_field(field(c_phq_bin), row.line_no, "PHQ_Binary");
        if (rec.phq_binary != 0 && rec.phq_binary != 1)
            throw MalformedRowError(row.line_no, "PHQ_Binary must be 0 or 1");
        rec.pclc_binary = detail::parse_int_field(field(c_pclc), row.line_no, "PCL-C");
        if (rec.pclc_binary != 0 && rec.pclc_binary != 1)
            throw MalformedRowError(row.line_no, "PCL-C must be 0 or 1");
        rec.ptsd_severity = detail::parse_int_field(field(c_ptsd), row.line_no, "PTSD_Severity");
        if (rec.ptsd_severity < 0 || rec.ptsd_severity > 85)
            throw MalformedRowError(row.line_no, "PTSD_Severity outside 0-85");

        if (c_split && !field(*c_split).empty()) rec.split = split_from_string(field(*c_split));

        if (c_transcript) rec.transcript_path = detail::resolve_relative(base_dir, field(*c_transcript));
        else if (edaic)
            rec.transcript_path = detail::resolve_relative(
                base_dir, std::to_string(rec.participant_id) + "_Transcript.csv");
        if (c_audio) rec.audio_path = detail::resolve_relative(base_dir, field(*c_audio));
        else if (edaic)
            rec.audio_path = detail::resolve_relative(
                base_dir, std::to_string(rec.participant_id) + "_AUDIO.wav");

        m.records.push_back(std::move(rec));
    }
    return m;
}

// The correction pass: PHQ binary labels that contradict the score cutoff
// are fixed (score >= 10 forces binary 1), and raw PCL-C totals below the
// instrument's floor of 17 are clamped up to 17. Every change is logged.
inline DatasetManifest apply_label_corrections(const DatasetManifest& m) {
    DatasetManifest out = m;
    for (auto& r : out.records) {
        if (r.phq_score >= 10 && r.phq_binary == 0) {
            out.correction_log.push_back({r.participant_id, "phq_binary", "0", "1"});
            r.phq_binary = 1;
        }
        if (r.ptsd_severity < 17) {
            out.correction_log.push_back({r.participant_id, "ptsd_severity",
                                          std::to_string(r.ptsd_severity), "17"});
            r.ptsd_severity = 17;
        }
    }
    return out;
}

// Replays a correction log against a raw manifest; the result must equal the
// corrected manifest (checked where the old value is recorded).
inline DatasetManifest apply_correction_log(const DatasetManifest& raw,
                                            const std::vector<Correction>& log) {
    DatasetManifest out = raw;
    for (const auto& c : log) {
        ParticipantRecord* rec = nullptr;
        for (auto& r : out.records)
            if (r.participant_id == c.participant_id) rec = &r;
        if (!rec)
            throw Error("CorrectionReplay", "participant " + std::to_string(c.participant_id) +
                                                " not in manifest");
        auto apply_int = [&](int& slot) {
            if (std::to_string(slot) != c.old_value)
                throw Error("CorrectionReplay",
                            "participant " + std::to_string(c.participant_id) + " field " + c.field +
                                " expected old value " + c.old_value + ", found " +
                                std::to_string(slot));
            slot = detail::parse_int_field(c.new_value, 0, c.field);
        };
        if (c.field == "phq_binary") apply_int(rec->phq_binary);
        else if (c.field == "ptsd_severity") apply_int(rec->ptsd_severity);
        else if (c.field == "phq_score") apply_int(rec->phq_score);
        else if (c.field == "pclc_binary") apply_int(rec->pclc_binary);
        else throw Error("CorrectionReplay", "unknown field '" + c.field + "'");
        out.correction_log.push_back(c);
    }
    return out;
}

inline std::pair<int, int> multiclass_bits(const std::string& category) {
    const auto& cats = multiclass_categories();
    if (category == cats[0]) return {0, 0};
    if (category == cats[1]) return {1, 0};
    if (category == cats[2]) return {0, 1};
    if (category == cats[3]) return {1, 1};
    throw Error("ConfigInvalid", "unknown multiclass category '" + category + "'");
}

inline std::string multiclass_category(int dep_bit, int ptsd_bit) {
    const auto& cats = multiclass_categories();
    if (dep_bit == 0 && ptsd_bit == 0) return cats[0];
    if (dep_bit == 1 && ptsd_bit == 0) return cats[1];
    if (dep_bit == 0 && ptsd_bit == 1) return cats[2];
    return cats[3];
}

// Requires corrections already applied.
inline std::string derive_multiclass_label(const ParticipantRecord& r) {
    return multiclass_category(r.phq_binary, r.pclc_binary);
}

// Truth label (canonical string) for any task, given a corrected record and
// the PTSD scale in effect.
inline std::string truth_label(const ParticipantRecord& r, Task t,
                               const SeverityScale& ptsd_scale = ptsd_reference_scale()) {
    switch (t) {
        case Task::dep_binary: return r.phq_binary ? "Yes" : "No";
        case Task::ptsd_binary: return r.pclc_binary ? "Yes" : "No";
        case Task::dep_severity:
            return std::to_string(map_severity(r.phq_score, depression_phq8_scale()));
        case Task::ptsd_severity: return std::to_string(map_severity(r.ptsd_severity, ptsd_scale));
        case Task::multiclass: return derive_multiclass_label(r);
    }
    return "?";
}

struct DistributionSummary {
    std::int64_t n = 0;
    std::map<std::string, std::int64_t> split_counts;
    std::array<std::int64_t, 2> phq_binary{};  // [neg, pos]
    std::array<std::int64_t, 2> pclc_binary{}; // [neg, pos]
    std::array<std::int64_t, 5> dep_severity{};
    std::array<std::int64_t, 3> ptsd_severity{}; // under the reference scale
    std::array<std::int64_t, 4> multiclass{};    // Normal, Depressed, PTSD, both

    std::string to_csv() const {
        std::string out = "system,label,count\n";
        auto row = [&](const std::string& sys, const std::string& label, std::int64_t c) {
            out += sys + "," + csv_escape(label) + "," + std::to_string(c) + "\n";
        };
        row("phq_binary", "0", phq_binary[0]);
        row("phq_binary", "1", phq_binary[1]);
        row("pclc_binary", "0", pclc_binary[0]);
        row("pclc_binary", "1", pclc_binary[1]);
        for (int i = 0; i < 5; ++i) row("dep_severity", std::to_string(i), dep_severity[i]);
        for (int i = 0; i < 3; ++i) row("ptsd_severity", std::to_string(i), ptsd_severity[i]);
        const auto& cats = multiclass_categories();
        for (int i = 0; i < 4; ++i) row("multiclass", cats[i], multiclass[i]);
        for (const auto& [split, c] : split_counts) row("split", split, c);
        return out;
    }
};

// Counts per label system; expects a corrected manifest.
inline DistributionSummary summarize_distribution(const DatasetManifest& m) {
    DistributionSummary s;
    s.n = static_cast<std::int64_t>(m.records.size());
    for (const auto& r : m.records) {
        s.split_counts[to_string(r.split)] += 1;
        s.phq_binary[r.phq_binary == 1 ? 1 : 0] += 1;
        s.pclc_binary[r.pclc_binary == 1 ? 1 : 0] += 1;
        s.dep_severity[static_cast<std::size_t>(
            map_severity(r.phq_score, depression_phq8_scale()))] += 1;
        s.ptsd_severity[static_cast<std::size_t>(
            map_severity(r.ptsd_severity, ptsd_reference_scale()))] += 1;
        auto [d, p] = multiclass_bits(derive_multiclass_label(r));
        s.multiclass[static_cast<std::size_t>(d + 2 * p)] += 1;
    }
    return s;
}

// Severity scale preset file: {"scales": [{"name": ..., "bins": [{"label":
// 0, "lo": 17, "hi": 29}, ...]}, ...]}.
inline std::vector<SeverityScale> load_severity_scales(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    std::vector<SeverityScale> out;
    for (const auto& js : j.at("scales")) {
        std::vector<SeverityBin> bins;
        for (const auto& jb : js.at("bins"))
            bins.push_back({jb.at("label").get<int>(), jb.at("lo").get<int>(), jb.at("hi").get<int>()});
        out.push_back(SeverityScale::make(js.at("name").get<std::string>(), std::move(bins)));
    }
    return out;
}

inline const SeverityScale& find_scale(const std::vector<SeverityScale>& scales,
                                       const std::string& name) {
    if (name == "depression_phq8") return depression_phq8_scale();
    if (name == "ptsd_reference") return ptsd_reference_scale();
    for (const auto& s : scales)
        if (s.name == name) return s;
    throw Error("ConfigInvalid", "unknown severity scale '" + name + "'");
}

} // namespace modaleval
