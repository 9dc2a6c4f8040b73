#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "modaleval/corpus.hpp"
#include "modaleval/csv.hpp"
#include "modaleval/errors.hpp"
#include "modaleval/hashing.hpp"
#include "modaleval/tasks.hpp"

namespace modaleval {

struct MissingTemplateError : Error {
    explicit MissingTemplateError(const std::string& path)
        : Error("MissingTemplate", "template file not found: " + path) {}
};

struct MissingMediaError : Error {
    Modality modality;
    int participant_id;
    MissingMediaError(Modality m, int id)
        : Error("MissingMedia", to_string(m) + " input missing for participant " + std::to_string(id)),
          modality(m), participant_id(id) {}
};

struct EmptyExamplesError : Error {
    EmptyExamplesError() : Error("EmptyExamples", "few-shot rendering requires at least one example") {}
};

struct SubjectLeakError : Error {
    int participant_id;
    explicit SubjectLeakError(int id)
        : Error("SubjectLeak",
                "participant " + std::to_string(id) + " appears among its own few-shot examples"),
          participant_id(id) {}
};

struct InsufficientPoolError : Error {
    explicit InsufficientPoolError(const std::string& detail) : Error("InsufficientPool", detail) {}
};

struct InsufficientCandidatesError : Error {
    std::size_t found;
    std::size_t requested;
    InsufficientCandidatesError(std::size_t f, std::size_t k)
        : Error("InsufficientCandidates",
                "need " + std::to_string(k) + " near-miss candidates, found " + std::to_string(f)),
          found(f), requested(k) {}
};

struct PromptTemplate {
    Task task = Task::dep_binary;
    Variant variant = Variant::P1;
    std::string body; // placeholders: {input}, {input_type}, {illness}
    std::vector<std::string> allowed_labels;
};

struct FewShotExample {
    int participant_id = 0;
    std::string content; // transcript text
    std::string label_text;
};

struct RenderedPrompt {
    std::string text;
    std::vector<std::string> attachments; // audio file paths, in order
    Task task = Task::dep_binary;
    Variant variant = Variant::P1;
    Modality modality = Modality::text;
    int participant_id = 0;
    ShotMode shot_mode = ShotMode::zero_shot;
    std::string content_hash; // 16 hex chars
};

// Prompt variants that exist per task.
inline std::vector<Variant> task_variants(Task t) {
    if (is_binary_task(t)) return {Variant::P1, Variant::P2, Variant::P3};
    return {Variant::P1, Variant::P2};
}

namespace detail {

inline std::string replace_all(std::string text, std::string_view needle, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

inline std::string strip_one_trailing_newline(std::string s) {
    if (!s.empty() && s.back() == '\n') s.pop_back();
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

inline void validate_placeholders(const std::string& body, const std::string& file,
                                  bool allow_input) {
    std::size_t i = 0;
    while ((i = body.find('{', i)) != std::string::npos) {
        std::size_t j = body.find('}', i);
        if (j == std::string::npos) break;
        std::string name = body.substr(i + 1, j - i - 1);
        bool ok = name == "illness" || name == "input_type" || (allow_input && name == "input");
        if (!ok)
            throw Error("ConfigInvalid", "template " + file + " uses unsupported placeholder {" +
                                             name + "}");
        i = j + 1;
    }
}

inline std::string ordinal_word(std::size_t n) {
    static const char* words[] = {"First", "Second", "Third",   "Fourth", "Fifth",    "Sixth",
                                  "Seventh", "Eighth", "Ninth", "Tenth",  "Eleventh", "Twelfth"};
    if (n >= 1 && n <= 12) return words[n - 1];
    // Numeric ordinal past the word list.
    std::size_t mod100 = n % 100;
    std::size_t mod10 = n % 10;
    const char* suffix = "th";
    if (mod100 < 11 || mod100 > 13) {
        if (mod10 == 1) suffix = "st";
        else if (mod10 == 2) suffix = "nd";
        else if (mod10 == 3) suffix = "rd";
    }
    return std::to_string(n) + suffix;
}

} // namespace detail

// One text file per (task stem, variant); the three binary templates are
// shared by both binary tasks through the {illness} slot.
class TemplateStore {
public:
    explicit TemplateStore(std::string dir) : dir_(std::move(dir)) {}

    static std::string task_stem(Task t) {
        switch (t) {
            case Task::dep_binary:
            case Task::ptsd_binary: return "binary";
            case Task::dep_severity: return "dep_severity";
            case Task::ptsd_severity: return "ptsd_severity";
            case Task::multiclass: return "multiclass";
        }
        return "?";
    }

    static std::string file_name(Task t, Variant v, ShotMode mode) {
        std::string variant = to_string(v);
        for (auto& c : variant) c = static_cast<char>(std::tolower(c));
        std::string stem = task_stem(t) + "_" + variant + ".txt";
        return mode == ShotMode::few_shot ? "fs_" + stem : stem;
    }

    std::string path_for(Task t, Variant v, ShotMode mode) const {
        return (std::filesystem::path(dir_) / file_name(t, v, mode)).string();
    }

    PromptTemplate load(Task t, Variant v, ShotMode mode = ShotMode::zero_shot) const {
        std::string path = path_for(t, v, mode);
        if (!std::filesystem::exists(path)) throw MissingTemplateError(path);
        PromptTemplate tpl;
        tpl.task = t;
        tpl.variant = v;
        tpl.body = detail::strip_one_trailing_newline(read_file(path));
        // Few-shot bodies carry no {input}: the subject arrives in the
        // trailer, after the examples.
        detail::validate_placeholders(tpl.body, path, mode == ShotMode::zero_shot);
        tpl.allowed_labels = task_class_labels(t);
        return tpl;
    }

    // File-content hashes for every template a run depends on; recorded in
    // the run manifest and re-checked on resume.
    std::map<std::string, std::string> hash_templates(const std::vector<Task>& tasks,
                                                      ShotMode mode) const {
        std::map<std::string, std::string> out;
        for (Task t : tasks) {
            for (Variant v : task_variants(t)) {
                std::string name = file_name(t, v, ShotMode::zero_shot);
                out[name] = hex64(fnv1a64(read_required(name)));
                if (mode == ShotMode::few_shot) {
                    std::string fs = file_name(t, v, ShotMode::few_shot);
                    out[fs] = hex64(fnv1a64(read_required(fs)));
                }
            }
        }
        return out;
    }

    const std::string& dir() const { return dir_; }

private:
    std::string read_required(const std::string& name) const {
        std::string path = (std::filesystem::path(dir_) / name).string();
        if (!std::filesystem::exists(path)) throw MissingTemplateError(path);
        return cache_.emplace(name, read_file(path)).first->second;
    }

    std::string dir_;
    mutable std::map<std::string, std::string> cache_;
};

// The {input_type} slot: one fixed line per modality.
inline std::string input_type_line(Modality m) {
    switch (m) {
        case Modality::text: return "Transcription of the interview:";
        case Modality::audio: return "Audio of the interview.";
        case Modality::audio_text: return "Audio and transcription of the interview:";
    }
    return "?";
}

// Raw placeholder substitution; exposed so golden tests can render with
// identity sentinels.
inline std::string render_template(const std::string& body, std::string_view input,
                                   std::string_view input_type, std::string_view illness) {
    std::string out = detail::replace_all(body, "{illness}", illness);
    out = detail::replace_all(out, "{input_type}", input_type);
    out = detail::replace_all(out, "{input}", input);
    return out;
}

namespace detail {

inline std::string content_hash_hex(const RenderedPrompt& p,
                                    const std::vector<FewShotExample>& examples) {
    Fnv1a64 h;
    h.field(to_string(p.task));
    h.field(to_string(p.variant));
    h.field(to_string(p.modality));
    h.field(to_string(p.shot_mode));
    h.update_u64(static_cast<std::uint64_t>(p.participant_id));
    h.field(p.text);
    for (const auto& a : p.attachments) h.field(a);
    for (const auto& e : examples) {
        h.update_u64(static_cast<std::uint64_t>(e.participant_id));
        h.field(e.label_text);
        h.field(e.content);
    }
    return hex64(h.digest());
}

inline std::string load_transcript(const ParticipantRecord& r, Modality m,
                                   const std::string* transcript_override) {
    if (transcript_override) return strip_one_trailing_newline(*transcript_override);
    if (r.transcript_path.empty() || !std::filesystem::exists(r.transcript_path))
        throw MissingMediaError(m, r.participant_id);
    return strip_one_trailing_newline(read_file(r.transcript_path));
}

inline void require_audio(const ParticipantRecord& r, Modality m) {
    if (r.audio_path.empty()) throw MissingMediaError(m, r.participant_id);
}

} // namespace detail

inline RenderedPrompt render_zero_shot(const PromptTemplate& t, const ParticipantRecord& r,
                                       Modality modality,
                                       const std::string* transcript_override = nullptr) {
    RenderedPrompt p;
    p.task = t.task;
    p.variant = t.variant;
    p.modality = modality;
    p.participant_id = r.participant_id;
    p.shot_mode = ShotMode::zero_shot;

    std::string input;
    if (modality == Modality::text || modality == Modality::audio_text)
        input = detail::load_transcript(r, modality, transcript_override);
    if (modality == Modality::audio) input = "the audio";
    if (modality == Modality::audio || modality == Modality::audio_text) {
        detail::require_audio(r, modality);
        p.attachments.push_back(r.audio_path);
    }

    p.text = render_template(t.body, input, input_type_line(modality), illness_noun(t.task));
    p.content_hash = detail::content_hash_hex(p, {});
    return p;
}

// Few-shot prompt: task body, example count line, enumerated
// transcription/label pairs in the given order, then the subject input.
// Paragraphs are blank-line separated throughout.
inline RenderedPrompt render_few_shot(const PromptTemplate& t, const ParticipantRecord& r,
                                      Modality modality,
                                      const std::vector<FewShotExample>& examples,
                                      bool allow_subject_in_examples = false,
                                      const std::string* transcript_override = nullptr) {
    if (examples.empty()) throw EmptyExamplesError();
    for (const auto& e : examples) {
        if (!allow_subject_in_examples && e.participant_id == r.participant_id)
            throw SubjectLeakError(r.participant_id);
        bool known = false;
        for (const auto& l : t.allowed_labels) known = known || l == e.label_text;
        if (!known)
            throw Error("ConfigInvalid", "few-shot label '" + e.label_text +
                                             "' is not an allowed answer for task " +
                                             to_string(t.task));
    }

    RenderedPrompt p;
    p.task = t.task;
    p.variant = t.variant;
    p.modality = modality;
    p.participant_id = r.participant_id;
    p.shot_mode = ShotMode::few_shot;

    std::string subject_transcript;
    if (modality == Modality::text || modality == Modality::audio_text)
        subject_transcript = detail::load_transcript(r, modality, transcript_override);
    if (modality == Modality::audio || modality == Modality::audio_text) {
        detail::require_audio(r, modality);
        p.attachments.push_back(r.audio_path);
    }

    std::string text = render_template(t.body, "", input_type_line(modality),
                                       illness_noun_few_shot(t.task));

    std::size_t n = examples.size();
    if (n == 1)
        text += "\n\nHere is 1 sample from these interviews and its label. Use it as a reference:";
    else
        text += "\n\nHere are " + std::to_string(n) +
                " samples from these interviews and their labels. Use them as a reference:";

    for (std::size_t i = 0; i < n; ++i) {
        std::string ord = detail::ordinal_word(i + 1);
        text += "\n\n" + ord + " sample transcription: " + examples[i].content;
        text += "\n\n" + ord + " sample label: " + examples[i].label_text;
    }

    switch (modality) {
        case Modality::text:
            text += "\n\nLabel the following transcription: '" + subject_transcript + "'.";
            break;
        case Modality::audio: text += "\n\nLabel the following audio."; break;
        case Modality::audio_text:
            text += "\n\nLabel the following audio and transcription: '" + subject_transcript + "'.";
            break;
    }

    p.text = std::move(text);
    p.content_hash = detail::content_hash_hex(p, examples);
    return p;
}

namespace detail {

inline bool record_in_pool(const ParticipantRecord& r, Split pool) {
    return pool == Split::all || r.split == pool || r.split == Split::all;
}

// Default near-miss pool: everything outside the held-out test split.
inline bool record_in_near_miss_pool(const ParticipantRecord& r, const std::optional<Split>& pool) {
    if (pool) return record_in_pool(r, *pool);
    return r.split != Split::test;
}

inline std::mt19937_64 selection_engine(std::uint64_t seed, Task task) {
    Fnv1a64 h;
    h.update_u64(seed);
    h.field(to_string(task));
    return std::mt19937_64(h.digest());
}

template <typename T>
void selection_shuffle(std::vector<T>& v, std::mt19937_64& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(eng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace detail

// Binary few-shot selection: two positives and one negative, presented
// negative-first. Deterministic for a given seed. exclude_participant_id
// keeps the current subject out of its own example list.
inline std::vector<FewShotExample> select_few_shot_binary(const DatasetManifest& m, Task task,
                                                          Split pool, std::uint64_t seed,
                                                          int exclude_participant_id = -1) {
    if (!is_binary_task(task))
        throw Error("ConfigInvalid", "binary few-shot selection on task " + to_string(task));
    std::vector<const ParticipantRecord*> pos, neg;
    for (const auto& r : m.records) {
        if (r.participant_id == exclude_participant_id) continue;
        if (!detail::record_in_pool(r, pool) || r.transcript_path.empty()) continue;
        int label = task == Task::dep_binary ? r.phq_binary : r.pclc_binary;
        (label == 1 ? pos : neg).push_back(&r);
    }
    if (pos.size() < 2 || neg.size() < 1)
        throw InsufficientPoolError("pool '" + to_string(pool) + "' has " +
                                    std::to_string(pos.size()) + " positive / " +
                                    std::to_string(neg.size()) + " negative transcribed records; "
                                    "need 2 positive and 1 negative");
    auto by_id = [](const ParticipantRecord* a, const ParticipantRecord* b) {
        return a->participant_id < b->participant_id;
    };
    std::sort(pos.begin(), pos.end(), by_id);
    std::sort(neg.begin(), neg.end(), by_id);
    auto eng = detail::selection_engine(seed, task);
    detail::selection_shuffle(pos, eng);
    detail::selection_shuffle(neg, eng);

    auto to_example = [](const ParticipantRecord* r, const char* label) {
        return FewShotExample{r->participant_id,
                              detail::strip_one_trailing_newline(read_file(r->transcript_path)),
                              label};
    };
    return {to_example(neg[0], "No"), to_example(pos[0], "Yes"), to_example(pos[1], "Yes")};
}

// One parsed zero-shot prediction, the input to near-miss selection.
struct ZeroShotOutcome {
    int participant_id = 0;
    std::string truth;
    std::string pred;
    bool valid = false;
};

inline bool is_near_miss(Task task, const std::string& truth, const std::string& pred) {
    if (is_severity_task(task)) {
        int t = std::stoi(truth);
        int p = std::stoi(pred);
        return std::abs(t - p) == 1;
    }
    if (task == Task::multiclass) {
        auto [td, tp] = multiclass_bits(truth);
        auto [pd, pp] = multiclass_bits(pred);
        return (td != pd) + (tp != pp) == 1;
    }
    throw Error("ConfigInvalid", "near-miss selection applies to severity/multiclass tasks only");
}

// Near-miss few-shot selection: candidates are zero-shot predictions off by
// exactly one ordinal label (severity) or wrong in exactly one of the two
// disorder sub-labels (multiclass).
inline std::vector<FewShotExample> select_few_shot_near_miss(
    const std::vector<ZeroShotOutcome>& zs_run, const DatasetManifest& m, Task task, int k,
    std::uint64_t seed, std::optional<Split> pool = std::nullopt,
    int exclude_participant_id = -1) {
    if (k <= 0) throw Error("ConfigInvalid", "near-miss selection needs k > 0");
    std::vector<const ParticipantRecord*> candidates;
    std::map<int, bool> taken;
    for (const auto& o : zs_run) {
        if (o.participant_id == exclude_participant_id) continue;
        if (!o.valid || taken.count(o.participant_id)) continue;
        if (!is_near_miss(task, o.truth, o.pred)) continue;
        const ParticipantRecord* r = m.find(o.participant_id);
        if (!r || r->transcript_path.empty()) continue;
        if (!detail::record_in_near_miss_pool(*r, pool)) continue;
        taken[o.participant_id] = true;
        candidates.push_back(r);
    }
    if (candidates.size() < static_cast<std::size_t>(k))
        throw InsufficientCandidatesError(candidates.size(), static_cast<std::size_t>(k));
    std::sort(candidates.begin(), candidates.end(),
              [](const ParticipantRecord* a, const ParticipantRecord* b) {
                  return a->participant_id < b->participant_id;
              });
    auto eng = detail::selection_engine(seed, task);
    detail::selection_shuffle(candidates, eng);

    std::vector<FewShotExample> out;
    for (int i = 0; i < k; ++i) {
        const ParticipantRecord* r = candidates[static_cast<std::size_t>(i)];
        // Exemplars carry the true label.
        std::string label;
        for (const auto& o : zs_run)
            if (o.participant_id == r->participant_id) label = o.truth;
        out.push_back({r->participant_id,
                       detail::strip_one_trailing_newline(read_file(r->transcript_path)), label});
    }
    return out;
}

} // namespace modaleval
