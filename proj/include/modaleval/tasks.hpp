#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "modaleval/errors.hpp"

namespace modaleval {

// Shared vocabulary for the whole pipeline. Every enum round-trips through
// its string form; the string forms are the on-disk spelling (configs, CSV
// columns, run records), so they never change casually.

enum class Task { dep_binary, ptsd_binary, dep_severity, ptsd_severity, multiclass };
enum class Variant { P1, P2, P3 };
enum class Modality { text, audio, audio_text };
enum class ShotMode { zero_shot, few_shot };
enum class Split { train, dev, test, all };
enum class ScoringMode { count_invalid_as_wrong, exclude_invalid };

inline const std::vector<Task>& all_tasks() {
    static const std::vector<Task> v{Task::dep_binary, Task::ptsd_binary, Task::dep_severity,
                                     Task::ptsd_severity, Task::multiclass};
    return v;
}

inline std::string to_string(Task t) {
    switch (t) {
        case Task::dep_binary: return "dep_binary";
        case Task::ptsd_binary: return "ptsd_binary";
        case Task::dep_severity: return "dep_severity";
        case Task::ptsd_severity: return "ptsd_severity";
        case Task::multiclass: return "multiclass";
    }
    return "?";
}

inline Task task_from_string(std::string_view s) {
    for (Task t : all_tasks())
        if (to_string(t) == s) return t;
    throw Error("ConfigInvalid", "unknown task '" + std::string(s) + "'");
}

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::P1: return "P1";
        case Variant::P2: return "P2";
        case Variant::P3: return "P3";
    }
    return "?";
}

inline Variant variant_from_string(std::string_view s) {
    if (s == "P1" || s == "p1") return Variant::P1;
    if (s == "P2" || s == "p2") return Variant::P2;
    if (s == "P3" || s == "p3") return Variant::P3;
    throw Error("ConfigInvalid", "unknown variant '" + std::string(s) + "'");
}

inline std::string to_string(Modality m) {
    switch (m) {
        case Modality::text: return "text";
        case Modality::audio: return "audio";
        case Modality::audio_text: return "audio_text";
    }
    return "?";
}

inline Modality modality_from_string(std::string_view s) {
    if (s == "text") return Modality::text;
    if (s == "audio") return Modality::audio;
    if (s == "audio_text") return Modality::audio_text;
    throw Error("ConfigInvalid", "unknown modality '" + std::string(s) + "'");
}

inline std::string to_string(ShotMode m) {
    return m == ShotMode::zero_shot ? "zero_shot" : "few_shot";
}

inline ShotMode shot_mode_from_string(std::string_view s) {
    if (s == "zero_shot") return ShotMode::zero_shot;
    if (s == "few_shot") return ShotMode::few_shot;
    throw Error("ConfigInvalid", "unknown shot mode '" + std::string(s) + "'");
}

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
        case Split::all: return "all";
    }
    return "?";
}

inline Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "dev") return Split::dev;
    if (s == "test") return Split::test;
    if (s == "all") return Split::all;
    throw Error("MalformedRow", "unknown split '" + std::string(s) + "'");
}

inline std::string to_string(ScoringMode m) {
    return m == ScoringMode::count_invalid_as_wrong ? "count_invalid_as_wrong" : "exclude_invalid";
}

inline ScoringMode scoring_mode_from_string(std::string_view s) {
    if (s == "count_invalid_as_wrong") return ScoringMode::count_invalid_as_wrong;
    if (s == "exclude_invalid") return ScoringMode::exclude_invalid;
    throw Error("ConfigInvalid", "unknown scoring mode '" + std::string(s) + "'");
}

inline bool is_binary_task(Task t) { return t == Task::dep_binary || t == Task::ptsd_binary; }
inline bool is_severity_task(Task t) { return t == Task::dep_severity || t == Task::ptsd_severity; }

// Multiclass categories, canonical answer spelling. Index order is the class
// order used in confusion matrices.
inline const std::vector<std::string>& multiclass_categories() {
    static const std::vector<std::string> v{"Normal", "Depressed", "PTSD", "Depressed and PTSD"};
    return v;
}

// Canonical class label lists per task; order = confusion-matrix order.
// Binary order is negative-first so the positive (illness-present) class is
// always index 1.
inline std::vector<std::string> task_class_labels(Task t) {
    switch (t) {
        case Task::dep_binary:
        case Task::ptsd_binary: return {"No", "Yes"};
        case Task::dep_severity: return {"0", "1", "2", "3", "4"};
        case Task::ptsd_severity: return {"0", "1", "2"};
        case Task::multiclass: return multiclass_categories();
    }
    return {};
}

// Severity label range used by the strict parser.
inline std::pair<int, int> task_label_range(Task t) {
    if (t == Task::dep_severity) return {0, 4};
    if (t == Task::ptsd_severity) return {0, 2};
    throw Error("ConfigInvalid", "task " + to_string(t) + " has no numeric label range");
}

// Illness noun for the {illness} template slot (zero-shot prose casing).
inline std::string illness_noun(Task t) {
    switch (t) {
        case Task::dep_binary:
        case Task::dep_severity: return "depression";
        case Task::ptsd_binary:
        case Task::ptsd_severity: return "PTSD";
        case Task::multiclass: return "depression or PTSD";
    }
    return "?";
}

// Few-shot body casing follows the worked example figure ("Depression").
inline std::string illness_noun_few_shot(Task t) {
    if (t == Task::dep_binary || t == Task::dep_severity) return "Depression";
    return illness_noun(t);
}

} // namespace modaleval
