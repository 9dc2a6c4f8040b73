#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "modaleval/tasks.hpp"

namespace modaleval {

// Strict response parsing. Invalidity is a value, never an exception: every
// byte string maps to exactly one ParseOutcome.

enum class ParseStatus { valid, invalid };

enum class InvalidReason {
    none,              // status == valid
    both_tokens,       // binary: yes and no both present
    no_token,          // binary: neither token; severity: no integer found
    multiple_numbers,  // severity: more than one integer literal
    out_of_range,      // severity: single integer outside [lo, hi]
    no_category,       // multiclass: no category phrase found
    ambiguous_category // multiclass: two or more distinct categories
};

inline std::string to_string(ParseStatus s) { return s == ParseStatus::valid ? "valid" : "invalid"; }

inline std::string to_string(InvalidReason r) {
    switch (r) {
        case InvalidReason::none: return "none";
        case InvalidReason::both_tokens: return "both_tokens";
        case InvalidReason::no_token: return "no_token";
        case InvalidReason::multiple_numbers: return "multiple_numbers";
        case InvalidReason::out_of_range: return "out_of_range";
        case InvalidReason::no_category: return "no_category";
        case InvalidReason::ambiguous_category: return "ambiguous_category";
    }
    return "?";
}

struct ParseOutcome {
    ParseStatus status = ParseStatus::invalid;
    InvalidReason reason = InvalidReason::none;
    std::string label;          // canonical label when valid
    std::size_t span_begin = 0; // [begin, end) offsets into raw, valid only
    std::size_t span_end = 0;

    bool valid() const { return status == ParseStatus::valid; }
};

namespace detail {

inline bool is_ascii_alpha(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }

inline char ascii_lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

// Case-insensitive match of phrase at pos with word boundaries on both ends.
// A boundary is start/end of string or a non-letter; "no" inside "normal"
// must not match.
inline bool phrase_at(std::string_view raw, std::size_t pos, std::string_view phrase) {
    if (pos + phrase.size() > raw.size()) return false;
    for (std::size_t i = 0; i < phrase.size(); ++i)
        if (ascii_lower(raw[pos + i]) != ascii_lower(phrase[i])) return false;
    if (pos > 0 && is_ascii_alpha(raw[pos - 1])) return false;
    std::size_t end = pos + phrase.size();
    if (end < raw.size() && is_ascii_alpha(raw[end])) return false;
    return true;
}

} // namespace detail

inline ParseOutcome parse_binary(std::string_view raw) {
    ParseOutcome out;
    std::size_t yes_at = std::string_view::npos;
    std::size_t no_at = std::string_view::npos;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (yes_at == std::string_view::npos && detail::phrase_at(raw, i, "yes")) yes_at = i;
        if (no_at == std::string_view::npos && detail::phrase_at(raw, i, "no")) no_at = i;
    }
    if (yes_at != std::string_view::npos && no_at != std::string_view::npos) {
        out.reason = InvalidReason::both_tokens;
        return out;
    }
    if (yes_at == std::string_view::npos && no_at == std::string_view::npos) {
        out.reason = InvalidReason::no_token;
        return out;
    }
    out.status = ParseStatus::valid;
    if (yes_at != std::string_view::npos) {
        out.label = "Yes";
        out.span_begin = yes_at;
        out.span_end = yes_at + 3;
    } else {
        out.label = "No";
        out.span_begin = no_at;
        out.span_end = no_at + 2;
    }
    return out;
}

// Extracts maximal ASCII digit runs. A '-' immediately preceding a run (and
// not itself preceded by a digit) attaches as the sign, so "-1" is the
// integer -1 while "3-4" is two integers. "2.5" contributes 2 and 5: decimals
// are deliberately not a recognized shape.
inline ParseOutcome parse_severity(std::string_view raw, int lo, int hi) {
    ParseOutcome out;
    struct Lit {
        std::int64_t value;
        bool overflow;
        std::size_t begin, end;
    };
    std::vector<Lit> lits;
    std::size_t i = 0;
    while (i < raw.size()) {
        if (!detail::is_ascii_digit(raw[i])) {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < raw.size() && detail::is_ascii_digit(raw[i])) ++i;
        std::size_t len = i - start;
        bool neg = start > 0 && raw[start - 1] == '-' &&
                   (start < 2 || !detail::is_ascii_digit(raw[start - 2]));
        bool overflow = len > 18;
        std::int64_t v = 0;
        if (!overflow) {
            for (std::size_t k = start; k < i; ++k) v = v * 10 + (raw[k] - '0');
            if (neg) v = -v;
        }
        lits.push_back({v, overflow, neg ? start - 1 : start, i});
    }
    if (lits.empty()) {
        out.reason = InvalidReason::no_token;
        return out;
    }
    if (lits.size() > 1) {
        out.reason = InvalidReason::multiple_numbers;
        return out;
    }
    const Lit& lit = lits[0];
    if (lit.overflow || lit.value < lo || lit.value > hi) {
        out.reason = InvalidReason::out_of_range;
        return out;
    }
    out.status = ParseStatus::valid;
    out.label = std::to_string(lit.value);
    out.span_begin = lit.begin;
    out.span_end = lit.end;
    return out;
}

// Longest-phrase-first so "Depressed and PTSD" consumes its span before the
// single-disorder phrases are searched. Exactly one surviving category kind
// is valid; repeats of the same kind are fine.
inline ParseOutcome parse_multiclass(std::string_view raw) {
    ParseOutcome out;
    const auto& cats = multiclass_categories();
    // Search order by phrase length, longest first.
    const std::string& both = cats[3]; // "Depressed and PTSD"
    std::vector<std::string> singles{cats[1], cats[2], cats[0]};

    std::vector<bool> consumed(raw.size(), false);
    struct Hit {
        std::string label;
        std::size_t begin, end;
    };
    std::vector<Hit> hits;

    auto scan = [&](const std::string& phrase) {
        for (std::size_t i = 0; i + phrase.size() <= raw.size(); ++i) {
            if (!detail::phrase_at(raw, i, phrase)) continue;
            bool clash = false;
            for (std::size_t k = i; k < i + phrase.size() && !clash; ++k) clash = consumed[k];
            if (clash) continue;
            for (std::size_t k = i; k < i + phrase.size(); ++k) consumed[k] = true;
            hits.push_back({phrase, i, i + phrase.size()});
        }
    };

    scan(both);
    for (const auto& p : singles) scan(p);

    if (hits.empty()) {
        out.reason = InvalidReason::no_category;
        return out;
    }
    std::string first_kind = hits[0].label;
    for (const auto& h : hits) {
        if (h.label != first_kind) {
            out.reason = InvalidReason::ambiguous_category;
            return out;
        }
    }
    // First match in raw order for the span.
    Hit best = hits[0];
    for (const auto& h : hits)
        if (h.begin < best.begin) best = h;
    out.status = ParseStatus::valid;
    out.label = first_kind;
    out.span_begin = best.begin;
    out.span_end = best.end;
    return out;
}

inline ParseOutcome parse_for_task(Task t, std::string_view raw) {
    if (is_binary_task(t)) return parse_binary(raw);
    if (is_severity_task(t)) {
        auto [lo, hi] = task_label_range(t);
        return parse_severity(raw, lo, hi);
    }
    return parse_multiclass(raw);
}

} // namespace modaleval
