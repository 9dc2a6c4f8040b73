#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modaleval/errors.hpp"
#include "modaleval/tasks.hpp"

namespace modaleval {

struct KeyMismatchError : Error {
    explicit KeyMismatchError(const std::string& detail) : Error("KeyMismatch", detail) {}
};

// Per-participant correctness of one run cell. Invalid parses count as
// incorrect; the map key set must match exactly between compared vectors.
struct CorrectnessVector {
    std::string model;
    Task task = Task::dep_binary;
    Variant variant = Variant::P1;
    Modality modality = Modality::text;
    ShotMode shot_mode = ShotMode::zero_shot;
    std::map<int, bool> bits; // participant_id -> correct

    std::size_t size() const { return bits.size(); }
};

struct DisagreementPartition {
    std::int64_t a_only_correct = 0;
    std::int64_t b_only_correct = 0;
    std::int64_t both_correct = 0;
    std::int64_t both_incorrect = 0;

    std::int64_t total() const {
        return a_only_correct + b_only_correct + both_correct + both_incorrect;
    }
    std::int64_t disagreements() const { return a_only_correct + b_only_correct; }
};

struct CombinedResolution {
    std::int64_t resolved_correctly = 0;    // A,B disagree; combined correct
    std::int64_t resolved_incorrectly = 0;  // A,B disagree; combined incorrect
    std::int64_t flipped_agreement_right = 0; // A,B both incorrect; combined correct
    std::int64_t flipped_agreement_wrong = 0; // A,B both correct; combined incorrect
    std::int64_t confirmed_agreement = 0;     // combined sides with an agreeing pair
};

namespace detail {

inline void require_same_keys(const CorrectnessVector& a, const CorrectnessVector& b) {
    if (a.bits.size() == b.bits.size()) {
        bool same = true;
        auto ia = a.bits.begin();
        auto ib = b.bits.begin();
        for (; ia != a.bits.end(); ++ia, ++ib)
            if (ia->first != ib->first) {
                same = false;
                break;
            }
        if (same) return;
    }
    std::string detail = "participant key sets differ:";
    int listed = 0;
    for (const auto& [id, _] : a.bits)
        if (!b.bits.count(id) && listed < 5) {
            detail += " a-only " + std::to_string(id);
            ++listed;
        }
    for (const auto& [id, _] : b.bits)
        if (!a.bits.count(id) && listed < 10) {
            detail += " b-only " + std::to_string(id);
            ++listed;
        }
    throw KeyMismatchError(detail);
}

} // namespace detail

inline DisagreementPartition partition(const CorrectnessVector& a, const CorrectnessVector& b) {
    detail::require_same_keys(a, b);
    DisagreementPartition p;
    auto ib = b.bits.begin();
    for (auto ia = a.bits.begin(); ia != a.bits.end(); ++ia, ++ib) {
        bool ca = ia->second, cb = ib->second;
        if (ca && cb) ++p.both_correct;
        else if (ca) ++p.a_only_correct;
        else if (cb) ++p.b_only_correct;
        else ++p.both_incorrect;
    }
    return p;
}

inline CombinedResolution resolve(const CorrectnessVector& a, const CorrectnessVector& b,
                                  const CorrectnessVector& combined) {
    detail::require_same_keys(a, b);
    detail::require_same_keys(a, combined);
    CombinedResolution r;
    auto ib = b.bits.begin();
    auto ic = combined.bits.begin();
    for (auto ia = a.bits.begin(); ia != a.bits.end(); ++ia, ++ib, ++ic) {
        bool ca = ia->second, cb = ib->second, cc = ic->second;
        if (ca != cb) {
            if (cc) ++r.resolved_correctly;
            else ++r.resolved_incorrectly;
        } else if (cc == ca) {
            ++r.confirmed_agreement;
        } else if (cc) {
            ++r.flipped_agreement_right; // pair agreed on wrong, combined right
        } else {
            ++r.flipped_agreement_wrong; // pair agreed on right, combined wrong
        }
    }
    return r;
}

// Modal Superiority Score, in percent. Undefined (no value) when the two
// runs never disagree — that is not the same thing as a 0 tie.
inline std::optional<double> mss(const DisagreementPartition& p) {
    std::int64_t denom = p.a_only_correct + p.b_only_correct;
    if (denom == 0) return std::nullopt;
    return 100.0 * static_cast<double>(p.a_only_correct - p.b_only_correct) /
           static_cast<double>(denom);
}

// Disagreement Resolvement Score, in percent.
inline std::optional<double> drs(const CombinedResolution& c) {
    std::int64_t denom = c.resolved_correctly + c.resolved_incorrectly;
    if (denom == 0) return std::nullopt;
    return 100.0 * static_cast<double>(c.resolved_correctly - c.resolved_incorrectly) /
           static_cast<double>(denom);
}

// MSS of the combined modality against the joint agreement of the pair,
// restricted to agreement samples the combined run flips.
inline std::optional<double> mss_combined_vs_agreement(const CombinedResolution& c) {
    std::int64_t denom = c.flipped_agreement_right + c.flipped_agreement_wrong;
    if (denom == 0) return std::nullopt;
    return 100.0 * static_cast<double>(c.flipped_agreement_right - c.flipped_agreement_wrong) /
           static_cast<double>(denom);
}

inline std::string format_score(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.2f%%", *v);
    return buf;
}

// Plot-ready co-occurrence table. Category tags carry the figure's color
// semantics: green = agreement proven right (all runs correct, or the whole
// triple agreeing), red = agreement gone wrong, blue = split decisions.
struct CoOccurrenceCell {
    bool a_correct = false;
    bool b_correct = false;
    std::optional<bool> combined_correct;
    std::int64_t count = 0;
    std::string category;
};

struct CoOccurrenceTable {
    std::vector<CoOccurrenceCell> cells;

    std::string to_csv() const {
        bool with_combined = !cells.empty() && cells.front().combined_correct.has_value();
        std::string out = with_combined ? "a_correct,b_correct,combined_correct,count,category\n"
                                        : "a_correct,b_correct,count,category\n";
        for (const auto& c : cells) {
            out += c.a_correct ? "1," : "0,";
            out += c.b_correct ? "1," : "0,";
            if (with_combined) out += *c.combined_correct ? "1," : "0,";
            out += std::to_string(c.count) + "," + c.category + "\n";
        }
        return out;
    }
};

inline CoOccurrenceTable emit_co_occurrence(const CorrectnessVector& a, const CorrectnessVector& b,
                                            const CorrectnessVector* combined = nullptr) {
    detail::require_same_keys(a, b);
    if (combined) detail::require_same_keys(a, *combined);
    CoOccurrenceTable table;
    if (!combined) {
        std::int64_t counts[2][2] = {{0, 0}, {0, 0}};
        auto ib = b.bits.begin();
        for (auto ia = a.bits.begin(); ia != a.bits.end(); ++ia, ++ib)
            counts[ia->second ? 1 : 0][ib->second ? 1 : 0] += 1;
        for (int ca = 0; ca < 2; ++ca)
            for (int cb = 0; cb < 2; ++cb) {
                CoOccurrenceCell cell;
                cell.a_correct = ca == 1;
                cell.b_correct = cb == 1;
                cell.count = counts[ca][cb];
                cell.category = (ca && cb) ? "green" : (!ca && !cb) ? "red" : "blue";
                table.cells.push_back(cell);
            }
        return table;
    }
    std::int64_t counts[2][2][2] = {};
    auto ib = b.bits.begin();
    auto ic = combined->bits.begin();
    for (auto ia = a.bits.begin(); ia != a.bits.end(); ++ia, ++ib, ++ic)
        counts[ia->second ? 1 : 0][ib->second ? 1 : 0][ic->second ? 1 : 0] += 1;
    for (int ca = 0; ca < 2; ++ca)
        for (int cb = 0; cb < 2; ++cb)
            for (int cc = 0; cc < 2; ++cc) {
                CoOccurrenceCell cell;
                cell.a_correct = ca == 1;
                cell.b_correct = cb == 1;
                cell.combined_correct = cc == 1;
                cell.count = counts[ca][cb][cc];
                if (ca != cb) cell.category = "blue";       // pair split; combined resolves
                else if (ca == cc) cell.category = "green"; // triple in full agreement
                else cell.category = "red";                 // combined flips an agreeing pair
                table.cells.push_back(cell);
            }
    return table;
}

} // namespace modaleval
