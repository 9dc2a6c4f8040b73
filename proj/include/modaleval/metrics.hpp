#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "modaleval/errors.hpp"
#include "modaleval/tasks.hpp"

namespace modaleval {

struct EmptyClassError : Error {
    std::size_t class_index;
    explicit EmptyClassError(std::size_t i)
        : Error("EmptyClass", "class index " + std::to_string(i) + " has no scored truth samples"),
          class_index(i) {}
};

struct LengthMismatchError : Error {
    LengthMismatchError(std::size_t a, std::size_t b)
        : Error("LengthMismatch",
                std::to_string(a) + " truths vs " + std::to_string(b) + " predictions") {}
};

// counts[i][j] = truth class i predicted as class j, valid predictions only.
// Unparseable predictions sit in invalid_by_class (a sentinel column outside
// the square matrix); the scoring mode decides whether they enter recall
// denominators.
struct ConfusionMatrix {
    std::vector<std::string> classes;
    std::vector<std::vector<std::int64_t>> counts;
    std::vector<std::int64_t> invalid_by_class;
    ScoringMode mode = ScoringMode::count_invalid_as_wrong;

    static ConfusionMatrix with_classes(std::vector<std::string> cls,
                                        ScoringMode m = ScoringMode::count_invalid_as_wrong) {
        ConfusionMatrix cm;
        cm.classes = std::move(cls);
        cm.counts.assign(cm.classes.size(), std::vector<std::int64_t>(cm.classes.size(), 0));
        cm.invalid_by_class.assign(cm.classes.size(), 0);
        cm.mode = m;
        return cm;
    }

    std::size_t size() const { return classes.size(); }

    void add(std::size_t truth, std::size_t pred) { counts.at(truth).at(pred) += 1; }
    void add_invalid(std::size_t truth) { invalid_by_class.at(truth) += 1; }

    std::int64_t row_total(std::size_t i) const {
        std::int64_t s = 0;
        for (auto v : counts[i]) s += v;
        return s;
    }

    std::int64_t col_total(std::size_t j) const {
        std::int64_t s = 0;
        for (const auto& row : counts) s += row[j];
        return s;
    }

    std::int64_t invalid_count() const {
        std::int64_t s = 0;
        for (auto v : invalid_by_class) s += v;
        return s;
    }

    std::int64_t total() const {
        std::int64_t s = invalid_count();
        for (std::size_t i = 0; i < size(); ++i) s += row_total(i);
        return s;
    }

    // Truth samples of class i that count toward recall under the mode.
    std::int64_t recall_denominator(std::size_t i) const {
        std::int64_t d = row_total(i);
        if (mode == ScoringMode::count_invalid_as_wrong) d += invalid_by_class[i];
        return d;
    }

    // Truth samples of class i (for weighting). Excluded invalids do not
    // count as scored samples of the class.
    std::int64_t class_weight_count(std::size_t i) const { return recall_denominator(i); }
};

inline std::vector<double> per_class_recall(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.size());
    for (std::size_t i = 0; i < cm.size(); ++i) {
        std::int64_t d = cm.recall_denominator(i);
        if (d == 0) throw EmptyClassError(i);
        out[i] = static_cast<double>(cm.counts[i][i]) / static_cast<double>(d);
    }
    return out;
}

inline double balanced_accuracy(const ConfusionMatrix& cm) {
    auto recalls = per_class_recall(cm);
    double s = 0;
    for (double r : recalls) s += r;
    return s / static_cast<double>(recalls.size());
}

// Harness variant: classes without any scored truth sample are dropped (and
// reported) instead of aborting the whole cell.
inline double balanced_accuracy_dropping_empty(const ConfusionMatrix& cm,
                                               std::vector<std::size_t>* dropped = nullptr) {
    double s = 0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < cm.size(); ++i) {
        std::int64_t d = cm.recall_denominator(i);
        if (d == 0) {
            if (dropped) dropped->push_back(i);
            continue;
        }
        s += static_cast<double>(cm.counts[i][i]) / static_cast<double>(d);
        ++kept;
    }
    if (kept == 0) throw EmptyClassError(0);
    return s / static_cast<double>(kept);
}

namespace detail {

inline double one_vs_rest_f1(const ConfusionMatrix& cm, std::size_t c) {
    double tp = static_cast<double>(cm.counts[c][c]);
    std::int64_t pred_c = cm.col_total(c);
    std::int64_t truth_c = cm.recall_denominator(c);
    double p = pred_c > 0 ? tp / static_cast<double>(pred_c) : 0.0;
    double r = truth_c > 0 ? tp / static_cast<double>(truth_c) : 0.0;
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

} // namespace detail

// Positive-class F1 for 2-class matrices; returns 0 when P + R == 0.
inline double f1_binary(const ConfusionMatrix& cm, std::size_t positive_class = 1) {
    if (cm.size() != 2) throw Error("ConfigInvalid", "f1_binary requires a 2-class matrix");
    return detail::one_vs_rest_f1(cm, positive_class);
}

// Σ w_i · F1_i with w_i = truth count of class i / total truth count.
// Classes with no truth samples carry weight 0.
inline double weighted_f1(const ConfusionMatrix& cm) {
    if (cm.size() < 2) throw Error("ConfigInvalid", "weighted_f1 requires N >= 2 classes");
    std::int64_t total = 0;
    for (std::size_t i = 0; i < cm.size(); ++i) total += cm.class_weight_count(i);
    if (total == 0) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < cm.size(); ++i) {
        std::int64_t w = cm.class_weight_count(i);
        if (w == 0) continue;
        s += (static_cast<double>(w) / static_cast<double>(total)) * detail::one_vs_rest_f1(cm, i);
    }
    return s;
}

inline double mae(const std::vector<int>& truths, const std::vector<int>& preds) {
    if (truths.size() != preds.size()) throw LengthMismatchError(truths.size(), preds.size());
    if (truths.empty()) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < truths.size(); ++i)
        s += std::abs(static_cast<double>(truths[i]) - static_cast<double>(preds[i]));
    return s / static_cast<double>(truths.size());
}

// Multi-label bundle for the 4-category task decomposed into (dep, ptsd)
// bit pairs. A pred matching one of two bits earns half credit.
struct MultiLabelScores {
    double mean_credit = 0;
    double grouped_balanced_credit = 0; // unweighted mean over the 4 truth combinations
    double micro_f1 = 0;                // pooled 2n binary sub-decisions, positive = disorder present
};

using BitPair = std::pair<int, int>;

inline MultiLabelScores multilabel_scores(const std::vector<BitPair>& truths,
                                          const std::vector<BitPair>& preds) {
    if (truths.size() != preds.size()) throw LengthMismatchError(truths.size(), preds.size());
    MultiLabelScores out;
    if (truths.empty()) return out;

    double credit_sum = 0;
    double group_sum[4] = {0, 0, 0, 0};
    std::int64_t group_n[4] = {0, 0, 0, 0};
    std::int64_t tp = 0, fp = 0, fn = 0;

    for (std::size_t i = 0; i < truths.size(); ++i) {
        auto [td, tp_bit] = truths[i];
        auto [pd, pp_bit] = preds[i];
        int matched = (td == pd ? 1 : 0) + (tp_bit == pp_bit ? 1 : 0);
        double credit = matched / 2.0;
        credit_sum += credit;
        int g = td * 2 + tp_bit;
        group_sum[g] += credit;
        group_n[g] += 1;
        // Pooled binary sub-decisions.
        for (auto [t, p] : {std::pair{td, pd}, std::pair{tp_bit, pp_bit}}) {
            if (t == 1 && p == 1) ++tp;
            else if (t == 0 && p == 1) ++fp;
            else if (t == 1 && p == 0) ++fn;
        }
    }

    out.mean_credit = credit_sum / static_cast<double>(truths.size());
    double gsum = 0;
    int gk = 0;
    for (int g = 0; g < 4; ++g) {
        if (group_n[g] == 0) continue;
        gsum += group_sum[g] / static_cast<double>(group_n[g]);
        ++gk;
    }
    out.grouped_balanced_credit = gk > 0 ? gsum / gk : 0.0;
    double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp) + static_cast<double>(fn);
    out.micro_f1 = denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    return out;
}

struct MetricReport {
    double balanced_accuracy = 0;
    double f1 = 0; // positive-class F1 for binary tasks, weighted F1 otherwise
    std::optional<double> mae;
    std::vector<double> per_class_recall;
    double invalid_rate = 0;
    std::int64_t n = 0;
    std::vector<std::string> classes;
    std::vector<std::string> dropped_classes; // empty truth classes excluded from BA
};

} // namespace modaleval
