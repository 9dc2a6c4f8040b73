#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "modaleval/metrics.hpp"

using namespace modaleval;

namespace {

constexpr double kTol = 1e-12;

struct Sample {
    int truth = 0;
    bool valid = false;
    int pred = 0;
};

// Naive re-derivations straight from the definitions; loops only, no reuse
// of the library's matrix bookkeeping.
std::optional<double> oracle_recall(const std::vector<Sample>& ss, int cls, ScoringMode mode) {
    std::int64_t correct = 0, denom = 0;
    for (const auto& s : ss) {
        if (s.truth != cls) continue;
        if (s.valid) {
            denom += 1;
            if (s.pred == cls) correct += 1;
        } else if (mode == ScoringMode::count_invalid_as_wrong) {
            denom += 1;
        }
    }
    if (denom == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(denom);
}

std::optional<double> oracle_ba(const std::vector<Sample>& ss, int k, ScoringMode mode) {
    double sum = 0;
    for (int c = 0; c < k; ++c) {
        auto r = oracle_recall(ss, c, mode);
        if (!r) return std::nullopt;
        sum += *r;
    }
    return sum / k;
}

double oracle_ba_dropping(const std::vector<Sample>& ss, int k, ScoringMode mode) {
    double sum = 0;
    int kept = 0;
    for (int c = 0; c < k; ++c) {
        auto r = oracle_recall(ss, c, mode);
        if (!r) continue;
        sum += *r;
        ++kept;
    }
    REQUIRE(kept > 0);
    return sum / kept;
}

double oracle_f1_one_vs_rest(const std::vector<Sample>& ss, int cls, ScoringMode mode) {
    std::int64_t tp = 0, pred_c = 0, truth_c = 0;
    for (const auto& s : ss) {
        if (s.valid && s.pred == cls) {
            pred_c += 1;
            if (s.truth == cls) tp += 1;
        }
        if (s.truth == cls && (s.valid || mode == ScoringMode::count_invalid_as_wrong))
            truth_c += 1;
    }
    double p = pred_c ? static_cast<double>(tp) / pred_c : 0.0;
    double r = truth_c ? static_cast<double>(tp) / truth_c : 0.0;
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

double oracle_weighted_f1(const std::vector<Sample>& ss, int k, ScoringMode mode) {
    std::int64_t total = 0;
    std::vector<std::int64_t> w(k, 0);
    for (const auto& s : ss)
        if (s.valid || mode == ScoringMode::count_invalid_as_wrong) {
            w[s.truth] += 1;
            total += 1;
        }
    if (total == 0) return 0.0;
    double sum = 0;
    for (int c = 0; c < k; ++c)
        if (w[c] > 0)
            sum += (static_cast<double>(w[c]) / total) * oracle_f1_one_vs_rest(ss, c, mode);
    return sum;
}

ConfusionMatrix matrix_of(const std::vector<Sample>& ss, int k, ScoringMode mode) {
    std::vector<std::string> classes;
    for (int c = 0; c < k; ++c) classes.push_back(std::to_string(c));
    ConfusionMatrix cm = ConfusionMatrix::with_classes(classes, mode);
    for (const auto& s : ss) {
        if (s.valid) cm.add(s.truth, s.pred);
        else cm.add_invalid(s.truth);
    }
    return cm;
}

} // namespace

TEST_CASE("hand-worked binary matrix") {
    std::vector<Sample> ss{{1, true, 1}, {1, true, 0}, {1, true, 1}, {0, true, 0}, {0, true, 1}};
    ConfusionMatrix cm = matrix_of(ss, 2, ScoringMode::count_invalid_as_wrong);
    CHECK_THAT(balanced_accuracy(cm), Catch::Matchers::WithinAbs(7.0 / 12.0, kTol));
    CHECK_THAT(f1_binary(cm), Catch::Matchers::WithinAbs(2.0 / 3.0, kTol));
    auto rec = per_class_recall(cm);
    CHECK_THAT(rec[0], Catch::Matchers::WithinAbs(0.5, kTol));
    CHECK_THAT(rec[1], Catch::Matchers::WithinAbs(2.0 / 3.0, kTol));
}

TEST_CASE("invalid predictions shift recall denominators by mode") {
    // Two valid positives (one right), one invalid positive.
    std::vector<Sample> ss{{1, true, 1}, {1, true, 0}, {1, false, 0}, {0, true, 0}};
    ConfusionMatrix wrong = matrix_of(ss, 2, ScoringMode::count_invalid_as_wrong);
    ConfusionMatrix excl = matrix_of(ss, 2, ScoringMode::exclude_invalid);
    CHECK_THAT(per_class_recall(wrong)[1], Catch::Matchers::WithinAbs(1.0 / 3.0, kTol));
    CHECK_THAT(per_class_recall(excl)[1], Catch::Matchers::WithinAbs(1.0 / 2.0, kTol));
    CHECK(wrong.total() == 4);
    CHECK(wrong.invalid_count() == 1);
}

TEST_CASE("empty classes abort or drop") {
    std::vector<Sample> ss{{0, true, 0}, {0, true, 1}};
    ConfusionMatrix cm = matrix_of(ss, 2, ScoringMode::count_invalid_as_wrong);
    CHECK_THROWS_AS(balanced_accuracy(cm), EmptyClassError);
    std::vector<std::size_t> dropped;
    CHECK_THAT(balanced_accuracy_dropping_empty(cm, &dropped),
               Catch::Matchers::WithinAbs(0.5, kTol));
    REQUIRE(dropped.size() == 1);
    CHECK(dropped[0] == 1);

    // All-invalid class under exclude_invalid also drops.
    std::vector<Sample> ss2{{0, true, 0}, {1, false, 0}};
    ConfusionMatrix cm2 = matrix_of(ss2, 2, ScoringMode::exclude_invalid);
    dropped.clear();
    CHECK_THAT(balanced_accuracy_dropping_empty(cm2, &dropped),
               Catch::Matchers::WithinAbs(1.0, kTol));
    CHECK(dropped == std::vector<std::size_t>{1});
}

TEST_CASE("degenerate F1 values") {
    // No positive predictions and no positive truths: P + R == 0.
    std::vector<Sample> ss{{0, true, 0}, {0, true, 0}};
    ConfusionMatrix cm = matrix_of(ss, 2, ScoringMode::count_invalid_as_wrong);
    CHECK(f1_binary(cm) == 0.0);
    ConfusionMatrix one = ConfusionMatrix::with_classes({"only"});
    CHECK_THROWS_AS(f1_binary(one), Error);
    CHECK_THROWS_AS(weighted_f1(one), Error);
}

TEST_CASE("mae basics") {
    CHECK_THAT(mae({0, 2, 4}, {1, 2, 0}), Catch::Matchers::WithinAbs(5.0 / 3.0, kTol));
    CHECK(mae({}, {}) == 0.0);
    CHECK_THROWS_AS(mae({1}, {1, 2}), LengthMismatchError);
}

TEST_CASE("hand-worked multilabel bundle") {
    std::vector<BitPair> truths{{0, 0}, {1, 0}, {1, 1}};
    std::vector<BitPair> preds{{0, 1}, {1, 0}, {0, 1}};
    MultiLabelScores s = multilabel_scores(truths, preds);
    CHECK_THAT(s.mean_credit, Catch::Matchers::WithinAbs(2.0 / 3.0, kTol));
    CHECK_THAT(s.grouped_balanced_credit, Catch::Matchers::WithinAbs(2.0 / 3.0, kTol));
    CHECK_THAT(s.micro_f1, Catch::Matchers::WithinAbs(2.0 / 3.0, kTol));
    CHECK_THROWS_AS(multilabel_scores({{0, 0}}, {}), LengthMismatchError);
    MultiLabelScores empty = multilabel_scores({}, {});
    CHECK(empty.mean_credit == 0.0);
}

TEST_CASE("random vectors agree with the naive oracles") {
    std::mt19937_64 eng(911u);
    const ScoringMode modes[2] = {ScoringMode::count_invalid_as_wrong,
                                  ScoringMode::exclude_invalid};
    for (int iter = 0; iter < 10'000; ++iter) {
        int k = 2 + static_cast<int>(eng() % 4);
        int n = 1 + static_cast<int>(eng() % 60);
        ScoringMode mode = modes[eng() % 2];
        std::vector<Sample> ss(n);
        for (auto& s : ss) {
            s.truth = static_cast<int>(eng() % k);
            s.valid = (eng() % 100) >= 15;
            s.pred = static_cast<int>(eng() % k);
        }
        ConfusionMatrix cm = matrix_of(ss, k, mode);

        auto ba = oracle_ba(ss, k, mode);
        if (ba) {
            double got = balanced_accuracy(cm);
            if (std::abs(got - *ba) > kTol) {
                CAPTURE(iter, k, n, got, *ba);
                REQUIRE(false);
            }
        } else {
            CHECK_THROWS_AS(balanced_accuracy(cm), EmptyClassError);
        }
        bool any_scored = false;
        for (int c = 0; c < k && !any_scored; ++c)
            if (oracle_recall(ss, c, mode)) any_scored = true;
        if (!any_scored) {
            // Every sample invalid under exclude mode: nothing left to score.
            CHECK_THROWS_AS(balanced_accuracy_dropping_empty(cm), EmptyClassError);
        } else {
            double got_drop = balanced_accuracy_dropping_empty(cm);
            double want_drop = oracle_ba_dropping(ss, k, mode);
            if (std::abs(got_drop - want_drop) > kTol) {
                CAPTURE(iter, k, n, got_drop, want_drop);
                REQUIRE(false);
            }
        }
        if (k == 2) {
            double got_f1 = f1_binary(cm);
            double want_f1 = oracle_f1_one_vs_rest(ss, 1, mode);
            if (std::abs(got_f1 - want_f1) > kTol) {
                CAPTURE(iter, n, got_f1, want_f1);
                REQUIRE(false);
            }
        }
        double got_w = weighted_f1(cm);
        double want_w = oracle_weighted_f1(ss, k, mode);
        if (std::abs(got_w - want_w) > kTol) {
            CAPTURE(iter, k, n, got_w, want_w);
            REQUIRE(false);
        }

        // MAE over the valid pairs plus the multilabel bundle on bit pairs.
        std::vector<int> ts, ps;
        for (const auto& s : ss)
            if (s.valid) {
                ts.push_back(s.truth);
                ps.push_back(s.pred);
            }
        double want_mae = 0;
        for (std::size_t i = 0; i < ts.size(); ++i) want_mae += std::abs(ts[i] - ps[i]);
        want_mae = ts.empty() ? 0.0 : want_mae / static_cast<double>(ts.size());
        if (std::abs(mae(ts, ps) - want_mae) > kTol) {
            CAPTURE(iter);
            REQUIRE(false);
        }

        std::vector<BitPair> bt(static_cast<std::size_t>(n)), bp(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            bt[static_cast<std::size_t>(i)] = {static_cast<int>(eng() % 2),
                                               static_cast<int>(eng() % 2)};
            bp[static_cast<std::size_t>(i)] = {static_cast<int>(eng() % 2),
                                               static_cast<int>(eng() % 2)};
        }
        MultiLabelScores ml = multilabel_scores(bt, bp);
        double credit_sum = 0, gsum[4] = {0, 0, 0, 0};
        std::int64_t gn[4] = {0, 0, 0, 0}, tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < n; ++i) {
            auto [td, tb] = bt[static_cast<std::size_t>(i)];
            auto [pd, pb] = bp[static_cast<std::size_t>(i)];
            double credit = ((td == pd) + (tb == pb)) / 2.0;
            credit_sum += credit;
            gsum[td * 2 + tb] += credit;
            gn[td * 2 + tb] += 1;
            tp += (td == 1 && pd == 1) + (tb == 1 && pb == 1);
            fp += (td == 0 && pd == 1) + (tb == 0 && pb == 1);
            fn += (td == 1 && pd == 0) + (tb == 1 && pb == 0);
        }
        double want_mean = credit_sum / n;
        double want_grouped = 0;
        int gk = 0;
        for (int g = 0; g < 4; ++g)
            if (gn[g]) {
                want_grouped += gsum[g] / static_cast<double>(gn[g]);
                ++gk;
            }
        want_grouped = gk ? want_grouped / gk : 0.0;
        double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp) +
                       static_cast<double>(fn);
        double want_micro = denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
        if (std::abs(ml.mean_credit - want_mean) > kTol ||
            std::abs(ml.grouped_balanced_credit - want_grouped) > kTol ||
            std::abs(ml.micro_f1 - want_micro) > kTol) {
            CAPTURE(iter, n);
            REQUIRE(false);
        }
    }
    SUCCEED("10k random vectors matched the oracles");
}
