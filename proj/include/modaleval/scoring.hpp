#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "modaleval/corpus.hpp"
#include "modaleval/errors.hpp"
#include "modaleval/metrics.hpp"
#include "modaleval/modality.hpp"
#include "modaleval/run_store.hpp"

namespace modaleval {

struct NoRecordsError : Error {
    explicit NoRecordsError(const std::string& detail) : Error("NoRecords", detail) {}
};

struct AmbiguousCellError : Error {
    explicit AmbiguousCellError(const std::string& detail) : Error("AmbiguousCell", detail) {}
};

// One scored experiment cell. scale names the severity rebinning in effect;
// sub distinguishes the multi-label decompositions of the 4-category task.
struct ScoreCell {
    Task task = Task::dep_binary;
    Variant variant = Variant::P1;
    Modality modality = Modality::text;
    std::string provider;
    ShotMode shot_mode = ShotMode::zero_shot;
    std::string scale; // empty for non-severity tasks
    std::string sub;   // "", "dep", "ptsd", "multilabel"
    MetricReport report;
    std::optional<MultiLabelScores> multilabel;
    std::int64_t n = 0;
    std::int64_t invalid = 0;
    std::int64_t errors = 0;

    auto sort_key() const {
        return std::make_tuple(static_cast<int>(task), static_cast<int>(variant),
                               static_cast<int>(modality), provider,
                               static_cast<int>(shot_mode), scale, sub);
    }

    std::string file_stem() const {
        std::string s = to_string(task) + "_" + to_string(variant) + "_" + to_string(modality) +
                        "_" + provider + "_" + to_string(shot_mode);
        if (!scale.empty()) s += "_" + scale;
        if (!sub.empty()) s += "_" + sub;
        return s;
    }
};

struct ScoreSet {
    std::vector<ScoreCell> cells;
    ScoringMode mode = ScoringMode::count_invalid_as_wrong;
};

struct ScoreOptions {
    std::vector<std::string> ptsd_scale_names; // default: from run config, else reference
    std::optional<ScoringMode> mode;           // default: from run config
    std::string scales_file;                   // default: from run config
};

namespace detail {

inline std::size_t label_index(const std::vector<std::string>& classes, const std::string& label) {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == label) return i;
    throw Error("ScoreError", "label '" + label + "' is not a class of this task");
}

inline std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// Truth label index under a specific severity scale, rebinned from the raw
// questionnaire total stored with the record.
inline std::size_t severity_truth_index(const RunRecord& r, const SeverityScale& scale,
                                        bool is_primary) {
    if (r.truth_raw) return static_cast<std::size_t>(map_severity(*r.truth_raw, scale));
    if (!is_primary)
        throw Error("ScoreError", "record for participant " +
                                      std::to_string(r.id.participant_id) +
                                      " has no raw score; cannot rebin under scale " + scale.name);
    return static_cast<std::size_t>(std::stoi(r.truth));
}

inline bool record_failed(const RunRecord& r) {
    return !r.error_class.empty() || !r.parse.valid();
}

inline MetricReport finish_report(ConfusionMatrix& cm, std::int64_t n, std::int64_t invalid,
                                  std::int64_t errors, bool binary) {
    MetricReport rep;
    rep.classes = cm.classes;
    rep.n = n;
    std::vector<std::size_t> dropped;
    rep.balanced_accuracy = balanced_accuracy_dropping_empty(cm, &dropped);
    for (auto i : dropped) rep.dropped_classes.push_back(cm.classes[i]);
    rep.f1 = binary ? f1_binary(cm) : weighted_f1(cm);
    rep.per_class_recall.assign(cm.size(), std::nan(""));
    for (std::size_t i = 0; i < cm.size(); ++i) {
        std::int64_t d = cm.recall_denominator(i);
        if (d > 0)
            rep.per_class_recall[i] =
                static_cast<double>(cm.counts[i][i]) / static_cast<double>(d);
    }
    rep.invalid_rate = n > 0 ? static_cast<double>(invalid + errors) / static_cast<double>(n) : 0.0;
    return rep;
}

} // namespace detail

// Scores a record set cell by cell. PTSD severity is scored once per
// requested scale, rebinning truth from the stored raw totals without
// re-running inference.
inline ScoreSet score_records(const std::vector<RunRecord>& records, ScoringMode mode,
                              const std::vector<std::string>& ptsd_scale_names,
                              const std::vector<SeverityScale>& loaded) {
    if (records.empty()) throw NoRecordsError("no records to score");
    std::vector<std::string> ptsd_names = ptsd_scale_names;
    if (ptsd_names.empty()) ptsd_names = {"ptsd_reference"};

    std::map<std::tuple<int, int, int, std::string, int>, std::vector<const RunRecord*>> groups;
    for (const auto& r : records)
        groups[{static_cast<int>(r.id.task), static_cast<int>(r.id.variant),
                static_cast<int>(r.id.modality), r.id.provider,
                static_cast<int>(r.id.shot_mode)}]
            .push_back(&r);

    ScoreSet out;
    out.mode = mode;
    for (const auto& [key, group] : groups) {
        ScoreCell base;
        base.task = static_cast<Task>(std::get<0>(key));
        base.variant = static_cast<Variant>(std::get<1>(key));
        base.modality = static_cast<Modality>(std::get<2>(key));
        base.provider = std::get<3>(key);
        base.shot_mode = static_cast<ShotMode>(std::get<4>(key));
        base.n = static_cast<std::int64_t>(group.size());
        for (const auto* r : group) {
            if (!r->error_class.empty()) ++base.errors;
            else if (!r->parse.valid()) ++base.invalid;
        }

        Task task = base.task;
        if (is_binary_task(task)) {
            ScoreCell cell = base;
            auto cm = ConfusionMatrix::with_classes(task_class_labels(task), mode);
            for (const auto* r : group) {
                std::size_t t = detail::label_index(cm.classes, r->truth);
                if (detail::record_failed(*r)) cm.add_invalid(t);
                else cm.add(t, detail::label_index(cm.classes, r->parse.label));
            }
            cell.report = detail::finish_report(cm, cell.n, cell.invalid, cell.errors, true);
            out.cells.push_back(std::move(cell));
        } else if (is_severity_task(task)) {
            std::vector<std::string> names =
                task == Task::ptsd_severity ? ptsd_names
                                            : std::vector<std::string>{"depression_phq8"};
            for (std::size_t si = 0; si < names.size(); ++si) {
                const SeverityScale& scale = find_scale(loaded, names[si]);
                if (scale.label_count() != task_class_labels(task).size())
                    throw Error("ConfigInvalid", "scale '" + scale.name + "' has " +
                                                     std::to_string(scale.label_count()) +
                                                     " bins; task " + to_string(task) +
                                                     " expects " +
                                                     std::to_string(task_class_labels(task).size()));
                ScoreCell cell = base;
                cell.scale = scale.name;
                auto cm = ConfusionMatrix::with_classes(task_class_labels(task), mode);
                double err_sum = 0;
                std::int64_t err_n = 0;
                int max_err = static_cast<int>(scale.label_count()) - 1;
                for (const auto* r : group) {
                    std::size_t t = detail::severity_truth_index(*r, scale, si == 0);
                    if (detail::record_failed(*r)) {
                        cm.add_invalid(t);
                        if (mode == ScoringMode::count_invalid_as_wrong) {
                            // Unparseable answers carry the full label-space
                            // width so they never beat a wrong-but-valid one.
                            err_sum += max_err;
                            ++err_n;
                        }
                    } else {
                        std::size_t p = detail::label_index(cm.classes, r->parse.label);
                        cm.add(t, p);
                        err_sum += std::abs(static_cast<double>(t) - static_cast<double>(p));
                        ++err_n;
                    }
                }
                cell.report = detail::finish_report(cm, cell.n, cell.invalid, cell.errors, false);
                cell.report.mae = err_n > 0 ? err_sum / static_cast<double>(err_n) : 0.0;
                out.cells.push_back(std::move(cell));
            }
        } else {
            // 4-category task: the full matrix plus per-disorder binary views
            // and the multi-label bundle.
            ScoreCell cell = base;
            auto cm = ConfusionMatrix::with_classes(task_class_labels(task), mode);
            for (const auto* r : group) {
                std::size_t t = detail::label_index(cm.classes, r->truth);
                if (detail::record_failed(*r)) cm.add_invalid(t);
                else cm.add(t, detail::label_index(cm.classes, r->parse.label));
            }
            cell.report = detail::finish_report(cm, cell.n, cell.invalid, cell.errors, false);
            out.cells.push_back(cell);

            for (int disorder = 0; disorder < 2; ++disorder) {
                ScoreCell sub = base;
                sub.sub = disorder == 0 ? "dep" : "ptsd";
                auto scm = ConfusionMatrix::with_classes({"No", "Yes"}, mode);
                for (const auto* r : group) {
                    auto [td, tp] = multiclass_bits(r->truth);
                    std::size_t t = static_cast<std::size_t>(disorder == 0 ? td : tp);
                    if (detail::record_failed(*r)) {
                        scm.add_invalid(t);
                    } else {
                        auto [pd, pp] = multiclass_bits(r->parse.label);
                        scm.add(t, static_cast<std::size_t>(disorder == 0 ? pd : pp));
                    }
                }
                sub.report = detail::finish_report(scm, sub.n, sub.invalid, sub.errors, true);
                out.cells.push_back(std::move(sub));
            }

            ScoreCell ml = base;
            ml.sub = "multilabel";
            std::vector<BitPair> truths, preds;
            for (const auto* r : group) {
                auto tb = multiclass_bits(r->truth);
                if (detail::record_failed(*r)) {
                    if (mode == ScoringMode::exclude_invalid) continue;
                    // Unparseable under count-as-wrong: both sub-decisions wrong.
                    truths.push_back(tb);
                    preds.push_back({1 - tb.first, 1 - tb.second});
                } else {
                    truths.push_back(tb);
                    preds.push_back(multiclass_bits(r->parse.label));
                }
            }
            ml.multilabel = multilabel_scores(truths, preds);
            ml.report.n = static_cast<std::int64_t>(truths.size());
            ml.report.invalid_rate =
                base.n > 0 ? static_cast<double>(base.invalid + base.errors) /
                                 static_cast<double>(base.n)
                           : 0.0;
            out.cells.push_back(std::move(ml));
        }
    }

    std::sort(out.cells.begin(), out.cells.end(),
              [](const ScoreCell& a, const ScoreCell& b) { return a.sort_key() < b.sort_key(); });
    return out;
}

// Scores a run directory, pulling mode/scale defaults from its manifest.
inline ScoreSet score_run(const std::string& run_dir, const ScoreOptions& opt = {}) {
    std::vector<RunRecord> records = RunStore::load(run_dir);
    if (records.empty()) throw NoRecordsError("no records in " + run_dir);

    nlohmann::json run_cfg = nlohmann::json::object();
    if (auto m = RunManifest::load(run_dir)) run_cfg = m->config;

    ScoringMode mode = opt.mode ? *opt.mode
                                : scoring_mode_from_string(run_cfg.value(
                                      "scoring_mode", std::string("count_invalid_as_wrong")));
    std::string scales_file = !opt.scales_file.empty()
                                  ? opt.scales_file
                                  : run_cfg.value("scales_file", std::string());
    std::vector<SeverityScale> loaded;
    if (!scales_file.empty()) loaded = load_severity_scales(scales_file);

    std::vector<std::string> ptsd_names = opt.ptsd_scale_names;
    if (ptsd_names.empty() && run_cfg.contains("severity_scales") &&
        run_cfg["severity_scales"].contains("ptsd_severity"))
        ptsd_names = run_cfg["severity_scales"]["ptsd_severity"].get<std::vector<std::string>>();

    return score_records(records, mode, ptsd_names, loaded);
}

inline nlohmann::json cell_to_json(const ScoreCell& c, ScoringMode mode) {
    nlohmann::json j;
    j["task"] = to_string(c.task);
    j["variant"] = to_string(c.variant);
    j["modality"] = to_string(c.modality);
    j["provider"] = c.provider;
    j["shot_mode"] = to_string(c.shot_mode);
    j["scale"] = c.scale;
    j["sub"] = c.sub;
    j["scoring_mode"] = to_string(mode);
    j["n"] = c.n;
    j["invalid"] = c.invalid;
    j["errors"] = c.errors;
    if (c.multilabel) {
        j["mean_credit"] = c.multilabel->mean_credit;
        j["grouped_balanced_credit"] = c.multilabel->grouped_balanced_credit;
        j["micro_f1"] = c.multilabel->micro_f1;
        j["scored_n"] = c.report.n;
        j["invalid_rate"] = c.report.invalid_rate;
    } else {
        j["balanced_accuracy"] = c.report.balanced_accuracy;
        j["f1"] = c.report.f1;
        if (c.report.mae) j["mae"] = *c.report.mae;
        j["invalid_rate"] = c.report.invalid_rate;
        j["classes"] = c.report.classes;
        j["per_class_recall"] = c.report.per_class_recall;
        j["dropped_classes"] = c.report.dropped_classes;
    }
    return j;
}

inline std::string render_cells_csv(const ScoreSet& s) {
    std::string csv =
        "task,variant,modality,provider,shot_mode,scale,sub,n,invalid,errors,"
        "balanced_accuracy,f1,mae,mean_credit,grouped_balanced_credit,micro_f1,invalid_rate\n";
    for (const auto& c : s.cells) {
        std::vector<std::string> f{to_string(c.task),
                                   to_string(c.variant),
                                   to_string(c.modality),
                                   c.provider,
                                   to_string(c.shot_mode),
                                   c.scale,
                                   c.sub,
                                   std::to_string(c.n),
                                   std::to_string(c.invalid),
                                   std::to_string(c.errors)};
        if (c.multilabel) {
            f.insert(f.end(), {"", "", "", detail::fmt6(c.multilabel->mean_credit),
                               detail::fmt6(c.multilabel->grouped_balanced_credit),
                               detail::fmt6(c.multilabel->micro_f1),
                               detail::fmt6(c.report.invalid_rate)});
        } else {
            f.insert(f.end(),
                     {detail::fmt6(c.report.balanced_accuracy), detail::fmt6(c.report.f1),
                      c.report.mae ? detail::fmt6(*c.report.mae) : "", "", "", "",
                      detail::fmt6(c.report.invalid_rate)});
        }
        csv += csv_join(f) + "\n";
    }
    return csv;
}

// metrics/cells.csv plus one JSON file per cell.
inline std::string write_metrics(const std::string& run_dir, const ScoreSet& s) {
    std::filesystem::path dir = std::filesystem::path(run_dir) / "metrics";
    std::filesystem::create_directories(dir);
    for (const auto& c : s.cells)
        write_file((dir / (c.file_stem() + ".json")).string(),
                   cell_to_json(c, s.mode).dump(2) + "\n");
    std::string path = (dir / "cells.csv").string();
    write_file(path, render_cells_csv(s));
    return path;
}

// ---------------------------------------------------------------------------
// Report rendering

namespace detail {

inline const ScoreCell* find_baseline(const ScoreSet& baseline, const ScoreCell& c) {
    for (const auto& b : baseline.cells) {
        if (b.task == c.task && b.variant == c.variant && b.modality == c.modality &&
            b.provider == c.provider && b.scale == c.scale && b.sub == c.sub)
            return &b;
    }
    return nullptr;
}

struct ReportColumn {
    Variant variant;
    std::string metric; // "BA", "F1", "MAE", "mean_credit", ...
    bool lower_better = false;
};

inline double cell_metric(const ScoreCell& c, const std::string& metric) {
    if (metric == "BA") return c.report.balanced_accuracy;
    if (metric == "F1") return c.report.f1;
    if (metric == "MAE") return c.report.mae.value_or(std::nan(""));
    if (!c.multilabel) return std::nan("");
    if (metric == "mean_credit") return c.multilabel->mean_credit;
    if (metric == "grouped_credit") return c.multilabel->grouped_balanced_credit;
    if (metric == "micro_F1") return c.multilabel->micro_f1;
    return std::nan("");
}

// Ties on the flagged metric break toward higher BA, then higher F1, then
// the lexicographically first row label.
inline bool better_row(const ScoreCell& a, const std::string& row_a, const ScoreCell& b,
                       const std::string& row_b, const std::string& metric, bool lower_better) {
    double va = cell_metric(a, metric);
    double vb = cell_metric(b, metric);
    if (std::isnan(vb)) return !std::isnan(va);
    if (std::isnan(va)) return false;
    if (va != vb) return lower_better ? va < vb : va > vb;
    double ba_a = a.report.balanced_accuracy, ba_b = b.report.balanced_accuracy;
    if (ba_a != ba_b) return ba_a > ba_b;
    if (a.report.f1 != b.report.f1) return a.report.f1 > b.report.f1;
    return row_a < row_b;
}

} // namespace detail

// Markdown report: one section per (task, scale, sub, shot mode); rows are
// modality x provider, columns variant x metric, best value per column in
// bold. With a baseline, each value carries its delta.
inline std::string render_report_md(const ScoreSet& s, const ScoreSet* baseline = nullptr) {
    std::string md = "# Evaluation report\n";
    std::map<std::tuple<int, std::string, std::string, int>, std::vector<const ScoreCell*>>
        sections;
    for (const auto& c : s.cells)
        sections[{static_cast<int>(c.task), c.scale, c.sub, static_cast<int>(c.shot_mode)}]
            .push_back(&c);

    for (const auto& [sect_key, cells] : sections) {
        const ScoreCell& first = *cells.front();
        std::string title = to_string(first.task);
        if (!first.scale.empty()) title += ", scale " + first.scale;
        if (first.sub == "dep") title += ", depression sub-decision";
        else if (first.sub == "ptsd") title += ", PTSD sub-decision";
        else if (first.sub == "multilabel") title += ", multi-label credit";
        title += " (" + to_string(first.shot_mode) + ")";
        md += "\n## " + title + "\n\n";

        std::set<Variant> variants;
        std::set<std::pair<std::string, std::string>> rows; // (modality, provider)
        for (const auto* c : cells) {
            variants.insert(c->variant);
            rows.insert({to_string(c->modality), c->provider});
        }
        std::vector<std::string> metrics;
        if (first.sub == "multilabel") metrics = {"mean_credit", "grouped_credit", "micro_F1"};
        else if (is_severity_task(first.task)) metrics = {"BA", "F1", "MAE"};
        else metrics = {"BA", "F1"};

        std::vector<detail::ReportColumn> columns;
        for (Variant v : variants)
            for (const auto& m : metrics) columns.push_back({v, m, m == "MAE"});

        auto cell_at = [&](const std::pair<std::string, std::string>& row,
                           Variant v) -> const ScoreCell* {
            for (const auto* c : cells)
                if (to_string(c->modality) == row.first && c->provider == row.second &&
                    c->variant == v)
                    return c;
            return nullptr;
        };

        // Best row per column.
        std::map<std::size_t, std::pair<std::string, std::string>> best;
        for (std::size_t ci = 0; ci < columns.size(); ++ci) {
            const ScoreCell* best_cell = nullptr;
            std::pair<std::string, std::string> best_row;
            for (const auto& row : rows) {
                const ScoreCell* c = cell_at(row, columns[ci].variant);
                if (!c) continue;
                std::string row_label = row.first + "/" + row.second;
                if (!best_cell ||
                    detail::better_row(*c, row_label, *best_cell,
                                       best_row.first + "/" + best_row.second,
                                       columns[ci].metric, columns[ci].lower_better)) {
                    best_cell = c;
                    best_row = row;
                }
            }
            if (best_cell) best[ci] = best_row;
        }

        md += "| modality | provider |";
        for (const auto& col : columns)
            md += " " + to_string(col.variant) + " " + col.metric + " |";
        md += "\n|---|---|";
        for (std::size_t i = 0; i < columns.size(); ++i) md += "---|";
        md += "\n";
        for (const auto& row : rows) {
            md += "| " + row.first + " | " + row.second + " |";
            for (std::size_t ci = 0; ci < columns.size(); ++ci) {
                const ScoreCell* c = cell_at(row, columns[ci].variant);
                std::string v = "-";
                if (c) {
                    double value = detail::cell_metric(*c, columns[ci].metric);
                    if (!std::isnan(value)) {
                        v = detail::fmt3(value);
                        if (baseline) {
                            if (const ScoreCell* b = detail::find_baseline(*baseline, *c)) {
                                double bv = detail::cell_metric(*b, columns[ci].metric);
                                if (!std::isnan(bv)) {
                                    char buf[32];
                                    std::snprintf(buf, sizeof(buf), " (%+.3f)", value - bv);
                                    v += buf;
                                }
                            }
                        }
                        if (best.count(ci) && best[ci] == row) v = "**" + v + "**";
                    }
                }
                md += " " + v + " |";
            }
            md += "\n";
        }
    }
    return md;
}

// Flat CSV report, one row per (cell, metric), with baseline deltas.
inline std::string render_report_csv(const ScoreSet& s, const ScoreSet* baseline = nullptr) {
    std::string csv = "task,scale,sub,shot_mode,variant,modality,provider,metric,value,baseline,"
                      "delta\n";
    for (const auto& c : s.cells) {
        std::vector<std::string> metrics;
        if (c.multilabel) metrics = {"mean_credit", "grouped_credit", "micro_F1"};
        else if (is_severity_task(c.task)) metrics = {"BA", "F1", "MAE"};
        else metrics = {"BA", "F1"};
        const ScoreCell* b = baseline ? detail::find_baseline(*baseline, c) : nullptr;
        for (const auto& m : metrics) {
            double v = detail::cell_metric(c, m);
            if (std::isnan(v)) continue;
            std::string bs, ds;
            if (b) {
                double bv = detail::cell_metric(*b, m);
                if (!std::isnan(bv)) {
                    bs = detail::fmt6(bv);
                    ds = detail::fmt6(v - bv);
                }
            }
            csv += csv_join({to_string(c.task), c.scale, c.sub, to_string(c.shot_mode),
                             to_string(c.variant), to_string(c.modality), c.provider, m,
                             detail::fmt6(v), bs, ds}) +
                   "\n";
        }
    }
    return csv;
}

inline nlohmann::json report_json(const ScoreSet& s, const ScoreSet* baseline = nullptr) {
    nlohmann::json j;
    j["cells"] = nlohmann::json::array();
    for (const auto& c : s.cells) {
        nlohmann::json cj = cell_to_json(c, s.mode);
        if (baseline) {
            if (const ScoreCell* b = detail::find_baseline(*baseline, c)) {
                nlohmann::json deltas;
                for (const char* m : {"BA", "F1", "MAE", "mean_credit", "grouped_credit",
                                      "micro_F1"}) {
                    double v = detail::cell_metric(c, m);
                    double bv = detail::cell_metric(*b, m);
                    if (!std::isnan(v) && !std::isnan(bv)) deltas[m] = v - bv;
                }
                cj["baseline_delta"] = deltas;
            }
        }
        j["cells"].push_back(cj);
    }
    return j;
}

// Writes requested report formats under <run_dir>/reports.
inline std::vector<std::string> write_reports(const std::string& run_dir, const ScoreSet& s,
                                              const std::vector<std::string>& formats,
                                              const ScoreSet* baseline = nullptr) {
    std::filesystem::path dir = std::filesystem::path(run_dir) / "reports";
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    for (const auto& f : formats) {
        if (f == "md") {
            std::string p = (dir / "report.md").string();
            write_file(p, render_report_md(s, baseline));
            written.push_back(p);
        } else if (f == "csv") {
            std::string p = (dir / "report.csv").string();
            write_file(p, render_report_csv(s, baseline));
            written.push_back(p);
        } else if (f == "structured") {
            std::string p = (dir / "report.json").string();
            write_file(p, report_json(s, baseline).dump(2) + "\n");
            written.push_back(p);
        } else {
            throw Error("ConfigInvalid", "unknown report format '" + f + "'");
        }
    }
    return written;
}

// ---------------------------------------------------------------------------
// Correctness vectors for modality comparison

struct CellFilter {
    std::optional<Task> task;
    std::optional<Variant> variant;
    std::optional<Modality> modality;
    std::optional<std::string> provider;
    std::optional<ShotMode> shot_mode;
};

// Extracts the per-participant correctness bits of exactly one cell of a
// run. Ambiguity (filter matching several cells) is an error that lists the
// candidates.
inline CorrectnessVector load_correctness_vector(const std::string& run_dir,
                                                 const CellFilter& filter = {}) {
    std::vector<RunRecord> records = RunStore::load(run_dir);
    if (records.empty()) throw NoRecordsError("no records in " + run_dir);

    std::map<std::tuple<int, int, int, std::string, int>, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) {
        if (filter.task && r.id.task != *filter.task) continue;
        if (filter.variant && r.id.variant != *filter.variant) continue;
        if (filter.modality && r.id.modality != *filter.modality) continue;
        if (filter.provider && r.id.provider != *filter.provider) continue;
        if (filter.shot_mode && r.id.shot_mode != *filter.shot_mode) continue;
        groups[{static_cast<int>(r.id.task), static_cast<int>(r.id.variant),
                static_cast<int>(r.id.modality), r.id.provider,
                static_cast<int>(r.id.shot_mode)}]
            .push_back(&r);
    }
    if (groups.empty()) throw NoRecordsError("no cell in " + run_dir + " matches the filter");
    if (groups.size() > 1) {
        std::string detail = "filter matches " + std::to_string(groups.size()) + " cells in " +
                             run_dir + ":";
        for (const auto& [k, v] : groups) {
            detail += "\n  " + to_string(static_cast<Task>(std::get<0>(k))) + " " +
                      to_string(static_cast<Variant>(std::get<1>(k))) + " " +
                      to_string(static_cast<Modality>(std::get<2>(k))) + " " + std::get<3>(k) +
                      " " + to_string(static_cast<ShotMode>(std::get<4>(k)));
        }
        throw AmbiguousCellError(detail);
    }

    const auto& [key, group] = *groups.begin();
    CorrectnessVector v;
    v.task = static_cast<Task>(std::get<0>(key));
    v.variant = static_cast<Variant>(std::get<1>(key));
    v.modality = static_cast<Modality>(std::get<2>(key));
    v.model = std::get<3>(key);
    v.shot_mode = static_cast<ShotMode>(std::get<4>(key));
    for (const auto* r : group) {
        bool correct = r->error_class.empty() && r->parse.valid() && r->parse.label == r->truth;
        v.bits[r->id.participant_id] = correct;
    }
    return v;
}

} // namespace modaleval
