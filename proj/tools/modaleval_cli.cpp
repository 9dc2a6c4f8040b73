// Command line front end. One subcommand per pipeline stage: corpus
// ingestion, fixture generation, prompt rendering, response parsing,
// metric computation, batch runs, scoring, reports, and modality
// comparison.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "modaleval/corpus.hpp"
#include "modaleval/csv.hpp"
#include "modaleval/errors.hpp"
#include "modaleval/harness.hpp"
#include "modaleval/metrics.hpp"
#include "modaleval/modality.hpp"
#include "modaleval/parsers.hpp"
#include "modaleval/prompts.hpp"
#include "modaleval/providers.hpp"
#include "modaleval/providers_http.hpp"
#include "modaleval/run_store.hpp"
#include "modaleval/scoring.hpp"
#include "modaleval/synthetic.hpp"
#include "modaleval/tasks.hpp"

namespace {

using namespace modaleval;

std::string manifest_to_csv(const DatasetManifest& m) {
    std::string out = "Participant_ID,PHQ_Score,PHQ_Binary,PCL-C,PTSD_Severity,Split,"
                      "Transcript_Path,Audio_Path\n";
    for (const auto& r : m.records) {
        out += std::to_string(r.participant_id) + "," + std::to_string(r.phq_score) + "," +
               std::to_string(r.phq_binary) + "," + std::to_string(r.pclc_binary) + "," +
               std::to_string(r.ptsd_severity) + "," + to_string(r.split) + "," +
               csv_escape(r.transcript_path) + "," + csv_escape(r.audio_path) + "\n";
    }
    return out;
}

std::string corrections_to_csv(const std::vector<Correction>& log) {
    std::string out = "participant_id,field,old_value,new_value\n";
    for (const auto& c : log)
        out += std::to_string(c.participant_id) + "," + c.field + "," + c.old_value + "," +
               c.new_value + "\n";
    return out;
}

// Key=value settings after the strategy token of a --few-shot spec, e.g.
// "near_miss,run=zs_dir,k=3,seed=1".
struct FewShotSpec {
    std::string strategy;
    std::uint64_t seed = 1;
    int k = 3;
    std::string pool;
    std::string run;
};

FewShotSpec parse_few_shot_spec(const std::string& spec) {
    FewShotSpec out;
    std::size_t pos = 0;
    bool first = true;
    while (pos <= spec.size()) {
        std::size_t comma = spec.find(',', pos);
        std::string item = spec.substr(pos, comma == std::string::npos ? comma : comma - pos);
        pos = comma == std::string::npos ? spec.size() + 1 : comma + 1;
        if (item.empty()) continue;
        if (first) {
            out.strategy = item;
            first = false;
            continue;
        }
        std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw Error("ConfigInvalid", "few-shot spec item '" + item + "' is not key=value");
        std::string key = item.substr(0, eq), value = item.substr(eq + 1);
        try {
            if (key == "seed") out.seed = std::stoull(value);
            else if (key == "k") out.k = std::stoi(value);
            else if (key == "pool") out.pool = value;
            else if (key == "run") out.run = value;
            else throw Error("ConfigInvalid", "unknown few-shot spec key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw Error("ConfigInvalid", "few-shot spec key '" + key + "' needs a number");
        }
    }
    if (out.strategy.empty()) throw Error("ConfigInvalid", "few-shot spec needs a strategy");
    return out;
}

void print_cell_lines(const ScoreSet& s) {
    for (const auto& c : s.cells) {
        std::string line = c.file_stem() + ": n=" + std::to_string(c.n) +
                           " invalid=" + std::to_string(c.invalid) +
                           " errors=" + std::to_string(c.errors);
        char buf[128];
        if (c.sub == "multilabel" && c.multilabel) {
            std::snprintf(buf, sizeof buf, " mean_credit=%.4f micro_f1=%.4f",
                          c.multilabel->mean_credit, c.multilabel->micro_f1);
            line += buf;
        } else {
            std::snprintf(buf, sizeof buf, " ba=%.4f f1=%.4f", c.report.balanced_accuracy,
                          c.report.f1);
            line += buf;
            if (c.report.mae) {
                std::snprintf(buf, sizeof buf, " mae=%.4f", *c.report.mae);
                line += buf;
            }
        }
        std::cout << line << "\n";
    }
}

void print_partition(const DisagreementPartition& p) {
    std::cout << "a_only_correct: " << p.a_only_correct << "\n"
              << "b_only_correct: " << p.b_only_correct << "\n"
              << "both_correct: " << p.both_correct << "\n"
              << "both_incorrect: " << p.both_incorrect << "\n"
              << "mss: " << format_score(mss(p)) << "\n";
}

void print_resolution(const CombinedResolution& c) {
    std::cout << "resolved_correctly: " << c.resolved_correctly << "\n"
              << "resolved_incorrectly: " << c.resolved_incorrectly << "\n"
              << "flipped_agreement_right: " << c.flipped_agreement_right << "\n"
              << "flipped_agreement_wrong: " << c.flipped_agreement_wrong << "\n"
              << "confirmed_agreement: " << c.confirmed_agreement << "\n"
              << "drs: " << format_score(drs(c)) << "\n"
              << "mss_combined_vs_agreement: " << format_score(mss_combined_vs_agreement(c))
              << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch evaluation harness for multimodal screening interviews"};
    app.require_subcommand(1);

    // ingest ---------------------------------------------------------------
    auto* ingest = app.add_subcommand("ingest", "Load a manifest and audit its labels");
    std::string in_manifest, in_layout = "generic_csv", in_out_corrected;
    bool in_no_corrections = false, in_summary = false, in_print_corrections = false;
    ingest->add_option("--manifest", in_manifest, "manifest CSV path")->required();
    ingest->add_option("--layout", in_layout, "manifest layout: edaic_csv or generic_csv");
    ingest->add_flag("--no-corrections", in_no_corrections, "skip the label correction pass");
    ingest->add_option("--out-corrected", in_out_corrected,
                       "write the corrected manifest to this path");
    ingest->add_flag("--summary", in_summary, "print the label distribution as CSV");
    ingest->add_flag("--print-corrections", in_print_corrections,
                     "print the correction log as CSV");
    ingest->callback([&] {
        DatasetManifest m = load_manifest(in_manifest, layout_from_string(in_layout));
        if (!in_no_corrections) m = apply_label_corrections(m);
        std::cout << "loaded " << m.records.size() << " records, " << m.correction_log.size()
                  << " corrections applied\n";
        if (in_print_corrections) std::cout << corrections_to_csv(m.correction_log);
        if (in_summary) std::cout << summarize_distribution(m).to_csv();
        if (!in_out_corrected.empty()) {
            write_file(in_out_corrected, manifest_to_csv(m));
            std::cout << "wrote " << in_out_corrected << "\n";
        }
    });

    // synth-fixtures -------------------------------------------------------
    auto* synth = app.add_subcommand("synth-fixtures", "Generate a synthetic corpus fixture");
    std::uint64_t sy_seed = 1;
    std::string sy_profile = "paper_marginals", sy_out;
    int sy_count = 40, sy_pos = 0, sy_neg = 0;
    synth->add_option("--seed", sy_seed, "fixture seed");
    synth->add_option("--profile", sy_profile,
                      "label profile: paper_marginals, uniform, or custom");
    synth->add_option("--out", sy_out, "output directory")->required();
    synth->add_option("--count", sy_count, "record count for the uniform profile");
    synth->add_option("--pos", sy_pos, "positive record count for the custom profile");
    synth->add_option("--neg", sy_neg, "negative record count for the custom profile");
    synth->callback([&] {
        FixtureSpec spec;
        spec.profile = fixture_profile_from_string(sy_profile);
        spec.uniform_count = sy_count;
        spec.custom_pos = sy_pos;
        spec.custom_neg = sy_neg;
        DatasetManifest m = generate_synthetic_fixture(sy_seed, spec, sy_out);
        std::cout << "wrote " << m.records.size() << " records under " << sy_out << "\n";
    });

    // render-prompts ---------------------------------------------------------
    auto* render = app.add_subcommand("render-prompts", "Render one prompt to stdout");
    std::string rp_manifest, rp_layout = "generic_csv", rp_templates, rp_task;
    std::string rp_variant = "p1", rp_modality = "text", rp_few_shot, rp_out;
    bool rp_no_corrections = false;
    int rp_id = 0;
    render->add_option("--manifest", rp_manifest, "manifest CSV path")->required();
    render->add_option("--layout", rp_layout, "manifest layout: edaic_csv or generic_csv");
    render->add_flag("--no-corrections", rp_no_corrections, "skip the label correction pass");
    render->add_option("--templates", rp_templates, "prompt template directory")->required();
    render->add_option("--task", rp_task, "task name")->required();
    render->add_option("--variant", rp_variant, "prompt variant");
    render->add_option("--modality", rp_modality, "modality: text, audio, or audio_text");
    render->add_option("--id", rp_id, "participant id to render for")->required();
    render->add_option("--few-shot", rp_few_shot,
                       "few-shot spec, e.g. 'binary,seed=1,pool=train' or "
                       "'near_miss,run=DIR,k=3,seed=1'");
    render->add_option("--out", rp_out, "write the prompt here instead of stdout");
    render->callback([&] {
        DatasetManifest m = load_manifest(rp_manifest, layout_from_string(rp_layout));
        if (!rp_no_corrections) m = apply_label_corrections(m);
        Task task = task_from_string(rp_task);
        Variant variant = variant_from_string(rp_variant);
        Modality modality = modality_from_string(rp_modality);
        const ParticipantRecord* r = m.find(rp_id);
        if (!r)
            throw Error("UnknownParticipant",
                        "participant " + std::to_string(rp_id) + " is not in the manifest");

        TemplateStore store(rp_templates);
        RenderedPrompt p;
        if (rp_few_shot.empty()) {
            p = render_zero_shot(store.load(task, variant, ShotMode::zero_shot), *r, modality);
        } else {
            FewShotSpec spec = parse_few_shot_spec(rp_few_shot);
            std::vector<FewShotExample> examples;
            if (spec.strategy == "binary") {
                Split pool = spec.pool.empty() ? Split::train : split_from_string(spec.pool);
                examples = select_few_shot_binary(m, task, pool, spec.seed, r->participant_id);
            } else if (spec.strategy == "near_miss") {
                if (spec.run.empty())
                    throw Error("ConfigInvalid", "near_miss selection needs run=DIR");
                auto outcomes = detail::zero_shot_outcomes(spec.run, task);
                std::optional<Split> pool;
                if (!spec.pool.empty()) pool = split_from_string(spec.pool);
                examples = select_few_shot_near_miss(outcomes, m, task, spec.k, spec.seed, pool,
                                                     r->participant_id);
            } else {
                throw Error("ConfigInvalid",
                            "unknown few-shot strategy '" + spec.strategy + "'");
            }
            p = render_few_shot(store.load(task, variant, ShotMode::few_shot), *r, modality,
                                examples);
        }
        for (const auto& a : p.attachments) std::cerr << "attachment: " << a << "\n";
        if (rp_out.empty()) std::cout << p.text;
        else {
            write_file(rp_out, p.text);
            std::cout << "wrote " << rp_out << "\n";
        }
    });

    // parse ------------------------------------------------------------------
    auto* parse = app.add_subcommand("parse", "Parse one response read from stdin");
    std::string pa_task, pa_range;
    parse->add_option("--task", pa_task, "task whose grammar applies")->required();
    parse->add_option("--range", pa_range, "severity range override, 'lo,hi'");
    parse->callback([&] {
        Task task = task_from_string(pa_task);
        std::string raw((std::istreambuf_iterator<char>(std::cin)),
                        std::istreambuf_iterator<char>());
        ParseOutcome o;
        if (!pa_range.empty()) {
            std::size_t comma = pa_range.find(',');
            if (comma == std::string::npos)
                throw Error("ConfigInvalid", "--range needs 'lo,hi'");
            int lo = 0, hi = 0;
            try {
                lo = std::stoi(pa_range.substr(0, comma));
                hi = std::stoi(pa_range.substr(comma + 1));
            } catch (const std::exception&) {
                throw Error("ConfigInvalid", "--range needs integer bounds");
            }
            o = parse_severity(raw, lo, hi);
        } else {
            o = parse_for_task(task, raw);
        }
        nlohmann::json j;
        j["status"] = to_string(o.status);
        j["reason"] = to_string(o.reason);
        j["label"] = o.label;
        if (o.valid()) j["span"] = {o.span_begin, o.span_end};
        else j["span"] = nullptr;
        std::cout << j.dump() << "\n";
    });

    // metrics ----------------------------------------------------------------
    auto* metrics = app.add_subcommand("metrics", "Score a predictions CSV");
    std::string me_predictions, me_mode = "count_invalid_as_wrong", me_scales_file, me_out_csv;
    std::vector<std::string> me_ptsd_scales;
    metrics->add_option("--predictions", me_predictions, "predictions CSV path")->required();
    metrics->add_option("--scoring-mode", me_mode,
                        "count_invalid_as_wrong or exclude_invalid");
    metrics->add_option("--scales-file", me_scales_file, "severity scale definitions JSON");
    metrics->add_option("--ptsd-scale", me_ptsd_scales,
                        "severity scale name for the PTSD task (repeatable)");
    metrics->add_option("--out-csv", me_out_csv, "write the per-cell table here");
    metrics->callback([&] {
        auto rows = parse_csv(read_file(me_predictions));
        if (rows.empty()) throw Error("PredictionsInvalid", me_predictions + " is empty");
        std::map<std::string, std::size_t> col;
        for (std::size_t i = 0; i < rows[0].fields.size(); ++i) col[rows[0].fields[i]] = i;
        for (const char* required : {"task", "truth", "pred", "parse_status"})
            if (!col.count(required))
                throw Error("PredictionsInvalid",
                            std::string("missing required column '") + required + "'");

        auto cell = [&](const CsvRow& row, const char* name) -> std::string {
            auto it = col.find(name);
            if (it == col.end() || it->second >= row.fields.size()) return "";
            return row.fields[it->second];
        };

        std::vector<RunRecord> records;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& row = rows[i];
            RunRecord rec;
            rec.id.task = task_from_string(cell(row, "task"));
            std::string v = cell(row, "variant");
            rec.id.variant = v.empty() ? Variant::P1 : variant_from_string(v);
            std::string mo = cell(row, "modality");
            rec.id.modality = mo.empty() ? Modality::text : modality_from_string(mo);
            std::string pr = cell(row, "provider");
            rec.id.provider = pr.empty() ? "predictions" : pr;
            std::string sh = cell(row, "shot_mode");
            rec.id.shot_mode = sh.empty() ? ShotMode::zero_shot : shot_mode_from_string(sh);
            std::string id = cell(row, "participant_id");
            try {
                rec.id.participant_id = id.empty() ? static_cast<int>(i) : std::stoi(id);
            } catch (const std::exception&) {
                throw Error("PredictionsInvalid",
                            "row " + std::to_string(row.line_no) + ": bad participant_id");
            }
            rec.truth = cell(row, "truth");
            std::string raw = cell(row, "truth_raw");
            if (!raw.empty()) {
                try {
                    rec.truth_raw = std::stoi(raw);
                } catch (const std::exception&) {
                    throw Error("PredictionsInvalid",
                                "row " + std::to_string(row.line_no) + ": bad truth_raw");
                }
            }
            std::string status = cell(row, "parse_status");
            if (status == "valid") {
                rec.parse.status = ParseStatus::valid;
                rec.parse.label = cell(row, "pred");
            } else if (status == "error") {
                std::string ec = cell(row, "error_class");
                rec.error_class = ec.empty() ? "Error" : ec;
            } else {
                rec.parse.status = ParseStatus::invalid;
                rec.parse.reason = invalid_reason_from_string(status);
            }
            records.push_back(std::move(rec));
        }

        std::vector<SeverityScale> scales;
        if (!me_scales_file.empty()) scales = load_severity_scales(me_scales_file);
        ScoreSet s = score_records(records, scoring_mode_from_string(me_mode), me_ptsd_scales,
                                   scales);
        for (const auto& c : s.cells) std::cout << cell_to_json(c, s.mode).dump() << "\n";
        if (!me_out_csv.empty()) {
            write_file(me_out_csv, render_cells_csv(s));
            std::cerr << "wrote " << me_out_csv << "\n";
        }
    });

    // run --------------------------------------------------------------------
    auto* run = app.add_subcommand("run", "Execute an experiment config");
    std::string ru_config;
    bool ru_resume = false;
    std::int64_t ru_limit = -1;
    run->add_option("--config", ru_config, "experiment config JSON")->required();
    run->add_flag("--resume", ru_resume, "continue an interrupted run directory");
    run->add_option("--limit", ru_limit, "stop after this many new records");
    run->callback([&] {
        ExperimentConfig cfg = ExperimentConfig::load(ru_config);
        Plan plan = plan_run(cfg);
        ExecuteOptions opt;
        opt.resume = ru_resume;
        opt.limit = ru_limit;
        opt.transport_factory = [&cfg](const ProviderConfig& p) -> std::shared_ptr<Transport> {
            if (p.kind == ProviderKind::mock) return std::make_shared<MockTransport>(cfg.seed);
            return std::make_shared<HttpTransport>();
        };
        ExecuteResult res = execute(plan, opt);
        std::cout << "run dir: " << res.run_dir << "\n"
                  << "planned: " << res.planned << " requests, " << plan.exclusions.size()
                  << " excluded\n"
                  << "new records: " << res.new_records << ", skipped existing: "
                  << res.skipped_existing << ", errors: " << res.errors << "\n"
                  << "transport calls: " << res.transport_calls << "\n"
                  << "status: " << res.status << "\n";
    });

    // score ------------------------------------------------------------------
    auto* score = app.add_subcommand("score", "Compute metrics for a run directory");
    std::string sc_run, sc_mode, sc_scales_file;
    std::vector<std::string> sc_ptsd_scales;
    score->add_option("run_dir", sc_run, "run directory")->required();
    score->add_option("--scoring-mode", sc_mode, "count_invalid_as_wrong or exclude_invalid");
    score->add_option("--scales-file", sc_scales_file, "severity scale definitions JSON");
    score->add_option("--ptsd-scale", sc_ptsd_scales,
                      "severity scale name for the PTSD task (repeatable)");
    score->callback([&] {
        ScoreOptions so;
        so.ptsd_scale_names = sc_ptsd_scales;
        if (!sc_mode.empty()) so.mode = scoring_mode_from_string(sc_mode);
        so.scales_file = sc_scales_file;
        ScoreSet s = score_run(sc_run, so);
        print_cell_lines(s);
        std::cout << "wrote " << write_metrics(sc_run, s) << "\n";
    });

    // report -----------------------------------------------------------------
    auto* report = app.add_subcommand("report", "Render result tables for a run directory");
    std::string re_run, re_formats = "md", re_baseline, re_mode, re_scales_file;
    std::vector<std::string> re_ptsd_scales;
    report->add_option("run_dir", re_run, "run directory")->required();
    report->add_option("--formats", re_formats, "comma list of md, csv, structured");
    report->add_option("--baseline", re_baseline, "baseline run directory for deltas");
    report->add_option("--scoring-mode", re_mode, "count_invalid_as_wrong or exclude_invalid");
    report->add_option("--scales-file", re_scales_file, "severity scale definitions JSON");
    report->add_option("--ptsd-scale", re_ptsd_scales,
                       "severity scale name for the PTSD task (repeatable)");
    report->callback([&] {
        ScoreOptions so;
        so.ptsd_scale_names = re_ptsd_scales;
        if (!re_mode.empty()) so.mode = scoring_mode_from_string(re_mode);
        so.scales_file = re_scales_file;
        ScoreSet s = score_run(re_run, so);
        std::optional<ScoreSet> base;
        if (!re_baseline.empty()) base = score_run(re_baseline, so);

        std::vector<std::string> formats;
        std::size_t pos = 0;
        while (pos <= re_formats.size()) {
            std::size_t comma = re_formats.find(',', pos);
            std::string f =
                re_formats.substr(pos, comma == std::string::npos ? comma : comma - pos);
            pos = comma == std::string::npos ? re_formats.size() + 1 : comma + 1;
            if (!f.empty()) formats.push_back(f);
        }
        for (const auto& p : write_reports(re_run, s, formats, base ? &*base : nullptr))
            std::cout << "wrote " << p << "\n";
    });

    // compare-modalities -------------------------------------------------------
    auto* compare = app.add_subcommand("compare-modalities",
                                       "Contrast per-sample correctness across runs");
    std::string cm_run_a, cm_run_b, cm_run_combined, cm_out_csv;
    std::string cm_task, cm_variant, cm_provider, cm_shot;
    std::string cm_modality_a, cm_modality_b, cm_modality_combined;
    compare->add_option("--run-a", cm_run_a, "first run directory")->required();
    compare->add_option("--run-b", cm_run_b, "second run directory")->required();
    compare->add_option("--run-combined", cm_run_combined, "combined-modality run directory");
    compare->add_option("--task", cm_task, "restrict to one task");
    compare->add_option("--variant", cm_variant, "restrict to one prompt variant");
    compare->add_option("--provider", cm_provider, "restrict to one provider");
    compare->add_option("--shot", cm_shot, "restrict to zero_shot or few_shot");
    compare->add_option("--modality-a", cm_modality_a, "modality filter for the first run");
    compare->add_option("--modality-b", cm_modality_b, "modality filter for the second run");
    compare->add_option("--modality-combined", cm_modality_combined,
                        "modality filter for the combined run");
    compare->add_option("--out-csv", cm_out_csv, "write the co-occurrence table here");
    compare->callback([&] {
        CellFilter base;
        if (!cm_task.empty()) base.task = task_from_string(cm_task);
        if (!cm_variant.empty()) base.variant = variant_from_string(cm_variant);
        if (!cm_provider.empty()) base.provider = cm_provider;
        if (!cm_shot.empty()) base.shot_mode = shot_mode_from_string(cm_shot);

        CellFilter fa = base, fb = base, fc = base;
        if (!cm_modality_a.empty()) fa.modality = modality_from_string(cm_modality_a);
        if (!cm_modality_b.empty()) fb.modality = modality_from_string(cm_modality_b);
        if (!cm_modality_combined.empty())
            fc.modality = modality_from_string(cm_modality_combined);

        CorrectnessVector va = load_correctness_vector(cm_run_a, fa);
        CorrectnessVector vb = load_correctness_vector(cm_run_b, fb);
        std::cout << "samples: " << va.bits.size() << "\n";
        print_partition(partition(va, vb));

        std::optional<CorrectnessVector> vc;
        if (!cm_run_combined.empty()) {
            vc = load_correctness_vector(cm_run_combined, fc);
            print_resolution(resolve(va, vb, *vc));
        }
        CoOccurrenceTable table = emit_co_occurrence(va, vb, vc ? &*vc : nullptr);
        if (!cm_out_csv.empty()) {
            write_file(cm_out_csv, table.to_csv());
            std::cout << "wrote " << cm_out_csv << "\n";
        } else {
            std::cout << "\n" << table.to_csv();
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
