#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "modaleval/cache.hpp"
#include "modaleval/clock.hpp"
#include "modaleval/corpus.hpp"
#include "modaleval/errors.hpp"
#include "modaleval/mock.hpp"
#include "modaleval/prompts.hpp"
#include "modaleval/providers.hpp"
#include "modaleval/run_store.hpp"
#include "modaleval/transcribe.hpp"

namespace modaleval {

struct ResumeMismatchError : Error {
    explicit ResumeMismatchError(const std::string& detail) : Error("ResumeMismatch", detail) {}
};

struct FewShotSettings {
    int k = 3;
    std::uint64_t seed = 1;
    std::string pool;      // split name; empty = train (binary) / non-test (near-miss)
    std::string selection; // "auto" (default), "binary", "near_miss"
    std::string zs_run;    // source run dir for near-miss selection
    bool allow_subject_overlap = true;
};

struct TranscriptionSettings {
    std::string kind; // "", "command", "precomputed"
    std::string command;
    std::string path_template = "{dir}/{stem}.txt";

    bool configured() const { return !kind.empty(); }
};

struct ExperimentConfig {
    std::string manifest_path;
    ManifestLayout layout = ManifestLayout::generic_csv;
    bool apply_corrections = true;
    std::string templates_dir;
    std::string providers_file;
    std::vector<std::string> providers; // names to run; empty = all in file
    std::vector<Task> tasks;
    std::map<Task, std::vector<Variant>> variants; // default: all variants of the task
    std::vector<Modality> modalities{Modality::text};
    ShotMode shot_mode = ShotMode::zero_shot;
    FewShotSettings few_shot;
    std::map<Task, std::vector<std::string>> severity_scales;
    std::string scales_file;
    ScoringMode scoring_mode = ScoringMode::count_invalid_as_wrong;
    Split eval_split = Split::all;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::string cache_dir; // default: <output_dir>/cache
    int workers = 1;
    TranscriptionSettings transcription;
    int reprompt_invalid = 0;

    std::vector<Variant> variants_for(Task t) const {
        auto it = variants.find(t);
        return it != variants.end() ? it->second : task_variants(t);
    }

    std::vector<std::string> ptsd_scale_names() const {
        auto it = severity_scales.find(Task::ptsd_severity);
        if (it != severity_scales.end() && !it->second.empty()) return it->second;
        return {"ptsd_reference"};
    }

    // Canonical snapshot; resume compares these byte-for-byte.
    nlohmann::json to_json() const {
        nlohmann::json j;
        j["manifest"] = manifest_path;
        j["layout"] = layout == ManifestLayout::edaic_csv ? "edaic_csv" : "generic_csv";
        j["apply_corrections"] = apply_corrections;
        j["templates_dir"] = templates_dir;
        j["providers_file"] = providers_file;
        j["providers"] = providers;
        nlohmann::json jt = nlohmann::json::array();
        for (Task t : tasks) jt.push_back(to_string(t));
        j["tasks"] = jt;
        nlohmann::json jv = nlohmann::json::object();
        for (const auto& [t, vs] : variants) {
            nlohmann::json arr = nlohmann::json::array();
            for (Variant v : vs) arr.push_back(to_string(v));
            jv[to_string(t)] = arr;
        }
        j["variants"] = jv;
        nlohmann::json jm = nlohmann::json::array();
        for (Modality m : modalities) jm.push_back(to_string(m));
        j["modalities"] = jm;
        j["shot_mode"] = to_string(shot_mode);
        j["few_shot"] = {{"k", few_shot.k},
                         {"seed", few_shot.seed},
                         {"pool", few_shot.pool},
                         {"selection", few_shot.selection},
                         {"zs_run", few_shot.zs_run},
                         {"allow_subject_overlap", few_shot.allow_subject_overlap}};
        nlohmann::json js = nlohmann::json::object();
        for (const auto& [t, names] : severity_scales) js[to_string(t)] = names;
        j["severity_scales"] = js;
        j["scales_file"] = scales_file;
        j["scoring_mode"] = to_string(scoring_mode);
        j["eval_split"] = to_string(eval_split);
        j["seed"] = seed;
        j["output_dir"] = output_dir;
        j["cache_dir"] = cache_dir;
        j["workers"] = workers;
        j["transcription"] = {{"kind", transcription.kind},
                              {"command", transcription.command},
                              {"path_template", transcription.path_template}};
        j["reprompt_invalid"] = reprompt_invalid;
        return j;
    }

    static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir) {
        ExperimentConfig c;
        if (!j.contains("manifest")) throw Error("ConfigInvalid", "config needs 'manifest'");
        c.manifest_path = detail::resolve_relative(base_dir, j["manifest"].get<std::string>());
        c.layout = layout_from_string(j.value("layout", std::string("generic_csv")));
        c.apply_corrections = j.value("apply_corrections", true);
        if (!j.contains("templates_dir"))
            throw Error("ConfigInvalid", "config needs 'templates_dir'");
        c.templates_dir = detail::resolve_relative(base_dir, j["templates_dir"].get<std::string>());
        if (!j.contains("providers_file"))
            throw Error("ConfigInvalid", "config needs 'providers_file'");
        c.providers_file =
            detail::resolve_relative(base_dir, j["providers_file"].get<std::string>());
        if (j.contains("providers"))
            c.providers = j["providers"].get<std::vector<std::string>>();
        if (!j.contains("tasks") || !j["tasks"].is_array() || j["tasks"].empty())
            throw Error("ConfigInvalid", "config needs a non-empty 'tasks' array");
        for (const auto& t : j["tasks"]) c.tasks.push_back(task_from_string(t.get<std::string>()));
        if (j.contains("variants")) {
            for (const auto& [tn, arr] : j["variants"].items()) {
                Task t = task_from_string(tn);
                std::vector<Variant> vs;
                for (const auto& v : arr) vs.push_back(variant_from_string(v.get<std::string>()));
                if (vs.empty())
                    throw Error("ConfigInvalid", "empty variant list for task " + tn);
                for (Variant v : vs) {
                    auto all = task_variants(t);
                    if (std::find(all.begin(), all.end(), v) == all.end())
                        throw Error("ConfigInvalid", "task " + tn + " has no variant " +
                                                         to_string(v));
                }
                c.variants[t] = vs;
            }
        }
        if (j.contains("modalities")) {
            c.modalities.clear();
            for (const auto& m : j["modalities"])
                c.modalities.push_back(modality_from_string(m.get<std::string>()));
            if (c.modalities.empty())
                throw Error("ConfigInvalid", "config 'modalities' must not be empty");
        }
        c.shot_mode = shot_mode_from_string(j.value("shot_mode", std::string("zero_shot")));
        if (j.contains("few_shot")) {
            const auto& f = j["few_shot"];
            c.few_shot.k = f.value("k", 3);
            c.few_shot.seed = f.value("seed", std::uint64_t{1});
            c.few_shot.pool = f.value("pool", std::string());
            c.few_shot.selection = f.value("selection", std::string());
            c.few_shot.zs_run = f.value("zs_run", std::string());
            if (!c.few_shot.zs_run.empty())
                c.few_shot.zs_run = detail::resolve_relative(base_dir, c.few_shot.zs_run);
            c.few_shot.allow_subject_overlap = f.value("allow_subject_overlap", true);
        }
        if (j.contains("severity_scales")) {
            for (const auto& [tn, arr] : j["severity_scales"].items())
                c.severity_scales[task_from_string(tn)] = arr.get<std::vector<std::string>>();
        }
        if (j.contains("scales_file"))
            c.scales_file = detail::resolve_relative(base_dir, j["scales_file"].get<std::string>());
        c.scoring_mode =
            scoring_mode_from_string(j.value("scoring_mode", std::string("count_invalid_as_wrong")));
        c.eval_split = split_from_string(j.value("eval_split", std::string("all")));
        c.seed = j.value("seed", std::uint64_t{0});
        if (!j.contains("output_dir")) throw Error("ConfigInvalid", "config needs 'output_dir'");
        c.output_dir = detail::resolve_relative(base_dir, j["output_dir"].get<std::string>());
        c.cache_dir = j.contains("cache_dir")
                          ? detail::resolve_relative(base_dir, j["cache_dir"].get<std::string>())
                          : (std::filesystem::path(c.output_dir) / "cache").string();
        c.workers = j.value("workers", 1);
        if (c.workers < 1) throw Error("ConfigInvalid", "config 'workers' must be >= 1");
        if (j.contains("transcription")) {
            const auto& t = j["transcription"];
            c.transcription.kind = t.value("kind", std::string());
            c.transcription.command = t.value("command", std::string());
            c.transcription.path_template = t.value("path_template", std::string("{dir}/{stem}.txt"));
        }
        c.reprompt_invalid = j.value("reprompt_invalid", 0);
        return c;
    }

    static ExperimentConfig load(const std::string& path) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw Error("ConfigInvalid", path + " is not valid JSON: " + e.what());
        }
        return from_json(j, std::filesystem::path(path).parent_path().string());
    }
};

struct PlannedRequest {
    RunRecordIdentity id;
    std::size_t record_index = 0; // index into Plan::manifest.records
};

struct PlannedExclusion {
    RunRecordIdentity id;
    std::string reason; // missing_audio, missing_transcript, provider_no_audio
};

struct Plan {
    ExperimentConfig config;
    DatasetManifest manifest;     // corrected
    DatasetManifest raw_manifest; // as loaded
    std::vector<ProviderConfig> providers;
    std::vector<PlannedRequest> requests; // sorted by record identity
    std::vector<PlannedExclusion> exclusions;
    std::map<std::string, std::string> template_hashes;
    std::map<Task, std::vector<FewShotExample>> exemplars;
    std::map<Task, std::vector<ZeroShotOutcome>> near_miss_sources;
    SeverityScale ptsd_primary_scale = ptsd_reference_scale();
    std::vector<SeverityScale> loaded_scales;
};

namespace detail {

inline std::vector<ZeroShotOutcome> zero_shot_outcomes(const std::string& run_dir, Task task) {
    std::vector<RunRecord> records = RunStore::load(run_dir);
    std::sort(records.begin(), records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.id < b.id; });
    std::vector<ZeroShotOutcome> out;
    for (const auto& r : records) {
        if (r.id.task != task || r.id.shot_mode != ShotMode::zero_shot) continue;
        out.push_back({r.id.participant_id, r.truth, r.parse.label,
                       r.error_class.empty() && r.parse.valid()});
    }
    return out;
}

inline std::string few_shot_strategy(const FewShotSettings& fs, Task task) {
    if (fs.selection.empty() || fs.selection == "auto")
        return is_binary_task(task) ? "binary" : "near_miss";
    if (fs.selection != "binary" && fs.selection != "near_miss")
        throw Error("ConfigInvalid", "unknown few-shot selection '" + fs.selection + "'");
    if (fs.selection == "binary" && !is_binary_task(task))
        throw Error("ConfigInvalid",
                    "binary few-shot selection cannot serve task " + to_string(task));
    if (fs.selection == "near_miss" && is_binary_task(task))
        throw Error("ConfigInvalid",
                    "near-miss few-shot selection cannot serve task " + to_string(task));
    return fs.selection;
}

} // namespace detail

// Expands the config into the concrete request grid, resolving the corpus,
// providers, templates and few-shot exemplars up front. Every grid cell ends
// up either in requests or in exclusions.
inline Plan plan_run(const ExperimentConfig& cfg) {
    Plan plan;
    plan.config = cfg;
    if (cfg.tasks.empty()) throw Error("ConfigInvalid", "no tasks configured");
    {
        std::set<Task> seen;
        for (Task t : cfg.tasks)
            if (!seen.insert(t).second)
                throw Error("ConfigInvalid", "task " + to_string(t) + " listed twice");
    }

    plan.raw_manifest = load_manifest(cfg.manifest_path, cfg.layout);
    plan.manifest = cfg.apply_corrections ? apply_label_corrections(plan.raw_manifest)
                                          : plan.raw_manifest;

    std::vector<ProviderConfig> all = load_provider_configs(cfg.providers_file);
    {
        std::set<std::string> names;
        for (const auto& p : all)
            if (!names.insert(p.name).second)
                throw Error("ConfigInvalid", "provider '" + p.name + "' defined twice");
    }
    if (cfg.providers.empty()) {
        plan.providers = all;
    } else {
        for (const auto& want : cfg.providers) {
            auto it = std::find_if(all.begin(), all.end(),
                                   [&](const ProviderConfig& p) { return p.name == want; });
            if (it == all.end())
                throw Error("ConfigInvalid",
                            "provider '" + want + "' not found in " + cfg.providers_file);
            plan.providers.push_back(*it);
        }
    }
    if (plan.providers.empty()) throw Error("ConfigInvalid", "no providers configured");

    if (!cfg.scales_file.empty()) plan.loaded_scales = load_severity_scales(cfg.scales_file);
    plan.ptsd_primary_scale = find_scale(plan.loaded_scales, cfg.ptsd_scale_names().front());

    TemplateStore store(cfg.templates_dir);
    plan.template_hashes = store.hash_templates(cfg.tasks, cfg.shot_mode);

    if (cfg.shot_mode == ShotMode::few_shot) {
        for (Task t : cfg.tasks) {
            std::string strategy = detail::few_shot_strategy(cfg.few_shot, t);
            if (strategy == "binary") {
                Split pool = cfg.few_shot.pool.empty() ? Split::train
                                                       : split_from_string(cfg.few_shot.pool);
                plan.exemplars[t] =
                    select_few_shot_binary(plan.manifest, t, pool, cfg.few_shot.seed);
            } else {
                if (cfg.few_shot.zs_run.empty())
                    throw Error("ConfigInvalid",
                                "near-miss few-shot selection needs few_shot.zs_run");
                auto outcomes = detail::zero_shot_outcomes(cfg.few_shot.zs_run, t);
                std::optional<Split> pool;
                if (!cfg.few_shot.pool.empty()) pool = split_from_string(cfg.few_shot.pool);
                plan.exemplars[t] = select_few_shot_near_miss(outcomes, plan.manifest, t,
                                                              cfg.few_shot.k, cfg.few_shot.seed,
                                                              pool);
                plan.near_miss_sources[t] = std::move(outcomes);
            }
        }
    }

    for (Task task : cfg.tasks) {
        for (Variant variant : cfg.variants_for(task)) {
            for (Modality modality : cfg.modalities) {
                for (const auto& provider : plan.providers) {
                    for (std::size_t ri = 0; ri < plan.manifest.records.size(); ++ri) {
                        const ParticipantRecord& r = plan.manifest.records[ri];
                        if (!detail::record_in_pool(r, cfg.eval_split)) continue;
                        RunRecordIdentity id{r.participant_id, task,     variant,
                                             modality,         provider.name, cfg.shot_mode};
                        bool needs_audio =
                            modality == Modality::audio || modality == Modality::audio_text;
                        bool needs_text =
                            modality == Modality::text || modality == Modality::audio_text;
                        bool has_audio =
                            !r.audio_path.empty() && std::filesystem::exists(r.audio_path);
                        bool has_transcript = !r.transcript_path.empty() &&
                                              std::filesystem::exists(r.transcript_path);
                        std::string reason;
                        if (needs_audio && !provider.supports_audio)
                            reason = "provider_no_audio";
                        else if (needs_audio && !has_audio)
                            reason = "missing_audio";
                        else if (needs_text && !has_transcript &&
                                 !(cfg.transcription.configured() && has_audio))
                            reason = "missing_transcript";
                        if (reason.empty()) plan.requests.push_back({id, ri});
                        else plan.exclusions.push_back({id, reason});
                    }
                }
            }
        }
    }
    std::sort(plan.requests.begin(), plan.requests.end(),
              [](const PlannedRequest& a, const PlannedRequest& b) { return a.id < b.id; });
    std::sort(plan.exclusions.begin(), plan.exclusions.end(),
              [](const PlannedExclusion& a, const PlannedExclusion& b) { return a.id < b.id; });
    return plan;
}

using TransportFactory = std::function<std::shared_ptr<Transport>(const ProviderConfig&)>;

// Offline-safe default: mock providers get the deterministic mock transport,
// live providers require an explicit factory (the CLI wires up HTTP).
inline TransportFactory default_transport_factory(std::uint64_t run_seed) {
    return [run_seed](const ProviderConfig& cfg) -> std::shared_ptr<Transport> {
        if (cfg.kind == ProviderKind::mock) return std::make_shared<MockTransport>(run_seed);
        throw Error("ConfigInvalid", "provider '" + cfg.name +
                                         "' needs a live transport; none was configured");
    };
}

struct ExecuteOptions {
    bool resume = false;
    std::int64_t limit = -1; // stop after this many new records; -1 = no limit
    TransportFactory transport_factory;
    std::shared_ptr<Clock> clock;
    std::shared_ptr<Transcriber> transcriber;
};

struct ExecuteResult {
    std::string run_dir;
    std::size_t planned = 0;
    std::size_t new_records = 0;
    std::size_t skipped_existing = 0;
    std::size_t errors = 0;
    std::int64_t transport_calls = 0;
    std::string status; // "complete" | "partial"
};

namespace detail {

inline std::int64_t unix_now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

inline std::shared_ptr<Transcriber> build_transcriber(const ExperimentConfig& cfg) {
    if (!cfg.transcription.configured()) return nullptr;
    std::shared_ptr<Transcriber> inner;
    if (cfg.transcription.kind == "command")
        inner = std::make_shared<CommandTranscriber>(cfg.transcription.command);
    else if (cfg.transcription.kind == "precomputed")
        inner = std::make_shared<PrecomputedTranscriber>(cfg.transcription.path_template);
    else
        throw Error("ConfigInvalid",
                    "unknown transcription kind '" + cfg.transcription.kind + "'");
    return std::make_shared<CachingTranscriber>(inner, cfg.cache_dir);
}

} // namespace detail

// Runs the plan. Resume skips identities that already have records and
// refuses to continue a run directory whose config or templates changed.
inline ExecuteResult execute(const Plan& plan, const ExecuteOptions& opt = {}) {
    const ExperimentConfig& cfg = plan.config;
    ExecuteResult result;
    result.run_dir = cfg.output_dir;
    result.planned = plan.requests.size();

    nlohmann::json config_snapshot = cfg.to_json();
    auto existing_manifest = RunManifest::load(cfg.output_dir);
    bool has_records = std::filesystem::exists(
        (std::filesystem::path(cfg.output_dir) / "records.jsonl").string());
    if (!opt.resume && (existing_manifest || has_records))
        throw Error("RunDirNotEmpty", cfg.output_dir +
                                          " already holds a run; pass resume or use a new "
                                          "output_dir");
    if (opt.resume && existing_manifest) {
        if (existing_manifest->config.dump() != config_snapshot.dump())
            throw ResumeMismatchError("config snapshot in " + cfg.output_dir +
                                      " does not match the current config");
        if (existing_manifest->template_hashes != plan.template_hashes)
            throw ResumeMismatchError("template files changed since the run in " +
                                      cfg.output_dir + " started");
    }

    std::set<std::string> done;
    if (opt.resume)
        for (const auto& r : RunStore::load(cfg.output_dir)) done.insert(r.id.key());

    std::vector<const PlannedRequest*> queue;
    for (const auto& pr : plan.requests) {
        if (done.count(pr.id.key())) ++result.skipped_existing;
        else queue.push_back(&pr);
    }
    if (opt.limit >= 0 && queue.size() > static_cast<std::size_t>(opt.limit))
        queue.resize(static_cast<std::size_t>(opt.limit));

    std::shared_ptr<Clock> clock = opt.clock ? opt.clock : system_clock();
    TransportFactory factory =
        opt.transport_factory ? opt.transport_factory : default_transport_factory(cfg.seed);
    auto cache = std::make_shared<ResponseCache>(cfg.cache_dir);
    std::map<std::string, std::unique_ptr<ProviderEngine>> engines;
    for (const auto& p : plan.providers)
        engines[p.name] = std::make_unique<ProviderEngine>(p, factory(p), cache, clock, cfg.seed);

    std::shared_ptr<Transcriber> transcriber =
        opt.transcriber ? opt.transcriber : detail::build_transcriber(cfg);

    // Templates are preloaded so worker threads only read.
    TemplateStore store(cfg.templates_dir);
    std::map<std::pair<int, int>, PromptTemplate> templates;
    for (Task t : cfg.tasks)
        for (Variant v : cfg.variants_for(t))
            templates[{static_cast<int>(t), static_cast<int>(v)}] = store.load(t, v, cfg.shot_mode);

    RunManifest manifest;
    manifest.config = config_snapshot;
    manifest.template_hashes = plan.template_hashes;
    manifest.started_unix_ms =
        existing_manifest ? existing_manifest->started_unix_ms : detail::unix_now_ms();
    manifest.planned = plan.requests.size();
    manifest.records = result.skipped_existing;
    manifest.status = "partial";
    for (const auto& e : plan.exclusions)
        manifest.exclusions.push_back({{"participant_id", e.id.participant_id},
                                       {"task", to_string(e.id.task)},
                                       {"variant", to_string(e.id.variant)},
                                       {"modality", to_string(e.id.modality)},
                                       {"provider", e.id.provider},
                                       {"reason", e.reason}});
    std::filesystem::create_directories(cfg.output_dir);
    manifest.save(cfg.output_dir);

    RunStore run_store(cfg.output_dir);
    std::mutex attach_mu;
    std::map<std::string, std::string> attachment_hashes;
    auto hash_attachment = [&](const std::string& path) {
        std::lock_guard<std::mutex> lock(attach_mu);
        auto it = attachment_hashes.find(path);
        if (it != attachment_hashes.end()) return it->second;
        std::string h = hash_file_bytes(path);
        attachment_hashes[path] = h;
        return h;
    };

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> error_count{0};
    std::mutex fail_mu;
    std::exception_ptr fatal;

    auto process_one = [&](const PlannedRequest& pr) {
        const ParticipantRecord& rec = plan.manifest.records[pr.record_index];
        const PromptTemplate& tpl =
            templates.at({static_cast<int>(pr.id.task), static_cast<int>(pr.id.variant)});

        RunRecord out;
        out.id = pr.id;
        out.truth = truth_label(rec, pr.id.task, plan.ptsd_primary_scale);
        if (pr.id.task == Task::dep_severity) out.truth_raw = rec.phq_score;
        if (pr.id.task == Task::ptsd_severity) out.truth_raw = rec.ptsd_severity;
        out.transcript_source = "stored";

        try {
            bool needs_text =
                pr.id.modality == Modality::text || pr.id.modality == Modality::audio_text;
            std::string transcript_override;
            const std::string* override_ptr = nullptr;
            if (needs_text &&
                (rec.transcript_path.empty() || !std::filesystem::exists(rec.transcript_path))) {
                if (!transcriber)
                    throw MissingMediaError(pr.id.modality, rec.participant_id);
                transcript_override = transcriber->transcribe(rec.audio_path);
                override_ptr = &transcript_override;
                out.transcript_source = transcriber->name();
            }

            RenderedPrompt prompt;
            if (cfg.shot_mode == ShotMode::zero_shot) {
                prompt = render_zero_shot(tpl, rec, pr.id.modality, override_ptr);
            } else {
                std::vector<FewShotExample> examples = plan.exemplars.at(pr.id.task);
                bool overlaps = false;
                for (const auto& e : examples)
                    overlaps = overlaps || e.participant_id == rec.participant_id;
                if (overlaps && !cfg.few_shot.allow_subject_overlap) {
                    // Re-select without the subject so the example list never
                    // leaks its own label.
                    std::string strategy = detail::few_shot_strategy(cfg.few_shot, pr.id.task);
                    if (strategy == "binary") {
                        Split pool = cfg.few_shot.pool.empty()
                                         ? Split::train
                                         : split_from_string(cfg.few_shot.pool);
                        examples = select_few_shot_binary(plan.manifest, pr.id.task, pool,
                                                          cfg.few_shot.seed, rec.participant_id);
                    } else {
                        std::optional<Split> pool;
                        if (!cfg.few_shot.pool.empty())
                            pool = split_from_string(cfg.few_shot.pool);
                        examples = select_few_shot_near_miss(
                            plan.near_miss_sources.at(pr.id.task), plan.manifest, pr.id.task,
                            cfg.few_shot.k, cfg.few_shot.seed, pool, rec.participant_id);
                    }
                }
                prompt = render_few_shot(tpl, rec, pr.id.modality, examples,
                                         cfg.few_shot.allow_subject_overlap, override_ptr);
            }

            ProviderEngine& engine = *engines.at(pr.id.provider);
            std::vector<std::string> att_hashes;
            for (const auto& a : prompt.attachments) att_hashes.push_back(hash_attachment(a));
            std::optional<MockOracle> oracle;
            if (engine.config().kind == ProviderKind::mock)
                oracle = MockOracle{out.truth, tpl.allowed_labels, pr.id.task, pr.id.modality};
            InferenceRequest req = engine.make_request(prompt, att_hashes, oracle);
            out.request_hash = req.idempotency_key;

            InferenceResponse resp = engine.infer(req);
            out.raw_text = resp.raw_text;
            out.latency_ms = resp.latency_ms;
            out.retries = resp.retries_used;
            out.from_cache = resp.from_cache;
            out.parse = parse_for_task(pr.id.task, out.raw_text);

            // Optional bounded re-ask on unparseable output; each retry is a
            // distinct cache entry.
            for (int round = 1; round <= cfg.reprompt_invalid && !out.parse.valid(); ++round) {
                InferenceRequest again = req;
                again.idempotency_key = req.idempotency_key + "#r" + std::to_string(round);
                InferenceResponse r2 = engine.infer(again);
                out.raw_text = r2.raw_text;
                out.latency_ms += r2.latency_ms;
                out.retries += r2.retries_used;
                out.from_cache = out.from_cache && r2.from_cache;
                out.request_hash = again.idempotency_key;
                out.parse = parse_for_task(pr.id.task, out.raw_text);
            }
        } catch (const Error& e) {
            out.error_class = e.kind();
            out.parse = ParseOutcome{};
            error_count.fetch_add(1);
        }
        run_store.append(out);
    };

    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= queue.size()) return;
            {
                std::lock_guard<std::mutex> lock(fail_mu);
                if (fatal) return;
            }
            try {
                process_one(*queue[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fail_mu);
                if (!fatal) fatal = std::current_exception();
                return;
            }
        }
    };

    int workers = std::max(1, cfg.workers);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    std::vector<RunRecord> all_records = RunStore::load(cfg.output_dir);
    result.new_records = all_records.size() - result.skipped_existing;
    result.errors = error_count.load();
    for (auto& [name, engine] : engines) result.transport_calls += engine->transport().calls();

    write_predictions_csv(cfg.output_dir, all_records);
    manifest.records = all_records.size();
    manifest.finished_unix_ms = detail::unix_now_ms();
    manifest.status = manifest.records == manifest.planned ? "complete" : "partial";
    manifest.save(cfg.output_dir);
    result.status = manifest.status;
    return result;
}

} // namespace modaleval
