#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "modaleval/harness.hpp"
#include "modaleval/scoring.hpp"

using namespace modaleval;
namespace fs = std::filesystem;

namespace {

const char* kRepo = MODALEVAL_REPO_DIR;

fs::path make_temp_dir(const std::string& tag) {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("modaleval_harness_" + tag + "_" + std::to_string(++counter) + "_" +
                    std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Seven participants; 301 has no audio, 305 has a dangling transcript path.
fs::path write_fixture_corpus(const fs::path& dir) {
    fs::create_directories(dir);
    struct Row {
        int id;
        int phq;
        int phq_bin;
        int pclc;
        int ptsd;
        const char* split;
        bool audio;
        bool transcript_exists;
    };
    const Row rows[] = {
        {300, 4, 0, 0, 20, "train", true, true},
        {301, 15, 1, 1, 50, "train", false, true},
        {302, 20, 1, 1, 70, "train", true, true},
        {303, 8, 0, 0, 25, "train", true, true},
        {304, 11, 1, 1, 46, "dev", true, true},
        {305, 2, 0, 0, 17, "test", true, false},
        {306, 12, 1, 0, 40, "train", true, true},
    };
    std::string csv = "Participant_ID,PHQ_Score,PHQ_Binary,PCL-C,PTSD_Severity,Split,"
                      "Transcript_Path,Audio_Path\n";
    for (const Row& r : rows) {
        std::string stem = std::to_string(r.id);
        std::string transcript = stem + "_Transcript.txt";
        std::string audio = r.audio ? stem + "_AUDIO.wav" : "";
        if (r.transcript_exists)
            write_file((dir / transcript).string(),
                       "interview transcript of participant " + stem + "\n");
        if (r.audio) write_file((dir / audio).string(), "RIFF audio bytes " + stem);
        csv += stem + "," + std::to_string(r.phq) + "," + std::to_string(r.phq_bin) + "," +
               std::to_string(r.pclc) + "," + std::to_string(r.ptsd) + "," + r.split + "," +
               transcript + "," + audio + "\n";
    }
    fs::path manifest = dir / "manifest.csv";
    write_file(manifest.string(), csv);
    return manifest;
}

fs::path write_providers(const fs::path& dir, double accuracy = 1.0, double invalid_rate = 0.0,
                         double verbosity = 0.0) {
    nlohmann::json mock = {{"seed", 7},
                           {"invalid_rate", invalid_rate},
                           {"verbosity", verbosity},
                           {"accuracy",
                            {{"text", accuracy}, {"audio", accuracy}, {"audio_text", accuracy}}}};
    nlohmann::json j;
    j["providers"] = nlohmann::json::array(
        {{{"name", "mock_full"},
          {"kind", "mock"},
          {"model", "mock-large"},
          {"requests_per_minute", 0},
          {"mock", mock}},
         {{"name", "mock_textonly"},
          {"kind", "mock"},
          {"model", "mock-small"},
          {"supports_audio", false},
          {"requests_per_minute", 0},
          {"mock", mock}}});
    fs::path path = dir / "providers.json";
    write_file(path.string(), j.dump(2));
    return path;
}

ExperimentConfig base_config(const fs::path& dir) {
    ExperimentConfig cfg;
    cfg.manifest_path = (dir / "corpus" / "manifest.csv").string();
    cfg.templates_dir = (fs::path(kRepo) / "templates").string();
    cfg.providers_file = (dir / "providers.json").string();
    cfg.tasks = {Task::dep_binary};
    cfg.variants[Task::dep_binary] = {Variant::P1};
    cfg.modalities = {Modality::text};
    cfg.providers = {"mock_full"};
    cfg.seed = 1;
    cfg.output_dir = (dir / "run").string();
    cfg.cache_dir = (dir / "run" / "cache").string();
    return cfg;
}

} // namespace

TEST_CASE("plan covers the grid and names every exclusion") {
    fs::path dir = make_temp_dir("plan");
    write_fixture_corpus(dir / "corpus");
    write_providers(dir);

    ExperimentConfig cfg = base_config(dir);
    cfg.providers.clear(); // all providers in the file
    cfg.variants.clear();  // all three binary variants
    cfg.modalities = {Modality::text, Modality::audio, Modality::audio_text};

    Plan plan = plan_run(cfg);
    std::size_t grid = 3 * 3 * 2 * 7;
    CHECK(plan.requests.size() + plan.exclusions.size() == grid);

    std::map<std::string, int> reasons;
    for (const auto& e : plan.exclusions) ++reasons[e.reason];
    // mock_textonly cannot serve the six audio-bearing cells per participant.
    CHECK(reasons["provider_no_audio"] == 3 * 2 * 7);
    // 301 has no audio file for the audio and audio_text modalities.
    CHECK(reasons["missing_audio"] == 3 * 2);
    // 305 has no transcript: text for both providers, audio_text for mock_full.
    CHECK(reasons["missing_transcript"] == 3 * 2 + 3);
    CHECK(plan.requests.size() == grid - 42 - 6 - 9);

    for (const auto& e : plan.exclusions) {
        if (e.reason == "missing_audio") CHECK(e.id.participant_id == 301);
        if (e.reason == "missing_transcript") CHECK(e.id.participant_id == 305);
        if (e.reason == "provider_no_audio") CHECK(e.id.provider == "mock_textonly");
    }
    // Requests are sorted by identity, so execution order is reproducible.
    for (std::size_t i = 1; i < plan.requests.size(); ++i)
        CHECK(plan.requests[i - 1].id < plan.requests[i].id);

    SECTION("eval split narrows the participant pool") {
        cfg.eval_split = Split::dev;
        cfg.modalities = {Modality::text};
        cfg.providers = {"mock_full"};
        Plan dev_plan = plan_run(cfg);
        REQUIRE(dev_plan.requests.size() == 3); // P1..P3 for participant 304
        for (const auto& r : dev_plan.requests) CHECK(r.id.participant_id == 304);
    }
    SECTION("duplicate tasks are rejected") {
        cfg.tasks = {Task::dep_binary, Task::dep_binary};
        CHECK_THROWS_AS(plan_run(cfg), Error);
    }
    SECTION("unknown provider names are rejected") {
        cfg.providers = {"no_such_provider"};
        CHECK_THROWS_AS(plan_run(cfg), Error);
    }
}

TEST_CASE("execution is deterministic and complete") {
    fs::path dir = make_temp_dir("exec");
    write_fixture_corpus(dir / "corpus");
    write_providers(dir, 0.7, 0.2, 0.5);

    // 305 lacks a transcript, so the text grid holds six of the seven.
    ExperimentConfig cfg = base_config(dir);
    ExecuteResult res = execute(plan_run(cfg));
    CHECK(res.planned == 6);
    CHECK(res.new_records == 6);
    CHECK(res.skipped_existing == 0);
    CHECK(res.errors == 0);
    CHECK(res.transport_calls == 6);
    CHECK(res.status == "complete");

    std::vector<RunRecord> records = RunStore::load(cfg.output_dir);
    REQUIRE(records.size() == 6);
    // workers=1 appends in plan order.
    for (std::size_t i = 1; i < records.size(); ++i)
        CHECK(records[i - 1].id < records[i].id);
    for (const auto& r : records) {
        CHECK(r.error_class.empty());
        CHECK(r.transcript_source == "stored");
        CHECK_FALSE(r.from_cache);
        CHECK(r.request_hash.size() == 16);
        CHECK((r.truth == "Yes" || r.truth == "No"));
    }

    // A separate run with the same seed reproduces both artifacts byte for
    // byte; a different seed diverges.
    ExperimentConfig cfg_same = cfg;
    cfg_same.output_dir = (dir / "run_same").string();
    cfg_same.cache_dir = (fs::path(cfg_same.output_dir) / "cache").string();
    execute(plan_run(cfg_same));
    CHECK(read_file((fs::path(cfg.output_dir) / "records.jsonl").string()) ==
          read_file((fs::path(cfg_same.output_dir) / "records.jsonl").string()));
    CHECK(read_file((fs::path(cfg.output_dir) / "predictions.csv").string()) ==
          read_file((fs::path(cfg_same.output_dir) / "predictions.csv").string()));

    ExperimentConfig cfg_other = cfg;
    cfg_other.seed = 2;
    cfg_other.output_dir = (dir / "run_other").string();
    cfg_other.cache_dir = (fs::path(cfg_other.output_dir) / "cache").string();
    execute(plan_run(cfg_other));
    CHECK(read_file((fs::path(cfg.output_dir) / "records.jsonl").string()) !=
          read_file((fs::path(cfg_other.output_dir) / "records.jsonl").string()));

    SECTION("a second pass without resume refuses the dirty directory") {
        try {
            execute(plan_run(cfg));
            FAIL("expected RunDirNotEmpty");
        } catch (const Error& e) {
            CHECK(e.kind() == "RunDirNotEmpty");
        }
    }
    SECTION("run manifest records the bookkeeping") {
        auto m = RunManifest::load(cfg.output_dir);
        REQUIRE(m.has_value());
        CHECK(m->planned == 6);
        CHECK(m->records == 6);
        CHECK(m->status == "complete");
        REQUIRE(m->exclusions.size() == 1);
        CHECK(m->exclusions[0]["participant_id"] == 305);
        CHECK(m->exclusions[0]["reason"] == "missing_transcript");
        CHECK(m->template_hashes.size() == 3); // one shared file set for P1..P3
        CHECK(m->config["seed"] == 1);
    }
}

TEST_CASE("limit and resume split a run without changing its bytes") {
    fs::path dir = make_temp_dir("resume");
    write_fixture_corpus(dir / "corpus");
    write_providers(dir, 0.8, 0.1, 0.4);

    ExperimentConfig cfg = base_config(dir);
    cfg.providers = {"mock_full", "mock_textonly"};
    cfg.output_dir = (dir / "run_full").string();
    cfg.cache_dir = (fs::path(cfg.output_dir) / "cache").string();
    execute(plan_run(cfg)); // 12 requests, uninterrupted reference

    ExperimentConfig split_cfg = cfg;
    split_cfg.output_dir = (dir / "run_split").string();
    split_cfg.cache_dir = (fs::path(split_cfg.output_dir) / "cache").string();
    ExecuteOptions first;
    first.limit = 5;
    ExecuteResult partial = execute(plan_run(split_cfg), first);
    CHECK(partial.new_records == 5);
    CHECK(partial.status == "partial");
    CHECK(partial.transport_calls == 5);

    ExecuteOptions second;
    second.resume = true;
    ExecuteResult rest = execute(plan_run(split_cfg), second);
    CHECK(rest.skipped_existing == 5);
    CHECK(rest.new_records == 7);
    // Resumed identities are skipped outright, not refetched from cache.
    CHECK(rest.transport_calls == 7);
    CHECK(rest.status == "complete");

    CHECK(read_file((fs::path(cfg.output_dir) / "records.jsonl").string()) ==
          read_file((fs::path(split_cfg.output_dir) / "records.jsonl").string()));
    CHECK(read_file((fs::path(cfg.output_dir) / "predictions.csv").string()) ==
          read_file((fs::path(split_cfg.output_dir) / "predictions.csv").string()));

    SECTION("resume refuses a changed config") {
        ExperimentConfig drifted = split_cfg;
        drifted.seed = 99;
        ExecuteOptions resume;
        resume.resume = true;
        CHECK_THROWS_AS(execute(plan_run(drifted), resume), ResumeMismatchError);
    }
    SECTION("resume refuses edited templates") {
        fs::path tpl_copy = dir / "templates_copy";
        fs::create_directories(tpl_copy);
        for (const auto& entry : fs::directory_iterator(fs::path(kRepo) / "templates"))
            if (entry.is_regular_file()) fs::copy(entry.path(), tpl_copy / entry.path().filename());

        ExperimentConfig tcfg = cfg;
        tcfg.templates_dir = tpl_copy.string();
        tcfg.output_dir = (dir / "run_tpl").string();
        tcfg.cache_dir = (fs::path(tcfg.output_dir) / "cache").string();
        ExecuteOptions limited;
        limited.limit = 3;
        execute(plan_run(tcfg), limited);

        std::string tpl_file = (tpl_copy / "binary_p1.txt").string();
        write_file(tpl_file, read_file(tpl_file) + " edited");
        ExecuteOptions resume;
        resume.resume = true;
        CHECK_THROWS_AS(execute(plan_run(tcfg), resume), ResumeMismatchError);
    }
}

TEST_CASE("command transcription fills missing transcripts") {
    fs::path dir = make_temp_dir("transcribe");
    fs::path corpus = dir / "corpus";
    fs::create_directories(corpus);
    write_file((corpus / "310_AUDIO.wav").string(), "spoken words of participant 310");
    write_file((corpus / "311_Transcript.txt").string(), "stored transcript 311\n");
    write_file((corpus / "311_AUDIO.wav").string(), "RIFF 311");
    write_file((corpus / "manifest.csv").string(),
               "Participant_ID,PHQ_Score,PHQ_Binary,PCL-C,PTSD_Severity,Split,Transcript_Path,"
               "Audio_Path\n"
               "310,12,1,0,30,train,,310_AUDIO.wav\n"
               "311,3,0,0,20,train,311_Transcript.txt,311_AUDIO.wav\n");
    write_providers(dir);

    ExperimentConfig cfg = base_config(dir);
    cfg.transcription.kind = "command";
    cfg.transcription.command = "cat {input}";

    Plan plan = plan_run(cfg);
    CHECK(plan.requests.size() == 2); // 310 is admitted via the transcriber
    CHECK(plan.exclusions.empty());

    ExecuteResult res = execute(plan);
    CHECK(res.errors == 0);
    std::map<int, RunRecord> by_id;
    for (auto& r : RunStore::load(cfg.output_dir)) by_id[r.id.participant_id] = r;
    CHECK(by_id.at(310).transcript_source == "command+cache");
    CHECK(by_id.at(311).transcript_source == "stored");
    // The transcription landed in the cache directory keyed by audio bytes.
    CHECK(fs::exists(fs::path(cfg.cache_dir) / "transcripts"));
}

TEST_CASE("few-shot runs select exemplars at plan time") {
    fs::path dir = make_temp_dir("fewshot");
    write_fixture_corpus(dir / "corpus");
    write_providers(dir);

    SECTION("binary strategy draws no/yes/yes from the train split") {
        ExperimentConfig cfg = base_config(dir);
        cfg.shot_mode = ShotMode::few_shot;
        Plan plan = plan_run(cfg);
        REQUIRE(plan.exemplars.count(Task::dep_binary) == 1);
        const auto& ex = plan.exemplars.at(Task::dep_binary);
        REQUIRE(ex.size() == 3);
        CHECK(ex[0].label_text == "No");
        CHECK(ex[1].label_text == "Yes");
        CHECK(ex[2].label_text == "Yes");
        for (const auto& e : ex) CHECK(e.content.find("interview transcript") == 0);

        ExecuteResult res = execute(plan);
        CHECK(res.errors == 0);
        for (const auto& r : RunStore::load(cfg.output_dir)) {
            CHECK(r.id.shot_mode == ShotMode::few_shot);
            CHECK(r.error_class.empty());
        }
    }
    SECTION("near-miss strategy consumes a zero-shot run") {
        // Hand-written source run: three off-by-one outcomes in the non-test
        // pool, one correct, one far miss.
        fs::path zs_dir = dir / "zs_source";
        {
            RunStore store(zs_dir.string());
            auto put = [&](int id, const std::string& truth, const std::string& pred) {
                RunRecord r;
                r.id = {id, Task::dep_severity, Variant::P1, Modality::text, "mock_full",
                        ShotMode::zero_shot};
                r.truth = truth;
                r.parse.status = ParseStatus::valid;
                r.parse.label = pred;
                store.append(r);
            };
            put(300, "0", "1");
            put(301, "3", "3");
            put(302, "4", "0");
            put(303, "1", "0");
            put(306, "2", "3");
        }

        ExperimentConfig cfg = base_config(dir);
        cfg.tasks = {Task::dep_severity};
        cfg.variants.clear();
        cfg.variants[Task::dep_severity] = {Variant::P1};
        cfg.shot_mode = ShotMode::few_shot;
        cfg.few_shot.k = 3;
        cfg.few_shot.zs_run = zs_dir.string();
        cfg.output_dir = (dir / "run_nm").string();
        cfg.cache_dir = (fs::path(cfg.output_dir) / "cache").string();

        Plan plan = plan_run(cfg);
        const auto& ex = plan.exemplars.at(Task::dep_severity);
        REQUIRE(ex.size() == 3);
        std::set<int> ids;
        std::map<int, std::string> truth_of{{300, "0"}, {303, "1"}, {306, "2"}};
        for (const auto& e : ex) {
            ids.insert(e.participant_id);
            CHECK(e.label_text == truth_of.at(e.participant_id));
        }
        CHECK(ids == std::set<int>{300, 303, 306});

        ExecuteResult res = execute(plan);
        CHECK(res.errors == 0);
        CHECK(res.new_records == 6);
    }
    SECTION("strategy and task family must agree") {
        ExperimentConfig cfg = base_config(dir);
        cfg.shot_mode = ShotMode::few_shot;
        cfg.few_shot.selection = "near_miss";
        CHECK_THROWS_AS(plan_run(cfg), Error); // near-miss cannot serve a binary task

        cfg.few_shot.selection = "binary";
        cfg.tasks = {Task::dep_severity};
        cfg.variants.clear();
        CHECK_THROWS_AS(plan_run(cfg), Error);

        cfg.few_shot.selection = "near_miss";
        cfg.few_shot.zs_run.clear();
        CHECK_THROWS_AS(plan_run(cfg), Error); // needs few_shot.zs_run
    }
}

TEST_CASE("unparseable answers can be re-asked a bounded number of times") {
    fs::path dir = make_temp_dir("reprompt");
    write_fixture_corpus(dir / "corpus");
    write_providers(dir, 0.0, 1.0, 0.0); // every reply is unparseable

    ExperimentConfig cfg = base_config(dir);
    cfg.reprompt_invalid = 2;
    ExecuteResult res = execute(plan_run(cfg));
    CHECK(res.new_records == 6);
    CHECK(res.errors == 0);
    CHECK(res.transport_calls == 6 * 3); // initial ask plus two re-asks each

    for (const auto& r : RunStore::load(cfg.output_dir)) {
        CHECK_FALSE(r.parse.valid());
        CHECK(r.request_hash.size() > 16);
        CHECK(r.request_hash.substr(r.request_hash.size() - 3) == "#r2");
    }
}

TEST_CASE("scoring decomposes severity and multiclass cells") {
    SECTION("severity invalids carry the full label-space width in MAE") {
        auto rec = [](int id, int raw, const std::string& truth, const std::string& pred,
                      bool valid) {
            RunRecord r;
            r.id = {id, Task::dep_severity, Variant::P1, Modality::text, "m", ShotMode::zero_shot};
            r.truth = truth;
            r.truth_raw = raw;
            r.parse.status = valid ? ParseStatus::valid : ParseStatus::invalid;
            r.parse.reason = valid ? InvalidReason::none : InvalidReason::no_token;
            r.parse.label = valid ? pred : "";
            return r;
        };
        std::vector<RunRecord> records{rec(1, 3, "0", "", false), rec(2, 12, "2", "2", true)};

        ScoreSet wrong_mode =
            score_records(records, ScoringMode::count_invalid_as_wrong, {}, {});
        REQUIRE(wrong_mode.cells.size() == 1);
        const ScoreCell& c = wrong_mode.cells[0];
        CHECK(c.scale == "depression_phq8");
        CHECK(c.n == 2);
        CHECK(c.invalid == 1);
        REQUIRE(c.report.mae.has_value());
        CHECK(*c.report.mae == Catch::Approx(2.0)); // (4 + 0) / 2
        CHECK(c.report.balanced_accuracy == Catch::Approx(0.5));

        ScoreSet drop_mode = score_records(records, ScoringMode::exclude_invalid, {}, {});
        REQUIRE(drop_mode.cells.size() == 1);
        CHECK(*drop_mode.cells[0].report.mae == Catch::Approx(0.0));
        CHECK(drop_mode.cells[0].report.balanced_accuracy == Catch::Approx(1.0));
        CHECK(drop_mode.cells[0].invalid == 1);
    }
    SECTION("ptsd severity is rescored once per requested scale") {
        RunRecord r;
        r.id = {9, Task::ptsd_severity, Variant::P1, Modality::text, "m", ShotMode::zero_shot};
        r.truth = "1";
        r.truth_raw = 44; // reference bin 1, ptsd_llm_llama3_70b bin 2
        r.parse.status = ParseStatus::valid;
        r.parse.label = "1";

        auto loaded = load_severity_scales((fs::path(kRepo) / "data" /
                                            "severity_scales.json")
                                               .string());
        ScoreSet s = score_records({r}, ScoringMode::count_invalid_as_wrong,
                                   {"ptsd_reference", "ptsd_llm_llama3_70b"}, loaded);
        REQUIRE(s.cells.size() == 2);
        std::map<std::string, const ScoreCell*> by_scale;
        for (const auto& c : s.cells) by_scale[c.scale] = &c;
        REQUIRE(by_scale.count("ptsd_reference") == 1);
        REQUIRE(by_scale.count("ptsd_llm_llama3_70b") == 1);
        CHECK(*by_scale["ptsd_reference"]->report.mae == Catch::Approx(0.0));
        CHECK(*by_scale["ptsd_llm_llama3_70b"]->report.mae == Catch::Approx(1.0));
        CHECK(by_scale["ptsd_reference"]->file_stem() !=
              by_scale["ptsd_llm_llama3_70b"]->file_stem());
    }
    SECTION("multiclass yields the matrix, both sub-decisions and the bundle") {
        auto rec = [](int id, const std::string& truth, const std::string& pred,
                      const std::string& error) {
            RunRecord r;
            r.id = {id, Task::multiclass, Variant::P1, Modality::text, "m", ShotMode::zero_shot};
            r.truth = truth;
            r.error_class = error;
            if (error.empty()) {
                r.parse.status = ParseStatus::valid;
                r.parse.label = pred;
            } else {
                r.parse.status = ParseStatus::invalid;
                r.parse.reason = InvalidReason::no_category;
            }
            return r;
        };
        std::vector<RunRecord> records{
            rec(1, "Depressed and PTSD", "Depressed", ""),
            rec(2, "Normal", "Normal", ""),
            rec(3, "PTSD", "", "TransportError"),
        };
        ScoreSet s = score_records(records, ScoringMode::count_invalid_as_wrong, {}, {});
        REQUIRE(s.cells.size() == 4);
        std::map<std::string, const ScoreCell*> by_sub;
        for (const auto& c : s.cells) by_sub[c.sub] = &c;
        REQUIRE(by_sub.size() == 4);

        CHECK(by_sub[""]->errors == 1);
        CHECK(by_sub[""]->report.classes.size() == 4);

        CHECK(by_sub["dep"]->report.balanced_accuracy == Catch::Approx(0.75));
        CHECK(by_sub["ptsd"]->report.balanced_accuracy == Catch::Approx(0.5));

        REQUIRE(by_sub["multilabel"]->multilabel.has_value());
        const MultiLabelScores& ml = *by_sub["multilabel"]->multilabel;
        CHECK(ml.mean_credit == Catch::Approx(0.5));
        CHECK(ml.grouped_balanced_credit == Catch::Approx(0.5));
        CHECK(ml.micro_f1 == Catch::Approx(0.4));

        ScoreSet dropped = score_records(records, ScoringMode::exclude_invalid, {}, {});
        std::map<std::string, const ScoreCell*> by_sub2;
        for (const auto& c : dropped.cells) by_sub2[c.sub] = &c;
        CHECK(by_sub2["multilabel"]->multilabel->mean_credit == Catch::Approx(0.75));
        CHECK(by_sub2["multilabel"]->report.n == 2);
    }
}

TEST_CASE("a full run scores and reports end to end") {
    fs::path dir = make_temp_dir("endtoend");
    write_fixture_corpus(dir / "corpus");
    write_providers(dir, 1.0, 0.0, 0.0);

    ExperimentConfig cfg = base_config(dir);
    cfg.tasks = {Task::ptsd_severity, Task::multiclass};
    cfg.variants.clear();
    cfg.variants[Task::ptsd_severity] = {Variant::P1};
    cfg.variants[Task::multiclass] = {Variant::P1};
    cfg.severity_scales[Task::ptsd_severity] = {"ptsd_reference", "ptsd_llm_llama3_70b"};
    cfg.scales_file = (fs::path(kRepo) / "data" / "severity_scales.json").string();

    execute(plan_run(cfg));
    ScoreSet s = score_run(cfg.output_dir);
    // ptsd under two scales + multiclass main, dep, ptsd, multilabel.
    REQUIRE(s.cells.size() == 6);
    std::set<std::string> stems;
    for (const auto& c : s.cells) stems.insert(c.file_stem());
    CHECK(stems.size() == 6);

    // Perfect mock: every non-multilabel cell scores 1.0 under its own truth
    // binning except the secondary scale, whose truth is rebinned.
    for (const auto& c : s.cells) {
        CHECK(c.invalid == 0);
        CHECK(c.errors == 0);
        if (c.scale == "ptsd_reference" || (c.task == Task::multiclass && !c.multilabel))
            CHECK(c.report.balanced_accuracy == Catch::Approx(1.0));
        if (c.multilabel) CHECK(c.multilabel->mean_credit == Catch::Approx(1.0));
    }

    std::string cells_csv = write_metrics(cfg.output_dir, s);
    CHECK(fs::exists(cells_csv));
    std::string csv_text = read_file(cells_csv);
    CHECK(csv_text.find("task,variant,modality,provider,shot_mode,scale,sub,") == 0);
    CHECK(csv_text.find("ptsd_llm_llama3_70b") != std::string::npos);
    for (const auto& c : s.cells)
        CHECK(fs::exists(fs::path(cfg.output_dir) / "metrics" / (c.file_stem() + ".json")));

    auto written = write_reports(cfg.output_dir, s, {"md", "csv", "structured"}, &s);
    REQUIRE(written.size() == 3);
    for (const auto& p : written) CHECK(fs::exists(p));
    std::string md = read_file(written[0]);
    CHECK(md.find("# Evaluation report") == 0);
    CHECK(md.find("ptsd_severity, scale ptsd_llm_llama3_70b") != std::string::npos);
    CHECK(md.find("(+0.000)") != std::string::npos); // self-baseline deltas are zero
    CHECK_THROWS_AS(write_reports(cfg.output_dir, s, {"pdf"}), Error);

    SECTION("correctness vectors demand an unambiguous cell") {
        CHECK_THROWS_AS(load_correctness_vector(cfg.output_dir, {}), AmbiguousCellError);
        CellFilter filter;
        filter.task = Task::multiclass;
        CorrectnessVector v = load_correctness_vector(cfg.output_dir, filter);
        CHECK(v.bits.size() == 6);
        for (const auto& [id, correct] : v.bits) CHECK(correct);
    }
}

TEST_CASE("experiment configs load from json with resolved paths") {
    fs::path dir = make_temp_dir("config");
    write_fixture_corpus(dir / "corpus");
    write_providers(dir);

    nlohmann::json j;
    j["manifest"] = "corpus/manifest.csv";
    j["templates_dir"] = "tpl";
    j["providers_file"] = "providers.json";
    j["tasks"] = {"dep_binary", "ptsd_severity"};
    j["variants"] = {{"dep_binary", {"P1", "P3"}}};
    j["modalities"] = {"text", "audio"};
    j["shot_mode"] = "few_shot";
    j["few_shot"] = {{"k", 5}, {"seed", 11}, {"pool", "dev"}, {"allow_subject_overlap", false}};
    j["severity_scales"] = {{"ptsd_severity", {"ptsd_reference", "phi35_mini"}}};
    j["scoring_mode"] = "exclude_invalid";
    j["eval_split"] = "test";
    j["seed"] = 42;
    j["output_dir"] = "out/run1";
    j["workers"] = 3;
    write_file((dir / "config.json").string(), j.dump(2));

    ExperimentConfig cfg = ExperimentConfig::load((dir / "config.json").string());
    CHECK(cfg.manifest_path == (dir / "corpus" / "manifest.csv").lexically_normal().string());
    CHECK(cfg.templates_dir == (dir / "tpl").lexically_normal().string());
    CHECK(cfg.providers_file == (dir / "providers.json").lexically_normal().string());
    CHECK(cfg.tasks == std::vector<Task>{Task::dep_binary, Task::ptsd_severity});
    CHECK(cfg.variants_for(Task::dep_binary) ==
          std::vector<Variant>{Variant::P1, Variant::P3});
    CHECK(cfg.variants_for(Task::ptsd_severity) ==
          std::vector<Variant>{Variant::P1, Variant::P2});
    CHECK(cfg.modalities == std::vector<Modality>{Modality::text, Modality::audio});
    CHECK(cfg.shot_mode == ShotMode::few_shot);
    CHECK(cfg.few_shot.k == 5);
    CHECK(cfg.few_shot.seed == 11);
    CHECK(cfg.few_shot.pool == "dev");
    CHECK_FALSE(cfg.few_shot.allow_subject_overlap);
    CHECK(cfg.ptsd_scale_names() ==
          std::vector<std::string>{"ptsd_reference", "phi35_mini"});
    CHECK(cfg.scoring_mode == ScoringMode::exclude_invalid);
    CHECK(cfg.eval_split == Split::test);
    CHECK(cfg.seed == 42);
    CHECK(cfg.output_dir == (dir / "out" / "run1").lexically_normal().string());
    CHECK(cfg.cache_dir ==
          (fs::path(cfg.output_dir) / "cache").lexically_normal().string());
    CHECK(cfg.workers == 3);

    // The snapshot round-trips through its own json form.
    ExperimentConfig again = ExperimentConfig::from_json(cfg.to_json(), dir.string());
    CHECK(again.to_json().dump() == cfg.to_json().dump());

    SECTION("invalid configs are rejected") {
        nlohmann::json bad = j;
        bad.erase("tasks");
        write_file((dir / "bad.json").string(), bad.dump());
        CHECK_THROWS_AS(ExperimentConfig::load((dir / "bad.json").string()), Error);

        bad = j;
        bad["workers"] = 0;
        write_file((dir / "bad.json").string(), bad.dump());
        CHECK_THROWS_AS(ExperimentConfig::load((dir / "bad.json").string()), Error);

        bad = j;
        bad["variants"] = {{"ptsd_severity", {"P3"}}}; // severity has no P3
        write_file((dir / "bad.json").string(), bad.dump());
        CHECK_THROWS_AS(ExperimentConfig::load((dir / "bad.json").string()), Error);

        write_file((dir / "bad.json").string(), "not json");
        CHECK_THROWS_AS(ExperimentConfig::load((dir / "bad.json").string()), Error);
    }
}
