#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "modaleval/csv.hpp"
#include "modaleval/errors.hpp"
#include "modaleval/hashing.hpp"
#include "modaleval/parsers.hpp"
#include "modaleval/tasks.hpp"

namespace modaleval {

inline constexpr const char* kCodeVersion = "modaleval 0.1.0";

// One cell of the experiment grid for one participant. Uniquely names a
// record within a run; resume skips identities that already have a record.
struct RunRecordIdentity {
    int participant_id = 0;
    Task task = Task::dep_binary;
    Variant variant = Variant::P1;
    Modality modality = Modality::text;
    std::string provider;
    ShotMode shot_mode = ShotMode::zero_shot;

    std::string key() const {
        return to_string(task) + "|" + to_string(variant) + "|" + to_string(modality) + "|" +
               provider + "|" + to_string(shot_mode) + "|" + std::to_string(participant_id);
    }

    auto sort_key() const {
        return std::make_tuple(static_cast<int>(task), static_cast<int>(variant),
                               static_cast<int>(modality), provider,
                               static_cast<int>(shot_mode), participant_id);
    }

    bool operator==(const RunRecordIdentity& o) const { return sort_key() == o.sort_key(); }
    bool operator<(const RunRecordIdentity& o) const { return sort_key() < o.sort_key(); }
};

struct RunRecord {
    RunRecordIdentity id;
    std::string request_hash; // idempotency key of the underlying request
    std::string raw_text;
    ParseOutcome parse;
    std::string truth;
    std::optional<int> truth_raw; // raw questionnaire total, when the task has one
    std::int64_t latency_ms = 0;
    int retries = 0;
    bool from_cache = false;
    std::string error_class;       // non-empty when inference failed
    std::string transcript_source; // "stored" or the transcriber's name
};

inline InvalidReason invalid_reason_from_string(const std::string& s) {
    for (auto r : {InvalidReason::none, InvalidReason::both_tokens, InvalidReason::no_token,
                   InvalidReason::multiple_numbers, InvalidReason::out_of_range,
                   InvalidReason::no_category, InvalidReason::ambiguous_category})
        if (to_string(r) == s) return r;
    throw Error("ConfigInvalid", "unknown invalid reason '" + s + "'");
}

inline nlohmann::json record_to_json(const RunRecord& r) {
    nlohmann::json j;
    j["participant_id"] = r.id.participant_id;
    j["task"] = to_string(r.id.task);
    j["variant"] = to_string(r.id.variant);
    j["modality"] = to_string(r.id.modality);
    j["provider"] = r.id.provider;
    j["shot_mode"] = to_string(r.id.shot_mode);
    j["request_hash"] = r.request_hash;
    // Raw model output can contain arbitrary bytes; fall back to base64 when
    // it is not valid UTF-8 so the JSONL stays loadable.
    try {
        nlohmann::json probe = r.raw_text;
        (void)probe.dump();
        j["raw_text"] = r.raw_text;
    } catch (const nlohmann::json::type_error&) {
        j["raw_text_b64"] = base64_encode(r.raw_text);
    }
    j["parse_status"] = to_string(r.parse.status);
    j["invalid_reason"] = to_string(r.parse.reason);
    j["pred_label"] = r.parse.label;
    j["span_begin"] = r.parse.span_begin;
    j["span_end"] = r.parse.span_end;
    j["truth"] = r.truth;
    if (r.truth_raw) j["truth_raw"] = *r.truth_raw;
    j["latency_ms"] = r.latency_ms;
    j["retries"] = r.retries;
    j["from_cache"] = r.from_cache;
    j["error_class"] = r.error_class;
    j["transcript_source"] = r.transcript_source;
    return j;
}

inline RunRecord record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.id.participant_id = j.at("participant_id").get<int>();
    r.id.task = task_from_string(j.at("task").get<std::string>());
    r.id.variant = variant_from_string(j.at("variant").get<std::string>());
    r.id.modality = modality_from_string(j.at("modality").get<std::string>());
    r.id.provider = j.at("provider").get<std::string>();
    r.id.shot_mode = shot_mode_from_string(j.at("shot_mode").get<std::string>());
    r.request_hash = j.value("request_hash", std::string());
    if (j.contains("raw_text_b64"))
        r.raw_text = base64_decode(j["raw_text_b64"].get<std::string>());
    else
        r.raw_text = j.value("raw_text", std::string());
    r.parse.status = j.at("parse_status").get<std::string>() == "valid" ? ParseStatus::valid
                                                                        : ParseStatus::invalid;
    r.parse.reason = invalid_reason_from_string(j.at("invalid_reason").get<std::string>());
    r.parse.label = j.value("pred_label", std::string());
    r.parse.span_begin = j.value("span_begin", std::size_t{0});
    r.parse.span_end = j.value("span_end", std::size_t{0});
    r.truth = j.value("truth", std::string());
    if (j.contains("truth_raw") && !j["truth_raw"].is_null())
        r.truth_raw = j["truth_raw"].get<int>();
    r.latency_ms = j.value("latency_ms", std::int64_t{0});
    r.retries = j.value("retries", 0);
    r.from_cache = j.value("from_cache", false);
    r.error_class = j.value("error_class", std::string());
    r.transcript_source = j.value("transcript_source", std::string());
    return r;
}

// Append-only record log under a run directory.
class RunStore {
public:
    explicit RunStore(std::string run_dir) : run_dir_(std::move(run_dir)) {
        std::filesystem::create_directories(run_dir_);
        out_.open(records_path(), std::ios::app);
        if (!out_) throw io_error("cannot open " + records_path() + " for append");
    }

    std::string records_path() const {
        return (std::filesystem::path(run_dir_) / "records.jsonl").string();
    }

    void append(const RunRecord& r) {
        std::string line = record_to_json(r).dump();
        std::lock_guard<std::mutex> lock(mu_);
        out_ << line << "\n";
        out_.flush();
        if (!out_) throw io_error("failed writing to " + records_path());
    }

    static std::vector<RunRecord> load(const std::string& run_dir) {
        std::string path = (std::filesystem::path(run_dir) / "records.jsonl").string();
        std::vector<RunRecord> out;
        if (!std::filesystem::exists(path)) return out;
        std::ifstream in(path);
        if (!in) throw io_error("cannot read " + path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                out.push_back(record_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::exception& e) {
                throw Error("RecordCorrupt",
                            path + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        return out;
    }

    const std::string& run_dir() const { return run_dir_; }

private:
    std::string run_dir_;
    std::ofstream out_;
    std::mutex mu_;
};

// Run-level metadata: the config snapshot and template hashes let resume
// refuse to append records produced under different settings.
struct RunManifest {
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, std::string> template_hashes;
    std::string code_version = kCodeVersion;
    std::int64_t started_unix_ms = 0;
    std::int64_t finished_unix_ms = 0;
    std::size_t planned = 0;
    std::size_t records = 0;
    std::string status = "partial"; // "complete" once every planned record exists
    nlohmann::json exclusions = nlohmann::json::array();

    static std::string path_in(const std::string& run_dir) {
        return (std::filesystem::path(run_dir) / "run.manifest").string();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["config"] = config;
        j["template_hashes"] = template_hashes;
        j["code_version"] = code_version;
        j["started_unix_ms"] = started_unix_ms;
        j["finished_unix_ms"] = finished_unix_ms;
        j["planned"] = planned;
        j["records"] = records;
        j["status"] = status;
        j["exclusions"] = exclusions;
        return j;
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        m.config = j.value("config", nlohmann::json::object());
        if (j.contains("template_hashes"))
            m.template_hashes = j["template_hashes"].get<std::map<std::string, std::string>>();
        m.code_version = j.value("code_version", std::string());
        m.started_unix_ms = j.value("started_unix_ms", std::int64_t{0});
        m.finished_unix_ms = j.value("finished_unix_ms", std::int64_t{0});
        m.planned = j.value("planned", std::size_t{0});
        m.records = j.value("records", std::size_t{0});
        m.status = j.value("status", std::string("partial"));
        m.exclusions = j.value("exclusions", nlohmann::json::array());
        return m;
    }

    void save(const std::string& run_dir) const {
        write_file(path_in(run_dir), to_json().dump(2) + "\n");
    }

    static std::optional<RunManifest> load(const std::string& run_dir) {
        std::string path = path_in(run_dir);
        if (!std::filesystem::exists(path)) return std::nullopt;
        try {
            return from_json(nlohmann::json::parse(read_file(path)));
        } catch (const nlohmann::json::exception& e) {
            throw Error("ManifestCorrupt", path + ": " + e.what());
        }
    }
};

// Deterministic flat view of a run: one row per record, sorted by identity,
// so reruns with identical records produce byte-identical files.
inline std::string write_predictions_csv(const std::string& run_dir,
                                         std::vector<RunRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.id < b.id; });
    std::string out =
        "participant_id,task,variant,modality,provider,shot_mode,truth,truth_raw,pred,"
        "parse_status,error_class\n";
    for (const auto& r : records) {
        std::string parse_status;
        if (!r.error_class.empty()) parse_status = "error";
        else if (r.parse.valid()) parse_status = "valid";
        else parse_status = to_string(r.parse.reason);
        std::vector<std::string> fields{
            std::to_string(r.id.participant_id),
            to_string(r.id.task),
            to_string(r.id.variant),
            to_string(r.id.modality),
            r.id.provider,
            to_string(r.id.shot_mode),
            r.truth,
            r.truth_raw ? std::to_string(*r.truth_raw) : "",
            r.parse.valid() ? r.parse.label : "",
            parse_status,
            r.error_class};
        out += csv_join(fields) + "\n";
    }
    std::string path = (std::filesystem::path(run_dir) / "predictions.csv").string();
    write_file(path, out);
    return path;
}

} // namespace modaleval
