#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "modaleval/csv.hpp"
#include "modaleval/parsers.hpp"
#include "modaleval/tasks.hpp"

using namespace modaleval;

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = detail::ascii_lower(c);
    return s;
}

std::vector<nlohmann::json> load_corpus() {
    std::string text = read_file(std::string(MODALEVAL_REPO_DIR) +
                                 "/tests/data/parser_corpus.jsonl");
    std::vector<nlohmann::json> cases;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        cases.push_back(nlohmann::json::parse(line));
    }
    return cases;
}

// Every valid outcome must point at a span that substantiates its label.
void check_span_soundness(Task t, const std::string& raw, const ParseOutcome& o) {
    if (!o.valid()) {
        REQUIRE(o.reason != InvalidReason::none);
        REQUIRE(o.label.empty());
        return;
    }
    REQUIRE(o.reason == InvalidReason::none);
    REQUIRE(o.span_begin < o.span_end);
    REQUIRE(o.span_end <= raw.size());
    std::string span = raw.substr(o.span_begin, o.span_end - o.span_begin);
    if (is_severity_task(t)) {
        REQUIRE(std::stoll(span) == std::stoll(o.label));
    } else {
        REQUIRE(lower(span) == lower(o.label));
    }
}

} // namespace

TEST_CASE("corpus cases all parse as recorded") {
    auto cases = load_corpus();
    REQUIRE(cases.size() >= 40);
    for (const auto& c : cases) {
        INFO("raw: " << c["raw"].get<std::string>());
        Task t = task_from_string(c["task"].get<std::string>());
        ParseOutcome o = parse_for_task(t, c["raw"].get<std::string>());
        CHECK(to_string(o.status) == c["status"].get<std::string>());
        CHECK(to_string(o.reason) == c["reason"].get<std::string>());
        if (c["status"] == "valid") {
            CHECK(o.label == c["label"].get<std::string>());
            if (c.contains("span")) {
                CHECK(o.span_begin == c["span"][0].get<std::size_t>());
                CHECK(o.span_end == c["span"][1].get<std::size_t>());
            }
        }
        check_span_soundness(t, c["raw"].get<std::string>(), o);
    }
}

TEST_CASE("binary tokens respect letter boundaries") {
    CHECK(parse_binary("no").label == "No");
    CHECK(parse_binary("nos").reason == InvalidReason::no_token);
    CHECK(parse_binary("snow").reason == InvalidReason::no_token);
    CHECK(parse_binary("(no)").label == "No");
    CHECK(parse_binary("yes,").label == "Yes");
    CHECK(parse_binary("eyes").reason == InvalidReason::no_token);
    // Digits are not letters, so they do form boundaries.
    CHECK(parse_binary("2no").label == "No");
}

TEST_CASE("severity literal extraction") {
    SECTION("sign attaches only when not preceded by a digit") {
        ParseOutcome o = parse_severity("a-2", -5, 5);
        REQUIRE(o.valid());
        CHECK(o.label == "-2");
        CHECK(o.span_begin == 1);
        CHECK(o.span_end == 3);
        CHECK(parse_severity("3-4", 0, 10).reason == InvalidReason::multiple_numbers);
    }
    SECTION("long digit runs are out of range regardless of value") {
        // 20 digits spelling 3; the run length alone disqualifies it.
        CHECK(parse_severity("00000000000000000003", 0, 4).reason ==
              InvalidReason::out_of_range);
        // 18 digits is still parsed.
        ParseOutcome o = parse_severity("000000000000000003", 0, 4);
        REQUIRE(o.valid());
        CHECK(o.label == "3");
    }
    SECTION("bounds are inclusive") {
        CHECK(parse_severity("17", 17, 85).valid());
        CHECK(parse_severity("85", 17, 85).valid());
        CHECK(parse_severity("16", 17, 85).reason == InvalidReason::out_of_range);
        CHECK(parse_severity("86", 17, 85).reason == InvalidReason::out_of_range);
    }
}

TEST_CASE("multiclass span consumption") {
    SECTION("the combined phrase shields its words from the singles") {
        ParseOutcome o = parse_multiclass("Depressed and PTSD");
        REQUIRE(o.valid());
        CHECK(o.label == "Depressed and PTSD");
    }
    SECTION("reversed word order is two distinct categories") {
        CHECK(parse_multiclass("PTSD and Depressed").reason ==
              InvalidReason::ambiguous_category);
    }
    SECTION("extra whitespace breaks the combined phrase into singles") {
        CHECK(parse_multiclass("Depressed  and PTSD").reason ==
              InvalidReason::ambiguous_category);
    }
    SECTION("repeats of one category stay valid and keep the first span") {
        ParseOutcome o = parse_multiclass("It is PTSD. I repeat: PTSD.");
        REQUIRE(o.valid());
        CHECK(o.label == "PTSD");
        CHECK(o.span_begin == 6);
        CHECK(o.span_end == 10);
    }
}

TEST_CASE("fuzz: every byte string maps to one well-formed outcome") {
    // A palette that keeps the parsers busy: tokens, digits, signs,
    // punctuation, raw bytes.
    static const std::vector<std::string> pieces{
        "yes", "no",   "Yes",  "No",     "YES",       "NO",      "normal", "Normal",
        "PTSD", "ptsd", "Depressed", "depressed", "and", "Depressed and PTSD",
        " ",    ",",    ".",    "-",      "--",        "0",       "1",      "2",
        "3",    "4",    "5",    "17",     "85",        "100",     "-1",
        "9999999999999999999", " or ",   "\n",        "\t",      "\"",     "know",
        "eyes", "abnormal", "maybe", "\xff\xfe", "\x80", "x"};
    std::mt19937_64 eng(20240817u);
    const std::vector<Task> tasks{Task::dep_binary, Task::dep_severity, Task::ptsd_severity,
                                  Task::multiclass};
    for (int iter = 0; iter < 1'000'000; ++iter) {
        std::string raw;
        int parts = static_cast<int>(eng() % 7);
        for (int p = 0; p < parts; ++p) raw += pieces[eng() % pieces.size()];
        Task t = tasks[eng() % tasks.size()];
        ParseOutcome o = parse_for_task(t, raw);
        // REQUIRE is too slow at this volume; assert by hand and fail loudly.
        if (o.valid()) {
            if (o.reason != InvalidReason::none || o.span_begin >= o.span_end ||
                o.span_end > raw.size()) {
                INFO("raw: " << raw);
                REQUIRE(false);
            }
            std::string span = raw.substr(o.span_begin, o.span_end - o.span_begin);
            if (is_severity_task(t)) {
                if (std::stoll(span) != std::stoll(o.label)) {
                    INFO("raw: " << raw);
                    REQUIRE(false);
                }
            } else if (lower(span) != lower(o.label)) {
                INFO("raw: " << raw);
                REQUIRE(false);
            }
        } else if (o.reason == InvalidReason::none || !o.label.empty()) {
            INFO("raw: " << raw);
            REQUIRE(false);
        }
    }
    SUCCEED("1e6 fuzz strings parsed with sound outcomes");
}
