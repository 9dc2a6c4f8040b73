#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "modaleval/errors.hpp"
#include "modaleval/hashing.hpp"
#include "modaleval/tasks.hpp"

namespace modaleval {

// Tunable answer distribution for the offline mock provider. Accuracy is
// per modality so modality-contrast experiments have a known ground truth.
struct MockBehavior {
    std::map<Modality, double> accuracy_by_modality;
    double invalid_rate = 0.0;
    double verbosity = 0.0; // probability of wrapping the label in prose
    std::uint64_t seed = 0;

    double accuracy_for(Modality m) const {
        auto it = accuracy_by_modality.find(m);
        if (it == accuracy_by_modality.end())
            throw Error("ConfigInvalid",
                        "mock behavior has no accuracy for modality " + to_string(m));
        if (it->second < 0.0 || it->second > 1.0)
            throw Error("ConfigInvalid", "mock accuracy must be in [0, 1]");
        return it->second;
    }
};

// Ground truth the mock needs to synthesize an answer. Attached to a request
// by the harness; real providers ignore it.
struct MockOracle {
    std::string truth_label;
    std::vector<std::string> allowed_labels;
    Task task = Task::dep_binary;
    Modality modality = Modality::text;
};

struct MockReply {
    std::string text;
    std::int64_t latency_ms = 0;
};

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; fixed across platforms,
// unlike std::uniform_real_distribution.
inline double unit_draw(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline std::string mock_invalid_text(Task t, int kind, const std::vector<std::string>& allowed) {
    if (is_binary_task(t)) {
        switch (kind) {
            case 0: return "It is hard to determine from this interview.";
            case 1: return "Yes and no, the signs are mixed.";
            default: return "maybe";
        }
    }
    if (is_severity_task(t)) {
        switch (kind) {
            case 0: return "A single severity level cannot be determined here.";
            case 1: return "2 or 3";
            default: return std::to_string(std::stoi(allowed.back()) + 3);
        }
    }
    switch (kind) {
        case 0: return "There is not enough evidence for a determination.";
        case 1: return "Normal, possibly PTSD";
        default: return "Unclear";
    }
}

inline std::string mock_wrap_label(Task t, const std::string& label) {
    if (is_binary_task(t)) return "The answer is " + label + ".";
    if (is_severity_task(t)) return "The severity level is " + label + ".";
    return "The category is " + label + ".";
}

} // namespace detail

// Deterministic synthetic answer: the draw is keyed by behavior seed, run
// seed and the request's idempotency key, so a given request always yields
// the same reply within a run and changes across seeds.
inline MockReply mock_response(const MockBehavior& b, std::uint64_t run_seed,
                               const std::string& idempotency_key, const MockOracle& oracle) {
    if (oracle.allowed_labels.empty())
        throw Error("ConfigInvalid", "mock oracle has no allowed labels");
    Fnv1a64 h;
    h.update_u64(b.seed);
    h.update_u64(run_seed);
    h.field(idempotency_key);
    std::mt19937_64 eng(h.digest());

    double u = detail::unit_draw(eng);
    double accuracy = b.accuracy_for(oracle.modality);

    MockReply reply;
    if (u < b.invalid_rate) {
        int kind = static_cast<int>(eng() % 3);
        reply.text = detail::mock_invalid_text(oracle.task, kind, oracle.allowed_labels);
    } else {
        std::string label;
        if (u < b.invalid_rate + accuracy) {
            label = oracle.truth_label;
        } else {
            std::vector<std::string> wrong;
            for (const auto& l : oracle.allowed_labels)
                if (l != oracle.truth_label) wrong.push_back(l);
            if (wrong.empty()) label = oracle.truth_label;
            else label = wrong[eng() % wrong.size()];
        }
        if (b.verbosity > 0.0 && detail::unit_draw(eng) < b.verbosity)
            label = detail::mock_wrap_label(oracle.task, label);
        reply.text = label;
    }
    reply.latency_ms = 5 + static_cast<std::int64_t>(eng() % 40);
    return reply;
}

} // namespace modaleval
