#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "modaleval/corpus.hpp"
#include "modaleval/csv.hpp"
#include "modaleval/errors.hpp"

namespace modaleval {

struct InvalidProfileError : Error {
    explicit InvalidProfileError(const std::string& detail) : Error("InvalidProfile", detail) {}
};

enum class FixtureProfile { paper_marginals, uniform, custom };

struct FixtureSpec {
    FixtureProfile profile = FixtureProfile::paper_marginals;
    int uniform_count = 40; // uniform profile size
    int custom_pos = 0;     // custom profile: positive/negative record counts
    int custom_neg = 0;
};

inline FixtureProfile fixture_profile_from_string(std::string_view s) {
    if (s == "paper_marginals") return FixtureProfile::paper_marginals;
    if (s == "uniform") return FixtureProfile::uniform;
    if (s == "custom") return FixtureProfile::custom;
    throw InvalidProfileError("unknown profile '" + std::string(s) + "'");
}

// The 20 session ids whose PHQ binary label ships wrong (0 despite a
// score >= 10) in the source corpus, plus the one session (683) whose raw
// PCL-C total sits below the instrument floor.
inline const std::vector<int>& known_mislabeled_ids() {
    static const std::vector<int> v{320, 325, 335, 344, 352, 356, 380, 386, 409, 413,
                                    418, 422, 433, 459, 483, 633, 682, 691, 696, 709};
    return v;
}

inline constexpr int kSubFloorPtsdId = 683;
inline constexpr int kSubFloorPtsdRawScore = 10;

namespace detail {

// All randomness below goes through these two helpers on a mt19937_64 so
// fixture bytes are identical across standard libraries.
inline std::uint64_t draw_below(std::mt19937_64& eng, std::uint64_t n) {
    return n == 0 ? 0 : eng() % n;
}

template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(draw_below(eng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Minimal PCM WAV: mono, 16-bit, 8 kHz, 0.2 s of silence.
inline std::string silence_wav_bytes() {
    const std::uint32_t sample_rate = 8000;
    const std::uint32_t n_samples = 1600;
    const std::uint32_t data_bytes = n_samples * 2;
    std::string out;
    auto u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
    };
    auto u16 = [&](std::uint16_t v) {
        out += static_cast<char>(v & 0xFF);
        out += static_cast<char>((v >> 8) & 0xFF);
    };
    out += "RIFF";
    u32(36 + data_bytes);
    out += "WAVEfmt ";
    u32(16);
    u16(1); // PCM
    u16(1); // mono
    u32(sample_rate);
    u32(sample_rate * 2); // byte rate
    u16(2);               // block align
    u16(16);              // bits per sample
    out += "data";
    u32(data_bytes);
    out.append(data_bytes, '\0');
    return out;
}

inline const char* kDepPhrases[5][3] = {
    {"I've been doing pretty well lately, honestly.",
     "Work keeps me busy and I still enjoy my hobbies on the weekend.",
     "My sleep has been fine and my appetite is normal."},
    {"Some days I feel a little down, but it usually passes by the evening.",
     "I've been slightly more tired than usual this month.",
     "Once in a while I lose interest in things, though not for long."},
    {"It's been hard to find the energy to see my friends.",
     "I have trouble falling asleep a few nights a week now.",
     "Things I used to enjoy feel like chores more often than not."},
    {"Most mornings it takes everything I have just to get up.",
     "I've stopped answering calls from people I care about.",
     "I can't concentrate at work anymore and it's starting to show."},
    {"I honestly can't remember the last day I felt okay.",
     "I barely eat, I barely sleep, and nothing feels worth doing.",
     "Everything feels heavy all the time, like I'm moving through water."}};

inline const char* kPtsdPhrases[3][3] = {
    {"I sleep through the night without any trouble.",
     "Crowded places don't bother me at all.",
     "I don't really think about the past much; it stays where it is."},
    {"Loud noises startle me more than they used to.",
     "Sometimes a smell or a sound pulls me right back to that time.",
     "I catch myself avoiding the highway where it happened."},
    {"The nightmares come back almost every night now.",
     "I can't sit with my back to a door, I'm always scanning the room.",
     "Flashbacks hit me out of nowhere and I lose whole afternoons."}};

inline std::string synth_transcript(int participant_id, int dep_label, int ptsd_label,
                                    std::mt19937_64& eng) {
    std::string t;
    t += "Interviewer: Thank you for coming in today. How have you been feeling lately?\n";
    t += "Participant: ";
    t += kDepPhrases[dep_label][draw_below(eng, 3)];
    t += "\n";
    t += "Interviewer: Can you tell me more about your sleep and daily routine?\n";
    t += "Participant: ";
    t += kDepPhrases[dep_label][draw_below(eng, 3)];
    t += " ";
    t += kPtsdPhrases[ptsd_label][draw_below(eng, 3)];
    t += "\n";
    t += "Interviewer: Is there anything from the past that still affects you?\n";
    t += "Participant: ";
    t += kPtsdPhrases[ptsd_label][draw_below(eng, 3)];
    t += "\n";
    t += "Interviewer: I appreciate you sharing that. (session ";
    t += std::to_string(participant_id);
    t += ")\n";
    return t;
}

struct LabelPlan {
    int dep_label;    // depression severity bin 0-4
    int ptsd_label;   // reference-scale bin 0-2
};

} // namespace detail

// Writes manifest.csv, transcripts/<id>_Transcript.txt and
// audio/<id>_AUDIO.wav under out_dir and returns the RAW manifest (label
// anomalies seeded, corrections not applied). Deterministic per seed.
inline DatasetManifest generate_synthetic_fixture(std::uint64_t seed, const FixtureSpec& spec,
                                                  const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::mt19937_64 eng(seed * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull);

    std::vector<int> ids;
    std::vector<detail::LabelPlan> plans;

    if (spec.profile == FixtureProfile::paper_marginals) {
        // 275 sessions reproducing the published marginals exactly:
        // depression severity {122, 67, 43, 33, 10}, PTSD reference bins
        // {137, 51, 87}. The known mislabeled ids all live in the
        // score >= 10 depression bins so their raw binary can be seeded 0.
        const int kDepCounts[5] = {122, 67, 43, 33, 10};
        const int kPtsdCounts[3] = {137, 51, 87};
        const auto& special = known_mislabeled_ids();
        ids = special;
        ids.push_back(kSubFloorPtsdId);
        for (int next = 300; static_cast<int>(ids.size()) < 275; ++next) {
            bool taken = false;
            for (int s : ids)
                if (s == next) taken = true;
            if (!taken) ids.push_back(next);
        }
        std::sort(ids.begin(), ids.end());

        std::vector<int> positive_bins; // dep labels 2..4 (score >= 10)
        for (int label = 2; label <= 4; ++label)
            for (int k = 0; k < kDepCounts[label]; ++k) positive_bins.push_back(label);
        detail::deterministic_shuffle(positive_bins, eng);

        std::vector<int> rest_bins; // remaining positives + all negatives
        for (std::size_t i = special.size(); i < positive_bins.size(); ++i)
            rest_bins.push_back(positive_bins[i]);
        for (int label = 0; label <= 1; ++label)
            for (int k = 0; k < kDepCounts[label]; ++k) rest_bins.push_back(label);
        detail::deterministic_shuffle(rest_bins, eng);

        std::vector<int> ptsd_bins;
        for (int label = 0; label <= 2; ++label)
            for (int k = 0; k < kPtsdCounts[label]; ++k) ptsd_bins.push_back(label);
        detail::deterministic_shuffle(ptsd_bins, eng);

        plans.resize(ids.size());
        std::size_t rest_i = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            bool is_special = false;
            for (std::size_t s = 0; s < special.size(); ++s)
                if (special[s] == ids[i]) {
                    plans[i].dep_label = positive_bins[s];
                    is_special = true;
                }
            if (!is_special) plans[i].dep_label = rest_bins[rest_i++];
            plans[i].ptsd_label = ptsd_bins[i];
        }
        // Session 683 carries the sub-floor raw score; keep it in the lowest
        // reference bin so the clamp to 17 leaves the bin counts intact.
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] != kSubFloorPtsdId || plans[i].ptsd_label == 0) continue;
            for (std::size_t j = 0; j < ids.size(); ++j)
                if (plans[j].ptsd_label == 0 && ids[j] != kSubFloorPtsdId) {
                    std::swap(plans[i].ptsd_label, plans[j].ptsd_label);
                    break;
                }
        }
    } else if (spec.profile == FixtureProfile::uniform) {
        if (spec.uniform_count <= 0) throw InvalidProfileError("uniform profile needs count > 0");
        for (int i = 0; i < spec.uniform_count; ++i) {
            ids.push_back(300 + i);
            plans.push_back({i % 5, i % 3});
        }
        detail::deterministic_shuffle(plans, eng);
    } else {
        if (spec.custom_pos < 0 || spec.custom_neg < 0 || spec.custom_pos + spec.custom_neg == 0)
            throw InvalidProfileError("custom profile needs pos/neg counts >= 0, sum > 0");
        for (int i = 0; i < spec.custom_pos + spec.custom_neg; ++i) {
            ids.push_back(300 + i);
            // Positive records are positive on both screens; severity bins 2
            // (depression) and 2 (PTSD reference).
            plans.push_back(i < spec.custom_pos ? detail::LabelPlan{2, 2} : detail::LabelPlan{0, 0});
        }
        detail::deterministic_shuffle(plans, eng);
    }

    fs::create_directories(fs::path(out_dir) / "transcripts");
    fs::create_directories(fs::path(out_dir) / "audio");

    // Split assignment: the real corpus proportions for the full-size
    // profile, round-robin otherwise.
    std::vector<Split> splits(ids.size(), Split::train);
    if (spec.profile == FixtureProfile::paper_marginals) {
        std::vector<std::size_t> order(ids.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        detail::deterministic_shuffle(order, eng);
        for (std::size_t i = 0; i < order.size(); ++i)
            splits[order[i]] = i < 163 ? Split::train : (i < 163 + 56 ? Split::dev : Split::test);
    } else {
        const Split cycle[3] = {Split::train, Split::dev, Split::test};
        for (std::size_t i = 0; i < ids.size(); ++i) splits[i] = cycle[i % 3];
    }

    DatasetManifest m;
    m.source_note = "synthetic fixture, profile seed " + std::to_string(seed);
    std::string wav = detail::silence_wav_bytes();
    std::string csv = "Participant_ID,PHQ_Score,PHQ_Binary,PCL-C,PTSD_Severity,Split,"
                      "Transcript_Path,Audio_Path\n";

    const auto& dep_scale = depression_phq8_scale();
    const auto& ptsd_scale = ptsd_reference_scale();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ParticipantRecord r;
        r.participant_id = ids[i];
        const auto& dep_bin = dep_scale.bins[static_cast<std::size_t>(plans[i].dep_label)];
        r.phq_score = dep_bin.lo + static_cast<int>(detail::draw_below(
                          eng, static_cast<std::uint64_t>(dep_bin.hi - dep_bin.lo + 1)));
        r.phq_binary = r.phq_score >= 10 ? 1 : 0;
        const auto& pbin = ptsd_scale.bins[static_cast<std::size_t>(plans[i].ptsd_label)];
        r.ptsd_severity = pbin.lo + static_cast<int>(detail::draw_below(
                              eng, static_cast<std::uint64_t>(pbin.hi - pbin.lo + 1)));
        r.pclc_binary = r.ptsd_severity > 44 ? 1 : 0;
        r.split = splits[i];

        if (spec.profile == FixtureProfile::paper_marginals) {
            // Seed the raw anomalies the correction pass must find.
            for (int s : known_mislabeled_ids())
                if (s == r.participant_id) r.phq_binary = 0;
            if (r.participant_id == kSubFloorPtsdId) {
                r.ptsd_severity = kSubFloorPtsdRawScore;
                r.pclc_binary = 0;
            }
        }

        std::string rel_transcript = "transcripts/" + std::to_string(r.participant_id) + "_Transcript.txt";
        std::string rel_audio = "audio/" + std::to_string(r.participant_id) + "_AUDIO.wav";
        std::string transcript =
            detail::synth_transcript(r.participant_id, plans[i].dep_label, plans[i].ptsd_label, eng);
        write_file((fs::path(out_dir) / rel_transcript).string(), transcript);
        write_file((fs::path(out_dir) / rel_audio).string(), wav);

        csv += csv_join({std::to_string(r.participant_id), std::to_string(r.phq_score),
                         std::to_string(r.phq_binary), std::to_string(r.pclc_binary),
                         std::to_string(r.ptsd_severity), to_string(r.split), rel_transcript,
                         rel_audio}) +
               "\n";

        r.transcript_path = (fs::path(out_dir) / rel_transcript).lexically_normal().string();
        r.audio_path = (fs::path(out_dir) / rel_audio).lexically_normal().string();
        m.records.push_back(std::move(r));
    }

    write_file((fs::path(out_dir) / "manifest.csv").string(), csv);
    return m;
}

} // namespace modaleval
