#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include "modaleval/csv.hpp"
#include "modaleval/errors.hpp"
#include "modaleval/hashing.hpp"

namespace modaleval {

struct TranscriptionFailedError : Error {
    explicit TranscriptionFailedError(const std::string& what)
        : Error("TranscriptionFailed", what) {}
};

// Produces a transcript for an audio file. The harness only calls this when
// a text-bearing modality is requested and the participant has no stored
// transcript.
class Transcriber {
public:
    virtual ~Transcriber() = default;
    virtual std::string transcribe(const std::string& audio_path) = 0;
    virtual std::string name() const = 0;
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    out += "'";
    return out;
}

} // namespace detail

// Runs an external command with {input} substituted by the audio path and
// takes its stdout as the transcript.
class CommandTranscriber : public Transcriber {
public:
    explicit CommandTranscriber(std::string command_template)
        : command_template_(std::move(command_template)) {
        if (command_template_.find("{input}") == std::string::npos)
            throw Error("ConfigInvalid", "transcriber command needs an {input} placeholder");
    }

    std::string transcribe(const std::string& audio_path) override {
        std::string cmd = command_template_;
        std::size_t pos = cmd.find("{input}");
        cmd.replace(pos, 7, detail::shell_quote(audio_path));
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (!pipe) throw TranscriptionFailedError("cannot start command: " + cmd);
        std::string out;
        char buf[4096];
        std::size_t n;
        while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
        int status = ::pclose(pipe);
        if (status != 0)
            throw TranscriptionFailedError("command exited with status " +
                                           std::to_string(status) + ": " + cmd);
        return out;
    }

    std::string name() const override { return "command"; }

private:
    std::string command_template_;
};

// Reads a transcript that already exists on disk next to the audio.
// Template slots: {dir} audio parent dir, {stem} audio filename without
// extension, {base} stem up to the first underscore.
class PrecomputedTranscriber : public Transcriber {
public:
    explicit PrecomputedTranscriber(std::string path_template)
        : path_template_(std::move(path_template)) {}

    std::string transcribe(const std::string& audio_path) override {
        std::filesystem::path p(audio_path);
        std::string stem = p.stem().string();
        std::string base = stem.substr(0, stem.find('_'));
        std::string path = path_template_;
        auto sub = [&](const std::string& slot, const std::string& value) {
            std::size_t pos;
            while ((pos = path.find(slot)) != std::string::npos)
                path.replace(pos, slot.size(), value);
        };
        sub("{dir}", p.parent_path().string());
        sub("{stem}", stem);
        sub("{base}", base);
        if (!std::filesystem::exists(path))
            throw TranscriptionFailedError("no precomputed transcript at " + path);
        return read_file(path);
    }

    std::string name() const override { return "precomputed"; }

private:
    std::string path_template_;
};

// Caches any inner transcriber's output keyed by audio byte content.
class CachingTranscriber : public Transcriber {
public:
    CachingTranscriber(std::shared_ptr<Transcriber> inner, std::string cache_dir)
        : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {
        if (!inner_) throw Error("ConfigInvalid", "caching transcriber needs an inner transcriber");
    }

    std::string transcribe(const std::string& audio_path) override {
        std::string key = hash_file_key(audio_path);
        std::filesystem::path cached =
            std::filesystem::path(cache_dir_) / "transcripts" / (key + ".txt");
        if (std::filesystem::exists(cached)) return read_file(cached.string());
        std::string text = inner_->transcribe(audio_path);
        std::filesystem::create_directories(cached.parent_path());
        write_file(cached.string(), text);
        return text;
    }

    std::string name() const override { return inner_->name() + "+cache"; }

private:
    static std::string hash_file_key(const std::string& path) {
        return hex64(fnv1a64(read_file(path)));
    }

    std::shared_ptr<Transcriber> inner_;
    std::string cache_dir_;
};

} // namespace modaleval
