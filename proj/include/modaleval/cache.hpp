#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>

#include "modaleval/errors.hpp"

namespace modaleval {

struct CacheEntry {
    std::string key;
    std::string provider;
    std::string model;
    std::string body; // raw response text, byte-exact
    std::int64_t latency_ms = 0;
    int retries = 0;
};

// On-disk response cache keyed by idempotency key. One file per entry under
// a two-hex-char fan-out directory; the body is length-framed so arbitrary
// bytes round-trip.
class ResponseCache {
public:
    explicit ResponseCache(std::string dir) : dir_(std::move(dir)) {}

    std::string path_for(const std::string& key) const {
        std::string shard = key.size() >= 2 ? key.substr(0, 2) : std::string("xx");
        return (std::filesystem::path(dir_) / shard / (key + ".response")).string();
    }

    std::optional<CacheEntry> lookup(const std::string& key) const {
        std::lock_guard<std::mutex> lock(mu_);
        std::string path = path_for(key);
        std::ifstream in(path, std::ios::binary);
        if (!in) return std::nullopt;
        return parse(in, path);
    }

    void store(const CacheEntry& e) const {
        std::lock_guard<std::mutex> lock(mu_);
        std::filesystem::path path = path_for(e.key);
        std::filesystem::create_directories(path.parent_path());
        std::filesystem::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw io_error("cannot write cache file " + tmp.string());
            out << "modaleval-cache v1\n";
            out << "key: " << e.key << "\n";
            out << "provider: " << e.provider << "\n";
            out << "model: " << e.model << "\n";
            out << "latency_ms: " << e.latency_ms << "\n";
            out << "retries: " << e.retries << "\n";
            out << "body_bytes: " << e.body.size() << "\n";
            out << "\n";
            out.write(e.body.data(), static_cast<std::streamsize>(e.body.size()));
            if (!out) throw io_error("short write to cache file " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }

    const std::string& dir() const { return dir_; }

private:
    static std::string header_value(const std::string& line, const char* name,
                                    const std::string& path) {
        std::string prefix = std::string(name) + ": ";
        if (line.rfind(prefix, 0) != 0)
            throw Error("CacheCorrupt", path + ": expected '" + name + ":' header, got '" + line + "'");
        return line.substr(prefix.size());
    }

    static CacheEntry parse(std::istream& in, const std::string& path) {
        std::string line;
        auto next = [&]() -> std::string& {
            if (!std::getline(in, line)) throw Error("CacheCorrupt", path + ": truncated header");
            return line;
        };
        if (next() != "modaleval-cache v1")
            throw Error("CacheCorrupt", path + ": unknown cache format '" + line + "'");
        CacheEntry e;
        e.key = header_value(next(), "key", path);
        e.provider = header_value(next(), "provider", path);
        e.model = header_value(next(), "model", path);
        e.latency_ms = std::stoll(header_value(next(), "latency_ms", path));
        e.retries = std::stoi(header_value(next(), "retries", path));
        std::size_t n = std::stoull(header_value(next(), "body_bytes", path));
        if (!next().empty()) throw Error("CacheCorrupt", path + ": missing blank separator line");
        e.body.resize(n);
        in.read(e.body.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw Error("CacheCorrupt", path + ": body shorter than declared length");
        return e;
    }

    std::string dir_;
    mutable std::mutex mu_;
};

} // namespace modaleval
