#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "modaleval/cache.hpp"
#include "modaleval/clock.hpp"
#include "modaleval/errors.hpp"
#include "modaleval/hashing.hpp"
#include "modaleval/mock.hpp"
#include "modaleval/prompts.hpp"
#include "modaleval/ratelimit.hpp"

namespace modaleval {

struct AuthError : Error {
    explicit AuthError(const std::string& what) : Error("AuthError", what) {}
};

struct RateLimitedError : Error {
    explicit RateLimitedError(const std::string& what) : Error("RateLimited", what) {}
};

struct ConnectionError : Error {
    explicit ConnectionError(const std::string& what) : Error("Connection", what) {}
};

struct TransportError : Error {
    explicit TransportError(const std::string& what) : Error("Transport", what) {}
};

struct UnsupportedModalityError : Error {
    explicit UnsupportedModalityError(const std::string& what)
        : Error("UnsupportedModality", what) {}
};

enum class ProviderKind { openai_compatible, gemini_compatible, mock };

inline std::string to_string(ProviderKind k) {
    switch (k) {
        case ProviderKind::openai_compatible: return "openai_compatible";
        case ProviderKind::gemini_compatible: return "gemini_compatible";
        case ProviderKind::mock: return "mock";
    }
    return "?";
}

inline ProviderKind provider_kind_from_string(const std::string& s) {
    if (s == "openai_compatible") return ProviderKind::openai_compatible;
    if (s == "gemini_compatible") return ProviderKind::gemini_compatible;
    if (s == "mock") return ProviderKind::mock;
    throw Error("ConfigInvalid", "unknown provider kind '" + s + "'");
}

struct ProviderConfig {
    std::string name;
    ProviderKind kind = ProviderKind::mock;
    std::string base_url;
    std::string model_name;
    std::string api_key_env; // name of env var holding the key; empty = no auth
    bool supports_audio = true;
    int max_concurrent = 4;
    int requests_per_minute = 60;
    double temperature = 0.0;
    double request_timeout_s = 30.0;
    std::optional<MockBehavior> mock_behavior;
};

struct InferenceRequest {
    RenderedPrompt prompt;
    std::string provider_name;
    std::string idempotency_key;
    std::optional<MockOracle> oracle; // consumed by the mock kind only
};

struct InferenceResponse {
    std::string raw_text;
    std::int64_t latency_ms = 0;
    int retries_used = 0;
    bool from_cache = false;
    std::string provider_meta;
};

struct TransportResult {
    int status = 0; // 0 means the connection itself failed
    std::string body;
    std::string error;
    std::int64_t synthetic_latency_ms = -1; // mock transports report latency here
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual TransportResult round_trip(const ProviderConfig& cfg, const InferenceRequest& req) = 0;
    std::int64_t calls() const { return calls_.load(); }

protected:
    void count_call() { calls_.fetch_add(1); }

private:
    std::atomic<std::int64_t> calls_{0};
};

class MockTransport : public Transport {
public:
    explicit MockTransport(std::uint64_t run_seed) : run_seed_(run_seed) {}

    TransportResult round_trip(const ProviderConfig& cfg, const InferenceRequest& req) override {
        count_call();
        if (!cfg.mock_behavior)
            throw Error("ConfigInvalid", "provider '" + cfg.name + "' is mock but has no behavior");
        if (!req.oracle)
            throw Error("ConfigInvalid", "mock request is missing its oracle");
        MockReply reply = mock_response(*cfg.mock_behavior, run_seed_, req.idempotency_key,
                                        *req.oracle);
        TransportResult r;
        r.status = 200;
        r.body = reply.text;
        r.synthetic_latency_ms = reply.latency_ms;
        return r;
    }

private:
    std::uint64_t run_seed_;
};

inline std::string hash_file_bytes(const std::string& path) {
    return hex64(fnv1a64(read_file(path)));
}

// Content-addressed request identity: same provider, model, prompt,
// attachment bytes and temperature always map to the same key, which is
// what the response cache and resume logic key on.
inline std::string make_idempotency_key(const ProviderConfig& cfg, const RenderedPrompt& prompt,
                                        const std::vector<std::string>& attachment_byte_hashes) {
    Fnv1a64 h;
    h.field(cfg.name);
    h.field(cfg.model_name);
    h.field(prompt.content_hash);
    for (const auto& ah : attachment_byte_hashes) h.field(ah);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", cfg.temperature);
    h.field(buf);
    return hex64(h.digest());
}

// Response-body extraction for the two wire formats.
inline std::string extract_openai_text(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedResponse", std::string("response is not JSON: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
        throw Error("MalformedResponse", "response has no choices");
    const auto& msg = j["choices"][0]["message"];
    if (!msg.contains("content"))
        throw Error("MalformedResponse", "response message has no content");
    const auto& content = msg["content"];
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
        std::string out;
        for (const auto& part : content)
            if (part.contains("text") && part["text"].is_string())
                out += part["text"].get<std::string>();
        return out;
    }
    throw Error("MalformedResponse", "unsupported content shape in response");
}

inline std::string extract_gemini_text(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedResponse", std::string("response is not JSON: ") + e.what());
    }
    if (!j.contains("candidates") || !j["candidates"].is_array() || j["candidates"].empty())
        throw Error("MalformedResponse", "response has no candidates");
    const auto& parts = j["candidates"][0]["content"]["parts"];
    if (!parts.is_array()) throw Error("MalformedResponse", "candidate has no content parts");
    std::string out;
    for (const auto& part : parts)
        if (part.contains("text") && part["text"].is_string())
            out += part["text"].get<std::string>();
    return out;
}

// Serial request pipeline for one provider: cache lookup, admission gate,
// bounded retries with exponential backoff, response extraction, cache fill.
class ProviderEngine {
public:
    static constexpr int kMaxAttempts = 5;
    static constexpr std::int64_t kBackoffBaseMs = 1000;

    ProviderEngine(ProviderConfig cfg, std::shared_ptr<Transport> transport,
                   std::shared_ptr<ResponseCache> cache, std::shared_ptr<Clock> clock,
                   std::uint64_t run_seed)
        : cfg_(std::move(cfg)), transport_(std::move(transport)), cache_(std::move(cache)),
          clock_(std::move(clock)), run_seed_(run_seed),
          gate_(cfg_.max_concurrent, cfg_.requests_per_minute, clock_) {
        if (!transport_) throw Error("ConfigInvalid", "provider engine needs a transport");
        if (!clock_) throw Error("ConfigInvalid", "provider engine needs a clock");
    }

    const ProviderConfig& config() const { return cfg_; }
    Transport& transport() { return *transport_; }

    InferenceRequest make_request(const RenderedPrompt& prompt,
                                  const std::vector<std::string>& attachment_byte_hashes,
                                  std::optional<MockOracle> oracle = std::nullopt) const {
        InferenceRequest req;
        req.prompt = prompt;
        req.provider_name = cfg_.name;
        req.idempotency_key = make_idempotency_key(cfg_, prompt, attachment_byte_hashes);
        req.oracle = std::move(oracle);
        return req;
    }

    InferenceResponse infer(const InferenceRequest& req) {
        if (!req.prompt.attachments.empty() && !cfg_.supports_audio)
            throw UnsupportedModalityError("provider '" + cfg_.name + "' does not accept audio");
        if (cfg_.kind != ProviderKind::mock && !cfg_.api_key_env.empty()) {
            const char* key = std::getenv(cfg_.api_key_env.c_str());
            if (!key || !*key)
                throw AuthError("environment variable " + cfg_.api_key_env + " is not set");
        }
        if (cache_) {
            if (auto hit = cache_->lookup(req.idempotency_key)) {
                InferenceResponse resp;
                resp.raw_text = hit->body;
                resp.latency_ms = hit->latency_ms;
                resp.retries_used = hit->retries;
                resp.from_cache = true;
                resp.provider_meta = "cache";
                return resp;
            }
        }

        AdmissionGate::Guard guard(gate_);
        std::mt19937_64 backoff_eng(backoff_seed(req.idempotency_key));
        std::int64_t t0 = clock_->now_ms();
        TransportResult last;
        int attempt = 1;
        for (;; ++attempt) {
            last = transport_->round_trip(cfg_, req);
            if (last.status >= 200 && last.status < 300) break;
            if (last.status == 401 || last.status == 403)
                throw AuthError("provider '" + cfg_.name + "' rejected credentials (status " +
                                std::to_string(last.status) + ")");
            bool retryable = last.status == 0 || last.status == 429 ||
                             (last.status >= 500 && last.status < 600);
            if (!retryable)
                throw TransportError("provider '" + cfg_.name + "' returned status " +
                                     std::to_string(last.status) + ": " + last.body);
            if (attempt == kMaxAttempts) throw_exhausted(last);
            std::int64_t delay = kBackoffBaseMs << (attempt - 1);
            double jitter = 0.5 + detail::unit_draw(backoff_eng) * 0.5;
            clock_->sleep_for_ms(static_cast<std::int64_t>(static_cast<double>(delay) * jitter));
        }

        InferenceResponse resp;
        resp.raw_text = extract_text(last.body);
        resp.latency_ms = last.synthetic_latency_ms >= 0 ? last.synthetic_latency_ms
                                                         : clock_->now_ms() - t0;
        resp.retries_used = attempt - 1;
        resp.from_cache = false;
        resp.provider_meta = "status " + std::to_string(last.status);
        if (cache_)
            cache_->store({req.idempotency_key, cfg_.name, cfg_.model_name, resp.raw_text,
                           resp.latency_ms, resp.retries_used});
        return resp;
    }

private:
    std::uint64_t backoff_seed(const std::string& key) const {
        Fnv1a64 h;
        h.update_u64(run_seed_);
        h.field(key);
        h.field("backoff");
        return h.digest();
    }

    [[noreturn]] void throw_exhausted(const TransportResult& last) const {
        std::string detail = "provider '" + cfg_.name + "' failed after " +
                             std::to_string(kMaxAttempts) + " attempts";
        if (last.status == 429) throw RateLimitedError(detail + " (rate limited)");
        if (last.status == 0) throw ConnectionError(detail + ": " + last.error);
        throw TransportError(detail + " (last status " + std::to_string(last.status) + ")");
    }

    std::string extract_text(const std::string& body) const {
        switch (cfg_.kind) {
            case ProviderKind::mock: return body;
            case ProviderKind::openai_compatible: return extract_openai_text(body);
            case ProviderKind::gemini_compatible: return extract_gemini_text(body);
        }
        return body;
    }

    ProviderConfig cfg_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<ResponseCache> cache_;
    std::shared_ptr<Clock> clock_;
    std::uint64_t run_seed_;
    AdmissionGate gate_;
};

// providers.json: {"providers": [{...}, ...]}
inline ProviderConfig provider_config_from_json(const nlohmann::json& j) {
    ProviderConfig cfg;
    if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty())
        throw Error("ConfigInvalid", "provider entry needs a non-empty 'name'");
    cfg.name = j["name"].get<std::string>();
    cfg.kind = provider_kind_from_string(j.value("kind", std::string("mock")));
    cfg.base_url = j.value("base_url", std::string());
    cfg.model_name = j.value("model", std::string());
    cfg.api_key_env = j.value("api_key_env", std::string());
    cfg.supports_audio = j.value("supports_audio", true);
    cfg.max_concurrent = j.value("max_concurrent", 4);
    cfg.requests_per_minute = j.value("requests_per_minute", 60);
    cfg.temperature = j.value("temperature", 0.0);
    cfg.request_timeout_s = j.value("timeout_s", 30.0);
    if (cfg.kind != ProviderKind::mock && cfg.base_url.empty())
        throw Error("ConfigInvalid", "provider '" + cfg.name + "' needs a base_url");
    if (cfg.model_name.empty())
        throw Error("ConfigInvalid", "provider '" + cfg.name + "' needs a model");
    if (cfg.kind == ProviderKind::mock) {
        if (!j.contains("mock"))
            throw Error("ConfigInvalid", "provider '" + cfg.name + "' is mock but has no 'mock' block");
        const auto& m = j["mock"];
        MockBehavior b;
        b.seed = m.value("seed", 0ULL);
        b.invalid_rate = m.value("invalid_rate", 0.0);
        b.verbosity = m.value("verbosity", 0.0);
        if (!m.contains("accuracy") || !m["accuracy"].is_object())
            throw Error("ConfigInvalid",
                        "provider '" + cfg.name + "' mock block needs an 'accuracy' object");
        for (const auto& [mod_name, value] : m["accuracy"].items())
            b.accuracy_by_modality[modality_from_string(mod_name)] = value.get<double>();
        if (b.invalid_rate < 0.0 || b.invalid_rate > 1.0)
            throw Error("ConfigInvalid", "mock invalid_rate must be in [0, 1]");
        cfg.mock_behavior = std::move(b);
    }
    return cfg;
}

inline std::vector<ProviderConfig> provider_configs_from_json(const nlohmann::json& root) {
    if (!root.contains("providers") || !root["providers"].is_array())
        throw Error("ConfigInvalid", "providers file needs a top-level 'providers' array");
    std::vector<ProviderConfig> out;
    for (const auto& j : root["providers"]) out.push_back(provider_config_from_json(j));
    return out;
}

inline std::vector<ProviderConfig> load_provider_configs(const std::string& path) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("ConfigInvalid", path + " is not valid JSON: " + e.what());
    }
    return provider_configs_from_json(root);
}

} // namespace modaleval
