#pragma once

#include <cmath>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "modaleval/providers.hpp"

namespace modaleval {

// Splits "https://host:port/some/prefix" into the origin httplib wants and
// the path prefix to prepend to endpoint routes.
inline std::pair<std::string, std::string> split_url(const std::string& base_url) {
    std::size_t scheme = base_url.find("://");
    if (scheme == std::string::npos)
        throw Error("ConfigInvalid", "base_url '" + base_url + "' has no scheme");
    std::size_t path = base_url.find('/', scheme + 3);
    if (path == std::string::npos) return {base_url, ""};
    std::string origin = base_url.substr(0, path);
    std::string prefix = base_url.substr(path);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {origin, prefix};
}

class HttpTransport : public Transport {
public:
    TransportResult round_trip(const ProviderConfig& cfg, const InferenceRequest& req) override {
        count_call();
        auto [origin, prefix] = split_url(cfg.base_url);
        httplib::Client client(origin);
        auto seconds = static_cast<time_t>(cfg.request_timeout_s);
        auto micros = static_cast<time_t>(std::fmod(cfg.request_timeout_s, 1.0) * 1e6);
        client.set_connection_timeout(seconds, micros);
        client.set_read_timeout(seconds, micros);
        client.set_write_timeout(seconds, micros);

        const char* key = cfg.api_key_env.empty() ? nullptr : std::getenv(cfg.api_key_env.c_str());
        std::string path;
        httplib::Headers headers;
        nlohmann::json payload;
        if (cfg.kind == ProviderKind::openai_compatible) {
            path = prefix + "/chat/completions";
            if (key) headers.emplace("Authorization", std::string("Bearer ") + key);
            payload = {{"model", cfg.model_name},
                       {"temperature", cfg.temperature},
                       {"messages", nlohmann::json::array()}};
            nlohmann::json message{{"role", "user"}};
            if (req.prompt.attachments.empty()) {
                message["content"] = req.prompt.text;
            } else {
                nlohmann::json parts = nlohmann::json::array();
                parts.push_back({{"type", "text"}, {"text", req.prompt.text}});
                for (const auto& a : req.prompt.attachments)
                    parts.push_back({{"type", "input_audio"},
                                     {"input_audio",
                                      {{"data", base64_encode(read_file(a))}, {"format", "wav"}}}});
                message["content"] = std::move(parts);
            }
            payload["messages"].push_back(std::move(message));
        } else if (cfg.kind == ProviderKind::gemini_compatible) {
            path = prefix + "/models/" + cfg.model_name + ":generateContent";
            if (key) path += std::string("?key=") + key;
            nlohmann::json parts = nlohmann::json::array();
            parts.push_back({{"text", req.prompt.text}});
            for (const auto& a : req.prompt.attachments)
                parts.push_back({{"inline_data",
                                  {{"mime_type", "audio/wav"},
                                   {"data", base64_encode(read_file(a))}}}});
            payload = {{"contents", nlohmann::json::array({{{"parts", std::move(parts)}}})},
                       {"generationConfig", {{"temperature", cfg.temperature}}}};
        } else {
            throw Error("ConfigInvalid",
                        "HTTP transport cannot serve provider kind " + to_string(cfg.kind));
        }

        auto res = client.Post(path, headers, payload.dump(), "application/json");
        if (!res) return {0, "", httplib::to_string(res.error()), -1};
        return {res->status, res->body, "", -1};
    }
};

} // namespace modaleval
