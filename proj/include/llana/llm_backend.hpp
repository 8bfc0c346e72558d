#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "llana/errors.hpp"
#include "llana/rng.hpp"
#include "llana/sha256.hpp"

namespace llana {

enum class Role { System, User, Assistant };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        default: return "assistant";
    }
}

struct ChatMessage {
    Role role = Role::User;
    std::string content;
};

struct ChatRequest {
    std::string model_name = "gpt-3.5-turbo";
    std::vector<ChatMessage> messages;
    double temperature = 1.0;
    std::size_t n_samples = 1;
    std::size_t max_tokens = 512;

    void check() const {
        if (messages.empty()) throw ValidationError("chat request has no messages");
        if (messages.back().role != Role::User)
            throw ValidationError("last chat message must have role user");
        if (temperature < 0.0) throw ValidationError("temperature must be >= 0");
        if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
    }
};

struct ChatUsage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

struct ChatResponse {
    std::vector<std::string> completions;
    ChatUsage usage;
    bool cached = false;
};

enum class BackendKind { Http, Mock };

// Mock response function: (messages, sample_index, mock_seed) -> completion text.
using MockResponder =
    std::function<std::string(const std::vector<ChatMessage>&, std::size_t, std::uint64_t)>;

struct Backend {
    BackendKind kind = BackendKind::Mock;
    std::string base_url;
    std::string api_key_env = "LLANA_API_KEY";
    std::string cache_dir = ".llana_cache";
    bool cache_enabled = true;
    double rate_limit_per_minute = 600.0;
    int max_retries = 5;
    std::uint64_t mock_seed = 0;
    MockResponder mock_responder;
    std::uint64_t retry_jitter_seed = 0;
    bool retry_sleep_enabled = true;  // tests disable real sleeping

    // observability counters
    mutable std::size_t network_calls = 0;
};

inline std::string canonical_request_json(const ChatRequest& request) {
    nlohmann::json doc;
    doc["model"] = request.model_name;
    doc["messages"] = nlohmann::json::array();
    for (const auto& m : request.messages)
        doc["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
    doc["temperature"] = request.temperature;
    doc["n"] = request.n_samples;
    doc["max_tokens"] = request.max_tokens;
    return doc.dump();
}

inline std::string cache_key(const ChatRequest& request) {
    return sha256_hex(canonical_request_json(request));
}

namespace detail {

inline std::filesystem::path cache_path(const Backend& backend, const std::string& key) {
    return std::filesystem::path(backend.cache_dir) / (key + ".json");
}

inline bool cache_load(const Backend& backend, const std::string& key, ChatResponse& out) {
    std::ifstream in(cache_path(backend, key));
    if (!in) return false;
    nlohmann::json doc;
    try {
        in >> doc;
        out.completions = doc.at("completions").get<std::vector<std::string>>();
        out.usage.prompt_tokens = doc.value("prompt_tokens", std::size_t{0});
        out.usage.completion_tokens = doc.value("completion_tokens", std::size_t{0});
    } catch (const nlohmann::json::exception&) {
        return false;  // treat a torn entry as a miss
    }
    out.cached = true;
    return true;
}

// Atomic write: temp file + rename, so readers never see a partial entry.
inline void cache_store(const Backend& backend, const std::string& key,
                        const ChatRequest& request, const ChatResponse& response) {
    std::error_code ec;
    std::filesystem::create_directories(backend.cache_dir, ec);
    nlohmann::json doc;
    doc["request"] = nlohmann::json::parse(canonical_request_json(request));
    doc["completions"] = response.completions;
    doc["prompt_tokens"] = response.usage.prompt_tokens;
    doc["completion_tokens"] = response.usage.completion_tokens;
    doc["timestamp"] = static_cast<std::int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    auto final_path = cache_path(backend, key);
    auto tmp_path = final_path;
    tmp_path += ".tmp";
    {
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        if (!out) throw FileError("cannot write cache entry: " + tmp_path.string());
        out << doc.dump(2);
    }
    std::filesystem::rename(tmp_path, final_path);
}

ChatResponse http_complete(const Backend& backend, const ChatRequest& request);

inline ChatResponse mock_complete(const Backend& backend, const ChatRequest& request) {
    ChatResponse response;
    for (std::size_t i = 0; i < request.n_samples; ++i) {
        std::string text;
        if (backend.mock_responder) {
            text = backend.mock_responder(request.messages, i, backend.mock_seed);
        } else {
            // Placeholder used when no responder is registered; deterministic.
            std::uint64_t s =
                derive_seed(backend.mock_seed, canonical_request_json(request), i);
            text = "## " + std::to_string(static_cast<double>(s % 1000) / 1000.0) + " ##";
        }
        response.completions.push_back(std::move(text));
    }
    response.usage.prompt_tokens = 0;
    response.usage.completion_tokens = 0;
    return response;
}

}  // namespace detail

inline ChatResponse complete(const Backend& backend, const ChatRequest& request) {
    request.check();
    const std::string key = cache_key(request);
    if (backend.cache_enabled) {
        ChatResponse cached;
        if (detail::cache_load(backend, key, cached) &&
            cached.completions.size() == request.n_samples)
            return cached;
    }
    ChatResponse response = backend.kind == BackendKind::Mock
                                ? detail::mock_complete(backend, request)
                                : detail::http_complete(backend, request);
    if (backend.cache_enabled) detail::cache_store(backend, key, request, response);
    return response;
}

namespace detail {

inline double backoff_seconds(int attempt, Rng& jitter) {
    double base = std::pow(2.0, attempt);  // 1s, 2s, 4s, ...
    return base * (1.0 + 0.2 * (2.0 * jitter.uniform01() - 1.0));
}

}  // namespace detail

}  // namespace llana

// The HTTP transport pulls in cpp-httplib; kept at the bottom so the mock-only
// path stays light to compile.
#include <httplib.h>

// glibc's <resolv.h> (dragged in by cpp-httplib) leaks a `_res` object-like
// macro that mangles any later declaration using that identifier, notably
// inside Eigen. Scrub it so include order never matters for downstream code.
#ifdef _res
#undef _res
#endif

namespace llana::detail {

inline ChatResponse http_complete(const Backend& backend, const ChatRequest& request) {
    if (backend.base_url.empty())
        throw ConfigurationError("http backend requires a base_url");
    const char* api_key = std::getenv(backend.api_key_env.c_str());
    if (!api_key || !*api_key)
        throw ConfigurationError("missing API key env var: " + backend.api_key_env);

    nlohmann::json body = nlohmann::json::parse(canonical_request_json(request));
    httplib::Client client(backend.base_url);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers headers = {{"Authorization", std::string("Bearer ") + api_key}};

    Rng jitter(derive_seed(backend.retry_jitter_seed, "retry-jitter"));
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= backend.max_retries; ++attempt) {
        if (attempt > 0 && backend.retry_sleep_enabled) {
            auto secs = backoff_seconds(attempt - 1, jitter);
            std::this_thread::sleep_for(std::chrono::duration<double>(secs));
        }
        backend.network_calls++;
        auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "service returned status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw ProtocolError("unexpected status " + std::to_string(res->status) + ": " +
                                res->body);
        try {
            nlohmann::json doc = nlohmann::json::parse(res->body);
            ChatResponse response;
            for (const auto& choice : doc.at("choices"))
                response.completions.push_back(
                    choice.at("message").at("content").get<std::string>());
            if (doc.contains("usage")) {
                response.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
                response.usage.completion_tokens = doc["usage"].value("completion_tokens", 0);
            }
            if (response.completions.empty())
                throw ProtocolError("service returned no choices");
            // Pad short responses by re-requesting the remainder.
            while (response.completions.size() < request.n_samples) {
                ChatRequest remainder = request;
                remainder.n_samples = request.n_samples - response.completions.size();
                ChatResponse extra = http_complete(backend, remainder);
                for (auto& c : extra.completions) response.completions.push_back(std::move(c));
            }
            response.completions.resize(request.n_samples);
            return response;
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("malformed service JSON: ") + e.what());
        }
    }
    throw TransportError("retries exhausted: " + last_error);
}

}  // namespace llana::detail
