#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace coat::llm {

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_tokens = 1024;
    /// Free-form label, used for logging and scripted matching.
    std::string tag;

    void validate() const;
};

struct ChatResponse {
    std::string content;
    std::string provider;
    std::int64_t latency_ms = 0;
    bool cached = false;
};

inline constexpr double kProposalTemperature = 0.7;
inline constexpr double kAnnotationTemperature = 0.0;

struct HttpReply {
    int status = 0;
    std::string body;
    /// Set when no HTTP exchange happened (connection refused, timeout...).
    std::string transport_error;
};

/// Seam for network traffic so tests can substitute stubs or failing fakes.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpReply post(const std::string& url, const std::map<std::string, std::string>& headers,
                           const std::string& body) = 0;
};

/// cpp-httplib based transport; https needs OpenSSL.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}
    HttpReply post(const std::string& url, const std::map<std::string, std::string>& headers,
                   const std::string& body) override;

private:
    std::chrono::seconds timeout_;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string name() const = 0;
    /// Identity folded into cache keys (provider kind plus model).
    virtual std::string identity() const { return name(); }
    virtual ChatResponse complete(const ChatRequest& req) = 0;
};

struct HttpProviderConfig {
    std::string base_url;
    std::string api_key;
    std::string model;
    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{16000};

    /// Reads COAT_LLM_BASE_URL, COAT_LLM_API_KEY and COAT_LLM_MODEL; missing values stay empty.
    static HttpProviderConfig from_env();
    /// Throws ConfigError when the endpoint, key or model is missing.
    void validate() const;
};

/// Delay before retry k (k = 1 after the first failure). Non-decreasing in k.
std::chrono::milliseconds backoff_delay(const HttpProviderConfig& cfg, int retry);

/// OpenAI-compatible chat-completions client.
class HttpProvider : public Provider {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    HttpProvider(HttpProviderConfig cfg, std::shared_ptr<Transport> transport = nullptr, Sleeper sleeper = nullptr);
    std::string name() const override { return "http"; }
    std::string identity() const override { return "http:" + cfg_.model; }
    ChatResponse complete(const ChatRequest& req) override;

    static nlohmann::json request_body(const std::string& model, const ChatRequest& req);
    /// Content of the first choice; throws a non-retryable ProviderError on malformed replies.
    static std::string parse_reply(const std::string& body);

private:
    HttpProviderConfig cfg_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
};

struct ScenarioEntry {
    std::optional<std::string> tag;
    std::optional<std::string> user_contains;
    std::string response;
};

/// Canned replies; first matching entry wins. Never touches the network.
class ScriptedProvider : public Provider {
public:
    explicit ScriptedProvider(std::vector<ScenarioEntry> entries) : entries_(std::move(entries)) {}
    ScriptedProvider(ScriptedProvider&& o) noexcept : entries_(std::move(o.entries_)), calls_(o.calls_) {}
    static ScriptedProvider from_json(const nlohmann::json& j);
    static ScriptedProvider from_file(const std::filesystem::path& path);

    std::string name() const override { return "scripted"; }
    ChatResponse complete(const ChatRequest& req) override;
    std::size_t calls() const noexcept { return calls_; }

private:
    std::vector<ScenarioEntry> entries_;
    std::size_t calls_ = 0;
    std::mutex mu_;
};

/// SHA-256 hex digest.
std::string sha256_hex(std::string_view data);
/// Cache key: digest of the canonical JSON of (provider identity, request).
std::string request_key(const std::string& provider_identity, const ChatRequest& req);

/// Content-addressed response cache, in memory and optionally mirrored to one file per key.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& key);
    void put(const std::string& key, const std::string& content);
    std::size_t size();

private:
    std::optional<std::filesystem::path> dir_;
    std::map<std::string, std::string> memory_;
    std::mutex mu_;
};

/// Thread-safe handle combining a provider, the cache and an in-flight limit.
class Client {
public:
    Client(std::shared_ptr<Provider> provider, std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>(),
           int max_in_flight = 4);

    ChatResponse complete(const ChatRequest& req);
    /// Requests that reached the provider (cache misses).
    std::size_t provider_calls() const noexcept { return provider_calls_; }
    const Provider& provider() const { return *provider_; }

private:
    std::shared_ptr<Provider> provider_;
    std::shared_ptr<ResponseCache> cache_;
    std::counting_semaphore<> slots_;
    std::atomic<std::size_t> provider_calls_{0};
};

}  // namespace coat::llm
