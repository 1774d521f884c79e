#include "coat/llm.hpp"

#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <thread>

// Eigen must come before httplib: resolv.h defines a _res macro that clashes with Eigen parameter names
#include "coat/core.hpp"
#include "coat/errors.hpp"

#include <httplib.h>
#include <openssl/evp.h>

namespace coat::llm {

void ChatRequest::validate() const {
    if (user.empty()) throw InvariantError("chat request has an empty user message");
    if (temperature < 0) throw InvariantError("chat request temperature must be >= 0");
}

HttpReply HttpTransport::post(const std::string& url, const std::map<std::string, std::string>& headers,
                              const std::string& body) {
    // split "scheme://host[:port]/path"
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = cli.Post(path, h, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
}

HttpProviderConfig HttpProviderConfig::from_env() {
    auto env = [](const char* k) {
        const char* v = std::getenv(k);
        return v ? std::string(v) : std::string();
    };
    HttpProviderConfig c;
    c.base_url = env("COAT_LLM_BASE_URL");
    c.api_key = env("COAT_LLM_API_KEY");
    c.model = env("COAT_LLM_MODEL");
    return c;
}

void HttpProviderConfig::validate() const {
    if (base_url.empty()) throw ConfigError("LLM base URL is not set (COAT_LLM_BASE_URL)");
    if (api_key.empty()) throw ConfigError("LLM API key is not set (COAT_LLM_API_KEY)");
    if (model.empty()) throw ConfigError("LLM model is not set (COAT_LLM_MODEL)");
    if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

std::chrono::milliseconds backoff_delay(const HttpProviderConfig& cfg, int retry) {
    auto d = cfg.initial_backoff;
    for (int k = 1; k < retry && d < cfg.max_backoff; ++k) d *= 2;
    return std::min(d, cfg.max_backoff);
}

HttpProvider::HttpProvider(HttpProviderConfig cfg, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : cfg_(std::move(cfg)),
      transport_(transport ? std::move(transport) : std::make_shared<HttpTransport>()),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {
    cfg_.validate();
}

nlohmann::json HttpProvider::request_body(const std::string& model, const ChatRequest& req) {
    nlohmann::json messages = nlohmann::json::array();
    if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
    messages.push_back({{"role", "user"}, {"content", req.user}});
    return {{"model", model}, {"messages", messages}, {"temperature", req.temperature}, {"max_tokens", req.max_tokens}};
}

std::string HttpProvider::parse_reply(const std::string& body) {
    try {
        const auto j = nlohmann::json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string() || content.get<std::string>().empty())
            throw ProviderError("provider reply has no message content", false);
        return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed provider reply: ") + e.what(), false);
    }
}

ChatResponse HttpProvider::complete(const ChatRequest& req) {
    req.validate();
    std::string base = cfg_.base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    const std::string url = base + "/chat/completions";
    const std::string body = request_body(cfg_.model, req).dump();
    const std::map<std::string, std::string> headers{{"Authorization", "Bearer " + cfg_.api_key}};

    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
        if (attempt > 1) sleeper_(backoff_delay(cfg_, attempt - 1));
        const auto start = std::chrono::steady_clock::now();
        const HttpReply r = transport_->post(url, headers, body);
        const auto latency =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
        if (!r.transport_error.empty()) {
            last_error = "transport error: " + r.transport_error;
            continue;
        }
        if (r.status == 401 || r.status == 403)
            throw ProviderError("authentication failed (HTTP " + std::to_string(r.status) + ")", false);
        if (r.status == 429 || r.status >= 500) {
            last_error = "HTTP " + std::to_string(r.status);
            continue;
        }
        if (r.status < 200 || r.status >= 300)
            throw ProviderError("provider returned HTTP " + std::to_string(r.status) + ": " + r.body.substr(0, 200), false);
        return {parse_reply(r.body), name(), latency, false};
    }
    throw ProviderError("giving up after " + std::to_string(cfg_.max_attempts) + " attempts: " + last_error, true);
}

ScriptedProvider ScriptedProvider::from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("scenario must be a JSON array");
    std::vector<ScenarioEntry> entries;
    for (const auto& e : j) {
        ScenarioEntry s;
        const auto& m = e.at("match");
        if (m.contains("tag")) s.tag = m.at("tag").get<std::string>();
        if (m.contains("user_contains")) s.user_contains = m.at("user_contains").get<std::string>();
        if (!s.tag && !s.user_contains) throw ParseError("scenario entry needs match.tag or match.user_contains");
        s.response = e.at("response").get<std::string>();
        entries.push_back(std::move(s));
    }
    return ScriptedProvider(std::move(entries));
}

ScriptedProvider ScriptedProvider::from_file(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("scenario file " + path.string() + ": " + e.what());
    }
}

ChatResponse ScriptedProvider::complete(const ChatRequest& req) {
    req.validate();
    {
        std::lock_guard lock(mu_);
        ++calls_;
    }
    for (const auto& e : entries_) {
        if (e.tag && *e.tag != req.tag) continue;
        if (e.user_contains && req.user.find(*e.user_contains) == std::string::npos) continue;
        return {e.response, name(), 0, false};
    }
    throw ProviderError("no scripted response matches request tagged \"" + req.tag + "\"", false);
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return out.str();
}

std::string request_key(const std::string& provider_identity, const ChatRequest& req) {
    const nlohmann::json canonical{{"provider", provider_identity}, {"system", req.system},   {"user", req.user},
                                   {"temperature", req.temperature}, {"max_tokens", req.max_tokens}, {"tag", req.tag}};
    return sha256_hex(canonical.dump());
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
    std::lock_guard lock(mu_);
    if (const auto it = memory_.find(key); it != memory_.end()) return it->second;
    if (dir_) {
        const auto p = *dir_ / (key + ".txt");
        if (std::filesystem::exists(p)) {
            auto content = read_file(p);
            memory_.emplace(key, content);
            return content;
        }
    }
    return std::nullopt;
}

void ResponseCache::put(const std::string& key, const std::string& content) {
    std::lock_guard lock(mu_);
    memory_[key] = content;
    if (dir_) write_file(*dir_ / (key + ".txt"), content);
}

std::size_t ResponseCache::size() {
    std::lock_guard lock(mu_);
    return memory_.size();
}

Client::Client(std::shared_ptr<Provider> provider, std::shared_ptr<ResponseCache> cache, int max_in_flight)
    : provider_(std::move(provider)), cache_(std::move(cache)), slots_(std::max(1, max_in_flight)) {
    if (!provider_) throw InvariantError("llm client needs a provider");
}

ChatResponse Client::complete(const ChatRequest& req) {
    req.validate();
    const auto key = request_key(provider_->identity(), req);
    if (cache_)
        if (auto hit = cache_->get(key)) return {*hit, provider_->name(), 0, true};
    slots_.acquire();
    ChatResponse r;
    try {
        ++provider_calls_;
        r = provider_->complete(req);
    } catch (...) {
        slots_.release();
        throw;
    }
    slots_.release();
    if (r.content.empty()) throw ProviderError("provider returned empty content", false);
    if (cache_) cache_->put(key, r.content);
    return r;
}

}  // namespace coat::llm
