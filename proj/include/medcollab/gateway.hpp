#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <memory>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "medcollab/errors.hpp"

namespace medcollab {

enum class FinishReason { stop, length, error };

inline std::string to_string(FinishReason fr) {
    switch (fr) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

inline FinishReason finish_reason_from_string(const std::string& s) {
    if (s == "stop") return FinishReason::stop;
    if (s == "length") return FinishReason::length;
    return FinishReason::error;
}

// One single-turn chat call. Immutable value, safe to copy across threads.
struct ChatRequest {
    std::string system_text;
    std::string user_text;
    std::string model_id = "gpt-4";
    double temperature = 1.0;
    double top_p = 1.0;
    int max_tokens = 1024;
    std::string request_tag;  // stage label for transcripts; excluded from cache keys

    void validate() const {
        if (system_text.empty()) throw Error("ChatRequest: empty system_text");
        if (user_text.empty()) throw Error("ChatRequest: empty user_text");
        if (temperature < 0.0 || temperature > 2.0) throw Error("ChatRequest: temperature out of [0,2]");
        if (top_p <= 0.0 || top_p > 1.0) throw Error("ChatRequest: top_p out of (0,1]");
        if (max_tokens <= 0) throw Error("ChatRequest: max_tokens must be positive");
    }
};

struct ChatResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    std::int64_t latency_ms = 0;
    int attempt_count = 1;
};

enum class BackendKind { http, mock };

struct BackendConfig {
    BackendKind kind = BackendKind::mock;
    std::string endpoint_url;        // http only, e.g. "http://localhost:8080/v1"
    std::string auth_token_env_var;  // empty = no auth header
    int max_retries = 2;
    int backoff_base_ms = 250;
    double rate_limit_rps = 4.0;
    std::optional<std::filesystem::path> cache_dir;
    int timeout_sec = 120;

    void validate() const {
        if (kind == BackendKind::http && endpoint_url.empty())
            throw Error("BackendConfig: http backend requires endpoint_url");
        if (max_retries < 0) throw Error("BackendConfig: max_retries must be nonnegative");
        if (backoff_base_ms <= 0) throw Error("BackendConfig: backoff_base_ms must be positive");
        if (rate_limit_rps <= 0.0) throw Error("BackendConfig: rate_limit_rps must be positive");
    }
};

// One scripted reply. Matches when the tag equals the request tag (empty = any tag)
// and `match` is a substring of the request's user or system text (empty = always).
// uses == 0 means unlimited; otherwise the rule is consumed after that many hits.
struct MockRule {
    std::string tag;
    std::string match;
    std::string response;
    int uses = 0;
};

struct MockScript {
    std::vector<MockRule> rules;
    std::string default_response;

    static MockScript from_json(const nlohmann::json& j) {
        MockScript script;
        const nlohmann::json* rules = &j;
        if (j.is_object()) {
            script.default_response = j.value("default_response", "");
            rules = &j.at("rules");
        }
        for (const auto& r : *rules) {
            MockRule rule;
            rule.tag = r.value("tag", "");
            rule.match = r.value("match", "");
            rule.response = r.at("response").get<std::string>();
            rule.uses = r.value("uses", 0);
            script.rules.push_back(std::move(rule));
        }
        return script;
    }

    static MockScript from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error("mock script not found: " + path.string());
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

// Stable content hash over the sampling-relevant request fields.
// request_tag is deliberately excluded: the same content at a different stage hits the same entry.
inline std::string cache_key(const ChatRequest& req) {
    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    const std::string canon = req.model_id + '\x1f' + req.system_text + '\x1f' + req.user_text + '\x1f' +
                              fmt(req.temperature) + '\x1f' + fmt(req.top_p) + '\x1f' +
                              std::to_string(req.max_tokens);
    // FNV-1a, two lanes for a 128-bit key.
    auto fnv = [&](std::uint64_t h) {
        for (unsigned char c : canon) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    };
    std::uint64_t a = fnv(0xcbf29ce484222325ULL);
    std::uint64_t b = fnv(0x84222325cbf29ce4ULL);
    char buf[33];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(a),
                  static_cast<unsigned long long>(b));
    return buf;
}

namespace detail {

struct ParsedEndpoint {
    std::string scheme_host_port;  // "http://host:port"
    std::string base_path;         // "" or "/v1"
};

inline ParsedEndpoint parse_endpoint(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("endpoint_url must include scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    ParsedEndpoint out;
    if (path_start == std::string::npos) {
        out.scheme_host_port = url;
    } else {
        out.scheme_host_port = url.substr(0, path_start);
        out.base_path = url.substr(path_start);
        while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
    }
    return out;
}

}  // namespace detail

// Abstract transport so tests and the gateway core stay decoupled from cpp-httplib.
class HttpTransport {
  public:
    struct Result {
        bool connected = false;
        int status = 0;
        std::string body;
    };
    virtual ~HttpTransport() = default;
    virtual Result post_json(const std::string& path, const std::string& body,
                             const std::string& bearer_token) = 0;
};

// Uniform chat-completion gateway: mock script or OpenAI-compatible HTTP,
// with retry, rate limiting, and a file cache. Safe for concurrent use.
class Gateway {
  public:
    explicit Gateway(BackendConfig config, MockScript script = {})
        : config_(std::move(config)), script_(std::move(script)) {
        config_.validate();
        rule_hits_.assign(script_.rules.size(), 0);
        if (config_.cache_dir) std::filesystem::create_directories(*config_.cache_dir);
    }

    // Injectable transport for HTTP; unset means "build one lazily from endpoint_url".
    void set_transport(std::shared_ptr<HttpTransport> transport) { transport_ = std::move(transport); }

    const BackendConfig& config() const { return config_; }

    std::size_t http_calls_issued() const {
        std::lock_guard lk(mutex_);
        return http_calls_issued_;
    }

    ChatResponse complete(const ChatRequest& request) {
        request.validate();
        if (config_.kind == BackendKind::mock) return complete_mock(request);
        return complete_http(request);
    }

  private:
    ChatResponse complete_mock(const ChatRequest& request) {
        std::lock_guard lk(mutex_);
        for (std::size_t i = 0; i < script_.rules.size(); ++i) {
            const MockRule& rule = script_.rules[i];
            if (!rule.tag.empty() && rule.tag != request.request_tag) continue;
            if (!rule.match.empty() && request.user_text.find(rule.match) == std::string::npos &&
                request.system_text.find(rule.match) == std::string::npos)
                continue;
            if (rule.uses > 0 && rule_hits_[i] >= rule.uses) continue;
            ++rule_hits_[i];
            return ChatResponse{rule.response, FinishReason::stop, 0, 1};
        }
        return ChatResponse{script_.default_response, FinishReason::stop, 0, 1};
    }

    ChatResponse complete_http(const ChatRequest& request) {
        const std::string key = cache_key(request);
        if (auto cached = cache_load(key)) return *cached;

        std::string token;
        if (!config_.auth_token_env_var.empty()) {
            const char* value = std::getenv(config_.auth_token_env_var.c_str());
            if (!value || !*value)
                throw AuthMissing("auth token env var not set: " + config_.auth_token_env_var);
            token = value;
        }

        const nlohmann::json body = {
            {"model", request.model_id},
            {"messages",
             {{{"role", "system"}, {"content", request.system_text}},
              {{"role", "user"}, {"content", request.user_text}}}},
            {"temperature", request.temperature},
            {"top_p", request.top_p},
            {"max_tokens", request.max_tokens},
        };
        const std::string body_str = body.dump();

        const auto start = std::chrono::steady_clock::now();
        std::string last_failure = "no attempt made";
        for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
            rate_limit_acquire();
            auto result = transport()->post_json(completions_path(), body_str, token);
            {
                std::lock_guard lk(mutex_);
                ++http_calls_issued_;
            }
            if (!result.connected) {
                last_failure = "connection failed";
            } else if (result.status == 200) {
                auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
                ChatResponse resp = parse_completion(result.body, latency, attempt);
                if (resp.finish_reason == FinishReason::length)
                    throw ResponseTruncated("response hit max_tokens (" +
                                            std::to_string(request.max_tokens) + ")");
                cache_store(key, request, resp);
                return resp;
            } else if (result.status == 429 || result.status >= 500) {
                last_failure = "HTTP " + std::to_string(result.status);
            } else {
                throw RequestRejected("HTTP " + std::to_string(result.status) + ": " + result.body);
            }
            if (attempt <= config_.max_retries)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.backoff_base_ms * (1LL << (attempt - 1))));
        }
        throw BackendUnreachable("backend unreachable after " +
                                 std::to_string(config_.max_retries + 1) + " attempts (" + last_failure +
                                 ")");
    }

    static ChatResponse parse_completion(const std::string& body, std::int64_t latency, int attempt) {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
            throw BackendUnreachable("malformed completion body");
        const auto& choice = j["choices"][0];
        ChatResponse resp;
        resp.text = choice.at("message").at("content").get<std::string>();
        resp.finish_reason = finish_reason_from_string(choice.value("finish_reason", "stop"));
        resp.latency_ms = latency;
        resp.attempt_count = attempt;
        return resp;
    }

    std::string completions_path() const {
        return detail::parse_endpoint(config_.endpoint_url).base_path + "/chat/completions";
    }

    std::shared_ptr<HttpTransport> transport();

    // Sliding-window limiter: at most ceil(rps) sends in any 1-second window.
    void rate_limit_acquire() {
        const auto limit = static_cast<std::size_t>(std::ceil(config_.rate_limit_rps));
        for (;;) {
            std::chrono::steady_clock::duration wait{};
            {
                std::lock_guard lk(mutex_);
                const auto now = std::chrono::steady_clock::now();
                while (!send_times_.empty() && now - send_times_.front() >= std::chrono::seconds(1))
                    send_times_.pop_front();
                if (send_times_.size() < limit) {
                    send_times_.push_back(now);
                    return;
                }
                wait = send_times_.front() + std::chrono::seconds(1) - now;
            }
            std::this_thread::sleep_for(wait);
        }
    }

    std::optional<ChatResponse> cache_load(const std::string& key) const {
        if (!config_.cache_dir) return std::nullopt;
        std::lock_guard lk(mutex_);
        std::ifstream in(*config_.cache_dir / key);
        if (!in) return std::nullopt;
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        const auto& r = j.at("response");
        ChatResponse resp;
        resp.text = r.at("text").get<std::string>();
        resp.finish_reason = finish_reason_from_string(r.value("finish_reason", "stop"));
        resp.latency_ms = r.value("latency_ms", 0);
        resp.attempt_count = r.value("attempt_count", 1);
        return resp;
    }

    void cache_store(const std::string& key, const ChatRequest& req, const ChatResponse& resp) const {
        if (!config_.cache_dir) return;
        const nlohmann::json j = {
            {"request",
             {{"model_id", req.model_id},
              {"system_text", req.system_text},
              {"user_text", req.user_text},
              {"temperature", req.temperature},
              {"top_p", req.top_p},
              {"max_tokens", req.max_tokens}}},
            {"response",
             {{"text", resp.text},
              {"finish_reason", to_string(resp.finish_reason)},
              {"latency_ms", resp.latency_ms},
              {"attempt_count", resp.attempt_count}}},
            {"timestamp", std::chrono::duration_cast<std::chrono::seconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count()},
        };
        std::lock_guard lk(mutex_);
        const auto tmp = *config_.cache_dir / (key + ".tmp");
        {
            std::ofstream out(tmp);
            out << j.dump(2) << "\n";
        }
        std::filesystem::rename(tmp, *config_.cache_dir / key);
    }

    BackendConfig config_;
    MockScript script_;
    std::vector<int> rule_hits_;
    std::shared_ptr<HttpTransport> transport_;
    mutable std::mutex mutex_;
    std::deque<std::chrono::steady_clock::time_point> send_times_;
    std::size_t http_calls_issued_ = 0;
};

}  // namespace medcollab

// Supplies the out-of-class Gateway::transport() definition every TU needs at link time.
#include "medcollab/http_transport.hpp"
