#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <thread>
#include <unistd.h>
#include <vector>

#include "helpers.hpp"
#include "medcollab/gateway.hpp"
#include "medcollab/http_transport.hpp"

using namespace medcollab;

namespace {

// Local OpenAI-compatible test server. Offline: binds loopback only.
struct TestServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;
    std::atomic<int> hits{0};
    std::mutex mutex;
    std::vector<std::chrono::steady_clock::time_point> hit_times;
    std::atomic<int> fail_first{0};  // respond 429 to this many requests

    explicit TestServer(const std::string& reply = "pong") {
        server.Post("/v1/chat/completions", [this, reply](const httplib::Request&,
                                                          httplib::Response& res) {
            {
                std::lock_guard lk(mutex);
                hit_times.push_back(std::chrono::steady_clock::now());
            }
            const int n = ++hits;
            if (n <= fail_first.load()) {
                res.status = 429;
                res.set_content("{\"error\":\"rate limited\"}", "application/json");
                return;
            }
            nlohmann::json body = {
                {"choices",
                 {{{"message", {{"role", "assistant"}, {"content", reply}}},
                   {"finish_reason", "stop"}}}}};
            res.set_content(body.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~TestServer() {
        server.stop();
        thread.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

ChatRequest basic_request() {
    ChatRequest req;
    req.system_text = "system";
    req.user_text = "user";
    req.request_tag = "qd";
    return req;
}

BackendConfig http_config(const std::string& endpoint) {
    BackendConfig cfg;
    cfg.kind = BackendKind::http;
    cfg.endpoint_url = endpoint;
    cfg.max_retries = 2;
    cfg.backoff_base_ms = 10;
    cfg.rate_limit_rps = 1000;
    return cfg;
}

}  // namespace

TEST_CASE("mock script maps tags to responses") {
    MockScript script;
    script.rules = {{"qd", "", "Medical Field: A | B | C | D | E", 0}};
    script.default_response = "fallback";
    Gateway gw = test_helpers::mock_gateway(script);

    auto resp = gw.complete(basic_request());
    REQUIRE(resp.text == "Medical Field: A | B | C | D | E");
    REQUIRE(resp.attempt_count == 1);

    ChatRequest other = basic_request();
    other.request_tag = "oa";
    REQUIRE(gw.complete(other).text == "fallback");
}

TEST_CASE("mock script matches substrings against user and system text") {
    MockScript script;
    script.rules = {{"", "Cardiology", "from the cardiologist", 0}};
    Gateway gw = test_helpers::mock_gateway(script);

    ChatRequest req = basic_request();
    req.system_text = "You are an expert in Cardiology.";
    REQUIRE(gw.complete(req).text == "from the cardiologist");
}

TEST_CASE("mock replay is deterministic, including consumable rules") {
    MockScript script;
    script.rules = {{"rs", "", "malformed once", 1}, {"rs", "", "Key Knowledge: K; Total Analysis: T", 0}};
    auto run_sequence = [&] {
        Gateway gw = test_helpers::mock_gateway(script);
        std::vector<std::string> out;
        ChatRequest req = basic_request();
        req.request_tag = "rs";
        for (int i = 0; i < 3; ++i) out.push_back(gw.complete(req).text);
        return out;
    };
    auto first = run_sequence();
    REQUIRE(first == std::vector<std::string>{"malformed once", "Key Knowledge: K; Total Analysis: T",
                                              "Key Knowledge: K; Total Analysis: T"});
    REQUIRE(first == run_sequence());
}

TEST_CASE("cache_key covers content fields and ignores the tag") {
    ChatRequest a = basic_request();
    ChatRequest b = a;
    REQUIRE(cache_key(a) == cache_key(b));

    b.request_tag = "oa";
    REQUIRE(cache_key(a) == cache_key(b));

    b = a;
    b.temperature = 0.0;
    REQUIRE(cache_key(a) != cache_key(b));
    b = a;
    b.user_text += "!";
    REQUIRE(cache_key(a) != cache_key(b));
    b = a;
    b.model_id = "other-model";
    REQUIRE(cache_key(a) != cache_key(b));
    b = a;
    b.max_tokens += 1;
    REQUIRE(cache_key(a) != cache_key(b));
}

TEST_CASE("request validation") {
    ChatRequest req = basic_request();
    req.temperature = 3.0;
    Gateway gw = test_helpers::mock_gateway({});
    REQUIRE_THROWS_AS(gw.complete(req), Error);
    req = basic_request();
    req.user_text.clear();
    REQUIRE_THROWS_AS(gw.complete(req), Error);
}

TEST_CASE("http retry on 429 then success counts attempts") {
    TestServer server("recovered");
    server.fail_first = 2;
    Gateway gw{http_config(server.endpoint())};
    auto resp = gw.complete(basic_request());
    REQUIRE(resp.text == "recovered");
    REQUIRE(resp.attempt_count == 3);
    REQUIRE(server.hits == 3);
}

TEST_CASE("http exhausts retries against a dead backend") {
    BackendConfig cfg = http_config("http://127.0.0.1:9/v1");  // discard port, nothing listens
    cfg.max_retries = 2;
    cfg.timeout_sec = 1;
    Gateway gw{cfg};
    REQUIRE_THROWS_AS(gw.complete(basic_request()), BackendUnreachable);
}

TEST_CASE("non-retryable 4xx fails fast") {
    TestServer server;
    server.server.Post("/v1/other", [](const httplib::Request&, httplib::Response&) {});
    Gateway gw{http_config("http://127.0.0.1:" + std::to_string(server.port) + "/missing")};
    REQUIRE_THROWS_AS(gw.complete(basic_request()), RequestRejected);
    REQUIRE(server.hits == 0);  // single attempt, wrong path never reached the handler
}

TEST_CASE("auth env var must be set before any network call") {
    BackendConfig cfg = http_config("http://127.0.0.1:9/v1");
    cfg.auth_token_env_var = "MEDCOLLAB_TEST_NO_SUCH_VAR";
    Gateway gw{cfg};
    REQUIRE_THROWS_AS(gw.complete(basic_request()), AuthMissing);
}

TEST_CASE("cache hit returns stored bytes and skips the network") {
    TestServer server("cached-answer");
    const auto cache_dir =
        std::filesystem::temp_directory_path() / ("medcollab-cache-" + std::to_string(::getpid()));
    std::filesystem::remove_all(cache_dir);

    BackendConfig cfg = http_config(server.endpoint());
    cfg.cache_dir = cache_dir;
    {
        Gateway gw{cfg};
        REQUIRE(gw.complete(basic_request()).text == "cached-answer");
        REQUIRE(server.hits == 1);
    }
    {
        // fresh gateway, warmed cache: zero network calls
        Gateway gw{cfg};
        auto resp = gw.complete(basic_request());
        REQUIRE(resp.text == "cached-answer");
        REQUIRE(server.hits == 1);
        REQUIRE(gw.http_calls_issued() == 0);
    }
    std::filesystem::remove_all(cache_dir);
}

TEST_CASE("cache file layout is one JSON file named by the key") {
    TestServer server("x");
    const auto cache_dir =
        std::filesystem::temp_directory_path() / ("medcollab-cache2-" + std::to_string(::getpid()));
    std::filesystem::remove_all(cache_dir);
    BackendConfig cfg = http_config(server.endpoint());
    cfg.cache_dir = cache_dir;
    Gateway gw{cfg};
    ChatRequest req = basic_request();
    gw.complete(req);

    const auto file = cache_dir / cache_key(req);
    REQUIRE(std::filesystem::exists(file));
    nlohmann::json j = nlohmann::json::parse(test_helpers::read_file(file));
    REQUIRE(j.contains("request"));
    REQUIRE(j.at("response").at("text") == "x");
    REQUIRE(j.contains("timestamp"));
    std::filesystem::remove_all(cache_dir);
}

TEST_CASE("rate limiter bounds requests per 1-second window") {
    TestServer server;
    BackendConfig cfg = http_config(server.endpoint());
    cfg.rate_limit_rps = 10;
    Gateway gw{cfg};
    for (int i = 0; i < 15; ++i) gw.complete(basic_request());

    std::lock_guard lk(server.mutex);
    const auto& times = server.hit_times;
    REQUIRE(times.size() == 15);
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::size_t in_window = 0;
        for (std::size_t j = i; j < times.size(); ++j)
            if (times[j] - times[i] < std::chrono::milliseconds(900)) ++in_window;
        REQUIRE(in_window <= 10);
    }
}
