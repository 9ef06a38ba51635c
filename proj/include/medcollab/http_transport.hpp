#pragma once

#include <memory>
#include <string>

#include "httplib.h"
#include "medcollab/gateway.hpp"

namespace medcollab {

class HttplibTransport : public HttpTransport {
  public:
    HttplibTransport(const std::string& scheme_host_port, int timeout_sec)
        : client_(scheme_host_port) {
        client_.set_connection_timeout(timeout_sec);
        client_.set_read_timeout(timeout_sec);
    }

    Result post_json(const std::string& path, const std::string& body,
                     const std::string& bearer_token) override {
        httplib::Headers headers;
        if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
        auto res = client_.Post(path, headers, body, "application/json");
        if (!res) return {false, 0, {}};
        return {true, res->status, res->body};
    }

  private:
    httplib::Client client_;
};

inline std::shared_ptr<HttpTransport> Gateway::transport() {
    std::lock_guard lk(mutex_);
    if (!transport_)
        transport_ = std::make_shared<HttplibTransport>(
            detail::parse_endpoint(config_.endpoint_url).scheme_host_port, config_.timeout_sec);
    return transport_;
}

}  // namespace medcollab
