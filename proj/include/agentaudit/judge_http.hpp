#pragma once

// HTTP transport for the judge client (chat-completion style JSON over HTTP).
// Kept apart from judge.hpp so only code that talks to the network pulls in
// the HTTP library.

#include <cstdlib>
#include <string>

#include "httplib.h"

#include "agentaudit/judge.hpp"

namespace agentaudit {

class HttpJudgeTransport : public JudgeTransport {
public:
    /// Splits "scheme://host[:port]/path" into the client base and the path.
    static std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
        auto scheme_end = endpoint.find("://");
        if (scheme_end == std::string::npos) throw InputError("judge endpoint needs a scheme: " + endpoint);
        auto path_start = endpoint.find('/', scheme_end + 3);
        if (path_start == std::string::npos) return {endpoint, "/"};
        return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
    }

    std::string complete(const std::string& prompt, const JudgeConfig& config) override {
        auto [base, path] = split_endpoint(config.endpoint);
        httplib::Client client(base);
        client.set_connection_timeout(config.timeout_s, 0);
        client.set_read_timeout(config.timeout_s, 0);
        httplib::Headers headers;
        if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto body = make_chat_request(prompt, config).dump();
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) throw JudgeError("judge request failed: " + httplib::to_string(res.error()));
        if (res->status != 200) {
            throw JudgeError("judge endpoint returned HTTP " + std::to_string(res->status));
        }
        return extract_completion(res->body);
    }
};

}  // namespace agentaudit
