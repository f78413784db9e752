#ifndef AXCRAWL_HTTP_CLIENT_HPP
#define AXCRAWL_HTTP_CLIENT_HPP

#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>

#include "axcrawl/agents.hpp"

namespace axcrawl {

/// Chat-completions-style HTTP client. Posts {model, messages, temperature}
/// as JSON and reads the first message content from the response. The API key
/// comes from the configured environment variable, never from files.
class HttpChatClient final : public ChatClient {
public:
    explicit HttpChatClient(LlmClientConfig config) : config_(std::move(config)) {
        const auto scheme_end = config_.endpoint_url.find("://");
        if (scheme_end == std::string::npos)
            throw ClientError("endpoint_url must include a scheme: " + config_.endpoint_url);
        const auto path_start = config_.endpoint_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base_ = config_.endpoint_url;
            path_ = "/";
        } else {
            base_ = config_.endpoint_url.substr(0, path_start);
            path_ = config_.endpoint_url.substr(path_start);
        }
    }

    std::string complete(const std::vector<ChatMessage>& messages) override {
        ordered_json body;
        body["model"] = config_.model_name;
        ordered_json msgs = ordered_json::array();
        for (const auto& m : messages) {
            ordered_json mj;
            mj["role"] = m.role;
            mj["content"] = m.content;
            msgs.push_back(std::move(mj));
        }
        body["messages"] = std::move(msgs);
        body["temperature"] = config_.temperature;

        httplib::Client client(base_);
        client.set_read_timeout(static_cast<time_t>(config_.timeout_seconds),
                                static_cast<time_t>((config_.timeout_seconds -
                                                     static_cast<time_t>(config_.timeout_seconds)) *
                                                    1000000));
        httplib::Headers headers;
        if (!config_.api_key_env_var.empty()) {
            if (const char* key = std::getenv(config_.api_key_env_var.c_str()))
                headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res) throw ClientError("request to " + base_ + path_ + " failed");
        if (res->status < 200 || res->status >= 300)
            throw ClientError("endpoint returned status " + std::to_string(res->status));

        ordered_json rj;
        try {
            rj = ordered_json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ClientError(std::string("response is not JSON: ") + e.what());
        }
        if (rj.contains("choices") && rj["choices"].is_array() && !rj["choices"].empty()) {
            const auto& first = rj["choices"][0];
            if (first.contains("message") && first["message"].contains("content") &&
                first["message"]["content"].is_string())
                return first["message"]["content"].get<std::string>();
        }
        if (rj.contains("messages") && rj["messages"].is_array() && !rj["messages"].empty() &&
            rj["messages"][0].contains("content") && rj["messages"][0]["content"].is_string())
            return rj["messages"][0]["content"].get<std::string>();
        throw ClientError("response carries no message content");
    }

private:
    LlmClientConfig config_;
    std::string base_;
    std::string path_;
};

}  // namespace axcrawl

#endif  // AXCRAWL_HTTP_CLIENT_HPP
