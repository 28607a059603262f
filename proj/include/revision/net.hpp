#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "revision/config.hpp"
#include "revision/jsonl.hpp"
#include "revision/mock.hpp"
#include "revision/reasoner.hpp"
#include "revision/tools.hpp"

namespace revision {

// Chat-completions client. base_url is scheme://host[:port]; requests go to
// /v1/chat/completions with the prompt as one text part and every image ref
// as an image_url part. 5xx/429 and connection failures are retryable; other
// non-200s and malformed bodies are not.
class HttpReasonerClient : public ReasonerClient {
public:
    HttpReasonerClient(std::string base_url, std::string model, std::string api_key = "",
                       int timeout_s = 30)
        : base_url_(std::move(base_url)), model_(std::move(model)), api_key_(std::move(api_key)),
          timeout_s_(timeout_s) {}

    std::string generate(const std::string& prompt, const std::vector<std::string>& image_refs,
                         int max_tokens) override {
        nlohmann::json content = nlohmann::json::array();
        content.push_back({{"type", "text"}, {"text", prompt}});
        for (const auto& ref : image_refs)
            content.push_back({{"type", "image_url"}, {"image_url", {{"url", ref}}}});
        nlohmann::json body = {
            {"model", model_},
            {"max_tokens", max_tokens},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};

        httplib::Client cli(base_url_);
        cli.set_connection_timeout(timeout_s_);
        cli.set_read_timeout(timeout_s_);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res)
            throw TransportError("no response from " + base_url_ + ": " +
                                     httplib::to_string(res.error()),
                                 true);
        if (res->status == 429 || res->status >= 500)
            throw TransportError("HTTP " + std::to_string(res->status) + " from " + base_url_,
                                 true);
        if (res->status != 200)
            throw TransportError("HTTP " + std::to_string(res->status) + " from " + base_url_ +
                                     ": " + res->body,
                                 false);
        try {
            auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed completion response: ") + e.what(), false);
        }
    }

private:
    std::string base_url_;
    std::string model_;
    std::string api_key_;
    int timeout_s_;
};

// Text retrieval over HTTP: POST /v1/search {"query", "limit"} expecting
// {"products": [...]}. Failures throw; the tool layer turns that into a
// failed outcome.
class HttpTextSearchClient : public TextSearchClient {
public:
    explicit HttpTextSearchClient(std::string base_url, int timeout_s = 10)
        : base_url_(std::move(base_url)), timeout_s_(timeout_s) {}

    std::vector<Product> search(const std::string& query_text, std::size_t limit) override {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(timeout_s_);
        cli.set_read_timeout(timeout_s_);
        nlohmann::json body = {{"query", query_text}, {"limit", limit}};
        auto res = cli.Post("/v1/search", body.dump(), "application/json");
        if (!res)
            throw TransportError("no response from " + base_url_ + ": " +
                                     httplib::to_string(res.error()),
                                 true);
        if (res->status != 200)
            throw TransportError("HTTP " + std::to_string(res->status) + " from search backend",
                                 res->status == 429 || res->status >= 500);
        try {
            return nlohmann::json::parse(res->body).at("products").get<std::vector<Product>>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed search response: ") + e.what(), false);
        }
    }

private:
    std::string base_url_;
    int timeout_s_;
};

// Role factory: mock endpoints get the deterministic built-ins (with any
// configured behavior table), remote ones a chat-completions client whose
// key comes from the configured environment variable.
inline std::unique_ptr<ReasonerClient> make_reasoner(const ReasonerEndpoint& endpoint,
                                                     const std::string& role,
                                                     std::vector<MockRule> rules = {}) {
    validate(endpoint, role);
    if (endpoint.mode == "mock") return make_mock_reasoner(role, std::move(rules));
    const char* key = std::getenv(endpoint.api_key_env.c_str());
    return std::make_unique<HttpReasonerClient>(endpoint.base_url, endpoint.model,
                                                key ? key : "");
}

}  // namespace revision
