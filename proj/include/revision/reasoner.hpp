#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace revision {

// Transport-level failure talking to a model endpoint. retryable=false means
// the caller should give up immediately (auth errors, malformed request).
struct TransportError : std::runtime_error {
    bool retryable;
    explicit TransportError(const std::string& what, bool retryable_ = true)
        : std::runtime_error(what), retryable(retryable_) {}
};

// One interface for every model role: the visual analyzer, the text reasoner,
// the plan compressor, and the online planner. Mocks implement this
// deterministically; remote clients speak a chat-completions endpoint.
class ReasonerClient {
public:
    virtual ~ReasonerClient() = default;
    virtual std::string generate(const std::string& prompt,
                                 const std::vector<std::string>& image_refs, int max_tokens) = 0;
};

struct RetryPolicy {
    int attempts = 3;
    int base_delay_ms = 100;  // doubles per retry; 0 disables sleeping

    bool operator==(const RetryPolicy&) const = default;
};

inline std::string generate_with_retry(ReasonerClient& client, const std::string& prompt,
                                       const std::vector<std::string>& image_refs, int max_tokens,
                                       const RetryPolicy& policy = {}) {
    int delay = policy.base_delay_ms;
    for (int attempt = 1;; ++attempt) {
        try {
            return client.generate(prompt, image_refs, max_tokens);
        } catch (const TransportError& e) {
            if (!e.retryable || attempt >= policy.attempts) throw;
            if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            delay *= 2;
        }
    }
}

}  // namespace revision
