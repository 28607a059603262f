#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "revision/core.hpp"
#include "revision/prompt.hpp"
#include "revision/tools.hpp"
#include "revision/reasoner.hpp"

namespace revision {

namespace mockdetail {

// Pull every "price = <number>" occurrence out of a rendered prompt. The
// prompt builders in this codebase are the only writers of that form, so a
// plain scan is reliable.
inline std::vector<double> scan_prices(std::string_view prompt) {
    std::vector<double> out;
    const std::string_view needle = "price = ";
    for (auto pos = prompt.find(needle); pos != std::string_view::npos;
         pos = prompt.find(needle, pos + 1)) {
        auto start = pos + needle.size();
        auto end = start;
        while (end < prompt.size() &&
               (std::isdigit(static_cast<unsigned char>(prompt[end])) || prompt[end] == '.' ||
                prompt[end] == '-'))
            ++end;
        if (end > start) {
            try {
                out.push_back(std::stod(std::string(prompt.substr(start, end - start))));
            } catch (...) {
            }
        }
    }
    return out;
}

// "title = <text>" runs until the next field separator or line end.
inline std::vector<std::string> scan_titles(std::string_view prompt) {
    std::vector<std::string> out;
    const std::string_view needle = "title = ";
    for (auto pos = prompt.find(needle); pos != std::string_view::npos;
         pos = prompt.find(needle, pos + 1)) {
        auto start = pos + needle.size();
        auto end = prompt.find_first_of(",\n", start);
        if (end == std::string_view::npos) end = prompt.size();
        out.push_back(trim_copy(prompt.substr(start, end - start)));
    }
    return out;
}

// Most frequent title token of length >= 3, ties to the lexicographically
// smallest. Gives the mocks a stable "what is this query about" signal.
inline std::string top_title_term(const std::vector<std::string>& titles) {
    std::map<std::string, int> counts;
    for (const auto& t : titles)
        for (const auto& tok : normalize_action(t))
            if (tok.size() >= 3) ++counts[tok];
    std::string best;
    int best_count = 0;
    for (const auto& [tok, c] : counts) {
        if (c > best_count) {
            best = tok;
            best_count = c;
        }
    }
    return best.empty() ? "item" : best;
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

}  // namespace mockdetail

// One deterministic rule the mock reasoner applies to a reasoning-stage
// prompt. Output templates may use {top_term}, {min_price}, {max_price} and
// {spread}, mirroring what an operator rule would make the real model say.
struct MockRule {
    enum class Kind { always, prompt_contains, price_spread_gt };
    Kind kind = Kind::always;
    std::string needle;       // prompt_contains
    double threshold = 0.0;   // price_spread_gt
    std::string output;       // one or more `Action -> Info` lines

    bool operator==(const MockRule&) const = default;
};

namespace mockdetail {

inline bool rule_hits(const MockRule& rule, const std::string& prompt, bool has_prices,
                      double price_spread) {
    switch (rule.kind) {
        case MockRule::Kind::always: return true;
        case MockRule::Kind::prompt_contains:
            return prompt.find(rule.needle) != std::string::npos;
        case MockRule::Kind::price_spread_gt:
            return has_prices && price_spread > rule.threshold;
    }
    return false;
}

}  // namespace mockdetail

// Offline-stage stand-in for both model roles. Visual prompts get a short
// deterministic description; reasoning prompts get `Action -> Info` lines:
// the defaults plus every triggered rule, with slots filled from the prompt's
// own metadata block. Same prompt, same answer, every time.
class MockReasoner : public ReasonerClient {
public:
    std::vector<MockRule> rules;
    // emitted for every reasoning prompt before rule output
    std::string base_output = "search condition refinement -> {top_term}\nresult summarization";

    std::string generate(const std::string& prompt, const std::vector<std::string>& image_refs,
                         int max_tokens) override {
        (void)max_tokens;
        if (prompt.find(kVisualStageMarker) != std::string::npos) {
            return "The query item did not match the " + std::to_string(image_refs.size()) +
                   " retrieved products well; styling and price look misaligned.";
        }
        auto prices = mockdetail::scan_prices(prompt);
        auto titles = mockdetail::scan_titles(prompt);
        double min_price = 0, max_price = 0;
        if (!prices.empty()) {
            min_price = *std::min_element(prices.begin(), prices.end());
            max_price = *std::max_element(prices.begin(), prices.end());
        }
        auto fill = [&](std::string s) {
            s = mockdetail::replace_all(std::move(s), "{top_term}",
                                        mockdetail::top_title_term(titles));
            s = mockdetail::replace_all(std::move(s), "{min_price}", format_number(min_price));
            s = mockdetail::replace_all(std::move(s), "{max_price}", format_number(max_price));
            s = mockdetail::replace_all(std::move(s), "{spread}",
                                        format_number(max_price - min_price));
            return s;
        };

        std::string out = fill(base_output);
        for (const auto& rule : rules) {
            if (mockdetail::rule_hits(rule, prompt, !prices.empty(), max_price - min_price)) {
                if (!out.empty()) out += '\n';
                out += fill(rule.output);
            }
        }
        return out;
    }
};

// Online planner stand-in: first matching rule decides the whole response,
// otherwise the default plan. A nonempty script overrides everything.
class MockPlanner : public ReasonerClient {
public:
    std::string script;  // verbatim response when nonempty
    std::vector<MockRule> rules;
    std::string default_output = "<think>default</think> (1)";

    std::string generate(const std::string& prompt, const std::vector<std::string>&,
                         int) override {
        if (!script.empty()) return script;
        auto prices = mockdetail::scan_prices(prompt);
        double spread = 0.0;
        if (!prices.empty())
            spread = *std::max_element(prices.begin(), prices.end()) -
                     *std::min_element(prices.begin(), prices.end());
        for (const auto& rule : rules)
            if (mockdetail::rule_hits(rule, prompt, !prices.empty(), spread)) return rule.output;
        return default_output;
    }
};

// Judge stand-in: the same score for everything.
class FixedJudge : public ReasonerClient {
public:
    double score = 0.5;

    std::string generate(const std::string&, const std::vector<std::string>&, int) override {
        return format_number(score);
    }
};

// Echoes the text to compress; useful for SFT fixtures.
class EchoReasoner : public ReasonerClient {
public:
    std::string prefix_to_strip;  // e.g. the compression instruction line

    std::string generate(const std::string& prompt, const std::vector<std::string>&,
                         int) override {
        if (!prefix_to_strip.empty() && prompt.rfind(prefix_to_strip, 0) == 0)
            return prompt.substr(prefix_to_strip.size());
        return prompt;
    }
};

// Fails the first `failures` calls, then answers. Thread-safe counter.
class FlakyReasoner : public ReasonerClient {
public:
    int failures = 0;
    bool retryable = true;
    std::string answer = "ok";

    std::string generate(const std::string&, const std::vector<std::string>&, int) override {
        std::lock_guard lock(mu_);
        ++calls;
        if (calls <= failures) throw TransportError("mock transport down", retryable);
        return answer;
    }

    int calls = 0;

private:
    std::mutex mu_;
};

// Deterministic external index: the same query text always yields the same
// items. Safe to call from the prefetch thread.
class MockTextSearchClient : public TextSearchClient {
public:
    std::size_t items_to_return = 2;
    int simulated_latency_ms = 0;  // sleep per call, for overlap fixtures

    std::vector<Product> search(const std::string& query_text, std::size_t limit) override {
        {
            std::lock_guard lock(mu_);
            ++calls_;
        }
        if (simulated_latency_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(simulated_latency_ms));
        std::uint64_t h = fnv1a64(query_text);
        std::vector<Product> out;
        for (std::size_t i = 0; i < std::min(items_to_return, limit); ++i) {
            Product p;
            p.id = "ext-" + std::to_string(h % 100000) + "-" + std::to_string(i + 1);
            p.title = query_text + " external result " + std::to_string(i + 1);
            p.price = static_cast<double>(10 + (h >> (8 * (i % 8))) % 90);
            p.quantity = 1;
            p.similarity = 0.0;
            p.image_ref = "img://external/" + p.id;
            out.push_back(std::move(p));
        }
        return out;
    }

    int calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

private:
    mutable std::mutex mu_;
    int calls_ = 0;
};

// Builds the stand-in for a named model role. Unknown roles are configuration
// errors, not defaults.
inline std::unique_ptr<ReasonerClient> make_mock_reasoner(const std::string& role,
                                                          std::vector<MockRule> rules = {}) {
    if (role == "visual" || role == "reasoning") {
        auto client = std::make_unique<MockReasoner>();
        client->rules = std::move(rules);
        return client;
    }
    if (role == "planner") {
        auto client = std::make_unique<MockPlanner>();
        client->rules = std::move(rules);
        return client;
    }
    if (role == "judge") return std::make_unique<FixedJudge>();
    throw std::invalid_argument("unknown mock reasoner role: " + role);
}

// Records every request it sees, then delegates to an inner client.
class RecordingReasoner : public ReasonerClient {
public:
    struct Call {
        std::string prompt;
        std::vector<std::string> image_refs;
        int max_tokens;
    };
    std::vector<Call> calls;
    ReasonerClient* inner = nullptr;

    std::string generate(const std::string& prompt, const std::vector<std::string>& image_refs,
                         int max_tokens) override {
        {
            std::lock_guard lock(mu_);
            calls.push_back({prompt, image_refs, max_tokens});
        }
        if (inner) return inner->generate(prompt, image_refs, max_tokens);
        return "";
    }

private:
    std::mutex mu_;
};

}  // namespace revision
