#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "revision/clustering.hpp"
#include "revision/core.hpp"
#include "revision/mining.hpp"
#include "revision/prompt.hpp"
#include "revision/reasoner.hpp"
#include "revision/registry.hpp"
#include "revision/textmetrics.hpp"

namespace revision {

inline constexpr std::size_t kMaxThinkingTokens = 256;

struct TrainingSample {
    std::string sample_id;  // source query id
    std::string query_image_ref;
    std::vector<std::string> product_image_refs;  // capped at kMaxProductImages
    std::string textual_context;
    std::string target_thinking;  // capped at kMaxThinkingTokens whitespace tokens
    std::vector<int> target_labels;

    bool operator==(const TrainingSample&) const = default;
};

inline void validate(const TrainingSample& s, const ToolRegistry& registry) {
    if (s.target_labels.empty())
        throw std::invalid_argument("training sample " + s.sample_id + ": empty labels");
    for (int l : s.target_labels)
        if (!registry.contains(l))
            throw std::invalid_argument("training sample " + s.sample_id + ": label " +
                                        std::to_string(l) + " not in registry");
    if (s.product_image_refs.size() > kMaxProductImages)
        throw std::invalid_argument("training sample " + s.sample_id + ": too many image refs");
    if (whitespace_tokens(s.target_thinking).size() > kMaxThinkingTokens)
        throw std::invalid_argument("training sample " + s.sample_id + ": thinking too long");
}

struct RewardBreakdown {
    double format_reward = 0.0;  // 0 or 1
    double answer_reward = 0.0;  // 0, 1, or 2
    double total = 0.0;          // sum of the two

    bool operator==(const RewardBreakdown&) const = default;
};

// ---------------------------------------------------------------------------
// Signal -> numeric plan labels.
// ---------------------------------------------------------------------------

struct LabelMapping {
    std::vector<int> labels;
    std::string discard_reason;  // nonempty means the sample is unusable

    bool discarded() const { return !discard_reason.empty(); }
};

// Each action resolves through the hierarchy to its (main, sub) bucket and
// from there to the registry tool bound to that subcategory. Consecutive
// duplicate labels collapse. Anything unresolvable discards the whole sample
// with a reason — bad mining output is data, not an exception.
inline LabelMapping map_actions_to_labels(const OptimizationSignal& signal,
                                          const ClusterHierarchy& hierarchy,
                                          const ToolRegistry& registry) {
    LabelMapping out;
    if (signal.items.empty()) {
        out.discard_reason = "signal has no actions";
        return out;
    }
    for (const auto& item : signal.items) {
        const std::string* main = nullptr;
        const std::string* sub = nullptr;
        for (const auto& [m, subs] : hierarchy.assignments) {
            for (const auto& [s, actions] : subs) {
                for (const auto& a : actions) {
                    if (a == item.action) {
                        main = &m;
                        sub = &s;
                        break;
                    }
                }
                if (main) break;
            }
            if (main) break;
        }
        if (!main) {
            out.labels.clear();
            out.discard_reason = "action not in any assigned bucket: " + item.action;
            return out;
        }
        auto index = registry.index_of_binding(*main, *sub);
        if (!index) {
            out.labels.clear();
            out.discard_reason = "no tool bound to " + *main + "/" + *sub;
            return out;
        }
        if (out.labels.empty() || out.labels.back() != *index) out.labels.push_back(*index);
    }
    return out;
}

// ---------------------------------------------------------------------------
// SFT sample construction.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCompressInstruction =
    "Rephrase and compress the following reasoning, keeping every decision-relevant fact:\n";

// Keeps the text verbatim when it fits; otherwise the first `cap` whitespace
// tokens rejoined with single spaces.
inline std::string truncate_tokens(const std::string& text, std::size_t cap) {
    auto tokens = whitespace_tokens(text);
    if (tokens.size() <= cap) return text;
    std::string out;
    for (std::size_t i = 0; i < cap; ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

struct SftOptions {
    RetryPolicy retry{};
    int compressor_max_tokens = 1024;
    ImportanceTable importance = default_importance_table();
};

// Precondition: map_actions_to_labels succeeds for this signal (callers check
// and skip discards). Compressor failures degrade to plain truncation of the
// raw thinking text.
inline TrainingSample format_sft_sample(const RequestLog& log, const OptimizationSignal& signal,
                                        const ClusterHierarchy& hierarchy,
                                        const ToolRegistry& registry, ReasonerClient& compressor,
                                        const SftOptions& options = {}) {
    auto mapping = map_actions_to_labels(signal, hierarchy, registry);
    if (mapping.discarded())
        throw std::invalid_argument("format_sft_sample: " + mapping.discard_reason);

    TrainingSample s;
    s.sample_id = signal.query_id;
    s.query_image_ref = log.query_image_ref;
    for (const auto& p : log.products) {
        if (s.product_image_refs.size() >= kMaxProductImages) break;
        s.product_image_refs.push_back(p.image_ref);
    }
    s.textual_context = build_textual_context(log.products, kMaxProductImages, options.importance);
    s.textual_context += "\n\nAvailable tools:\n";
    s.textual_context += registry_block(registry);

    std::string thinking = signal.thinking;
    try {
        thinking = generate_with_retry(compressor, std::string(kCompressInstruction) + thinking,
                                       {}, options.compressor_max_tokens, options.retry);
    } catch (const TransportError&) {
        thinking = signal.thinking;  // compression is best-effort
    }
    s.target_thinking = truncate_tokens(thinking, kMaxThinkingTokens);
    s.target_labels = mapping.labels;
    validate(s, registry);
    return s;
}

// ---------------------------------------------------------------------------
// Rewards and advantages.
// ---------------------------------------------------------------------------

inline double compute_format_reward(const std::string& raw_output) {
    return parse_plan_output(raw_output).format_ok ? 1.0 : 0.0;
}

// 2.0 for exact sequence equality, 1.0 when only the index sets agree, else 0.
inline double compute_answer_reward(const std::vector<int>& pred, const std::vector<int>& gold) {
    if (gold.empty()) throw std::invalid_argument("answer reward: empty gold labels");
    if (pred.empty()) return 0.0;
    if (pred == gold) return 2.0;
    if (std::set<int>(pred.begin(), pred.end()) == std::set<int>(gold.begin(), gold.end()))
        return 1.0;
    return 0.0;
}

inline RewardBreakdown compute_rewards(const std::string& raw_output,
                                       const std::vector<int>& gold) {
    RewardBreakdown r;
    r.format_reward = compute_format_reward(raw_output);
    r.answer_reward = compute_answer_reward(parse_plan_output(raw_output).tool_indices, gold);
    r.total = r.format_reward + r.answer_reward;
    return r;
}

inline constexpr double kAdvantageDelta = 1e-4;

// Group-normalized advantages: (r_i - mean) / (population std + delta).
inline std::vector<double> group_advantages(const std::vector<double>& rewards,
                                            double delta = kAdvantageDelta) {
    if (rewards.size() < 2)
        throw std::invalid_argument("advantage group needs at least two rewards");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rewards.size());
    double denom = std::sqrt(var) + delta;
    std::vector<double> out;
    out.reserve(rewards.size());
    for (double r : rewards) out.push_back((r - mean) / denom);
    return out;
}

struct RlSample {
    std::string sample_id;
    std::vector<std::string> candidates;  // raw model outputs for one prompt
    std::vector<double> rewards;          // total reward per candidate
    std::vector<double> advantages;

    bool operator==(const RlSample&) const = default;
};

inline RlSample make_rl_sample(const std::string& sample_id,
                               const std::vector<std::string>& candidates,
                               const std::vector<int>& gold, double delta = kAdvantageDelta) {
    RlSample s;
    s.sample_id = sample_id;
    s.candidates = candidates;
    for (const auto& c : candidates) s.rewards.push_back(compute_rewards(c, gold).total);
    s.advantages = group_advantages(s.rewards, delta);
    return s;
}

// ---------------------------------------------------------------------------
// Hard-sample mining and corpus match rates.
// ---------------------------------------------------------------------------

struct HardSampleOptions {
    RetryPolicy retry{};
    int predictor_max_tokens = 512;
};

inline std::string build_prediction_prompt(const TrainingSample& s) {
    return std::string(kPlanInstruction) + "\n" + s.textual_context + "\n";
}

// Keeps every sample the predictor gets wrong (total answer reward below the
// exact-match 2.0). A predictor that cannot answer keeps the sample too —
// unknown is treated as hard.
inline std::vector<TrainingSample> select_hard_samples(const std::vector<TrainingSample>& samples,
                                                       ReasonerClient& predictor,
                                                       const ToolRegistry& registry,
                                                       const HardSampleOptions& options = {}) {
    (void)registry;  // labels were validated at construction; kept for call-site symmetry
    std::vector<TrainingSample> hard;
    for (const auto& s : samples) {
        std::vector<std::string> refs;
        refs.push_back(s.query_image_ref);
        refs.insert(refs.end(), s.product_image_refs.begin(), s.product_image_refs.end());
        double reward = -1.0;
        try {
            auto raw = generate_with_retry(predictor, build_prediction_prompt(s), refs,
                                           options.predictor_max_tokens, options.retry);
            reward = compute_answer_reward(parse_plan_output(raw).tool_indices, s.target_labels);
        } catch (const TransportError&) {
            // fall through with reward below threshold
        }
        if (reward < 2.0) hard.push_back(s);
    }
    return hard;
}

inline double tool_match_rate(const std::vector<std::vector<int>>& preds,
                              const std::vector<std::vector<int>>& golds) {
    if (preds.size() != golds.size())
        throw std::invalid_argument("match rate: pred/gold size mismatch");
    if (preds.empty()) throw std::invalid_argument("match rate: empty corpus");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (std::set<int>(preds[i].begin(), preds[i].end()) ==
            std::set<int>(golds[i].begin(), golds[i].end()))
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

inline double order_match_rate(const std::vector<std::vector<int>>& preds,
                               const std::vector<std::vector<int>>& golds) {
    if (preds.size() != golds.size())
        throw std::invalid_argument("match rate: pred/gold size mismatch");
    if (preds.empty()) throw std::invalid_argument("match rate: empty corpus");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == golds[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace revision
