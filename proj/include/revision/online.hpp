#pragma once

#include <chrono>
#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "revision/core.hpp"
#include "revision/embed.hpp"
#include "revision/prompt.hpp"
#include "revision/reasoner.hpp"
#include "revision/registry.hpp"
#include "revision/tools.hpp"

namespace revision {

struct DispatchConfig {
    double relevance_trigger = 0.5;   // optimize only below this top-1 similarity
    double cache_threshold = 0.85;    // near-duplicate reuse, strict greater-than
    std::int64_t daily_cue_cap = 3;   // extra cues per user per UTC day
    int reasoner_max_tokens = 512;
    std::int64_t tool_timeout_ms = 2000;

    bool operator==(const DispatchConfig&) const = default;
};

inline void validate(const DispatchConfig& c) {
    if (!(c.cache_threshold > 0.0 && c.cache_threshold <= 1.0))
        throw std::invalid_argument("dispatch config: cache_threshold must be in (0,1]");
    if (c.relevance_trigger < 0.0 || c.relevance_trigger > 1.0)
        throw std::invalid_argument("dispatch config: relevance_trigger must be in [0,1]");
    if (c.daily_cue_cap < 0)
        throw std::invalid_argument("dispatch config: daily_cue_cap must be >= 0");
    if (c.reasoner_max_tokens <= 0)
        throw std::invalid_argument("dispatch config: reasoner_max_tokens must be positive");
    if (c.tool_timeout_ms <= 0)
        throw std::invalid_argument("dispatch config: tool_timeout_ms must be positive");
}

// Optimization only runs when the best retrieved product is a poor match.
// An empty result page counts as maximally poor.
inline bool should_trigger(const RequestLog& log, const DispatchConfig& config) {
    if (log.products.empty()) return true;
    return log.products.front().similarity < config.relevance_trigger;
}

// ---------------------------------------------------------------------------
// Per-user daily frequency cap.
// ---------------------------------------------------------------------------

enum class CounterVerdict { granted, exhausted, unavailable };

class CounterStore {
public:
    virtual ~CounterStore() = default;
    // Atomically increments key's counter iff it is still below cap.
    virtual CounterVerdict increment_if_below(const std::string& key, std::int64_t cap) = 0;
};

class InMemoryCounterStore : public CounterStore {
public:
    bool available = true;  // flip off to exercise fail-closed behavior

    CounterVerdict increment_if_below(const std::string& key, std::int64_t cap) override {
        if (!available) return CounterVerdict::unavailable;
        std::lock_guard lock(mu_);
        auto& count = counts_[key];
        if (count >= cap) return CounterVerdict::exhausted;
        ++count;
        return CounterVerdict::granted;
    }

    std::int64_t count(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = counts_.find(key);
        return it == counts_.end() ? 0 : it->second;
    }

    void clear() {
        std::lock_guard lock(mu_);
        counts_.clear();
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, std::int64_t> counts_;
};

// Epoch-millisecond timestamp -> UTC day ordinal (floor division).
inline std::int64_t utc_day(std::int64_t timestamp_ms) {
    constexpr std::int64_t kDayMs = 86'400'000;
    std::int64_t day = timestamp_ms / kDayMs;
    if (timestamp_ms % kDayMs < 0) --day;
    return day;
}

// True (and counted) while the user still has budget for the day. A store
// outage denies the cue — showing nothing beats over-showing.
inline bool frequency_gate(const std::string& user_id, std::int64_t day, CounterStore& store,
                           std::int64_t cap) {
    auto key = user_id + "#day:" + std::to_string(day);
    return store.increment_if_below(key, cap) == CounterVerdict::granted;
}

// ---------------------------------------------------------------------------
// Near-duplicate query cache.
// ---------------------------------------------------------------------------

inline bool cache_hit_decision(double similarity, double threshold) {
    return similarity > threshold;  // strict: equality is a miss
}

namespace onlinedetail {

inline nlohmann::json plan_to_json(const ToolPlan& plan) {
    nlohmann::json j;
    j["tool_indices"] = plan.tool_indices;
    if (plan.thinking)
        j["thinking"] = *plan.thinking;
    else
        j["thinking"] = nullptr;
    return j;
}

inline ToolPlan plan_from_json(const nlohmann::json& j) {
    ToolPlan plan;
    plan.tool_indices = j.at("tool_indices").get<std::vector<int>>();
    if (j.contains("thinking") && !j.at("thinking").is_null())
        plan.thinking = j.at("thinking").get<std::string>();
    return plan;
}

}  // namespace onlinedetail

// Vector-indexed store of past plan decisions. Entries hold the PLAN only;
// tools always re-execute against the fresh product list.
class QueryCache {
public:
    explicit QueryCache(std::size_t dim = kEmbeddingDim) : index_(dim) {}

    struct Hit {
        std::string key;
        ToolPlan plan;
        double similarity = 0.0;
        std::int64_t hit_count = 0;  // after this hit

        bool operator==(const Hit&) const = default;
    };

    void store(const std::string& key, std::vector<float> vec, const ToolPlan& plan,
               std::int64_t created_ms) {
        nlohmann::json j;
        j["plan"] = onlinedetail::plan_to_json(plan);
        j["hit_count"] = 0;
        j["created"] = created_ms;
        std::lock_guard lock(mu_);
        index_.upsert(key, std::move(vec), j.dump());
    }

    // Nearest stored entry if it clears the strict similarity threshold;
    // a hit bumps the entry's counter. Unreadable payloads are evicted.
    std::optional<Hit> lookup(const std::vector<float>& query_vec, double threshold) {
        std::lock_guard lock(mu_);
        auto nearest = index_.nearest(query_vec);
        if (!nearest) return std::nullopt;
        if (!cache_hit_decision(nearest->score, threshold)) return std::nullopt;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(nearest->payload);
            Hit hit;
            hit.key = nearest->key;
            hit.plan = onlinedetail::plan_from_json(j.at("plan"));
            hit.similarity = nearest->score;
            hit.hit_count = j.at("hit_count").get<std::int64_t>() + 1;
            j["hit_count"] = hit.hit_count;
            index_.update_payload(nearest->key, j.dump());
            return hit;
        } catch (const nlohmann::json::exception&) {
            index_.remove(nearest->key);
            return std::nullopt;
        }
    }

    // Drops entries whose plans no longer validate against the registry.
    // Returns how many were evicted.
    std::size_t revalidate(const ToolRegistry& registry) {
        std::lock_guard lock(mu_);
        std::size_t evicted = 0;
        for (const auto& key : index_.keys()) {
            bool keep = false;
            try {
                auto j = nlohmann::json::parse(index_.payload_of(key).value_or(""));
                auto plan = onlinedetail::plan_from_json(j.at("plan"));
                keep = !plan.tool_indices.empty();
                for (int idx : plan.tool_indices)
                    if (!registry.contains(idx)) keep = false;
            } catch (const nlohmann::json::exception&) {
                keep = false;
            }
            if (!keep) {
                index_.remove(key);
                ++evicted;
            }
        }
        return evicted;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return index_.size();
    }

    void clear() {
        std::lock_guard lock(mu_);
        index_.clear();
    }

    std::int64_t hit_count_of(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto payload = index_.payload_of(key);
        if (!payload) return -1;
        try {
            return nlohmann::json::parse(*payload).at("hit_count").get<std::int64_t>();
        } catch (const nlohmann::json::exception&) {
            return -1;
        }
    }

    void save(const std::string& path) const {
        std::lock_guard lock(mu_);
        index_.save(path);
    }

    void load(const std::string& path) {
        std::lock_guard lock(mu_);
        index_.load(path);
    }

private:
    mutable std::mutex mu_;
    VectorIndex index_;
};

// ---------------------------------------------------------------------------
// Plan generation.
// ---------------------------------------------------------------------------

struct PlanOutcome {
    std::optional<ToolPlan> plan;  // empty = NO_PLAN, fall back to baseline
    std::string raw_output;

    bool operator==(const PlanOutcome&) const = default;
};

// Prompts the planner with the same query/product context the trainer uses,
// then keeps only indices the registry knows, first occurrence wins.
inline PlanOutcome plan_query(const RequestLog& log, const ToolRegistry& registry,
                              ReasonerClient& planner, const DispatchConfig& config,
                              const RetryPolicy& retry = {},
                              const ImportanceTable& table = default_importance_table()) {
    PlanOutcome out;
    auto prompt = build_plan_prompt(log, registry, table);
    out.raw_output = generate_with_retry(planner, prompt, {log.query_image_ref},
                                         config.reasoner_max_tokens, retry);
    auto parsed = parse_plan_output(out.raw_output);
    ToolPlan plan;
    plan.thinking = parsed.thinking;
    std::set<int> seen;
    for (int idx : parsed.tool_indices)
        if (registry.contains(idx) && seen.insert(idx).second) plan.tool_indices.push_back(idx);
    if (!plan.tool_indices.empty()) out.plan = std::move(plan);
    return out;
}

// ---------------------------------------------------------------------------
// Execution DAG.
// ---------------------------------------------------------------------------

struct DagNode {
    int id = 0;  // position in the node list
    int tool_index = 0;
    bool is_fetch = false;
    std::vector<int> deps;  // node ids

    bool operator==(const DagNode&) const = default;
};

struct ExecutionDag {
    std::vector<DagNode> nodes;   // node id == vector position
    std::vector<int> topo_order;  // deterministic Kahn order
    std::vector<int> plan;        // original tool order

    bool operator==(const ExecutionDag&) const = default;
};

// Kahn's algorithm, always expanding the smallest ready id so the order is
// reproducible. Throws when edges form a cycle.
inline std::vector<int> topological_order(const std::vector<DagNode>& nodes) {
    std::vector<int> indegree(nodes.size(), 0);
    std::vector<std::vector<int>> successors(nodes.size());
    for (const auto& node : nodes) {
        for (int dep : node.deps) {
            if (dep < 0 || dep >= static_cast<int>(nodes.size()))
                throw std::invalid_argument("dag: dependency on unknown node " +
                                            std::to_string(dep));
            ++indegree[node.id];
            successors[dep].push_back(node.id);
        }
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (const auto& node : nodes)
        if (indegree[node.id] == 0) ready.push(node.id);
    std::vector<int> order;
    while (!ready.empty()) {
        int id = ready.top();
        ready.pop();
        order.push_back(id);
        for (int next : successors[id])
            if (--indegree[next] == 0) ready.push(next);
    }
    if (order.size() != nodes.size()) throw std::runtime_error("dag: cycle detected");
    return order;
}

// One node per planned tool, chained in plan order; tools that declare an
// external fetch get an extra indegree-0 fetch node feeding them.
inline ExecutionDag build_dag(const ToolPlan& plan, const ToolRegistry& registry) {
    if (plan.tool_indices.empty()) throw std::invalid_argument("dag: empty plan");
    std::set<int> seen;
    for (int idx : plan.tool_indices) {
        if (!registry.contains(idx))
            throw std::invalid_argument("dag: plan references unknown tool " +
                                        std::to_string(idx));
        if (!seen.insert(idx).second)
            throw std::invalid_argument("dag: duplicate tool " + std::to_string(idx) +
                                        " in plan");
    }

    ExecutionDag dag;
    dag.plan = plan.tool_indices;
    int previous_tool_node = -1;
    for (int idx : plan.tool_indices) {
        int fetch_id = -1;
        if (registry.at(idx).fetch_external) {
            fetch_id = static_cast<int>(dag.nodes.size());
            dag.nodes.push_back({fetch_id, idx, true, {}});
        }
        int tool_id = static_cast<int>(dag.nodes.size());
        DagNode node{tool_id, idx, false, {}};
        if (previous_tool_node >= 0) node.deps.push_back(previous_tool_node);
        if (fetch_id >= 0) node.deps.push_back(fetch_id);
        dag.nodes.push_back(std::move(node));
        previous_tool_node = tool_id;
    }
    dag.topo_order = topological_order(dag.nodes);
    return dag;
}

struct ExecuteOptions {
    std::int64_t timeout_ms = 2000;
    // Run fetch nodes inline at their topological position instead of
    // overlapping the chain; exists to measure what concurrency buys.
    bool force_serial = false;
};

namespace onlinedetail {

struct FetchResult {
    std::vector<Product> items;
    std::int64_t latency_ms = 0;
};

inline std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
}

}  // namespace onlinedetail

// Walks the DAG in topological order. Chain nodes run one at a time; fetch
// nodes run concurrently with the chain unless forced serial. A node whose
// dependency did not succeed is skipped; a node over the time budget is
// failed after the fact (execution is not preempted). Returned outcomes
// follow plan order.
inline std::vector<ToolOutcome> execute_dag(const ExecutionDag& dag, ToolContext& ctx,
                                            ToolExecutor& executor,
                                            const ExecuteOptions& options = {}) {
    if (options.timeout_ms <= 0) throw std::invalid_argument("execute: timeout must be positive");
    const auto& nodes = dag.nodes;
    std::vector<OutcomeStatus> status(nodes.size(), OutcomeStatus::skipped);
    std::map<int, ToolOutcome> outcome_by_node;

    auto info_of = [&ctx](int tool_index) {
        auto it = ctx.info.find(tool_index);
        return it == ctx.info.end() ? std::string() : it->second;
    };

    // All fetch nodes start immediately — they depend on nothing and their
    // inputs are snapshotted here, so chain edits never race with them.
    std::map<int, std::future<onlinedetail::FetchResult>> fetch_futures;
    if (!options.force_serial) {
        for (const auto& node : nodes) {
            if (!node.is_fetch) continue;
            fetch_futures.emplace(
                node.id,
                std::async(std::launch::async,
                           [&executor, tool_index = node.tool_index, info = info_of(node.tool_index),
                            log = ctx.log]() -> onlinedetail::FetchResult {
                               onlinedetail::FetchResult result;
                               auto start = std::chrono::steady_clock::now();
                               result.items =
                                   executor.prefetch(tool_index, info, log ? *log : RequestLog{});
                               result.latency_ms = onlinedetail::elapsed_ms(start);
                               return result;
                           }));
        }
    }

    for (int id : dag.topo_order) {
        const auto& node = nodes[id];

        int bad_dep = -1;
        for (int dep : node.deps) {
            if (status[dep] != OutcomeStatus::success) {
                bad_dep = dep;
                break;
            }
        }
        if (bad_dep >= 0) {
            status[id] = OutcomeStatus::skipped;
            if (!node.is_fetch) {
                ToolOutcome out;
                out.tool_index = node.tool_index;
                out.status = OutcomeStatus::skipped;
                out.reason = std::string(nodes[bad_dep].is_fetch ? "fetch for tool " : "tool ") +
                             std::to_string(nodes[bad_dep].tool_index) + " " +
                             std::string(to_string(status[bad_dep]));
                outcome_by_node[id] = out;
                ctx.prior.push_back(out);
            }
            continue;
        }

        if (node.is_fetch) {
            onlinedetail::FetchResult result;
            std::string reason;
            try {
                if (options.force_serial) {
                    auto start = std::chrono::steady_clock::now();
                    result.items = executor.prefetch(node.tool_index, info_of(node.tool_index),
                                                     ctx.log ? *ctx.log : RequestLog{});
                    result.latency_ms = onlinedetail::elapsed_ms(start);
                } else {
                    result = fetch_futures.at(id).get();
                }
            } catch (const std::exception& e) {
                reason = e.what();
            }
            if (reason.empty() && result.latency_ms > options.timeout_ms)
                reason = "fetch timed out after " + std::to_string(result.latency_ms) +
                         " ms (budget " + std::to_string(options.timeout_ms) + " ms)";
            if (!reason.empty()) {
                status[id] = OutcomeStatus::failed;
            } else {
                status[id] = OutcomeStatus::success;
                ctx.fetch_items[node.tool_index] = std::move(result.items);
            }
            continue;
        }

        ToolOutcome out;
        auto start = std::chrono::steady_clock::now();
        try {
            out = executor.run(node.tool_index, ctx);
        } catch (const std::exception& e) {
            out = ToolOutcome{};
            out.status = OutcomeStatus::failed;
            out.reason = std::string("tool threw: ") + e.what();
        }
        out.tool_index = node.tool_index;
        out.latency_ms = onlinedetail::elapsed_ms(start);
        if (out.latency_ms > options.timeout_ms) {
            out.status = OutcomeStatus::failed;
            out.reason = "timed out after " + std::to_string(out.latency_ms) + " ms (budget " +
                         std::to_string(options.timeout_ms) + " ms)";
        }
        status[id] = out.status;
        outcome_by_node[id] = out;
        ctx.prior.push_back(out);
    }

    std::vector<ToolOutcome> report;
    report.reserve(dag.plan.size());
    for (int planned : dag.plan) {
        for (const auto& node : nodes) {
            if (!node.is_fetch && node.tool_index == planned) {
                report.push_back(outcome_by_node.at(node.id));
                break;
            }
        }
    }
    return report;
}

}  // namespace revision
