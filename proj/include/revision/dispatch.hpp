#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "revision/embed.hpp"
#include "revision/jsonl.hpp"
#include "revision/online.hpp"
#include "revision/registry.hpp"
#include "revision/tools.hpp"

namespace revision {

struct DispatchResult {
    std::string query_id;
    bool triggered = false;
    bool cue_granted = false;
    bool cache_hit = false;
    std::optional<ToolPlan> plan;
    std::string plan_source = "none";  // cache | planner | none
    std::vector<ToolOutcome> outcomes;
    std::vector<Product> final_products;
    std::string degrade_reason;  // why the response fell back to baseline

    bool operator==(const DispatchResult&) const = default;
};

inline void to_json(nlohmann::json& j, const DispatchResult& r) {
    j = nlohmann::json{{"query_id", r.query_id},
                       {"triggered", r.triggered},
                       {"cue_granted", r.cue_granted},
                       {"cache_hit", r.cache_hit},
                       {"plan_source", r.plan_source},
                       {"outcomes", r.outcomes},
                       {"final_products", r.final_products},
                       {"degrade_reason", r.degrade_reason}};
    if (r.plan)
        j["plan"] = *r.plan;
    else
        j["plan"] = nullptr;
}

inline void from_json(const nlohmann::json& j, DispatchResult& r) {
    j.at("query_id").get_to(r.query_id);
    j.at("triggered").get_to(r.triggered);
    j.at("cue_granted").get_to(r.cue_granted);
    j.at("cache_hit").get_to(r.cache_hit);
    j.at("plan_source").get_to(r.plan_source);
    j.at("outcomes").get_to(r.outcomes);
    j.at("final_products").get_to(r.final_products);
    j.at("degrade_reason").get_to(r.degrade_reason);
    r.plan.reset();
    if (j.contains("plan") && !j.at("plan").is_null()) r.plan = j.at("plan").get<ToolPlan>();
}

// Flat named counters; every consumer (HTTP metrics, tests) reads the same
// map. Values are doubles so latency totals and counts share one table.
class Metrics {
public:
    void bump(const std::string& key, double v = 1.0) {
        std::lock_guard lock(mu_);
        values_[key] += v;
    }

    double value(const std::string& key) const {
        std::lock_guard lock(mu_);
        auto it = values_.find(key);
        return it == values_.end() ? 0.0 : it->second;
    }

    std::map<std::string, double> snapshot() const {
        std::lock_guard lock(mu_);
        return values_;
    }

    void reset() {
        std::lock_guard lock(mu_);
        values_.clear();
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, double> values_;
};

// Append-only dispatch trail: one JSON line per handled query, always kept in
// memory, optionally mirrored to a file (with the usual version header).
// Counters must reconcile with these lines exactly; tests recount them.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(const std::string& path) { open(path); }

    void open(const std::string& path) {
        std::lock_guard lock(mu_);
        bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
        out_.open(path, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open audit log: " + path);
        if (fresh) out_ << jsonl_header("audit").dump() << '\n';
        out_.flush();
    }

    void append(const nlohmann::json& line) {
        std::lock_guard lock(mu_);
        lines_.push_back(line.dump());
        if (out_.is_open()) {
            out_ << lines_.back() << '\n';
            out_.flush();
        }
    }

    std::vector<std::string> lines() const {
        std::lock_guard lock(mu_);
        return lines_;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return lines_.size();
    }

private:
    mutable std::mutex mu_;
    std::vector<std::string> lines_;
    std::ofstream out_;
};

// Info payload a tool gets when the plan supplies none: derived from the
// query's products, matching how plan-time signals would have populated it.
inline std::optional<std::string> default_tool_info(const RegistryEntry& entry,
                                                    const std::vector<Product>& products) {
    switch (entry.component) {
        case ToolComponent::display_adjust: {
            std::map<std::string, std::size_t> freq;
            for (const auto& p : products)
                for (const auto& [key, value] : p.metadata) ++freq[key];
            // two most frequent metadata keys, ties lexical
            std::vector<std::pair<std::string, std::size_t>> order(freq.begin(), freq.end());
            std::stable_sort(order.begin(), order.end(),
                             [](const auto& a, const auto& b) { return a.second > b.second; });
            if (order.empty()) return std::nullopt;
            std::string info = order[0].first;
            if (order.size() > 1) info += ", " + order[1].first;
            return info;
        }
        case ToolComponent::summarize:
            return "price";
        case ToolComponent::external_search: {
            auto terms = tooldetail::top_title_terms(products, 1);
            if (terms.empty()) return std::nullopt;
            return terms.front();
        }
        case ToolComponent::label_targets:
            return std::nullopt;  // no safe default filter; tool skips without Info
        case ToolComponent::derived:
            return std::nullopt;  // annotate-only, reads no Info
    }
    return std::nullopt;
}

// One query through the full online path: relevance trigger, per-user cue
// budget, plan cache, planner fallback, DAG execution. Every step that bails
// leaves the baseline product list untouched and records why.
class Dispatcher {
public:
    Dispatcher(const ToolRegistry& registry, const Embedder& embedder, ReasonerClient& planner,
               ToolExecutor& executor, CounterStore& counters, DispatchConfig config = {},
               RetryPolicy retry = {})
        : registry_(registry),
          embedder_(embedder),
          planner_(planner),
          executor_(executor),
          counters_(counters),
          config_(config),
          retry_(retry) {
        validate(config_);
    }

    DispatchResult dispatch(const RequestLog& log) {
        metrics_.bump("requests");
        DispatchResult result;
        result.query_id = log.query_id;
        result.final_products = log.products;  // baseline passthrough unless tools run

        result.triggered = should_trigger(log, config_);
        if (!result.triggered) return finish(result);
        metrics_.bump("triggers");

        result.cue_granted =
            frequency_gate(log.user_id, utc_day(log.timestamp), counters_, config_.daily_cue_cap);
        if (!result.cue_granted) {
            metrics_.bump("cue_denied");
            result.degrade_reason = "no cue budget";
            return finish(result);
        }

        const auto embedding = embedder_.embed_image(log.query_image_ref);
        const std::string key = "img:" + std::to_string(fnv1a64(log.query_image_ref));
        if (auto hit = cache_.lookup(embedding, config_.cache_threshold)) {
            result.cache_hit = true;
            result.plan = hit->plan;
            result.plan_source = "cache";
            metrics_.bump("cache_hits");
        } else {
            metrics_.bump("cache_misses");
            PlanOutcome planned;
            try {
                planned = plan_query(log, registry_, planner_, config_, retry_);
            } catch (const TransportError& e) {
                metrics_.bump("plan_failures");
                result.degrade_reason = std::string("planner unavailable: ") + e.what();
                return finish(result);
            }
            if (!planned.plan) {
                metrics_.bump("no_plan");
                result.degrade_reason = "planner returned no usable plan";
                return finish(result);
            }
            result.plan = *planned.plan;
            result.plan_source = "planner";
            metrics_.bump("plans");
            cache_.store(key, embedding, *result.plan, log.timestamp);
        }

        ExecutionDag dag;
        try {
            dag = build_dag(*result.plan, registry_);
        } catch (const std::exception& e) {
            // Stale cached plans can outlive a registry change; degrade, don't crash.
            metrics_.bump("plan_invalid");
            result.degrade_reason = std::string("plan rejected: ") + e.what();
            return finish(result);
        }

        auto ctx = make_context(log, registry_);
        for (int tool : result.plan->tool_indices) {
            if (!registry_.contains(tool)) continue;
            if (auto info = default_tool_info(registry_.at(tool), log.products))
                ctx.info[tool] = *info;
        }
        result.outcomes = execute_dag(dag, ctx, executor_, {config_.tool_timeout_ms, false});
        result.final_products = std::move(ctx.working);
        for (const auto& o : result.outcomes) {
            if (o.status == OutcomeStatus::skipped) continue;
            metrics_.bump("tool_runs." + std::to_string(o.tool_index));
            metrics_.bump("tool_latency_ms." + std::to_string(o.tool_index),
                          static_cast<double>(o.latency_ms));
        }
        return finish(result);
    }

    QueryCache& cache() { return cache_; }
    Metrics& metrics() { return metrics_; }
    AuditLog& audit() { return audit_; }
    const DispatchConfig& config() const { return config_; }

private:
    DispatchResult finish(DispatchResult& result) {
        nlohmann::json statuses = nlohmann::json::array();
        for (const auto& o : result.outcomes) statuses.push_back(std::string(to_string(o.status)));
        audit_.append({{"query_id", result.query_id},
                       {"triggered", result.triggered},
                       {"cue_granted", result.cue_granted},
                       {"cache_hit", result.cache_hit},
                       {"plan_source", result.plan_source},
                       {"degrade_reason", result.degrade_reason},
                       {"statuses", statuses}});
        return std::move(result);
    }

    const ToolRegistry& registry_;
    const Embedder& embedder_;
    ReasonerClient& planner_;
    ToolExecutor& executor_;
    CounterStore& counters_;
    DispatchConfig config_;
    RetryPolicy retry_;
    QueryCache cache_;
    Metrics metrics_;
    AuditLog audit_;
};

}  // namespace revision
