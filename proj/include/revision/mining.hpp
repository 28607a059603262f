#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "revision/clustering.hpp"
#include "revision/core.hpp"
#include "revision/embed.hpp"
#include "revision/prompt.hpp"
#include "revision/reasoner.hpp"
#include "revision/registry.hpp"

namespace revision {

struct RuleHint {
    std::string id;
    std::string condition_description;
    std::string suggestion_template;

    bool operator==(const RuleHint&) const = default;
};

inline void validate(const std::vector<RuleHint>& rules) {
    std::set<std::string> ids;
    for (const auto& r : rules) {
        if (trim_view(r.id).empty()) throw std::invalid_argument("rule hint with empty id");
        if (!ids.insert(r.id).second)
            throw std::invalid_argument("duplicate rule hint id '" + r.id + "'");
    }
}

inline std::string rules_block(const std::vector<RuleHint>& rules) {
    if (rules.empty()) return "(none)";
    std::string out;
    for (const auto& r : rules) {
        if (!out.empty()) out += '\n';
        out += "- id: " + r.id + " | condition: " + r.condition_description +
               " | suggestion: " + r.suggestion_template;
    }
    return out;
}

struct MiningOptions {
    double sample_rate = 1.0;
    int max_workers = 4;
    RetryPolicy retry{};
    int reasoner_max_tokens = 1024;
    std::string visual_template{kDefaultVisualTemplate};
    std::string reasoning_template{kDefaultReasoningTemplate};
    ImportanceTable importance = default_importance_table();
    std::size_t min_actions_per_tool = 1;
};

struct MiningBatchReport {
    std::size_t total_sampled = 0;
    std::size_t signals_produced = 0;
    std::size_t parse_failures = 0;
    std::map<std::string, std::size_t> hierarchy_summary;
    std::int64_t started = 0;   // earliest selected log timestamp
    std::int64_t finished = 0;  // latest selected log timestamp

    bool operator==(const MiningBatchReport&) const = default;
};

// Deterministic sampling: a no-click log passes iff the hash of its query id,
// mapped to [0,1), lands below the rate. Stable across runs and machines.
inline std::vector<RequestLog> select_no_click(const std::vector<RequestLog>& logs,
                                               double sample_rate) {
    if (!(sample_rate > 0.0) || sample_rate > 1.0)
        throw std::invalid_argument("sample_rate must be in (0,1]");
    std::vector<RequestLog> out;
    for (const auto& log : logs) {
        if (log.clicked) continue;
        if (hash_to_unit(fnv1a64(log.query_id)) < sample_rate) out.push_back(log);
    }
    return out;
}

// Two-stage analysis of one no-click request. Stage 1 shows the visual model
// the query plus at most 12 product images; stage 2 hands the text reasoner
// the visual analysis, ranked metadata, and operator rules, and parses the
// resulting `Action -> Info` lines.
inline OptimizationSignal analyze_query(const RequestLog& log, ReasonerClient& visual,
                                        ReasonerClient& reasoning,
                                        const std::vector<RuleHint>& rules,
                                        const MiningOptions& options = {}) {
    std::vector<std::string> image_refs;
    for (const auto& p : log.products) {
        if (image_refs.size() >= kMaxProductImages) break;
        image_refs.push_back(p.image_ref);
    }

    std::string visual_prompt = render_template(
        options.visual_template, {{"query_image_ref", log.query_image_ref},
                                  {"product_count", std::to_string(image_refs.size())}});
    std::string visual_out = generate_with_retry(visual, visual_prompt, image_refs,
                                                 options.reasoner_max_tokens, options.retry);

    std::string reasoning_prompt = render_template(
        options.reasoning_template,
        {{"visual_analysis", visual_out},
         {"metadata_block",
          build_textual_context(log.products, kMaxProductImages, options.importance)},
         {"rules_block", rules_block(rules)}});
    std::string raw = generate_with_retry(reasoning, reasoning_prompt, {},
                                          options.reasoner_max_tokens, options.retry);

    OptimizationSignal signal;
    signal.query_id = log.query_id;
    signal.items = parse_action_info(raw);
    signal.thinking = raw;
    return signal;
}

struct BatchResult {
    ClusterHierarchy hierarchy;
    std::vector<OptimizationSignal> signals;
    MiningBatchReport report;
};

// Full offline pass: sample, fan the per-log analysis out to a bounded worker
// pool, re-collect in input order, cluster, summarize. Transport failures and
// unparseable outputs are counted, never fatal.
inline BatchResult run_mining_batch(const std::vector<RequestLog>& logs, ReasonerClient& visual,
                                    ReasonerClient& reasoning, const std::vector<RuleHint>& rules,
                                    const CategoryOntology& ontology, const ClusterParams& params,
                                    const Embedder& emb, const MiningOptions& options = {},
                                    const std::optional<ClusterHierarchy>& prior = std::nullopt) {
    validate(rules);
    auto selected = select_no_click(logs, options.sample_rate);

    BatchResult out;
    out.report.total_sampled = selected.size();
    for (const auto& log : selected) {
        if (out.report.started == 0 || log.timestamp < out.report.started)
            out.report.started = log.timestamp;
        if (log.timestamp > out.report.finished) out.report.finished = log.timestamp;
    }

    std::vector<std::optional<OptimizationSignal>> results(selected.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= selected.size()) return;
            try {
                results[i] = analyze_query(selected[i], visual, reasoning, rules, options);
            } catch (const TransportError&) {
                // counted below as a failure for this log
            } catch (...) {
                std::lock_guard lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                return;
            }
        }
    };

    std::size_t n_workers =
        std::min<std::size_t>(std::max(1, options.max_workers), std::max<std::size_t>(1, selected.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (fatal) std::rethrow_exception(fatal);

    std::vector<std::string> actions;
    for (auto& r : results) {
        if (!r || r->items.empty()) {
            ++out.report.parse_failures;
            continue;
        }
        ++out.report.signals_produced;
        for (const auto& item : r->items) actions.push_back(item.action);
        out.signals.push_back(std::move(*r));
    }

    out.hierarchy = prior ? incremental_update(*prior, actions, ontology, params, emb)
                          : build_hierarchy(actions, ontology, params, emb);

    for (const auto& [main, subs] : out.hierarchy.assignments)
        for (const auto& [sub, bucket] : subs)
            out.report.hierarchy_summary[main + "/" + sub] = bucket.size();
    for (std::size_t i = 0; i < out.hierarchy.unassigned_clusters.size(); ++i)
        out.report.hierarchy_summary["cluster:" + std::to_string(i)] =
            out.hierarchy.unassigned_clusters[i].size();
    out.report.hierarchy_summary["noise"] = out.hierarchy.noise.size();
    return out;
}

// Extends a seed registry with one entry per qualifying subcategory bucket:
// at least min_actions mined actions, not the overflow bucket, and not
// already bound by a seed. New entries inherit the component kind and fetch
// flag of a seed sharing their main category (extending a family keeps its
// behavior); unmatched mains come in as inert derived tools. Everything is
// renumbered 1..M, seeds first.
inline std::vector<RegistryEntry> derive_tool_list(const ClusterHierarchy& hierarchy,
                                                   const std::vector<RegistryEntry>& seeds,
                                                   std::size_t min_actions = 1) {
    std::set<std::pair<std::string, std::string>> bound;
    std::map<std::string, std::pair<ToolComponent, bool>> family;
    for (const auto& s : seeds) {
        if (!s.main_category.empty() || !s.subcategory.empty())
            bound.insert({s.main_category, s.subcategory});
        if (!s.main_category.empty() && !family.count(s.main_category))
            family[s.main_category] = {s.component, s.fetch_external};
    }

    std::vector<RegistryEntry> out = seeds;
    for (const auto& [main, subs] : hierarchy.assignments) {
        for (const auto& [sub, actions] : subs) {
            if (sub == kOtherBucket) continue;
            if (actions.size() < min_actions) continue;
            if (bound.count({main, sub})) continue;
            RegistryEntry e;
            e.spec.title = main + "/" + sub;
            std::string sample = actions.front().substr(0, 80);
            e.spec.description = "Covers " + std::to_string(actions.size()) + " mined '" + sub +
                                 "' action(s) in the '" + main + "' family, e.g. \"" + sample +
                                 "\".";
            e.main_category = main;
            e.subcategory = sub;
            if (auto it = family.find(main); it != family.end()) {
                e.component = it->second.first;
                e.fetch_external = it->second.second;
            }
            out.push_back(std::move(e));
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].spec.index = static_cast<int>(i) + 1;
    return out;
}

}  // namespace revision
