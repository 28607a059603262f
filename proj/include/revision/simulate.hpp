#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "revision/dispatch.hpp"

namespace revision {

// Counts only — latencies are wall-clock and would break byte-identical
// replay reports. The report window comes from the input logs' timestamps.
struct SimulationReport {
    std::size_t n_queries = 0;
    std::size_t baseline_clicks = 0;
    std::size_t treated_clicks = 0;
    double baseline_no_click_rate = 0.0;
    double treated_no_click_rate = 0.0;
    std::size_t triggered = 0;
    std::size_t cue_denied = 0;
    std::size_t cache_hits = 0;
    std::size_t planner_plans = 0;
    std::size_t no_plan = 0;
    std::size_t plan_failures = 0;
    std::size_t queries_with_success = 0;
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;

    bool operator==(const SimulationReport&) const = default;
};

inline void to_json(nlohmann::json& j, const SimulationReport& r) {
    j = nlohmann::json{{"n_queries", r.n_queries},
                       {"baseline_clicks", r.baseline_clicks},
                       {"treated_clicks", r.treated_clicks},
                       {"baseline_no_click_rate", r.baseline_no_click_rate},
                       {"treated_no_click_rate", r.treated_no_click_rate},
                       {"triggered", r.triggered},
                       {"cue_denied", r.cue_denied},
                       {"cache_hits", r.cache_hits},
                       {"planner_plans", r.planner_plans},
                       {"no_plan", r.no_plan},
                       {"plan_failures", r.plan_failures},
                       {"queries_with_success", r.queries_with_success},
                       {"window_start", r.window_start},
                       {"window_end", r.window_end}};
}

inline void from_json(const nlohmann::json& j, SimulationReport& r) {
    j.at("n_queries").get_to(r.n_queries);
    j.at("baseline_clicks").get_to(r.baseline_clicks);
    j.at("treated_clicks").get_to(r.treated_clicks);
    j.at("baseline_no_click_rate").get_to(r.baseline_no_click_rate);
    j.at("treated_no_click_rate").get_to(r.treated_no_click_rate);
    j.at("triggered").get_to(r.triggered);
    j.at("cue_denied").get_to(r.cue_denied);
    j.at("cache_hits").get_to(r.cache_hits);
    j.at("planner_plans").get_to(r.planner_plans);
    j.at("no_plan").get_to(r.no_plan);
    j.at("plan_failures").get_to(r.plan_failures);
    j.at("queries_with_success").get_to(r.queries_with_success);
    j.at("window_start").get_to(r.window_start);
    j.at("window_end").get_to(r.window_end);
}

struct SimulationRun {
    SimulationReport report;
    std::vector<DispatchResult> results;  // one per query, corpus order
};

// Replays the corpus through one dispatcher. The baseline arm is the corpus's
// own click labels; the treated arm flips a no-click to a click when at least
// one tool succeeded and the per-query hash noise lands under click_uplift —
// deterministic, so two identical runs report identical bytes.
inline SimulationRun run_simulation(const std::vector<RequestLog>& corpus, Dispatcher& dispatcher,
                                    double click_uplift = 0.25) {
    if (click_uplift < 0.0 || click_uplift > 1.0)
        throw std::invalid_argument("simulation: click_uplift outside [0,1]");
    SimulationRun run;
    auto& rep = run.report;
    rep.n_queries = corpus.size();
    bool first = true;
    for (const auto& log : corpus) {
        if (first) {
            rep.window_start = rep.window_end = log.timestamp;
            first = false;
        } else {
            rep.window_start = std::min(rep.window_start, log.timestamp);
            rep.window_end = std::max(rep.window_end, log.timestamp);
        }
        if (log.clicked) ++rep.baseline_clicks;

        auto result = dispatcher.dispatch(log);
        if (result.triggered) ++rep.triggered;
        if (result.triggered && !result.cue_granted) ++rep.cue_denied;
        if (result.cache_hit) ++rep.cache_hits;
        if (result.plan_source == "planner") ++rep.planner_plans;
        if (result.degrade_reason == "planner returned no usable plan") ++rep.no_plan;
        if (result.degrade_reason.rfind("planner unavailable", 0) == 0) ++rep.plan_failures;

        const bool any_success =
            std::any_of(result.outcomes.begin(), result.outcomes.end(),
                        [](const ToolOutcome& o) { return o.status == OutcomeStatus::success; });
        if (any_success) ++rep.queries_with_success;
        const bool treated_click =
            log.clicked ||
            (any_success && hash_to_unit(fnv1a64("uplift:" + log.query_id)) < click_uplift);
        if (treated_click) ++rep.treated_clicks;
        run.results.push_back(std::move(result));
    }
    if (rep.n_queries > 0) {
        const auto n = static_cast<double>(rep.n_queries);
        rep.baseline_no_click_rate = 1.0 - static_cast<double>(rep.baseline_clicks) / n;
        rep.treated_no_click_rate = 1.0 - static_cast<double>(rep.treated_clicks) / n;
    }
    return run;
}

// Canonical report rendering: nlohmann object keys are ordered, so the same
// report always prints the same bytes.
inline std::string render_report(const SimulationReport& report) {
    return nlohmann::json(report).dump(2) + "\n";
}

}  // namespace revision
