#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "revision/clustering.hpp"
#include "revision/core.hpp"
#include "revision/mining.hpp"
#include "revision/registry.hpp"
#include "revision/tools.hpp"
#include "revision/training.hpp"

namespace revision {

// JSON field names track the struct fields one-to-one so files and code never
// drift apart.

inline void to_json(nlohmann::json& j, const Product& p) {
    j = nlohmann::json{{"id", p.id},
                       {"title", p.title},
                       {"price", p.price},
                       {"quantity", p.quantity},
                       {"similarity", p.similarity},
                       {"image_ref", p.image_ref},
                       {"metadata", p.metadata}};
}

inline void from_json(const nlohmann::json& j, Product& p) {
    j.at("id").get_to(p.id);
    j.at("title").get_to(p.title);
    j.at("price").get_to(p.price);
    j.at("quantity").get_to(p.quantity);
    j.at("similarity").get_to(p.similarity);
    j.at("image_ref").get_to(p.image_ref);
    p.metadata.clear();
    if (j.contains("metadata")) j.at("metadata").get_to(p.metadata);
}

inline void to_json(nlohmann::json& j, const RequestLog& log) {
    j = nlohmann::json{{"query_id", log.query_id},
                       {"query_image_ref", log.query_image_ref},
                       {"products", log.products},
                       {"clicked", log.clicked},
                       {"timestamp", log.timestamp},
                       {"user_id", log.user_id}};
}

inline void from_json(const nlohmann::json& j, RequestLog& log) {
    j.at("query_id").get_to(log.query_id);
    j.at("query_image_ref").get_to(log.query_image_ref);
    // A live dispatch request has no click outcome yet and may carry zero
    // retrieved products; only archived logs are guaranteed both.
    log.products = j.value("products", std::vector<Product>{});
    log.clicked = j.value("clicked", false);
    j.at("timestamp").get_to(log.timestamp);
    j.at("user_id").get_to(log.user_id);
}

inline void to_json(nlohmann::json& j, const ActionInfo& item) {
    j = nlohmann::json{{"action", item.action}, {"info", item.info}};
}

inline void from_json(const nlohmann::json& j, ActionInfo& item) {
    j.at("action").get_to(item.action);
    j.at("info").get_to(item.info);
}

inline void to_json(nlohmann::json& j, const OptimizationSignal& signal) {
    j = nlohmann::json{
        {"query_id", signal.query_id}, {"items", signal.items}, {"thinking", signal.thinking}};
}

inline void from_json(const nlohmann::json& j, OptimizationSignal& signal) {
    j.at("query_id").get_to(signal.query_id);
    j.at("items").get_to(signal.items);
    j.at("thinking").get_to(signal.thinking);
}

inline void to_json(nlohmann::json& j, const ToolPlan& plan) {
    j = nlohmann::json{{"tool_indices", plan.tool_indices}};
    if (plan.thinking)
        j["thinking"] = *plan.thinking;
    else
        j["thinking"] = nullptr;
}

inline void from_json(const nlohmann::json& j, ToolPlan& plan) {
    j.at("tool_indices").get_to(plan.tool_indices);
    plan.thinking.reset();
    if (j.contains("thinking") && !j.at("thinking").is_null())
        plan.thinking = j.at("thinking").get<std::string>();
}

inline void to_json(nlohmann::json& j, const ToolComponentSpec& spec) {
    j = nlohmann::json{
        {"index", spec.index}, {"title", spec.title}, {"description", spec.description}};
}

inline void from_json(const nlohmann::json& j, ToolComponentSpec& spec) {
    j.at("index").get_to(spec.index);
    j.at("title").get_to(spec.title);
    j.at("description").get_to(spec.description);
}

inline void to_json(nlohmann::json& j, const RegistryEntry& entry) {
    j = nlohmann::json{{"spec", entry.spec},
                       {"fetch_external", entry.fetch_external},
                       {"main_category", entry.main_category},
                       {"subcategory", entry.subcategory},
                       {"component", to_string(entry.component)}};
}

inline void from_json(const nlohmann::json& j, RegistryEntry& entry) {
    j.at("spec").get_to(entry.spec);
    j.at("fetch_external").get_to(entry.fetch_external);
    j.at("main_category").get_to(entry.main_category);
    j.at("subcategory").get_to(entry.subcategory);
    entry.component = tool_component_from(j.at("component").get<std::string>());
}

inline void to_json(nlohmann::json& j, const ToolOutcome& outcome) {
    j = nlohmann::json{{"tool_index", outcome.tool_index},
                       {"status", std::string(to_string(outcome.status))},
                       {"payload", outcome.payload},
                       {"latency_ms", outcome.latency_ms},
                       {"reason", outcome.reason}};
}

inline void from_json(const nlohmann::json& j, ToolOutcome& outcome) {
    j.at("tool_index").get_to(outcome.tool_index);
    auto status = j.at("status").get<std::string>();
    if (status == "success")
        outcome.status = OutcomeStatus::success;
    else if (status == "skipped")
        outcome.status = OutcomeStatus::skipped;
    else if (status == "failed")
        outcome.status = OutcomeStatus::failed;
    else
        throw std::invalid_argument("unknown outcome status: " + status);
    j.at("payload").get_to(outcome.payload);
    j.at("latency_ms").get_to(outcome.latency_ms);
    j.at("reason").get_to(outcome.reason);
}

inline void to_json(nlohmann::json& j, const TrainingSample& s) {
    j = nlohmann::json{{"sample_id", s.sample_id},
                       {"query_image_ref", s.query_image_ref},
                       {"product_image_refs", s.product_image_refs},
                       {"textual_context", s.textual_context},
                       {"target_thinking", s.target_thinking},
                       {"target_labels", s.target_labels}};
}

inline void from_json(const nlohmann::json& j, TrainingSample& s) {
    j.at("sample_id").get_to(s.sample_id);
    j.at("query_image_ref").get_to(s.query_image_ref);
    j.at("product_image_refs").get_to(s.product_image_refs);
    j.at("textual_context").get_to(s.textual_context);
    j.at("target_thinking").get_to(s.target_thinking);
    j.at("target_labels").get_to(s.target_labels);
}

inline void to_json(nlohmann::json& j, const RlSample& s) {
    j = nlohmann::json{{"sample_id", s.sample_id},
                       {"candidates", s.candidates},
                       {"rewards", s.rewards},
                       {"advantages", s.advantages}};
}

inline void from_json(const nlohmann::json& j, RlSample& s) {
    j.at("sample_id").get_to(s.sample_id);
    j.at("candidates").get_to(s.candidates);
    j.at("rewards").get_to(s.rewards);
    j.at("advantages").get_to(s.advantages);
}

inline void to_json(nlohmann::json& j, const RuleHint& hint) {
    j = nlohmann::json{{"id", hint.id},
                       {"condition_description", hint.condition_description},
                       {"suggestion_template", hint.suggestion_template}};
}

inline void from_json(const nlohmann::json& j, RuleHint& hint) {
    j.at("id").get_to(hint.id);
    j.at("condition_description").get_to(hint.condition_description);
    j.at("suggestion_template").get_to(hint.suggestion_template);
}

inline void to_json(nlohmann::json& j, const MiningBatchReport& report) {
    j = nlohmann::json{{"total_sampled", report.total_sampled},
                       {"signals_produced", report.signals_produced},
                       {"parse_failures", report.parse_failures},
                       {"hierarchy_summary", report.hierarchy_summary},
                       {"started", report.started},
                       {"finished", report.finished}};
}

inline void from_json(const nlohmann::json& j, MiningBatchReport& report) {
    j.at("total_sampled").get_to(report.total_sampled);
    j.at("signals_produced").get_to(report.signals_produced);
    j.at("parse_failures").get_to(report.parse_failures);
    j.at("hierarchy_summary").get_to(report.hierarchy_summary);
    j.at("started").get_to(report.started);
    j.at("finished").get_to(report.finished);
}

// One flat row per clustered action so hierarchy files diff line-by-line.
struct HierarchyRow {
    std::string level;   // assigned | cluster | noise
    std::string bucket;  // "main/sub" | "cluster:<i>" | "noise"
    std::string action;

    bool operator==(const HierarchyRow&) const = default;
};

inline void to_json(nlohmann::json& j, const HierarchyRow& row) {
    j = nlohmann::json{{"level", row.level}, {"bucket", row.bucket}, {"action", row.action}};
}

inline void from_json(const nlohmann::json& j, HierarchyRow& row) {
    j.at("level").get_to(row.level);
    j.at("bucket").get_to(row.bucket);
    j.at("action").get_to(row.action);
}

inline std::vector<HierarchyRow> hierarchy_rows(const ClusterHierarchy& hierarchy) {
    std::vector<HierarchyRow> rows;
    for (const auto& [main, subs] : hierarchy.assignments)
        for (const auto& [sub, actions] : subs)
            for (const auto& action : actions) rows.push_back({"assigned", main + "/" + sub, action});
    for (std::size_t i = 0; i < hierarchy.unassigned_clusters.size(); ++i)
        for (const auto& action : hierarchy.unassigned_clusters[i])
            rows.push_back({"cluster", "cluster:" + std::to_string(i), action});
    for (const auto& action : hierarchy.noise) rows.push_back({"noise", "noise", action});
    return rows;
}

// Rebuilds a hierarchy from its rows. The ontology recreates the empty
// buckets the flat file has no lines for.
inline ClusterHierarchy hierarchy_from_rows(const std::vector<HierarchyRow>& rows,
                                            const CategoryOntology& ontology) {
    ClusterHierarchy h;
    detail::materialize_buckets(h, ontology);
    for (const auto& row : rows) {
        if (row.level == "assigned") {
            auto slash = row.bucket.find('/');
            if (slash == std::string::npos)
                throw std::invalid_argument("hierarchy row: malformed bucket " + row.bucket);
            auto main = row.bucket.substr(0, slash);
            auto sub = row.bucket.substr(slash + 1);
            auto main_it = h.assignments.find(main);
            if (main_it == h.assignments.end())
                throw std::invalid_argument("hierarchy row: unknown main " + main);
            main_it->second[sub].push_back(row.action);
        } else if (row.level == "cluster") {
            auto colon = row.bucket.find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("hierarchy row: malformed bucket " + row.bucket);
            auto index = static_cast<std::size_t>(std::stoul(row.bucket.substr(colon + 1)));
            if (h.unassigned_clusters.size() <= index) h.unassigned_clusters.resize(index + 1);
            h.unassigned_clusters[index].push_back(row.action);
        } else if (row.level == "noise") {
            h.noise.push_back(row.action);
        } else {
            throw std::invalid_argument("hierarchy row: unknown level " + row.level);
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// JSONL files: one version header line, then one object per line.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kJsonlFormat = "revision.jsonl";
inline constexpr int kJsonlVersion = 1;

inline nlohmann::json jsonl_header(std::string_view kind) {
    return nlohmann::json{
        {"format", kJsonlFormat}, {"version", kJsonlVersion}, {"kind", kind}};
}

template <typename T>
void write_jsonl(const std::string& path, std::string_view kind, const std::vector<T>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << jsonl_header(kind).dump() << '\n';
    for (const auto& row : rows) out << nlohmann::json(row).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path, std::string_view kind) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::vector<T> rows;
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_view(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!saw_header) {
            if (!j.is_object() || j.value("format", "") != kJsonlFormat)
                throw std::runtime_error(path + ": missing version header");
            if (j.value("version", 0) != kJsonlVersion)
                throw std::runtime_error(path + ": unsupported version " +
                                         std::to_string(j.value("version", 0)));
            if (j.value("kind", "") != kind)
                throw std::runtime_error(path + ": expected kind '" + std::string(kind) +
                                         "', found '" + j.value("kind", "") + "'");
            saw_header = true;
            continue;
        }
        try {
            rows.push_back(j.get<T>());
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!saw_header) throw std::runtime_error(path + ": missing version header");
    return rows;
}

inline ToolRegistry load_registry(const std::string& path) {
    return ToolRegistry(read_jsonl<RegistryEntry>(path, "registry"));
}

inline void save_registry(const std::string& path, const ToolRegistry& registry) {
    write_jsonl(path, "registry", registry.entries());
}

}  // namespace revision
