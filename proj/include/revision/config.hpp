#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "revision/clustering.hpp"
#include "revision/mock.hpp"
#include "revision/online.hpp"

namespace revision {

inline void to_json(nlohmann::json& j, const MockRule& rule) {
    const char* kind = "always";
    if (rule.kind == MockRule::Kind::prompt_contains) kind = "prompt_contains";
    if (rule.kind == MockRule::Kind::price_spread_gt) kind = "price_spread_gt";
    j = nlohmann::json{{"kind", kind},
                       {"needle", rule.needle},
                       {"threshold", rule.threshold},
                       {"output", rule.output}};
}

inline void from_json(const nlohmann::json& j, MockRule& rule) {
    auto kind = j.value("kind", "always");
    if (kind == "always")
        rule.kind = MockRule::Kind::always;
    else if (kind == "prompt_contains")
        rule.kind = MockRule::Kind::prompt_contains;
    else if (kind == "price_spread_gt")
        rule.kind = MockRule::Kind::price_spread_gt;
    else
        throw std::invalid_argument("mock rule: unknown kind '" + kind + "'");
    rule.needle = j.value("needle", "");
    rule.threshold = j.value("threshold", 0.0);
    rule.output = j.value("output", "");
}

inline void to_json(nlohmann::json& j, const Label& label) {
    j = nlohmann::json{{"name", label.name}, {"keywords", label.keywords}};
}

inline void from_json(const nlohmann::json& j, Label& label) {
    j.at("name").get_to(label.name);
    label.keywords.clear();
    if (j.contains("keywords")) j.at("keywords").get_to(label.keywords);
}

inline void to_json(nlohmann::json& j, const CategoryOntology& ontology) {
    j = nlohmann::json{{"mains", ontology.mains}, {"subs", ontology.subs}};
}

inline void from_json(const nlohmann::json& j, CategoryOntology& ontology) {
    j.at("mains").get_to(ontology.mains);
    ontology.subs.clear();
    if (j.contains("subs")) j.at("subs").get_to(ontology.subs);
}

inline CategoryOntology load_ontology(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open ontology: " + path);
    auto ontology = nlohmann::json::parse(in).get<CategoryOntology>();
    validate(ontology);
    return ontology;
}

// Per-role model endpoint. mode=mock wires the built-in deterministic mocks;
// mode=remote talks to a chat-completions server.
struct ReasonerEndpoint {
    std::string mode = "mock";  // mock | remote
    std::string base_url;       // remote only
    std::string model;          // remote only
    std::string api_key_env = "REVISION_API_KEY";

    bool operator==(const ReasonerEndpoint&) const = default;
};

inline void to_json(nlohmann::json& j, const ReasonerEndpoint& e) {
    j = nlohmann::json{{"mode", e.mode},
                       {"base_url", e.base_url},
                       {"model", e.model},
                       {"api_key_env", e.api_key_env}};
}

inline void from_json(const nlohmann::json& j, ReasonerEndpoint& e) {
    ReasonerEndpoint defaults;
    e.mode = j.value("mode", defaults.mode);
    e.base_url = j.value("base_url", defaults.base_url);
    e.model = j.value("model", defaults.model);
    e.api_key_env = j.value("api_key_env", defaults.api_key_env);
}

struct AppConfig {
    // input/artifact paths; relative entries resolve against the config file
    std::string logs_path;
    std::string ontology_path;
    std::string registry_path;
    std::string rules_path;
    std::string prompts_dir;
    std::string cache_path;  // may not exist yet; created on first save

    DispatchConfig dispatch;
    ClusterParams clustering;
    ReasonerEndpoint visual, reasoning, planner, judge;

    int max_workers = 4;
    double sample_rate = 1.0;

    // behavior tables for the mock roles (empty -> role defaults)
    std::vector<MockRule> mock_visual_rules;
    std::vector<MockRule> mock_reasoning_rules;
    std::vector<MockRule> mock_planner_rules;

    bool operator==(const AppConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const AppConfig& c) {
    j = nlohmann::json{
        {"paths",
         {{"logs", c.logs_path},
          {"ontology", c.ontology_path},
          {"registry", c.registry_path},
          {"rules", c.rules_path},
          {"prompts", c.prompts_dir},
          {"cache", c.cache_path}}},
        {"dispatch",
         {{"relevance_trigger", c.dispatch.relevance_trigger},
          {"cache_threshold", c.dispatch.cache_threshold},
          {"daily_cue_cap", c.dispatch.daily_cue_cap},
          {"reasoner_max_tokens", c.dispatch.reasoner_max_tokens},
          {"tool_timeout_ms", c.dispatch.tool_timeout_ms}}},
        {"clustering",
         {{"alpha_main", c.clustering.alpha_main},
          {"alpha_sub", c.clustering.alpha_sub},
          {"tau1", c.clustering.tau1},
          {"tau2", c.clustering.tau2},
          {"eps", c.clustering.eps},
          {"min_samples", c.clustering.min_samples}}},
        {"reasoners",
         {{"visual", c.visual},
          {"reasoning", c.reasoning},
          {"planner", c.planner},
          {"judge", c.judge}}},
        {"max_workers", c.max_workers},
        {"sample_rate", c.sample_rate},
        {"mock_rules",
         {{"visual", c.mock_visual_rules},
          {"reasoning", c.mock_reasoning_rules},
          {"planner", c.mock_planner_rules}}}};
}

// Every field is optional in the file; absent fields keep compiled defaults,
// so a config can be as small as {}.
inline void from_json(const nlohmann::json& j, AppConfig& c) {
    c = AppConfig{};
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        c.logs_path = p.value("logs", "");
        c.ontology_path = p.value("ontology", "");
        c.registry_path = p.value("registry", "");
        c.rules_path = p.value("rules", "");
        c.prompts_dir = p.value("prompts", "");
        c.cache_path = p.value("cache", "");
    }
    if (j.contains("dispatch")) {
        const auto& d = j.at("dispatch");
        c.dispatch.relevance_trigger = d.value("relevance_trigger", c.dispatch.relevance_trigger);
        c.dispatch.cache_threshold = d.value("cache_threshold", c.dispatch.cache_threshold);
        c.dispatch.daily_cue_cap = d.value("daily_cue_cap", c.dispatch.daily_cue_cap);
        c.dispatch.reasoner_max_tokens =
            d.value("reasoner_max_tokens", c.dispatch.reasoner_max_tokens);
        c.dispatch.tool_timeout_ms = d.value("tool_timeout_ms", c.dispatch.tool_timeout_ms);
    }
    if (j.contains("clustering")) {
        const auto& k = j.at("clustering");
        c.clustering.alpha_main = k.value("alpha_main", c.clustering.alpha_main);
        c.clustering.alpha_sub = k.value("alpha_sub", c.clustering.alpha_sub);
        c.clustering.tau1 = k.value("tau1", c.clustering.tau1);
        c.clustering.tau2 = k.value("tau2", c.clustering.tau2);
        c.clustering.eps = k.value("eps", c.clustering.eps);
        c.clustering.min_samples = k.value("min_samples", c.clustering.min_samples);
    }
    if (j.contains("reasoners")) {
        const auto& r = j.at("reasoners");
        if (r.contains("visual")) r.at("visual").get_to(c.visual);
        if (r.contains("reasoning")) r.at("reasoning").get_to(c.reasoning);
        if (r.contains("planner")) r.at("planner").get_to(c.planner);
        if (r.contains("judge")) r.at("judge").get_to(c.judge);
    }
    c.max_workers = j.value("max_workers", c.max_workers);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    if (j.contains("mock_rules")) {
        const auto& m = j.at("mock_rules");
        if (m.contains("visual")) m.at("visual").get_to(c.mock_visual_rules);
        if (m.contains("reasoning")) m.at("reasoning").get_to(c.mock_reasoning_rules);
        if (m.contains("planner")) m.at("planner").get_to(c.mock_planner_rules);
    }
}

namespace configdetail {

inline void resolve(std::string& path, const std::filesystem::path& base) {
    if (path.empty()) return;
    std::filesystem::path p(path);
    if (p.is_relative()) path = (base / p).lexically_normal().string();
}

}  // namespace configdetail

inline AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    AppConfig config;
    try {
        config = nlohmann::json::parse(in).get<AppConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    const auto base = std::filesystem::path(path).parent_path();
    configdetail::resolve(config.logs_path, base);
    configdetail::resolve(config.ontology_path, base);
    configdetail::resolve(config.registry_path, base);
    configdetail::resolve(config.rules_path, base);
    configdetail::resolve(config.prompts_dir, base);
    configdetail::resolve(config.cache_path, base);
    return config;
}

inline void validate(const ReasonerEndpoint& e, const std::string& role) {
    if (e.mode != "mock" && e.mode != "remote")
        throw std::invalid_argument("config: " + role + " mode must be mock or remote, got '" +
                                    e.mode + "'");
    if (e.mode == "remote" && (trim_view(e.base_url).empty() || trim_view(e.model).empty()))
        throw std::invalid_argument("config: remote " + role + " needs base_url and model");
}

// Startup validation: referenced input files must exist (the cache file is
// allowed to be absent — it gets created), endpoints must be complete.
inline void validate(const AppConfig& c) {
    validate(c.dispatch);
    validate(c.clustering);
    validate(c.visual, "visual");
    validate(c.reasoning, "reasoning");
    validate(c.planner, "planner");
    validate(c.judge, "judge");
    if (c.max_workers < 1) throw std::invalid_argument("config: max_workers must be positive");
    if (!(c.sample_rate > 0.0) || c.sample_rate > 1.0)
        throw std::invalid_argument("config: sample_rate must be in (0,1]");
    auto require = [](const std::string& path, const char* what) {
        if (path.empty()) return;  // optional input not wired up
        if (!std::filesystem::exists(path))
            throw std::invalid_argument(std::string("config: ") + what + " path does not exist: " +
                                        path);
    };
    require(c.logs_path, "logs");
    require(c.ontology_path, "ontology");
    require(c.registry_path, "registry");
    require(c.rules_path, "rules");
    require(c.prompts_dir, "prompts");
}

}  // namespace revision
