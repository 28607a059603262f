#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "revision/config.hpp"
#include "revision/dispatch.hpp"
#include "revision/jsonl.hpp"
#include "revision/mining.hpp"
#include "revision/net.hpp"
#include "revision/simulate.hpp"
#include "revision/synthetic.hpp"
#include "revision/textmetrics.hpp"
#include "revision/training.hpp"

namespace revision {

// The dispatcher's collaborators wired from config, owned together so the
// references the Dispatcher holds stay valid for the stack's lifetime.
struct OnlineStack {
    ToolRegistry registry;
    ReferenceEmbedder embedder;
    std::unique_ptr<ReasonerClient> planner;
    std::unique_ptr<TextSearchClient> search;
    std::unique_ptr<ToolExecutor> executor;
    InMemoryCounterStore counters;
    std::unique_ptr<Dispatcher> dispatcher;
};

inline std::unique_ptr<OnlineStack> build_online_stack(const AppConfig& config) {
    auto stack = std::make_unique<OnlineStack>();
    stack->registry = load_registry(config.registry_path);
    stack->planner = make_reasoner(config.planner, "planner", config.mock_planner_rules);
    stack->search = std::make_unique<MockTextSearchClient>();
    stack->executor = std::make_unique<BuiltinToolExecutor>(stack->search.get());
    stack->dispatcher =
        std::make_unique<Dispatcher>(stack->registry, stack->embedder, *stack->planner,
                                     *stack->executor, stack->counters, config.dispatch);
    return stack;
}

namespace clidetail {

inline void write_json_doc(const std::string& path, const nlohmann::json& doc) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

// Overrides target with the file's content when it exists; otherwise the
// compiled-in template stays.
inline void load_template_if_present(const std::string& dir, const std::string& name,
                                     std::string& target) {
    if (dir.empty()) return;
    auto path = std::filesystem::path(dir) / name;
    std::ifstream in(path);
    if (!in) return;
    target.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace clidetail

struct MineCliOptions {
    std::string config_path;
    std::string logs_path;  // overrides the config's logs path when set
    std::string out_dir;
    bool mock = false;  // force every reasoner role to its mock
};

// Offline batch: no-click logs -> signals + hierarchy + run report.
// Empty input produces empty (header-only) artifacts and still exits 0.
inline int run_mine(const MineCliOptions& options, std::ostream& out, std::ostream& err) {
    try {
        auto config = load_app_config(options.config_path);
        if (!options.logs_path.empty()) config.logs_path = options.logs_path;
        if (options.mock)
            config.visual.mode = config.reasoning.mode = config.planner.mode = config.judge.mode =
                "mock";
        validate(config);
        if (config.logs_path.empty()) throw std::runtime_error("mine: no logs path configured");

        auto logs = read_jsonl<RequestLog>(config.logs_path, "logs");
        auto ontology = load_ontology(config.ontology_path);
        auto rules = read_jsonl<RuleHint>(config.rules_path, "rules");
        auto visual = make_reasoner(config.visual, "visual", config.mock_visual_rules);
        auto reasoning = make_reasoner(config.reasoning, "reasoning", config.mock_reasoning_rules);

        ReferenceEmbedder embedder;
        MiningOptions mining;
        mining.sample_rate = config.sample_rate;
        mining.max_workers = config.max_workers;
        clidetail::load_template_if_present(config.prompts_dir, "visual_stage.txt",
                                            mining.visual_template);
        clidetail::load_template_if_present(config.prompts_dir, "reasoning_stage.txt",
                                            mining.reasoning_template);
        auto batch = run_mining_batch(logs, *visual, *reasoning, rules, ontology,
                                      config.clustering, embedder, mining);

        std::filesystem::create_directories(options.out_dir);
        write_jsonl(clidetail::join_path(options.out_dir, "signals.jsonl"), "signals",
                    batch.signals);
        write_jsonl(clidetail::join_path(options.out_dir, "hierarchy.jsonl"), "hierarchy",
                    hierarchy_rows(batch.hierarchy));
        clidetail::write_json_doc(clidetail::join_path(options.out_dir, "report.json"),
                                  nlohmann::json(batch.report));
        out << "mined " << batch.signals.size() << " signals from " << batch.report.total_sampled
            << " sampled logs into " << options.out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "mine failed: " << e.what() << "\n";
        return 1;
    }
}

// One prediction/gold pair for offline scoring. Index lists drive the plan
// match rates; the optional texts feed the generation metrics.
struct EvalRow {
    std::vector<int> pred;
    std::vector<int> gold;
    std::string pred_text;
    std::string gold_text;

    bool operator==(const EvalRow&) const = default;
};

inline void to_json(nlohmann::json& j, const EvalRow& row) {
    j = nlohmann::json{{"pred", row.pred},
                       {"gold", row.gold},
                       {"pred_text", row.pred_text},
                       {"gold_text", row.gold_text}};
}

inline void from_json(const nlohmann::json& j, EvalRow& row) {
    j.at("pred").get_to(row.pred);
    j.at("gold").get_to(row.gold);
    row.pred_text = j.value("pred_text", "");
    row.gold_text = j.value("gold_text", "");
}

struct EvalCliOptions {
    std::string pred_path;
    std::string gold_path;
};

// Prints the metric table: plan match rates always, text generation metrics
// when both sides carry text. Rows pair up by line position.
inline int run_eval(const EvalCliOptions& options, std::ostream& out, std::ostream& err) {
    try {
        auto preds = read_jsonl<EvalRow>(options.pred_path, "eval");
        auto golds = read_jsonl<EvalRow>(options.gold_path, "eval");
        if (preds.size() != golds.size())
            throw std::runtime_error("eval: pred and gold files differ in row count");
        if (preds.empty()) throw std::runtime_error("eval: no rows");

        std::vector<std::vector<int>> pred_plans, gold_plans;
        for (const auto& r : preds) pred_plans.push_back(r.pred);
        for (const auto& r : golds) gold_plans.push_back(r.gold);

        out << std::fixed << std::setprecision(4);
        out << "rows          " << preds.size() << "\n";
        out << "tool_match    " << tool_match_rate(pred_plans, gold_plans) << "\n";
        out << "order_match   " << order_match_rate(pred_plans, gold_plans) << "\n";

        bool any_text = false;
        for (std::size_t i = 0; i < preds.size(); ++i)
            if (!preds[i].pred_text.empty() && !golds[i].gold_text.empty()) any_text = true;
        if (any_text) {
            std::vector<TokenList> candidates;
            std::vector<std::vector<TokenList>> references;
            double rouge_sum = 0.0, meteor_sum = 0.0, bleu_sum = 0.0;
            for (std::size_t i = 0; i < preds.size(); ++i) {
                auto cand = whitespace_tokens(preds[i].pred_text);
                auto ref = whitespace_tokens(golds[i].gold_text);
                rouge_sum += rouge_l(cand, ref);
                meteor_sum += meteor_exact(cand, ref);
                bleu_sum += bleu4(cand, {ref});
                candidates.push_back(std::move(cand));
                references.push_back({std::move(ref)});
            }
            const auto n = static_cast<double>(preds.size());
            out << "bleu4         " << bleu_sum / n << "\n";
            out << "rouge_l       " << rouge_sum / n << "\n";
            out << "meteor        " << meteor_sum / n << "\n";
            out << "cider         " << cider(candidates, references) << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        err << "eval failed: " << e.what() << "\n";
        return 1;
    }
}

struct SimulateCliOptions {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 42;
    std::size_t n_queries = 200;
    double duplicate_fraction = 0.3;
    double low_relevance_fraction = 0.5;
    bool mock = false;
};

// Synthetic A/B-shaped replay: generate a corpus, push it through one
// dispatcher, compare click proxies between the untouched and treated arms.
// Everything downstream of the seed is deterministic, so rerunning with the
// same flags reproduces both artifacts byte for byte.
inline int run_simulate(const SimulateCliOptions& options, std::ostream& out, std::ostream& err) {
    try {
        auto config = load_app_config(options.config_path);
        if (options.mock)
            config.visual.mode = config.reasoning.mode = config.planner.mode = config.judge.mode =
                "mock";
        validate(config);

        SyntheticSpec spec;
        spec.seed = options.seed;
        spec.n_queries = options.n_queries;
        spec.duplicate_fraction = options.duplicate_fraction;
        spec.low_relevance_fraction = options.low_relevance_fraction;
        auto corpus = generate_synthetic_corpus(spec);

        auto stack = build_online_stack(config);
        auto run = run_simulation(corpus, *stack->dispatcher);

        std::filesystem::create_directories(options.out_dir);
        write_jsonl(clidetail::join_path(options.out_dir, "corpus.jsonl"), "logs", corpus);
        std::ofstream report(clidetail::join_path(options.out_dir, "report.json"),
                             std::ios::trunc);
        report << render_report(run.report);
        if (!report) throw std::runtime_error("cannot write simulation report");
        out << "simulated " << run.report.n_queries << " queries: no-click "
            << run.report.baseline_no_click_rate << " -> " << run.report.treated_no_click_rate
            << ", cache hits " << run.report.cache_hits << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "simulate failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace revision
