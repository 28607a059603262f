#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <thread>

#include "revision/cli.hpp"
#include "revision/jsonl.hpp"
#include "revision/service.hpp"
#include "revision/simulate.hpp"
#include "revision/synthetic.hpp"

using namespace revision;

namespace {

ToolRegistry service_registry() {
    std::vector<RegistryEntry> entries;
    entries.push_back({{1, "adjust_display_metadata", "reorder product metadata"},
                       false,
                       "display_adjustment",
                       "metadata_reorder",
                       ToolComponent::display_adjust});
    entries.push_back({{2, "summarize_results", "digest price stats"},
                       false,
                       "result_summarization",
                       "price_summary",
                       ToolComponent::summarize});
    entries.push_back({{3, "external_text_search", "query an outside index"},
                       true,
                       "external_search",
                       "search_condition_refinement",
                       ToolComponent::external_search});
    entries.push_back({{4, "label_target_products", "mark products matching a filter"},
                       false,
                       "product_labeling",
                       "target_marking",
                       ToolComponent::label_targets});
    return ToolRegistry(std::move(entries));
}

RequestLog make_log(const std::string& id, const std::string& image, const std::string& user,
                    double top_similarity, std::int64_t ts = 1700000000000) {
    RequestLog log;
    log.query_id = id;
    log.query_image_ref = image;
    log.user_id = user;
    log.timestamp = ts;
    double sim = top_similarity;
    for (int k = 0; k < 3; ++k) {
        Product p;
        p.id = id + "-p" + std::to_string(k);
        p.title = k == 0 ? "red floral summer dress" : "blue denim jacket";
        p.price = 10.0 + 10.0 * k;
        p.quantity = 1 + k;
        p.similarity = sim;
        p.image_ref = "img://" + p.id;
        p.metadata = {{"color", "red"}, {"material", "cotton"}};
        log.products.push_back(std::move(p));
        sim = std::max(0.01, sim - 0.05);
    }
    return log;
}

// Everything one dispatcher needs, owned together so tests can poke at the
// planner or counters between calls.
struct DispatcherRig {
    ToolRegistry registry = service_registry();
    ReferenceEmbedder embedder;
    MockPlanner planner;
    MockTextSearchClient search;
    BuiltinToolExecutor executor{&search};
    InMemoryCounterStore counters;
    Dispatcher dispatcher;

    explicit DispatcherRig(DispatchConfig config = {})
        : dispatcher(registry, embedder, planner, executor, counters, config) {}
};

struct ThrowingPlanner : ReasonerClient {
    std::string generate(const std::string&, const std::vector<std::string>&, int) override {
        throw TransportError("planner endpoint down", /*retryable=*/false);
    }
};

// Serves a dispatcher on an OS-assigned port for the lifetime of the scope.
struct LiveService {
    DispatchService service;
    int port;
    std::thread worker;

    explicit LiveService(Dispatcher& dispatcher) : service(dispatcher), port(service.bind_any()) {
        worker = std::thread([this] { service.listen_after_bind(); });
        while (!service.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }

    ~LiveService() {
        service.stop();
        worker.join();
    }
};

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("revision-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }

    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// Runs the installed CLI binary; returns its exit code with stdout+stderr
// captured into out_path.
int run_cli(const std::string& args, const std::string& out_path) {
    const char* bin = std::getenv("REVISION_CLI_BIN");
    REQUIRE(bin != nullptr);
    std::string cmd = std::string(bin) + " " + args + " > " + out_path + " 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic corpus.
// ---------------------------------------------------------------------------

TEST_CASE("synthetic corpus: determinism and emptiness") {
    SyntheticSpec spec;
    spec.n_queries = 0;
    CHECK(generate_synthetic_corpus(spec).empty());

    spec.n_queries = 40;
    spec.seed = 11;
    auto a = generate_synthetic_corpus(spec);
    auto b = generate_synthetic_corpus(spec);
    CHECK(a == b);
    spec.seed = 12;
    CHECK(generate_synthetic_corpus(spec) != a);
}

TEST_CASE("synthetic corpus: full duplication shares bytes with the first query") {
    SyntheticSpec spec;
    spec.n_queries = 10;
    spec.duplicate_fraction = 1.0;
    auto corpus = generate_synthetic_corpus(spec);
    REQUIRE(corpus.size() == 10);
    std::size_t sharing = 0;
    for (std::size_t i = 1; i < corpus.size(); ++i)
        if (corpus[i].query_image_ref == corpus[0].query_image_ref) ++sharing;
    CHECK(sharing == 9);
}

TEST_CASE("synthetic corpus: exact duplicate and low-relevance counts") {
    SyntheticSpec spec;
    spec.n_queries = 100;
    spec.duplicate_fraction = 0.3;
    spec.low_relevance_fraction = 0.5;
    auto corpus = generate_synthetic_corpus(spec);

    std::set<std::string> seen;
    std::size_t duplicates = 0, low = 0;
    for (const auto& log : corpus) {
        if (!seen.insert(log.query_image_ref).second) ++duplicates;
        if (log.products.front().similarity <= 0.45) ++low;
    }
    CHECK(duplicates == 30);
    CHECK(low == 50);
}

TEST_CASE("synthetic corpus: product shape invariants") {
    SyntheticSpec spec;
    spec.n_queries = 25;
    auto corpus = generate_synthetic_corpus(spec);
    for (const auto& log : corpus) {
        REQUIRE(log.products.size() == spec.products_per_query);
        validate(log);
        for (std::size_t k = 1; k < log.products.size(); ++k)
            CHECK(log.products[k].similarity <= log.products[k - 1].similarity);
        for (const auto& p : log.products) {
            CHECK(p.price >= spec.min_price);
            CHECK(p.price <= spec.max_price);
            CHECK(p.quantity >= 1);
            REQUIRE(p.metadata.size() == 2);
            CHECK(p.metadata[0].first == "color");
            CHECK(p.metadata[1].first == "material");
        }
    }
}

TEST_CASE("synthetic corpus: click labels follow the documented rule") {
    SyntheticSpec spec;
    spec.n_queries = 60;
    spec.seed = 3;
    for (const auto& log : generate_synthetic_corpus(spec)) {
        double noise = (hash_to_unit(fnv1a64("click:" + log.query_id)) - 0.5) * 0.2;
        CHECK(log.clicked == (log.products.front().similarity + noise >= spec.click_threshold));
    }
}

TEST_CASE("synthetic corpus: spec validation") {
    SyntheticSpec spec;
    spec.duplicate_fraction = 1.5;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), std::invalid_argument);
    spec = {};
    spec.low_relevance_fraction = -0.1;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), std::invalid_argument);
    spec = {};
    spec.categories.clear();
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), std::invalid_argument);
    spec = {};
    spec.min_price = spec.max_price;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), std::invalid_argument);
    spec = {};
    spec.products_per_query = 0;
    CHECK_THROWS_AS(generate_synthetic_corpus(spec), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// JSONL persistence.
// ---------------------------------------------------------------------------

TEST_CASE("jsonl: request logs round-trip behind a version header") {
    TempDir dir;
    auto path = dir.file("logs.jsonl");
    SyntheticSpec spec;
    spec.n_queries = 8;
    auto corpus = generate_synthetic_corpus(spec);
    write_jsonl(path, "logs", corpus);

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    auto h = nlohmann::json::parse(header);
    CHECK(h.at("format") == "revision.jsonl");
    CHECK(h.at("version") == 1);
    CHECK(h.at("kind") == "logs");

    CHECK(read_jsonl<RequestLog>(path, "logs") == corpus);
}

TEST_CASE("jsonl: header mismatches are rejected") {
    TempDir dir;
    auto path = dir.file("bad.jsonl");

    std::ofstream(path) << "{\"query_id\":\"x\"}\n";
    CHECK_THROWS_WITH(read_jsonl<RequestLog>(path, "logs"),
                      Catch::Matchers::ContainsSubstring("missing version header"));

    std::ofstream(path, std::ios::trunc)
        << R"({"format":"revision.jsonl","version":1,"kind":"signals"})" << "\n";
    CHECK_THROWS_WITH(read_jsonl<RequestLog>(path, "logs"),
                      Catch::Matchers::ContainsSubstring("expected kind 'logs'"));

    std::ofstream(path, std::ios::trunc)
        << R"({"format":"revision.jsonl","version":9,"kind":"logs"})" << "\n";
    CHECK_THROWS_WITH(read_jsonl<RequestLog>(path, "logs"),
                      Catch::Matchers::ContainsSubstring("unsupported version"));

    std::ofstream(path, std::ios::trunc)
        << R"({"format":"revision.jsonl","version":1,"kind":"logs"})" << "\n{broken\n";
    CHECK_THROWS_AS(read_jsonl<RequestLog>(path, "logs"), std::runtime_error);

    std::ofstream(path, std::ios::trunc) << "";
    CHECK_THROWS_WITH(read_jsonl<RequestLog>(path, "logs"),
                      Catch::Matchers::ContainsSubstring("missing version header"));
}

TEST_CASE("jsonl: hierarchy rows rebuild the exact hierarchy") {
    CategoryOntology ontology;
    ontology.mains = {{"external_search", {"search"}}, {"result_summarization", {"summary"}}};
    ontology.subs["external_search"] = {{"search_condition_refinement", {"condition"}}};
    ontology.subs["result_summarization"] = {{"price_summary", {"price"}}};

    ClusterHierarchy h;
    detail::materialize_buckets(h, ontology);
    h.assignments["external_search"]["search_condition_refinement"] = {"refine the search",
                                                                       "tighten condition"};
    h.assignments["result_summarization"]["other"] = {"broad digest"};
    h.unassigned_clusters = {{"novel thing one", "novel thing two"}, {"second cluster"}};
    h.noise = {"garbled"};

    auto rows = hierarchy_rows(h);
    CHECK(rows.size() == 7);
    CHECK(hierarchy_from_rows(rows, ontology) == h);

    TempDir dir;
    auto path = dir.file("hierarchy.jsonl");
    write_jsonl(path, "hierarchy", rows);
    CHECK(hierarchy_from_rows(read_jsonl<HierarchyRow>(path, "hierarchy"), ontology) == h);
}

TEST_CASE("jsonl: registry save and load round-trips") {
    TempDir dir;
    auto path = dir.file("registry.jsonl");
    auto registry = service_registry();
    save_registry(path, registry);
    CHECK(load_registry(path).entries() == registry.entries());
}

TEST_CASE("jsonl: rl export rows carry the pinned field names") {
    RlSample sample;
    sample.sample_id = "s1";
    sample.candidates = {"<think>a</think> (1)", "(2)"};
    sample.rewards = {3.0, 0.0};
    sample.advantages = {1.0, -1.0};

    nlohmann::json j = sample;
    CHECK(j.size() == 4);
    CHECK(j.contains("sample_id"));
    CHECK(j.contains("candidates"));
    CHECK(j.contains("rewards"));
    CHECK(j.contains("advantages"));
    CHECK(j.get<RlSample>() == sample);
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

TEST_CASE("config: empty document yields compiled defaults") {
    auto config = nlohmann::json::parse("{}").get<AppConfig>();
    CHECK(config == AppConfig{});
    CHECK(config.dispatch.cache_threshold == 0.85);
    CHECK(config.planner.mode == "mock");
}

TEST_CASE("config: json round-trip") {
    AppConfig config;
    config.logs_path = "/tmp/x.jsonl";
    config.dispatch.daily_cue_cap = 7;
    config.clustering.eps = 0.25;
    config.planner.mode = "remote";
    config.planner.base_url = "http://localhost:9000";
    config.planner.model = "planner-1";
    config.mock_reasoning_rules = {{MockRule::Kind::price_spread_gt, "", 30.0, "price x -> y"}};
    nlohmann::json j = config;
    CHECK(j.get<AppConfig>() == config);
}

TEST_CASE("config: shipped default loads and validates") {
    const char* dir = std::getenv("REVISION_CONFIG_DIR");
    if (!dir) SKIP("REVISION_CONFIG_DIR not set");
    auto config = load_app_config(std::string(dir) + "/default.json");
    CHECK_NOTHROW(validate(config));
    CHECK(std::filesystem::path(config.ontology_path).is_absolute());
    CHECK(std::filesystem::exists(config.registry_path));
    auto ontology = load_ontology(config.ontology_path);
    CHECK(ontology.mains.size() == 4);
    auto registry = load_registry(config.registry_path);
    CHECK(registry.size() == 4);
    CHECK(registry.at(3).fetch_external);
}

TEST_CASE("config: validation failures") {
    AppConfig config;
    config.planner.mode = "remote";
    CHECK_THROWS_WITH(validate(config), Catch::Matchers::ContainsSubstring("base_url"));
    config.planner = {};
    config.visual.mode = "carrier-pigeon";
    CHECK_THROWS_WITH(validate(config), Catch::Matchers::ContainsSubstring("mock or remote"));
    config.visual = {};
    config.ontology_path = "/nonexistent/ontology.json";
    CHECK_THROWS_WITH(validate(config), Catch::Matchers::ContainsSubstring("does not exist"));
    config.ontology_path.clear();
    config.sample_rate = 0.0;
    CHECK_THROWS_AS(validate(config), std::invalid_argument);

    CHECK_THROWS_AS(nlohmann::json::parse(R"({"kind":"sometimes"})").get<MockRule>(),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Dispatcher.
// ---------------------------------------------------------------------------

TEST_CASE("dispatcher: high-relevance queries pass through untouched") {
    DispatcherRig rig;
    auto log = make_log("q-high", "img://high", "u1", 0.9);
    auto result = rig.dispatcher.dispatch(log);

    CHECK_FALSE(result.triggered);
    CHECK(result.plan_source == "none");
    CHECK_FALSE(result.plan.has_value());
    CHECK(result.outcomes.empty());
    CHECK(result.final_products == log.products);
    CHECK(result.degrade_reason.empty());
    CHECK(rig.dispatcher.metrics().value("requests") == 1.0);
    CHECK(rig.dispatcher.metrics().value("triggers") == 0.0);
    CHECK(rig.counters.count("u1#day:19675") == 0);
}

TEST_CASE("dispatcher: planner miss then cache hit on the same image bytes") {
    DispatcherRig rig;
    rig.planner.default_output = "<think>tidy then digest</think> (1) (2)";

    auto first = rig.dispatcher.dispatch(make_log("q1", "img://same", "u1", 0.2));
    CHECK(first.triggered);
    CHECK(first.cue_granted);
    CHECK_FALSE(first.cache_hit);
    CHECK(first.plan_source == "planner");
    REQUIRE(first.plan.has_value());
    CHECK(first.plan->tool_indices == std::vector<int>{1, 2});
    REQUIRE(first.outcomes.size() == 2);
    CHECK(first.outcomes[0].status == OutcomeStatus::success);
    CHECK(first.outcomes[1].status == OutcomeStatus::success);

    auto second = rig.dispatcher.dispatch(make_log("q2", "img://same", "u2", 0.2));
    CHECK(second.cache_hit);
    CHECK(second.plan_source == "cache");
    CHECK(second.plan == first.plan);
    REQUIRE(second.outcomes.size() == 2);

    auto& metrics = rig.dispatcher.metrics();
    CHECK(metrics.value("cache_hits") == 1.0);
    CHECK(metrics.value("cache_misses") == 1.0);
    CHECK(metrics.value("plans") == 1.0);
    CHECK(metrics.value("tool_runs.1") == 2.0);
    CHECK(metrics.value("tool_runs.2") == 2.0);
}

TEST_CASE("dispatcher: cache hits still consume the daily cue budget") {
    DispatchConfig config;
    config.daily_cue_cap = 2;
    DispatcherRig rig(config);

    CHECK(rig.dispatcher.dispatch(make_log("q1", "img://same", "u1", 0.2)).cue_granted);
    CHECK(rig.dispatcher.dispatch(make_log("q2", "img://same", "u1", 0.2)).cache_hit);

    auto third = rig.dispatcher.dispatch(make_log("q3", "img://same", "u1", 0.2));
    CHECK(third.triggered);
    CHECK_FALSE(third.cue_granted);
    CHECK_FALSE(third.cache_hit);
    CHECK(third.degrade_reason == "no cue budget");
    CHECK(third.final_products == make_log("q3", "img://same", "u1", 0.2).products);
    CHECK(rig.dispatcher.metrics().value("cue_denied") == 1.0);
}

TEST_CASE("dispatcher: planner transport failure degrades to baseline") {
    ToolRegistry registry = service_registry();
    ReferenceEmbedder embedder;
    ThrowingPlanner planner;
    MockTextSearchClient search;
    BuiltinToolExecutor executor{&search};
    InMemoryCounterStore counters;
    Dispatcher dispatcher(registry, embedder, planner, executor, counters);

    auto log = make_log("q-down", "img://down", "u1", 0.2);
    auto result = dispatcher.dispatch(log);
    CHECK(result.triggered);
    CHECK(result.cue_granted);
    CHECK(result.plan_source == "none");
    CHECK(result.outcomes.empty());
    CHECK(result.final_products == log.products);
    CHECK_THAT(result.degrade_reason,
               Catch::Matchers::StartsWith("planner unavailable"));
    CHECK(dispatcher.metrics().value("plan_failures") == 1.0);
}

TEST_CASE("dispatcher: unusable plan output degrades to baseline") {
    DispatcherRig rig;
    rig.planner.default_output = "<think>no tool fits</think> (9)";
    auto log = make_log("q-none", "img://none", "u1", 0.2);
    auto result = rig.dispatcher.dispatch(log);
    CHECK(result.plan_source == "none");
    CHECK(result.degrade_reason == "planner returned no usable plan");
    CHECK(result.final_products == log.products);
    CHECK(rig.dispatcher.metrics().value("no_plan") == 1.0);
    // nothing cached for the next identical query
    CHECK(rig.dispatcher.cache().size() == 0);
}

TEST_CASE("dispatcher: default tool info derives from the products") {
    auto registry = service_registry();
    auto products = make_log("q", "img://q", "u", 0.3).products;

    auto adjust = default_tool_info(registry.at(1), products);
    REQUIRE(adjust.has_value());
    CHECK(*adjust == "color, material");

    CHECK(default_tool_info(registry.at(2), products) == std::optional<std::string>("price"));

    auto external = default_tool_info(registry.at(3), products);
    REQUIRE(external.has_value());
    CHECK(*external == "blue");  // two jacket titles outvote the single dress

    CHECK_FALSE(default_tool_info(registry.at(4), products).has_value());
    CHECK_FALSE(default_tool_info(registry.at(1), {}).has_value());
}

TEST_CASE("dispatcher: metrics reconcile exactly with the audit trail") {
    DispatchConfig config;
    config.daily_cue_cap = 2;
    DispatcherRig rig(config);
    rig.planner.rules = {{MockRule::Kind::prompt_contains, "img://no-plan", 0.0,
                          "<think>nothing applies</think> (9)"}};

    rig.dispatcher.dispatch(make_log("q1", "img://high", "u1", 0.9));     // passthrough
    rig.dispatcher.dispatch(make_log("q2", "img://a", "u1", 0.2));        // planner plan
    rig.dispatcher.dispatch(make_log("q3", "img://a", "u2", 0.2));        // cache hit
    rig.dispatcher.dispatch(make_log("q4", "img://no-plan", "u3", 0.2));  // NO_PLAN
    rig.dispatcher.dispatch(make_log("q5", "img://b", "u1", 0.2));        // second cue for u1
    rig.dispatcher.dispatch(make_log("q6", "img://c", "u1", 0.2));        // cue denied

    auto lines = rig.dispatcher.audit().lines();
    auto& metrics = rig.dispatcher.metrics();
    REQUIRE(lines.size() == 6);
    CHECK(metrics.value("requests") == 6.0);

    std::size_t triggered = 0, cache_hits = 0, cue_denied = 0, planner_plans = 0, cached = 0;
    for (const auto& line : lines) {
        auto j = nlohmann::json::parse(line);
        if (j.at("triggered").get<bool>()) ++triggered;
        if (j.at("cache_hit").get<bool>()) ++cache_hits;
        if (j.at("triggered").get<bool>() && !j.at("cue_granted").get<bool>()) ++cue_denied;
        if (j.at("plan_source") == "planner") ++planner_plans;
        if (j.at("plan_source") == "cache") ++cached;
    }
    CHECK(triggered == metrics.value("triggers"));
    CHECK(cache_hits == metrics.value("cache_hits"));
    CHECK(cue_denied == metrics.value("cue_denied"));
    CHECK(planner_plans == metrics.value("plans"));
    CHECK(cached == metrics.value("cache_hits"));
    CHECK(metrics.value("no_plan") == 1.0);
}

TEST_CASE("dispatcher: audit log mirrors to disk with a version header") {
    TempDir dir;
    auto path = dir.file("audit.jsonl");
    DispatcherRig rig;
    rig.dispatcher.audit().open(path);
    rig.dispatcher.dispatch(make_log("q1", "img://x", "u1", 0.2));
    rig.dispatcher.dispatch(make_log("q2", "img://y", "u1", 0.9));

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(nlohmann::json::parse(line).at("kind") == "audit");
    std::size_t data_lines = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++data_lines;
    CHECK(data_lines == rig.dispatcher.audit().size());
}

// ---------------------------------------------------------------------------
// HTTP service.
// ---------------------------------------------------------------------------

TEST_CASE("service: health, metrics, and flush endpoints") {
    DispatcherRig rig;
    LiveService live(rig.dispatcher);
    httplib::Client client("127.0.0.1", live.port);

    auto health = client.Get("/v1/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(nlohmann::json::parse(health->body).at("status") == "ok");

    // one cached entry to flush
    rig.dispatcher.dispatch(make_log("q1", "img://flush", "u1", 0.2));
    auto flush = client.Post("/v1/cache/flush", "", "application/json");
    REQUIRE(flush);
    CHECK(flush->status == 200);
    CHECK(nlohmann::json::parse(flush->body).at("flushed") == 1);
    CHECK(rig.dispatcher.cache().size() == 0);

    auto metrics = client.Get("/v1/metrics");
    REQUIRE(metrics);
    CHECK(metrics->status == 200);
    auto table = nlohmann::json::parse(metrics->body);
    REQUIRE(table.is_object());
    CHECK(table.at("requests") == 1.0);
    for (const auto& [key, value] : table.items()) CHECK(value.is_number());
}

TEST_CASE("service: malformed dispatch bodies get a structured 400") {
    DispatcherRig rig;
    LiveService live(rig.dispatcher);
    httplib::Client client("127.0.0.1", live.port);

    auto garbled = client.Post("/v1/dispatch", "{not json", "application/json");
    REQUIRE(garbled);
    CHECK(garbled->status == 400);
    auto error = nlohmann::json::parse(garbled->body).at("error");
    CHECK(error.at("code") == "bad_request");
    CHECK(error.at("message").is_string());

    auto partial = client.Post("/v1/dispatch", R"({"query_id":"only"})", "application/json");
    REQUIRE(partial);
    CHECK(partial->status == 400);

    nlohmann::json no_id = make_log("", "img://x", "u", 0.2);
    auto invalid = client.Post("/v1/dispatch", no_id.dump(), "application/json");
    REQUIRE(invalid);
    CHECK(invalid->status == 400);
    CHECK(rig.dispatcher.metrics().value("requests") == 0.0);
}

TEST_CASE("service: dispatch round-trip with trigger gate and cache flag") {
    DispatcherRig rig;
    rig.planner.default_output = "<think>t</think> (2)";
    LiveService live(rig.dispatcher);
    httplib::Client client("127.0.0.1", live.port);

    auto high = make_log("q-high", "img://h", "u1", 0.9);
    auto first = client.Post("/v1/dispatch", nlohmann::json(high).dump(), "application/json");
    REQUIRE(first);
    CHECK(first->status == 200);
    auto r1 = nlohmann::json::parse(first->body).get<DispatchResult>();
    CHECK_FALSE(r1.triggered);
    CHECK(r1.final_products == high.products);

    auto low = make_log("q-low", "img://l", "u1", 0.2);
    auto second = client.Post("/v1/dispatch", nlohmann::json(low).dump(), "application/json");
    auto r2 = nlohmann::json::parse(second->body).get<DispatchResult>();
    CHECK(r2.triggered);
    CHECK_FALSE(r2.cache_hit);
    REQUIRE(r2.plan.has_value());
    CHECK(r2.plan->tool_indices == std::vector<int>{2});

    auto low2 = make_log("q-low2", "img://l", "u2", 0.2);
    auto third = client.Post("/v1/dispatch", nlohmann::json(low2).dump(), "application/json");
    auto r3 = nlohmann::json::parse(third->body).get<DispatchResult>();
    CHECK(r3.cache_hit);
    CHECK(r3.plan == r2.plan);
}

TEST_CASE("service: tool failure is a 200 with failed outcomes, not a transport error") {
    DispatcherRig rig;
    rig.planner.default_output = "<think>digest</think> (2)";
    LiveService live(rig.dispatcher);
    httplib::Client client("127.0.0.1", live.port);

    RequestLog empty;
    empty.query_id = "q-empty";
    empty.query_image_ref = "img://empty";
    empty.user_id = "u1";
    empty.timestamp = 1700000000000;  // no products: triggers, then summarize fails

    auto res = client.Post("/v1/dispatch", nlohmann::json(empty).dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto result = nlohmann::json::parse(res->body).get<DispatchResult>();
    CHECK(result.triggered);
    REQUIRE(result.outcomes.size() == 1);
    CHECK(result.outcomes[0].status == OutcomeStatus::failed);
    CHECK(result.final_products.empty());
}

// ---------------------------------------------------------------------------
// Simulation replay.
// ---------------------------------------------------------------------------

TEST_CASE("simulation: identical runs produce identical reports") {
    SyntheticSpec spec;
    spec.n_queries = 80;
    spec.seed = 21;
    spec.duplicate_fraction = 0.3;
    auto corpus = generate_synthetic_corpus(spec);

    DispatcherRig rig_a, rig_b;
    auto run_a = run_simulation(corpus, rig_a.dispatcher);
    auto run_b = run_simulation(corpus, rig_b.dispatcher);
    CHECK(run_a.report == run_b.report);
    CHECK(render_report(run_a.report) == render_report(run_b.report));
    REQUIRE(run_a.results.size() == corpus.size());

    for (std::size_t i = 0; i < run_a.results.size(); ++i) {
        CHECK(run_a.results[i].triggered == run_b.results[i].triggered);
        CHECK(run_a.results[i].cache_hit == run_b.results[i].cache_hit);
        CHECK(run_a.results[i].plan == run_b.results[i].plan);
    }
}

TEST_CASE("simulation: report counts stay consistent with the corpus") {
    SyntheticSpec spec;
    spec.n_queries = 60;
    spec.seed = 5;
    auto corpus = generate_synthetic_corpus(spec);
    DispatcherRig rig;
    auto run = run_simulation(corpus, rig.dispatcher);
    const auto& rep = run.report;

    CHECK(rep.n_queries == 60);
    CHECK(rep.treated_clicks >= rep.baseline_clicks);
    CHECK(rep.treated_no_click_rate <= rep.baseline_no_click_rate);
    CHECK(rep.queries_with_success <= rep.triggered);

    std::int64_t lo = corpus.front().timestamp, hi = corpus.front().timestamp;
    for (const auto& log : corpus) {
        lo = std::min(lo, log.timestamp);
        hi = std::max(hi, log.timestamp);
    }
    CHECK(rep.window_start == lo);
    CHECK(rep.window_end == hi);

    CHECK_THROWS_AS(run_simulation(corpus, rig.dispatcher, 1.5), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// CLI binary.
// ---------------------------------------------------------------------------

namespace {

std::string config_path_or_skip() {
    const char* dir = std::getenv("REVISION_CONFIG_DIR");
    if (!dir || !std::getenv("REVISION_CLI_BIN")) SKIP("CLI environment not wired");
    return std::string(dir) + "/default.json";
}

}  // namespace

TEST_CASE("cli: simulate is byte-identical across reruns of one seed") {
    auto config = config_path_or_skip();
    TempDir a, b;
    auto out = a.file("cli.log");
    CHECK(run_cli("simulate --config " + config + " --out " + a.file("run") +
                      " --seed 17 --queries 60 --mock",
                  out) == 0);
    CHECK(run_cli("simulate --config " + config + " --out " + b.file("run") +
                      " --seed 17 --queries 60 --mock",
                  out) == 0);
    CHECK(slurp(a.file("run/report.json")) == slurp(b.file("run/report.json")));
    CHECK(slurp(a.file("run/corpus.jsonl")) == slurp(b.file("run/corpus.jsonl")));

    CHECK(run_cli("simulate --config " + config + " --out " + b.file("other") +
                      " --seed 18 --queries 60 --mock",
                  out) == 0);
    CHECK(slurp(a.file("run/corpus.jsonl")) != slurp(b.file("other/corpus.jsonl")));
}

TEST_CASE("cli: mine on empty logs writes empty artifacts and exits zero") {
    auto config = config_path_or_skip();
    TempDir dir;
    auto logs = dir.file("empty-logs.jsonl");
    write_jsonl<RequestLog>(logs, "logs", {});

    auto out = dir.file("cli.log");
    CHECK(run_cli("mine --config " + config + " --logs " + logs + " --out " + dir.file("mine") +
                      " --mock",
                  out) == 0);
    CHECK(read_jsonl<OptimizationSignal>(dir.file("mine/signals.jsonl"), "signals").empty());
    CHECK(read_jsonl<HierarchyRow>(dir.file("mine/hierarchy.jsonl"), "hierarchy").empty());
    auto report = nlohmann::json::parse(slurp(dir.file("mine/report.json")));
    CHECK(report.at("total_sampled") == 0);
    CHECK(report.at("signals_produced") == 0);
}

TEST_CASE("cli: mine produces signals and a hierarchy from a synthetic corpus") {
    auto config = config_path_or_skip();
    TempDir dir;
    SyntheticSpec spec;
    spec.n_queries = 30;
    spec.seed = 9;
    auto logs = dir.file("logs.jsonl");
    write_jsonl(logs, "logs", generate_synthetic_corpus(spec));

    auto out = dir.file("cli.log");
    CHECK(run_cli("mine --config " + config + " --logs " + logs + " --out " + dir.file("mine") +
                      " --mock",
                  out) == 0);
    auto signals = read_jsonl<OptimizationSignal>(dir.file("mine/signals.jsonl"), "signals");
    CHECK(!signals.empty());
    auto rows = read_jsonl<HierarchyRow>(dir.file("mine/hierarchy.jsonl"), "hierarchy");
    CHECK(rows.size() >= signals.size());
}

TEST_CASE("cli: eval prints the metric table for identical files") {
    auto config = config_path_or_skip();
    (void)config;
    TempDir dir;
    std::vector<EvalRow> pred_rows = {{{1, 3}, {}, "tidy the metadata", ""},
                                      {{2}, {}, "digest the prices", ""}};
    std::vector<EvalRow> gold_rows = {{{}, {1, 3}, "", "tidy the metadata"},
                                      {{}, {2}, "", "digest the prices"}};
    write_jsonl(dir.file("pred.jsonl"), "eval", pred_rows);
    write_jsonl(dir.file("gold.jsonl"), "eval", gold_rows);

    auto out = dir.file("eval.log");
    CHECK(run_cli("eval --pred " + dir.file("pred.jsonl") + " --gold " + dir.file("gold.jsonl"),
                  out) == 0);
    auto text = slurp(out);
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("tool_match    1.0000"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("order_match   1.0000"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("rouge_l       1.0000"));
}

TEST_CASE("cli: missing inputs exit nonzero with a complaint") {
    auto config = config_path_or_skip();
    TempDir dir;
    auto out = dir.file("cli.log");

    CHECK(run_cli("mine --out " + dir.file("mine"), out) != 0);  // --config required
    CHECK_THAT(slurp(out), Catch::Matchers::ContainsSubstring("--config"));

    CHECK(run_cli("eval --pred /nonexistent.jsonl --gold /nonexistent.jsonl", out) != 0);
    CHECK_THAT(slurp(out), Catch::Matchers::ContainsSubstring("eval failed"));

    CHECK(run_cli("frobnicate", out) != 0);

    CHECK(run_cli("mine --config /nonexistent/config.json --out " + dir.file("mine"), out) != 0);
    CHECK_THAT(slurp(out), Catch::Matchers::ContainsSubstring("mine failed"));
    (void)config;
}
