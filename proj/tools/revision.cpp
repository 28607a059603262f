#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "revision/cli.hpp"
#include "revision/service.hpp"

int main(int argc, char** argv) {
    CLI::App app{"visual-search intent mining and tool dispatch"};
    app.require_subcommand(1);

    revision::MineCliOptions mine;
    auto* mine_cmd =
        app.add_subcommand("mine", "mine no-click logs into signals and an intent hierarchy");
    mine_cmd->add_option("--config", mine.config_path, "config file")->required();
    mine_cmd->add_option("--logs", mine.logs_path, "request log JSONL, overrides the config path");
    mine_cmd->add_option("--out", mine.out_dir, "output directory")->required();
    mine_cmd->add_flag("--mock", mine.mock, "force mock reasoners for every role");

    revision::EvalCliOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "score prediction rows against gold rows");
    eval_cmd->add_option("--pred", eval.pred_path, "prediction JSONL")->required();
    eval_cmd->add_option("--gold", eval.gold_path, "gold JSONL")->required();

    revision::SimulateCliOptions sim;
    auto* sim_cmd =
        app.add_subcommand("simulate", "replay a seeded synthetic corpus through dispatch");
    sim_cmd->add_option("--config", sim.config_path, "config file")->required();
    sim_cmd->add_option("--out", sim.out_dir, "output directory")->required();
    sim_cmd->add_option("--seed", sim.seed, "corpus seed");
    sim_cmd->add_option("--queries", sim.n_queries, "corpus size");
    sim_cmd->add_option("--duplicates", sim.duplicate_fraction,
                        "fraction of queries duplicating an earlier image");
    sim_cmd->add_option("--low-relevance", sim.low_relevance_fraction,
                        "fraction of queries with weak top-1 similarity");
    sim_cmd->add_flag("--mock", sim.mock, "force mock reasoners for every role");

    std::string serve_config;
    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve_cmd = app.add_subcommand("serve", "run the dispatch HTTP service");
    serve_cmd->add_option("--config", serve_config, "config file")->required();
    serve_cmd->add_option("--host", host, "bind address");
    serve_cmd->add_option("--port", port, "bind port");

    CLI11_PARSE(app, argc, argv);

    if (*mine_cmd) return revision::run_mine(mine, std::cout, std::cerr);
    if (*eval_cmd) return revision::run_eval(eval, std::cout, std::cerr);
    if (*sim_cmd) return revision::run_simulate(sim, std::cout, std::cerr);
    if (*serve_cmd) {
        try {
            auto config = revision::load_app_config(serve_config);
            revision::validate(config);
            auto stack = revision::build_online_stack(config);
            revision::DispatchService service(*stack->dispatcher);
            std::cout << "listening on " << host << ":" << port << std::endl;
            if (!service.listen(host, port)) {
                std::cerr << "serve failed: cannot listen on " << host << ":" << port << "\n";
                return 1;
            }
        } catch (const std::exception& e) {
            std::cerr << "serve failed: " << e.what() << "\n";
            return 1;
        }
    }
    return 0;
}
