// memprobe: command-line driver for seen/unseen memorization experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "memprobe/memprobe.hpp"

namespace {

using namespace memprobe;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open '" + path + "'");
    }
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw UsageError("'" + path + "' is not valid JSON");
    }
    return doc;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
    ExperimentConfig config = load_experiment_config(config_path, overrides);
    ExperimentResult result = run_experiment(config);
    std::cout << result.tsv;
    if (!config.output.empty()) {
        std::cerr << "wrote " << config.output << ".json and " << config.output << ".tsv\n";
    }
    return 0;
}

int cmd_prob_table(std::size_t total, std::size_t max_count) {
    std::cout << probability_table(max_count, total);
    return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    nlohmann::json doc = read_json_file(config_path);
    SynthConfig config;
    try {
        config = (doc.contains("synth") ? doc.at("synth") : doc).get<SynthConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid synth config: ") + e.what());
    }
    write_synth_dataset(generate(config), out_dir);
    std::cerr << "wrote synthetic dataset to " << out_dir << "\n";
    return 0;
}

int cmd_split(const std::string& config_path, Seed seed, const std::string& out_path) {
    ExperimentConfig config = load_experiment_config(config_path);
    ExperimentData data;
    try {
        data = load_experiment_data(config);
    } catch (const Error& e) {
        throw StageError("load", std::nullopt, e);
    }
    Repetition rep = prepare_repetition(data, config, seed);
    nlohmann::json j = to_json(rep.plan);
    if (config.train_sentences) {
        j["training_pool_ids"] = rep.source_ids;
    }
    write_text_file(out_path, j.dump(2) + "\n");
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& config_path, std::size_t repetition,
             const std::string& plan_path) {
    ExperimentConfig config = load_experiment_config(config_path);
    ExperimentData data;
    try {
        data = load_experiment_data(config);
    } catch (const Error& e) {
        throw StageError("load", std::nullopt, e);
    }
    ProbeModel model;
    try {
        model = probe_from_json(read_json_file(model_path));
    } catch (const Error& e) {
        throw StageError("load", std::nullopt, e);
    }
    SplitPlan plan;
    if (!plan_path.empty()) {
        try {
            plan = split_plan_from_json(read_json_file(plan_path));
        } catch (const nlohmann::json::exception& e) {
            throw StageError("load", std::nullopt, DataError(std::string("malformed split plan: ") + e.what()));
        }
    } else {
        plan = prepare_repetition(data, config, config.base_seed + repetition, repetition).plan;
    }
    RunResult run;
    try {
        run = evaluate_run(model, data.test, data.test_store, plan);
    } catch (const Error& e) {
        throw StageError("evaluate", repetition, e);
    }
    std::cout << to_json(run).dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Measure memorization in word-level probing classifiers"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto* run = app.add_subcommand("run", "Run a repeated split/train/evaluate experiment");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--override", overrides, "KEY=VALUE config override (repeatable)");

    std::size_t total = 0;
    std::size_t max_count = 0;
    auto* table = app.add_subcommand("prob-table", "Exact and approximate selection probabilities");
    table->add_option("--total", total, "Number of training sentences |S|")->required();
    table->add_option("--max", max_count, "Largest |S_w| to tabulate")->required();

    std::string out_path;
    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus with token vectors");
    synth->add_option("--config", config_path, "Synthetic corpus config (JSON)")->required();
    synth->add_option("--out", out_path, "Output directory")->required();

    Seed seed = 0;
    auto* split = app.add_subcommand("split", "Emit the seen/unseen split plan for one seed");
    split->add_option("--config", config_path, "Experiment config (JSON)")->required();
    split->add_option("--seed", seed, "Split seed")->required();
    split->add_option("--out", out_path, "Output JSON file")->required();

    std::string model_path;
    std::string plan_path;
    std::size_t repetition = 0;
    auto* eval = app.add_subcommand("eval", "Evaluate a saved probe on the configured test set");
    eval->add_option("--model", model_path, "Model JSON written by run")->required();
    eval->add_option("--config", config_path, "Experiment config (JSON)")->required();
    eval->add_option("--repetition", repetition, "Repetition whose split to use (seed = base_seed + R)");
    eval->add_option("--plan", plan_path, "Split plan JSON (overrides --repetition)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ExitCode::usage);
    }

    try {
        if (*run) {
            return cmd_run(config_path, overrides);
        }
        if (*table) {
            return cmd_prob_table(total, max_count);
        }
        if (*synth) {
            return cmd_synth(config_path, out_path);
        }
        if (*split) {
            return cmd_split(config_path, seed, out_path);
        }
        if (*eval) {
            return cmd_eval(model_path, config_path, repetition, plan_path);
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(exit_code_for(e));
    }
    return static_cast<int>(ExitCode::usage);
}
