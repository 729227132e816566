// boms: model selection experiments and theory checks.
//
//   boms select        --config PATH --out DIR [--seed N]
//   boms verify-theory --suite NAME --n N --seed N --out DIR [--lambda L]
//   boms ablate        --config PATH --sweep NAME --out DIR
//
// Exit codes: 0 success, 1 verification violations, 2 usage or config error,
// 3 numerical failure, 4 I/O or other runtime error.

#include <iostream>

#include <CLI11.hpp>

#include "boms/experiment.hpp"

namespace {

enum Exit { kOk = 0, kViolations = 1, kConfig = 2, kNumerical = 3, kRuntime = 4 };

int run_select(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed) {
    boms::ConfigStore store = boms::load_config(config_path);
    if (seed) store.set("seed", std::to_string(*seed));
    const boms::ExperimentResult res = boms::run_experiment(store);
    boms::write_select_artifacts(res, out);
    std::size_t above = 0;
    for (const auto& t : res.trials)
        for (const auto& r : t.records) above += r.normalized_regret > 100.0;
    if (above > 0)
        std::cerr << "warning: " << above << " records have normalized regret above 100 (selected policy returns below zero)\n";
    const auto summary = boms::summary_json(res);
    const auto& last = summary["per_iteration"].back();
    std::cout << "select: " << res.config.n_trials << " trials, selector " << boms::to_string(res.config.selector.kind)
              << ", median final regret " << last["inference_regret"]["median"].get<double>() << " -> " << out << '\n';
    return kOk;
}

int run_verify(const std::string& suite_name, std::size_t n, std::uint64_t seed, const std::string& out, double lambda,
               int threads) {
    const boms::TheorySuite suite = boms::theory_suite_from_string(suite_name);
    boms::TheoryOptions opts;
    opts.lambda = lambda;
    opts.threads = threads;
    const boms::TheoryReport rep = boms::run_theory_suite(suite, n, seed, opts);
    std::filesystem::create_directories(out);
    std::string body;
    for (const auto& line : rep.lines) body += line + "\n";
    boms::write_file_atomic(std::filesystem::path(out) / (suite_name + ".jsonl"), body);
    std::cout << "verify-theory " << suite_name << ": checked " << rep.checked << ", violations " << rep.violations;
    if (suite == boms::TheorySuite::proposition1)
        std::cout << ", premise-violated " << rep.premise_violated << ", min slack " << rep.worst;
    else
        std::cout << ", max deviation " << rep.worst;
    std::cout << '\n';
    if (rep.checked < n) std::cerr << "warning: only " << rep.checked << " of " << n << " instances passed the premise check\n";
    return rep.violations == 0 ? kOk : kViolations;
}

int run_ablate(const std::string& config_path, const std::string& sweep, const std::string& out) {
    const boms::ConfigStore store = boms::load_config(config_path);
    const boms::AblationResult res = boms::run_ablation(store, sweep);
    const std::filesystem::path dir(out);
    std::filesystem::create_directories(dir / "cells");
    boms::write_file_atomic(dir / ("ablation_" + sweep + ".csv"), res.csv);
    for (const auto& [name, text] : res.cell_configs) boms::write_file_atomic(dir / "cells" / name, text);
    std::cout << "ablate " << sweep << ": " << res.cell_configs.size() << " cells -> " << out << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active model selection for offline model-based RL on tabular MDPs"};
    app.require_subcommand(1);

    std::string config_path, out, suite, sweep;
    std::optional<std::uint64_t> select_seed;
    std::size_t n_instances = 100;
    std::uint64_t verify_seed = 0;
    double lambda = -1.0;
    int threads = 0;

    auto* select = app.add_subcommand("select", "run the model selection experiment");
    select->add_option("--config", config_path, "config file")->required();
    select->add_option("--out", out, "output directory")->required();
    select->add_option("--seed", select_seed, "override the master seed");

    auto* verify = app.add_subcommand("verify-theory", "run a randomized verification suite");
    verify->add_option("--suite", suite, "simulation-lemma | proposition1 | gp-oracle")->required();
    verify->add_option("--n", n_instances, "instances to check");
    verify->add_option("--seed", verify_seed, "suite seed");
    verify->add_option("--out", out, "output directory")->required();
    verify->add_option("--lambda", lambda, "proposition1 penalty weight (default: drawn in [1, 2])");
    verify->add_option("--threads", threads, "worker threads (0 = hardware concurrency)");

    auto* ablate = app.add_subcommand("ablate", "sweep one design choice");
    ablate->add_option("--config", config_path, "config file")->required();
    ablate->add_option("--sweep", sweep, "alpha | rollout-length | policy-source | acquisition")->required();
    ablate->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*select) return run_select(config_path, out, select_seed);
        if (*verify) return run_verify(suite, n_instances, verify_seed, out, lambda, threads);
        if (*ablate) return run_ablate(config_path, sweep, out);
    } catch (const boms::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const boms::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kConfig;
}
