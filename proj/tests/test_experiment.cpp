#include <gtest/gtest.h>

#include <sstream>

#include "boms/experiment.hpp"

using namespace boms;

namespace {

ConfigStore small_store() {
    ConfigStore s;
    for (const auto& [k, v] : std::initializer_list<std::pair<const char*, const char*>>{
             {"grid_rows", "4"}, {"grid_cols", "4"}, {"dataset_size", "300"}, {"n_candidates", "8"},
             {"iterations", "4"}, {"n_trials", "3"}, {"n_probe", "32"}, {"eval_horizon", "60"}, {"seed", "5"}})
        s.set(k, v);
    return s;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Parallel, CoversEveryIndexAndRethrows) {
    std::vector<int> hits(100, 0);
    parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
    EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                     if (i == 7) throw std::runtime_error("boom");
                 }),
                 std::runtime_error);
    parallel_for(0, 2, [](std::size_t) { FAIL(); });
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
    ConfigStore a = small_store();
    a.set("threads", "1");
    ConfigStore b = small_store();
    b.set("threads", "3");
    const std::string csv_a = regret_trace_csv(run_experiment(a));
    EXPECT_EQ(csv_a, regret_trace_csv(run_experiment(b)));
    EXPECT_EQ(csv_a, regret_trace_csv(run_experiment(a)));
    EXPECT_EQ(count_lines(csv_a), 1u + 3 * 4);
    EXPECT_EQ(csv_a.substr(0, csv_a.find('\n')),
              "trial,iteration,selected,mc_return,true_return,output_index,inference_regret,normalized_regret");
    ConfigStore c = small_store();
    c.set("seed", "6");
    EXPECT_NE(csv_a, regret_trace_csv(run_experiment(c)));
}

TEST(Experiment, BomsCarriesARandomReferenceWithTheSameFirstPick) {
    const ExperimentResult res = run_experiment(small_store());
    for (const auto& t : res.trials) {
        ASSERT_TRUE(t.random_reference.has_value());
        EXPECT_EQ(t.records.front().selected, t.random_reference->records.front().selected);
        EXPECT_EQ(t.budget_used, 4u * 5u);
        EXPECT_GE(t.validation_regret, 0.0);
        EXPECT_GE(t.ope_regret, 0.0);
    }
    const nlohmann::json j = summary_json(res);
    EXPECT_EQ(j["selector"], "boms");
    EXPECT_EQ(j["per_iteration"].size(), 4u);
    EXPECT_EQ(j["random_selection_per_iteration"].size(), 4u);
    EXPECT_TRUE(j["per_iteration"][0]["inference_regret"].contains("std"));
    EXPECT_EQ(j["online_trajectories"], 3u * 4u * 5u);
    EXPECT_EQ(j["final_inference_regret"].size(), 3u);
    const double f = j["fraction_final_regret_at_most_ope"];
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
}

TEST(Experiment, OfflineSelectorsProduceOneRecord) {
    for (const char* sel : {"validation", "ope-fqe"}) {
        ConfigStore s = small_store();
        s.set("selector", sel);
        const ExperimentResult res = run_experiment(s);
        for (const auto& t : res.trials) {
            ASSERT_EQ(t.records.size(), 1u);
            EXPECT_EQ(t.records[0].iteration, 0);
            EXPECT_TRUE(std::isnan(t.records[0].mc_return));
            EXPECT_EQ(t.budget_used, 0u);
            EXPECT_EQ(t.records[0].inference_regret,
                      std::string(sel) == "validation" ? t.validation_regret : t.ope_regret);
            EXPECT_EQ(t.distances.filled_count(), 64u);
        }
        EXPECT_EQ(summary_json(res)["iterations"], 0);
    }
}

TEST(Experiment, SharedInstanceWithoutResampling) {
    ConfigStore s = small_store();
    s.set("resample_per_trial", "false");
    const ExperimentConfig cfg = parse_experiment_config(s);
    const Environment env = build_environment(cfg);
    const TrialInstance a = make_trial_instance(cfg, env, 0);
    const TrialInstance b = make_trial_instance(cfg, env, 2);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.true_returns, b.true_returns);
    s.set("resample_per_trial", "true");
    const ExperimentConfig cfg2 = parse_experiment_config(s);
    EXPECT_NE(make_trial_instance(cfg2, env, 0).data, make_trial_instance(cfg2, env, 2).data);
}

TEST(Experiment, EnvironmentFromFile) {
    const auto dir = std::filesystem::temp_directory_path() / "boms_env_test";
    std::filesystem::create_directories(dir);
    const Gridworld g = make_gridworld(GridworldSpec{.rows = 3, .cols = 3, .slip = 0.2, .gamma = 0.9});
    {
        std::ofstream out(dir / "env.txt");
        write_mdp(out, g.mdp, g.embedding);
    }
    ConfigStore s = small_store();
    s.set("env_file", (dir / "env.txt").string());
    const Environment env = build_environment(parse_experiment_config(s));
    EXPECT_EQ(env.mdp.transition, g.mdp.transition);
    EXPECT_EQ(env.embedding.coords, g.embedding.coords);
    s.set("env_file", (dir / "missing.txt").string());
    EXPECT_THROW(build_environment(parse_experiment_config(s)), ConfigError);
}

TEST(Artifacts, WrittenAtomically) {
    const auto dir = std::filesystem::temp_directory_path() / "boms_artifacts_test";
    std::filesystem::remove_all(dir);
    const ExperimentResult res = run_experiment(small_store());
    write_select_artifacts(res, dir);
    for (const char* f : {"regret_trace.csv", "summary.json", "distance_matrix.csv", "config_resolved.txt"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    for (const auto& e : std::filesystem::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
    std::ifstream in(dir / "summary.json");
    const nlohmann::json j = nlohmann::json::parse(in);
    EXPECT_EQ(j["n_trials"], 3);
    std::ifstream dm(dir / "distance_matrix.csv");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(dm, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
    }
    EXPECT_EQ(rows, 8u);
}

TEST(Ablation, RowCountsAndCellConfigs) {
    const AblationResult res = run_ablation(small_store(), "alpha");
    EXPECT_EQ(count_lines(res.csv), 1u + 3 * 3 * 4);
    ASSERT_EQ(res.cell_configs.size(), 3u);
    EXPECT_EQ(res.cell_configs[0].first, "alpha_0.1.cfg");
    EXPECT_NE(res.cell_configs[2].second.find("alpha = 10\n"), std::string::npos);
    ConfigStore offline = small_store();
    offline.set("selector", "validation");
    const AblationResult forced = run_ablation(offline, "acquisition");
    EXPECT_EQ(count_lines(forced.csv), 1u + 2 * 3 * 4);
    EXPECT_NE(forced.cell_configs[0].second.find("selector = boms\n"), std::string::npos);
    EXPECT_EQ(sweep_spec("policy-source").values.size(), 5u);
    EXPECT_THROW(sweep_spec("beta"), ConfigError);
}

TEST(TheorySuites, ReportOneLinePerInstance) {
    TheoryOptions opts;
    const TheoryReport sim = run_theory_suite(TheorySuite::simulation_lemma, 25, 3, opts);
    EXPECT_EQ(sim.lines.size(), 25u);
    EXPECT_EQ(sim.violations, 0u);
    EXPECT_EQ(nlohmann::json::parse(sim.lines[0])["instance"], 0);
    const TheoryReport gp = run_theory_suite(TheorySuite::gp_oracle, 25, 3, opts);
    EXPECT_EQ(gp.violations, 0u);
    const TheoryReport prop = run_theory_suite(TheorySuite::proposition1, 10, 3, opts);
    EXPECT_EQ(prop.checked, 10u);
    EXPECT_EQ(prop.violations, 0u);
    EXPECT_EQ(prop.lines.size(), 10u + prop.premise_violated);
    std::size_t ok = 0;
    for (const auto& l : prop.lines) ok += nlohmann::json::parse(l)["status"] == "ok";
    EXPECT_EQ(ok, 10u);
    EXPECT_EQ(run_theory_suite(TheorySuite::simulation_lemma, 5, 3, opts).lines, std::vector<std::string>(sim.lines.begin(), sim.lines.begin() + 5));
    EXPECT_THROW(theory_suite_from_string("lemma"), ConfigError);
}
