// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Usage: acceptance [benchmark.cfg]

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "boms/experiment.hpp"

using namespace boms;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << detail << std::endl;
    failures += pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

void theory_criteria() {
    TheoryOptions opts;
    {
        const auto t0 = Clock::now();
        const TheoryReport r = run_theory_suite(TheorySuite::gp_oracle, 200, 1, opts);
        const double secs = seconds_since(t0);
        report(1, "gp posterior vs explicit conditioning", r.violations == 0 && r.checked == 200 && secs < 5.0,
               fmt("200 instances, max deviation %.3g (tol 1e-8), %.2fs", r.worst, secs));
    }
    {
        const auto t0 = Clock::now();
        const TheoryReport r = run_theory_suite(TheorySuite::simulation_lemma, 100, 2, opts);
        const double secs = seconds_since(t0);
        report(2, "simulation lemma", r.violations == 0 && r.checked == 100 && secs < 10.0,
               fmt("100 instances, max |lhs - rhs| %.3g (tol 1e-8), %.2fs", r.worst, secs));
    }
    {
        const auto t0 = Clock::now();
        const TheoryReport r = run_theory_suite(TheorySuite::proposition1, 100, 3, opts);
        const double secs = seconds_since(t0);
        report(3, "sub-optimality bound", r.violations == 0 && r.checked == 100 && secs < 60.0,
               fmt("%zu premise-verified instances (%zu premise failures skipped), min slack %.3g, %.2fs", r.checked,
                   r.premise_violated, r.worst, secs));
    }
}

ExperimentResult benchmark_result;

void benchmark_criteria(const ConfigStore& base) {
    // 4: BOMS against random selection and the offline baselines.
    const auto t0 = Clock::now();
    benchmark_result = run_experiment(base);
    const double secs = seconds_since(t0);
    const nlohmann::json s = summary_json(benchmark_result);
    const int t_report = std::min(10, benchmark_result.config.selector.iterations);
    const double boms_med = s["per_iteration"][t_report - 1]["inference_regret"]["median"];
    const double rand_med = s["random_selection_per_iteration"][t_report - 1]["inference_regret"]["median"];
    const double f_val = s["fraction_final_regret_at_most_validation"];
    const double f_ope = s["fraction_final_regret_at_most_ope"];
    report(4, "benchmark vs random and offline baselines",
           boms_med <= rand_med && f_val >= 0.7 && f_ope >= 0.7 && secs < 180.0,
           fmt("median regret at T=%d: boms %.4f, random %.4f; final <= validation in %.0f%%, <= FQE in %.0f%% of trials; %.1fs",
               t_report, boms_med, rand_med, 100 * f_val, 100 * f_ope, secs));

    // 5: noise-free evaluation with T = N finds the best candidate for both selectors.
    {
        ConfigStore exact = base;
        exact.set("evaluation", "exact");
        exact.set("iterations", exact.get("n_candidates"));
        exact.set("n_trials", "5");
        double worst = 0.0;
        for (const char* sel : {"boms", "random-selection"}) {
            exact.set("selector", sel);
            for (const auto& t : run_experiment(exact).trials) worst = std::max(worst, t.records.back().inference_regret);
        }
        report(5, "noise-free full budget reaches zero regret", worst == 0.0,
               fmt("largest final regret over 5 trials x 2 selectors: %.3g", worst));
    }

    // 6: normalized regret endpoints on the benchmark's own J*.
    {
        bool ok = true;
        double max_norm = 0.0;
        for (const auto& t : benchmark_result.trials) {
            ok = ok && normalized_regret(t.j_star, t.j_star) == 0.0 && normalized_regret(0.0, t.j_star) == 100.0;
            for (const auto& r : t.records) {
                const double expect = std::max(0.0, 100.0 * r.inference_regret / t.j_star);
                ok = ok && std::abs(r.normalized_regret - expect) < 1e-9;
                max_norm = std::max(max_norm, r.normalized_regret);
            }
        }
        report(6, "normalized regret endpoints", ok, fmt("J_out = J* -> 0, J_out = 0 -> 100; largest recorded %.2f", max_norm));
    }
}

// Byte-identical traces for identical seeds, independent of thread count.
void determinism_criterion(const ConfigStore& base) {
    ConfigStore single = base;
    single.set("threads", "1");
    auto artifacts = [](const ExperimentResult& r) {
        std::ostringstream dist;
        write_distance_csv(dist, r.trials.front().distances);
        return regret_trace_csv(r) + "\n" + dist.str() + "\n" + summary_json(r).dump(2);
    };
    const std::string a = artifacts(benchmark_result);
    const std::string b = artifacts(run_experiment(single));
    report(8, "deterministic artifacts", a == b,
           fmt("regret trace, distance matrix and summary (%zu bytes) %s across runs and thread counts", a.size(),
               a == b ? "identical" : "differ"));
}

void gp_health_criterion() {
    int escalations = 0;
    for (const auto& t : benchmark_result.trials) escalations = std::max(escalations, t.max_jitter_escalations);

    // Covariance-term cost should be linear in the candidate count for fixed t. The two sizes are
    // warmed up and then timed in alternation, ten calls per sample, so clock ramp-up and cold caches
    // hit both equally.
    struct Case {
        DistanceMatrix d;
        GpState st;
        std::vector<double> times;
    };
    auto make_case = [](std::size_t n) {
        Rng rng(n);
        Eigen::MatrixXd pts(static_cast<Eigen::Index>(n), 3);
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            for (Eigen::Index c = 0; c < 3; ++c) pts(i, c) = uniform01(rng);
        Case k{oracle::full_distance_matrix(pts), {}, {}};
        std::vector<std::size_t> idx;
        std::vector<double> y;
        for (std::size_t j = 0; j < 20; ++j) idx.push_back(j * (n / 20)), y.push_back(standard_normal(rng));
        k.st = make_gp_state(idx, y, k.d, GpConfig{});
        return k;
    };
    Case small = make_case(1000);
    Case large = make_case(2000);
    double sink = 0.0;
    auto sample = [&sink](Case& k, bool keep) {
        const auto t0 = Clock::now();
        for (int rep = 0; rep < 10; ++rep) sink += covariance_terms(k.st, k.d).candidates(0, 0);
        if (keep) k.times.push_back(seconds_since(t0) / 10);
    };
    for (int rep = 0; rep < 46; ++rep) {
        sample(small, rep >= 5);
        sample(large, rep >= 5);
    }
    if (sink == -1.0) std::cout << "";
    const double t1 = median_of(small.times);
    const double t2 = median_of(large.times);
    const double ratio = t2 / t1;
    report(7, "GP numerics and scaling", ratio >= 1.5 && ratio <= 3.0,
           fmt("every kernel matrix factorized (max jitter escalations %d); covariance terms N=1000 %.1fus, N=2000 %.1fus, ratio %.2f",
               escalations, 1e6 * t1, 1e6 * t2, ratio));
}

void fqe_criterion() {
    const Gridworld g = make_gridworld(GridworldSpec{.rows = 6, .cols = 6, .slip = 0.0, .gamma = 0.95});
    OfflineDataset full;
    for (int s = 0; s < g.mdp.n_states; ++s)
        for (int a = 0; a < g.mdp.n_actions; ++a) {
            int next = 0;
            g.mdp.next_dist(s, a).maxCoeff(&next);
            full.transitions.push_back({s, a, g.mdp.reward(s, a), next});
        }
    full.split_index = full.transitions.size();
    const OfflineDataset logged =
        generate_dataset(g.mdp, make_behavior_policy(g.mdp, BehaviorKind::epsilon_greedy, 0.3), 2000, 50, 9, 0.2);
    const CandidateSet set = generate_candidate_set(logged, MdpShape::of(g.mdp), 50, 10, CandidateConfig{});
    const OfflineSelection ope = run_fqe_ope(set, full, g.mdp.initial_dist);
    double worst = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) worst = std::max(worst, std::abs(ope.scores[i] - total_return(g.mdp, set[i].policy)));
    report(9, "FQE exact on full-coverage deterministic data", worst <= 1e-8,
           fmt("50 candidates, max |FQE - J| %.3g", worst));
}

}  // namespace

int main(int argc, char** argv) {
    const std::string config_path = argc > 1 ? argv[1] : "configs/benchmark.cfg";
    try {
        ConfigStore base;
        base.merge_file(config_path);
        theory_criteria();
        try {
            benchmark_criteria(base);
            gp_health_criterion();
            determinism_criterion(base);
        } catch (const NumericalError& e) {
            report(7, "GP numerics and scaling", false, std::string("numerical failure: ") + e.what());
        }
        fqe_criterion();
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
        return 2;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
