#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "boms/config.hpp"
#include "boms/oracles.hpp"
#include "boms/theory.hpp"

namespace boms {

/// Run fn(0..n-1) on up to `threads` workers (0 = hardware concurrency).
/// Results must be written to per-index slots; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Write via a temporary file and rename, so readers never see a partial artifact.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out.flush()) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

struct Environment {
    TabularMdp mdp;
    StateEmbedding embedding;
};

inline Environment build_environment(const ExperimentConfig& cfg) {
    if (!cfg.env_file.empty()) {
        std::ifstream in(cfg.env_file);
        if (!in) throw ConfigError("cannot read env_file '" + cfg.env_file + "'");
        MdpWithEmbedding m;
        try {
            m = read_mdp(in);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("env_file: ") + e.what());
        }
        return {std::move(m.mdp), std::move(m.embedding)};
    }
    try {
        Gridworld g = make_gridworld(cfg.grid);
        return {std::move(g.mdp), std::move(g.embedding)};
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("gridworld: ") + e.what());
    }
}

struct TrialInstance {
    Policy behavior;
    OfflineDataset data;
    CandidateSet set;
    std::vector<double> true_returns;
};

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial) {
    return derive_seed(cfg.seed, tag::trial, static_cast<std::uint64_t>(trial));
}

/// Dataset and candidate set of one trial. Shared by every trial unless
/// resample_per_trial is set.
inline TrialInstance make_trial_instance(const ExperimentConfig& cfg, const Environment& env, int trial) {
    const std::uint64_t seed = cfg.resample_per_trial ? trial_seed(cfg, trial) : derive_seed(cfg.seed, tag::instance);
    TrialInstance inst;
    inst.behavior = make_behavior_policy(env.mdp, cfg.behavior, cfg.behavior_epsilon);
    inst.data = generate_dataset(env.mdp, inst.behavior, cfg.dataset_size, cfg.episode_horizon,
                                 derive_seed(seed, tag::dataset), cfg.validation_fraction);
    inst.set = generate_candidate_set(inst.data, MdpShape::of(env.mdp), cfg.n_candidates, derive_seed(seed, tag::candidates),
                                      cfg.candidates);
    inst.true_returns = true_returns(inst.set, env.mdp).returns;
    return inst;
}

struct TrialResult {
    int trial = 0;
    double j_star = 0.0;
    std::vector<SelectionRecord> records;
    std::optional<SelectionTrace> random_reference;  // random selection on the same seed, BOMS runs only
    std::size_t validation_selected = 0;
    std::size_t ope_selected = 0;
    double validation_regret = 0.0;
    double ope_regret = 0.0;
    std::size_t budget_used = 0;
    int max_jitter_escalations = 0;
    std::size_t gp_factorizations = 0;
    DistanceMatrix distances;
};

inline TrialResult run_trial(const ExperimentConfig& cfg, const Environment& env, int trial) {
    const TrialInstance inst = make_trial_instance(cfg, env, trial);
    const RegretReporter reporter(inst.true_returns);
    SelectorConfig sel = cfg.selector;
    sel.seed = trial_seed(cfg, trial);

    TrialResult r;
    r.trial = trial;
    r.j_star = reporter.j_star;
    const OfflineSelection val = run_validation_baseline(inst.set, inst.data);
    const OfflineSelection ope = run_fqe_ope(inst.set, inst.data, env.mdp.initial_dist);
    r.validation_selected = val.selected;
    r.ope_selected = ope.selected;
    r.validation_regret = reporter.j_star - reporter.true_returns[val.selected];
    r.ope_regret = reporter.j_star - reporter.true_returns[ope.selected];

    const std::vector<int> probes = draw_probe_states(inst.data, cfg.distance.n_probe, sel.seed);
    const Policy empirical = empirical_behavior_policy(empirical_counts(inst.data, env.mdp.n_states, env.mdp.n_actions));
    const DistanceEngine engine(inst.set, env.embedding, cfg.distance, probes, empirical, derive_seed(sel.seed, tag::distance));

    auto offline_record = [&](std::size_t selected) {
        SelectionRecord rec = reporter.make(0, selected, std::numeric_limits<double>::quiet_NaN(), selected);
        r.records.push_back(rec);
    };
    switch (sel.kind) {
        case SelectorKind::boms: {
            OnlineEnvironment online(env.mdp);
            SelectionTrace trace = run_boms(inst.set, engine, online, reporter, sel);
            OnlineEnvironment reference_env(env.mdp);
            r.random_reference = run_random_selection(inst.set, reference_env, reporter, sel);
            r.records = trace.records;
            r.budget_used = trace.budget_used;
            r.max_jitter_escalations = trace.max_jitter_escalations;
            r.gp_factorizations = trace.gp_factorizations;
            r.distances = std::move(trace.distances);
            return r;
        }
        case SelectorKind::random_selection: {
            OnlineEnvironment online(env.mdp);
            SelectionTrace trace = run_random_selection(inst.set, online, reporter, sel);
            r.records = trace.records;
            r.budget_used = trace.budget_used;
            break;
        }
        case SelectorKind::validation: offline_record(val.selected); break;
        case SelectorKind::ope_fqe: offline_record(ope.selected); break;
    }
    // Non-BOMS selectors never look at distances; dump the full matrix for inspection.
    r.distances = engine.empty_matrix();
    for (std::size_t t = 0; t < inst.set.size(); ++t) engine.update(r.distances, t);
    return r;
}

struct ExperimentResult {
    ExperimentConfig config;
    std::string resolved_config;
    std::vector<TrialResult> trials;
};

inline ExperimentResult run_experiment(const ConfigStore& store) {
    ExperimentResult out;
    out.config = parse_experiment_config(store);
    out.resolved_config = store.resolved_text();
    const Environment env = build_environment(out.config);
    out.trials.resize(static_cast<std::size_t>(out.config.n_trials));
    parallel_for(out.trials.size(), out.config.threads,
                 [&](std::size_t k) { out.trials[k] = run_trial(out.config, env, static_cast<int>(k)); });
    return out;
}

namespace detail {

inline std::string csv_number(double v) { return std::isnan(v) ? std::string() : format_double(v); }

inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline nlohmann::json stats_json(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return {{"mean", mean}, {"std", stddev}, {"median", quantile(v, 0.5)}, {"q25", quantile(v, 0.25)}, {"q75", quantile(v, 0.75)}};
}

/// Per-iteration statistics over trials for record lists of equal length.
inline nlohmann::json per_iteration_json(const std::vector<const std::vector<SelectionRecord>*>& runs) {
    nlohmann::json rows = nlohmann::json::array();
    const std::size_t len = runs.front()->size();
    for (std::size_t i = 0; i < len; ++i) {
        std::vector<double> regret, normalized;
        for (const auto* recs : runs) {
            regret.push_back((*recs)[i].inference_regret);
            normalized.push_back((*recs)[i].normalized_regret);
        }
        nlohmann::json row = {{"iteration", (*runs.front())[i].iteration}, {"inference_regret", stats_json(regret)}};
        if (std::none_of(normalized.begin(), normalized.end(), [](double x) { return std::isnan(x); }))
            row["normalized_regret"] = stats_json(normalized);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

inline std::string regret_trace_csv(const ExperimentResult& res) {
    std::ostringstream os;
    os << "trial,iteration,selected,mc_return,true_return,output_index,inference_regret,normalized_regret\n";
    for (const auto& t : res.trials)
        for (const auto& r : t.records)
            os << t.trial << ',' << r.iteration << ',' << r.selected << ',' << detail::csv_number(r.mc_return) << ','
               << format_double(r.true_return) << ',' << r.output_index << ',' << format_double(r.inference_regret) << ','
               << detail::csv_number(r.normalized_regret) << '\n';
    return os.str();
}

/// Share of trials in which the selector's final output regret is <= the baseline's.
inline double fraction_at_most(const ExperimentResult& res, double TrialResult::*baseline) {
    std::size_t wins = 0;
    for (const auto& t : res.trials)
        if (t.records.back().inference_regret <= t.*baseline) ++wins;
    return static_cast<double>(wins) / static_cast<double>(res.trials.size());
}

inline nlohmann::json summary_json(const ExperimentResult& res) {
    const auto& cfg = res.config;
    std::vector<const std::vector<SelectionRecord>*> runs, reference;
    std::vector<double> val_regret, ope_regret, final_regret, j_star;
    std::size_t budget = 0;
    std::size_t factorizations = 0;
    int escalations = 0;
    for (const auto& t : res.trials) {
        runs.push_back(&t.records);
        if (t.random_reference) reference.push_back(&t.random_reference->records);
        val_regret.push_back(t.validation_regret);
        ope_regret.push_back(t.ope_regret);
        final_regret.push_back(t.records.back().inference_regret);
        j_star.push_back(t.j_star);
        budget += t.budget_used;
        factorizations += t.gp_factorizations;
        escalations = std::max(escalations, t.max_jitter_escalations);
    }
    nlohmann::json j;
    j["selector"] = to_string(cfg.selector.kind);
    j["n_trials"] = cfg.n_trials;
    j["n_candidates"] = cfg.n_candidates;
    j["iterations"] = cfg.selector.kind == SelectorKind::validation || cfg.selector.kind == SelectorKind::ope_fqe
                          ? 0
                          : cfg.selector.iterations;
    j["seed"] = cfg.seed;
    j["j_star"] = j_star;
    j["per_iteration"] = detail::per_iteration_json(runs);
    j["final_inference_regret"] = final_regret;
    if (!reference.empty()) j["random_selection_per_iteration"] = detail::per_iteration_json(reference);
    j["baselines"] = {
        {"validation", {{"regret", val_regret}, {"median", detail::quantile(val_regret, 0.5)}}},
        {"ope_fqe", {{"regret", ope_regret}, {"median", detail::quantile(ope_regret, 0.5)}}},
    };
    j["fraction_final_regret_at_most_validation"] = fraction_at_most(res, &TrialResult::validation_regret);
    j["fraction_final_regret_at_most_ope"] = fraction_at_most(res, &TrialResult::ope_regret);
    j["online_trajectories"] = budget;
    j["gp_factorizations"] = factorizations;
    j["max_jitter_escalations"] = escalations;
    return j;
}

/// Writes regret_trace.csv, summary.json, distance_matrix.csv (first trial)
/// and config_resolved.txt into `dir`.
inline void write_select_artifacts(const ExperimentResult& res, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "regret_trace.csv", regret_trace_csv(res));
    write_file_atomic(dir / "summary.json", summary_json(res).dump(2) + "\n");
    std::ostringstream dist;
    write_distance_csv(dist, res.trials.front().distances);
    write_file_atomic(dir / "distance_matrix.csv", dist.str());
    write_file_atomic(dir / "config_resolved.txt", res.resolved_config);
}

// ---------------------------------------------------------------------------
// Ablation sweeps

struct SweepSpec {
    std::string key;
    std::vector<std::string> values;
};

inline SweepSpec sweep_spec(std::string_view name) {
    if (name == "alpha") return {"alpha", {"0.1", "1", "10"}};
    if (name == "rollout-length") return {"rollout_length", {"1", "5", "20"}};
    if (name == "policy-source") {
        SweepSpec s{"policy_source", {}};
        for (auto p : kAllPolicySources) s.values.push_back(to_string(p));
        return s;
    }
    if (name == "acquisition") return {"acquisition", {"gp-ucb", "random"}};
    throw ConfigError("unknown sweep '" + std::string(name) + "' (alpha, rollout-length, policy-source, acquisition)");
}

struct AblationResult {
    std::string csv;
    std::vector<std::pair<std::string, std::string>> cell_configs;  // (file name, resolved config)
};

/// Runs BOMS once per sweep value; the long CSV has one row per (value, trial, iteration).
inline AblationResult run_ablation(const ConfigStore& base, std::string_view sweep) {
    const SweepSpec spec = sweep_spec(sweep);
    AblationResult out;
    std::ostringstream os;
    os << "sweep,value,trial,iteration,selected,true_return,output_index,inference_regret,normalized_regret\n";
    for (const auto& value : spec.values) {
        ConfigStore cell = base;
        cell.set("selector", "boms");
        cell.set(spec.key, value);
        const ExperimentResult res = run_experiment(cell);
        for (const auto& t : res.trials)
            for (const auto& r : t.records)
                os << sweep << ',' << value << ',' << t.trial << ',' << r.iteration << ',' << r.selected << ','
                   << format_double(r.true_return) << ',' << r.output_index << ',' << format_double(r.inference_regret)
                   << ',' << detail::csv_number(r.normalized_regret) << '\n';
        out.cell_configs.emplace_back(std::string(sweep) + "_" + value + ".cfg", res.resolved_config);
    }
    out.csv = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// Randomized theory suites

enum class TheorySuite { simulation_lemma, proposition1, gp_oracle };

inline TheorySuite theory_suite_from_string(std::string_view s) {
    if (s == "simulation-lemma") return TheorySuite::simulation_lemma;
    if (s == "proposition1") return TheorySuite::proposition1;
    if (s == "gp-oracle") return TheorySuite::gp_oracle;
    throw ConfigError("unknown suite '" + std::string(s) + "' (simulation-lemma, proposition1, gp-oracle)");
}

struct TheoryReport {
    std::vector<std::string> lines;  // one JSON object per instance
    std::size_t checked = 0;
    std::size_t violations = 0;
    std::size_t premise_violated = 0;
    double worst = 0.0;  // largest residual / deviation, or smallest slack
};

struct TheoryOptions {
    double tolerance = 1e-8;
    double lambda = -1.0;  // proposition1: negative draws lambda in [1, 2] per instance
    int threads = 0;
};

/// Runs `n` checked instances seeded by derive_seed(seed, tag::instance, k).
/// For proposition1 `n` counts premise-verified instances; premise-violating
/// draws are reported but excluded, up to 20 n attempts.
inline TheoryReport run_theory_suite(TheorySuite suite, std::size_t n, std::uint64_t seed, const TheoryOptions& opts = {}) {
    TheoryReport rep;
    auto instance_seed = [&](std::size_t k) { return derive_seed(seed, tag::instance, k); };
    if (suite == TheorySuite::simulation_lemma) {
        std::vector<SimulationLemmaResult> res(n);
        parallel_for(n, opts.threads, [&](std::size_t k) {
            const auto inst = random_simulation_lemma_instance(instance_seed(k));
            res[k] = simulation_lemma_check(inst.m_prime, inst.m_double_prime, inst.policy);
        });
        for (std::size_t k = 0; k < n; ++k) {
            const bool ok = res[k].gap <= opts.tolerance;
            rep.violations += ok ? 0 : 1;
            rep.worst = std::max(rep.worst, res[k].gap);
            rep.lines.push_back(nlohmann::json{{"instance", k}, {"lhs", res[k].lhs}, {"rhs", res[k].rhs},
                                               {"gap", res[k].gap}, {"ok", ok}}
                                    .dump());
        }
        rep.checked = n;
        return rep;
    }
    if (suite == TheorySuite::gp_oracle) {
        std::vector<oracle::GpOracleResult> res(n);
        parallel_for(n, opts.threads, [&](std::size_t k) { res[k] = oracle::gp_oracle_instance(instance_seed(k)); });
        for (std::size_t k = 0; k < n; ++k) {
            const double dev = std::max(res[k].max_mean_deviation, res[k].max_variance_deviation);
            const bool ok = dev <= opts.tolerance;
            rep.violations += ok ? 0 : 1;
            rep.worst = std::max(rep.worst, dev);
            rep.lines.push_back(nlohmann::json{{"instance", k}, {"n_candidates", res[k].n_candidates},
                                               {"n_evaluated", res[k].n_evaluated},
                                               {"max_mean_deviation", res[k].max_mean_deviation},
                                               {"max_variance_deviation", res[k].max_variance_deviation}, {"ok", ok}}
                                    .dump());
        }
        rep.checked = n;
        return rep;
    }
    // proposition1: evaluate in batches until n instances pass the premise check.
    rep.worst = std::numeric_limits<double>::infinity();
    const std::size_t max_attempts = 20 * std::max<std::size_t>(n, 1);
    std::size_t attempted = 0;
    while (rep.checked < n && attempted < max_attempts) {
        const std::size_t batch = std::min(n - rep.checked, max_attempts - attempted);
        std::vector<BoundReport> res(batch);
        parallel_for(batch, opts.threads, [&](std::size_t k) {
            const auto inst = random_proposition1_instance(instance_seed(attempted + k), opts.lambda);
            res[k] = proposition1_check(inst.true_mdp, inst.m1, inst.m2, inst.behavior, inst.embedding);
        });
        for (std::size_t k = 0; k < batch; ++k) {
            const BoundReport& b = res[k];
            nlohmann::json line = {{"instance", attempted + k},
                                   {"lhs", b.lhs},
                                   {"term_a1_a2", b.term_a1_a2},
                                   {"term_a3", b.term_a3},
                                   {"rhs", b.rhs},
                                   {"slack", b.slack},
                                   {"lipschitz_L", b.lipschitz_L},
                                   {"epsilon_beta", b.epsilon_beta},
                                   {"premise_margin", b.premise_margin}};
            if (!b.premise_ok) {
                ++rep.premise_violated;
                line["status"] = "premise-violated";
            } else if (rep.checked < n) {
                ++rep.checked;
                const bool ok = b.slack >= -opts.tolerance;
                rep.violations += ok ? 0 : 1;
                rep.worst = std::min(rep.worst, b.slack);
                line["status"] = ok ? "ok" : "bound-violated";
            }
            rep.lines.push_back(line.dump());
        }
        attempted += batch;
    }
    return rep;
}

}  // namespace boms
