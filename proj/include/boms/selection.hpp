#pragma once

#include <functional>
#include <limits>

#include "boms/acquisition.hpp"

namespace boms {

enum class SelectorKind { boms, random_selection, validation, ope_fqe };

inline std::string to_string(SelectorKind k) {
    switch (k) {
        case SelectorKind::boms: return "boms";
        case SelectorKind::random_selection: return "random-selection";
        case SelectorKind::validation: return "validation";
        case SelectorKind::ope_fqe: return "ope-fqe";
    }
    return "?";
}

inline SelectorKind selector_kind_from_string(std::string_view s) {
    for (auto k : {SelectorKind::boms, SelectorKind::random_selection, SelectorKind::validation, SelectorKind::ope_fqe})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown selector '" + std::string(s) + "'");
}

/// How a selected policy is scored online: Monte-Carlo rollouts, or its
/// exact return (the noise-free limit, for testing).
enum class EvaluationMode { monte_carlo, exact };

inline std::string to_string(EvaluationMode m) { return m == EvaluationMode::monte_carlo ? "monte-carlo" : "exact"; }

inline EvaluationMode evaluation_mode_from_string(std::string_view s) {
    if (s == "monte-carlo") return EvaluationMode::monte_carlo;
    if (s == "exact") return EvaluationMode::exact;
    throw ConfigError("unknown evaluation mode '" + std::string(s) + "'");
}

struct SelectorConfig {
    SelectorKind kind = SelectorKind::boms;
    int iterations = 20;
    int trajectories_per_eval = 5;
    int horizon = 200;
    std::uint64_t seed = 0;
    EvaluationMode evaluation = EvaluationMode::monte_carlo;
    AcquisitionConfig acquisition;
    GpConfig gp;

    void validate(std::size_t candidate_count) const {
        if (iterations < 1) throw ConfigError("selector iterations T must be at least 1");
        if (trajectories_per_eval < 1) throw ConfigError("trajectories_per_eval must be at least 1");
        if (horizon < 1) throw ConfigError("horizon must be at least 1");
        if (!acquisition.allow_reselect && static_cast<std::size_t>(iterations) > candidate_count)
            throw ConfigError("T = " + std::to_string(iterations) + " exceeds the " + std::to_string(candidate_count) +
                              " candidates and reselection is disabled");
        acquisition.validate();
        gp.validate();
    }
};

/// The selectors' only route to the true environment: seeded rollouts of a
/// chosen policy (or, in exact mode, its exact return). Counts trajectories.
class OnlineEnvironment {
public:
    explicit OnlineEnvironment(const TabularMdp& true_mdp) : mdp_(&true_mdp) {}

    double evaluate(const Policy& policy, int n_trajectories, int horizon, std::uint64_t seed) {
        std::vector<Trajectory> trajs;
        trajs.reserve(static_cast<std::size_t>(n_trajectories));
        for (int k = 0; k < n_trajectories; ++k)
            trajs.push_back(rollout(*mdp_, policy, horizon, derive_seed(seed, static_cast<std::uint64_t>(k))));
        used_ += static_cast<std::size_t>(n_trajectories);
        return monte_carlo_return(trajs, mdp_->gamma);
    }

    double exact_return(const Policy& policy, int charged_trajectories) {
        used_ += static_cast<std::size_t>(charged_trajectories);
        return total_return(*mdp_, policy);
    }

    std::size_t trajectories_used() const { return used_; }

private:
    const TabularMdp* mdp_;
    std::size_t used_ = 0;
};

/// 100 (J* - J_out) / J*. NaN when J* <= 0 (the scale presumes a positive optimum).
/// Values below 0 are clamped to 0; values above 100 (negative J_out) are kept.
inline double normalized_regret(double j_out, double j_star) {
    if (!(j_star > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    // Written as 1 - ratio so both endpoints come out exactly: x / x == 1 and 0 / x == 0.
    return std::max(0.0, 100.0 * (1.0 - j_out / j_star));
}

/// 100 (J - J_random) / (J_expert - J_random).
inline double d4rl_normalized_score(double j, double j_random, double j_expert) {
    if (!(j_expert > j_random)) throw std::invalid_argument("d4rl_normalized_score: expert return must exceed random return");
    return 100.0 * (j - j_random) / (j_expert - j_random);
}

struct SelectionRecord {
    int iteration = 0;
    std::size_t selected = 0;
    double mc_return = 0.0;
    double true_return = 0.0;
    std::size_t output_index = 0;
    double inference_regret = 0.0;
    double normalized_regret = 0.0;
};

struct SelectionTrace {
    std::vector<SelectionRecord> records;
    std::size_t budget_used = 0;
    int max_jitter_escalations = 0;
    std::size_t gp_factorizations = 0;
    DistanceMatrix distances;  // BOMS only

    std::size_t output_index() const { return records.back().output_index; }
    double final_regret() const { return records.back().inference_regret; }
};

/// True returns of every candidate, used only to annotate traces with regret.
struct RegretReporter {
    std::vector<double> true_returns;
    double j_star = 0.0;

    explicit RegretReporter(std::vector<double> returns) : true_returns(std::move(returns)) {
        if (true_returns.empty()) throw std::invalid_argument("RegretReporter: no candidates");
        j_star = *std::max_element(true_returns.begin(), true_returns.end());
    }

    SelectionRecord make(int iteration, std::size_t selected, double mc_return, std::size_t output) const {
        SelectionRecord r;
        r.iteration = iteration;
        r.selected = selected;
        r.mc_return = mc_return;
        r.true_return = true_returns.at(selected);
        r.output_index = output;
        r.inference_regret = j_star - true_returns.at(output);
        r.normalized_regret = normalized_regret(true_returns.at(output), j_star);
        return r;
    }
};

/// Uniform first pick shared by every online selector with the same seed.
inline std::size_t first_pick(std::uint64_t seed, std::size_t n) {
    Rng rng(derive_seed(seed, tag::first_pick));
    return uniform_index(rng, n);
}

namespace detail {

inline double evaluate_online(OnlineEnvironment& env, const Policy& policy, const SelectorConfig& config, int iteration) {
    if (config.evaluation == EvaluationMode::exact) return env.exact_return(policy, config.trajectories_per_eval);
    return env.evaluate(policy, config.trajectories_per_eval, config.horizon,
                        derive_seed(config.seed, tag::evaluation, static_cast<std::uint64_t>(iteration)));
}

/// Running output: the selection with the highest observed return (earliest on ties).
class OutputTracker {
public:
    std::size_t observe(std::size_t selected, double value) {
        if (!has_ || value > best_) {
            best_ = value;
            index_ = selected;
            has_ = true;
        }
        return index_;
    }

private:
    bool has_ = false;
    double best_ = 0.0;
    std::size_t index_ = 0;
};

}  // namespace detail

/// BOMS: random first pick, then GP-UCB over the model-induced kernel. Each
/// iteration evaluates the selected candidate's policy online, fills the
/// distance row of the selected model, refits the GP and picks the next
/// model. The output is the selection with the largest observed return.
inline SelectionTrace run_boms(const CandidateSet& set, const DistanceEngine& engine, OnlineEnvironment& env,
                               const RegretReporter& reporter, const SelectorConfig& config) {
    set.validate();
    config.validate(set.size());
    const std::size_t n = set.size();
    const std::size_t budget_before = env.trajectories_used();
    SelectionTrace trace;
    trace.distances = engine.empty_matrix();
    GpState gp;
    std::vector<bool> evaluated(n, false);
    std::vector<std::size_t> gp_indices;
    std::vector<double> gp_sums;
    std::vector<int> gp_counts;
    detail::OutputTracker output;

    for (int t = 1; t <= config.iterations; ++t) {
        std::size_t idx = 0;
        if (t == 1) {
            idx = first_pick(config.seed, n);
        } else {
            AcquisitionConfig acq = config.acquisition;
            acq.seed = derive_seed(config.seed, tag::acquisition);
            idx = select_next(acq, posterior_all(gp, trace.distances), evaluated, t);
        }
        const double observed = detail::evaluate_online(env, set[idx].policy, config, t);
        if (!evaluated[idx]) {
            engine.update(trace.distances, idx);
            evaluated[idx] = true;
            gp_indices.push_back(idx);
            gp_sums.push_back(observed);
            gp_counts.push_back(1);
        } else {
            const auto pos = static_cast<std::size_t>(std::find(gp_indices.begin(), gp_indices.end(), idx) - gp_indices.begin());
            gp_sums[pos] += observed;
            gp_counts[pos] += 1;
        }
        if (n > 1) {
            std::vector<double> obs(gp_indices.size());
            for (std::size_t k = 0; k < obs.size(); ++k) obs[k] = gp_sums[k] / gp_counts[k];
            gp = make_gp_state(gp_indices, std::move(obs), trace.distances, config.gp);
            trace.max_jitter_escalations = std::max(trace.max_jitter_escalations, gp.jitter_escalations);
            ++trace.gp_factorizations;
        }
        trace.records.push_back(reporter.make(t, idx, observed, output.observe(idx, observed)));
    }
    trace.budget_used = env.trajectories_used() - budget_before;
    return trace;
}

/// Uniform selection without replacement (same first pick as BOMS for a
/// given seed); output is the selection with the largest observed return.
inline SelectionTrace run_random_selection(const CandidateSet& set, OnlineEnvironment& env,
                                           const RegretReporter& reporter, const SelectorConfig& config) {
    set.validate();
    config.validate(set.size());
    const std::size_t n = set.size();
    const std::size_t budget_before = env.trajectories_used();
    const std::size_t first = first_pick(config.seed, n);
    std::vector<std::size_t> rest;
    rest.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i)
        if (i != first) rest.push_back(i);
    Rng rng(derive_seed(config.seed, tag::permutation));
    shuffle_in_place(rest, rng);

    SelectionTrace trace;
    detail::OutputTracker output;
    for (int t = 1; t <= config.iterations; ++t) {
        std::size_t idx = first;
        if (t > 1) {
            const auto k = static_cast<std::size_t>(t - 2);
            idx = k < rest.size() ? rest[k] : uniform_index(rng, n);  // reselection only past N
        }
        const double observed = detail::evaluate_online(env, set[idx].policy, config, t);
        trace.records.push_back(reporter.make(t, idx, observed, output.observe(idx, observed)));
    }
    trace.budget_used = env.trajectories_used() - budget_before;
    return trace;
}

struct OfflineSelection {
    std::size_t selected = 0;
    std::vector<double> scores;  // validation loss (lower is better) or OPE estimate (higher is better)
};

/// Validation baseline: mean over validation transitions of
/// -log P_hat(s'|s,a) + (r_hat(s,a) - r)^2 on each candidate's learned model;
/// argmin, ties to the lowest index. Uses no online budget.
inline OfflineSelection run_validation_baseline(const CandidateSet& set, const OfflineDataset& data) {
    set.validate();
    const auto val = data.validation();
    if (val.empty()) throw std::invalid_argument("validation baseline: empty validation split");
    OfflineSelection out;
    out.scores.reserve(set.size());
    for (const auto& c : set.candidates) {
        const auto& m = c.learned_mdp;
        double loss = 0.0;
        for (const auto& t : val) {
            const double p = std::max(m.transition(m.row(t.state, t.action), t.next_state), 1e-300);
            const double err = m.reward(t.state, t.action) - t.reward;
            loss += -std::log(p) + err * err;
        }
        out.scores.push_back(loss / static_cast<double>(val.size()));
    }
    out.selected = static_cast<std::size_t>(std::min_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
    return out;
}

/// Tabular fitted Q-evaluation on the unsmoothed empirical model of the whole
/// dataset: Q <- r_emp + gamma P_emp (Q . pi) on visited pairs, Q = 0 on
/// unvisited pairs, iterated until the max-norm change is <= 1e-9 (1 - gamma).
/// Score = sum_s omega(s) sum_a pi(a|s) Q(s, a); argmax, ties to the lowest index.
inline double fqe_score(const TransitionCounts& counts, double gamma, const Eigen::VectorXd& omega, const Policy& policy,
                        int max_iterations = 1'000'000) {
    const int ns = counts.n_states;
    const int na = counts.n_actions;
    Eigen::MatrixXd p_emp = Eigen::MatrixXd::Zero(Eigen::Index{ns} * na, ns);
    Eigen::VectorXd r_emp = Eigen::VectorXd::Zero(Eigen::Index{ns} * na);
    Eigen::VectorXd visited = Eigen::VectorXd::Zero(Eigen::Index{ns} * na);
    for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) {
            const double n = counts.visits(s, a);
            if (n <= 0.0) continue;
            const auto r = counts.row(s, a);
            p_emp.row(r) = counts.next.row(r) / n;
            r_emp(r) = counts.reward_sum(s, a) / n;
            visited(r) = 1.0;
        }
    const double tol = 1e-9 * (1.0 - gamma);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(Eigen::Index{ns} * na);
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(ns);
        for (int s = 0; s < ns; ++s)
            for (int a = 0; a < na; ++a) v(s) += policy.action_probs(s, a) * q(counts.row(s, a));
        const Eigen::VectorXd next = (r_emp + gamma * (p_emp * v)).cwiseProduct(visited);
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = next;
        if (change <= tol) break;
    }
    double score = 0.0;
    for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) score += omega(s) * policy.action_probs(s, a) * q(counts.row(s, a));
    return score;
}

inline OfflineSelection run_fqe_ope(const CandidateSet& set, const OfflineDataset& data, const Eigen::VectorXd& omega) {
    set.validate();
    const auto& ref = set[0].learned_mdp;
    if (data.transitions.empty()) throw std::invalid_argument("FQE: empty dataset");
    TransitionCounts counts(ref.n_states, ref.n_actions);
    counts.add(data.transitions);
    OfflineSelection out;
    out.scores.reserve(set.size());
    for (const auto& c : set.candidates) out.scores.push_back(fqe_score(counts, ref.gamma, omega, c.policy));
    out.selected = static_cast<std::size_t>(std::max_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
    return out;
}

}  // namespace boms
