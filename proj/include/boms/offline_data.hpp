#pragma once

#include <istream>
#include <ostream>
#include <sstream>

#include "boms/mdp.hpp"

namespace boms {

/// Fixed offline dataset. Transitions [0, split_index) form the training
/// split, the remainder the validation split.
struct OfflineDataset {
    std::vector<Step> transitions;
    std::size_t split_index = 0;
    Policy behavior_policy;
    std::uint64_t source_seed = 0;

    std::span<const Step> train() const { return {transitions.data(), split_index}; }
    std::span<const Step> validation() const {
        return {transitions.data() + split_index, transitions.size() - split_index};
    }

    friend bool operator==(const OfflineDataset&, const OfflineDataset&) = default;
};

enum class BehaviorKind { epsilon_greedy, uniform, mixture };

inline std::string to_string(BehaviorKind k) {
    switch (k) {
        case BehaviorKind::epsilon_greedy: return "epsilon-greedy";
        case BehaviorKind::uniform: return "uniform";
        case BehaviorKind::mixture: return "mixture";
    }
    return "?";
}

inline BehaviorKind behavior_kind_from_string(std::string_view s) {
    for (auto k : {BehaviorKind::epsilon_greedy, BehaviorKind::uniform, BehaviorKind::mixture})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown behavior kind '" + std::string(s) + "'");
}

/// Behavior policies:
///   epsilon-greedy  (1 - eps) pi* + eps uniform            ("medium")
///   uniform         uniform random                         ("replay"-like)
///   mixture         0.5 pi* + 0.5 epsilon-greedy           ("medium-expert")
inline Policy make_behavior_policy(const TabularMdp& true_mdp, BehaviorKind kind, double epsilon = 0.3) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("behavior epsilon must lie in [0, 1]");
    const Policy uniform = Policy::uniform(true_mdp.n_states, true_mdp.n_actions);
    if (kind == BehaviorKind::uniform) return uniform;
    const Policy expert = optimal_policy(true_mdp);
    Policy eps_greedy{(1.0 - epsilon) * expert.action_probs + epsilon * uniform.action_probs};
    if (kind == BehaviorKind::epsilon_greedy) return eps_greedy;
    return Policy{0.5 * expert.action_probs + 0.5 * eps_greedy.action_probs};
}

/// Collect transitions from repeated seeded rollouts of `behavior` until
/// `n_transitions` are gathered (the last episode is truncated). The last
/// ceil(validation_fraction * n) transitions form the validation split; with
/// `shuffle_split` the stream is shuffled first.
inline OfflineDataset generate_dataset(const TabularMdp& true_mdp, const Policy& behavior, std::size_t n_transitions,
                                       int horizon, std::uint64_t seed, double validation_fraction,
                                       bool shuffle_split = false) {
    if (n_transitions == 0) throw std::invalid_argument("generate_dataset: n_transitions must be positive");
    if (horizon <= 0) throw std::invalid_argument("generate_dataset: horizon must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("generate_dataset: validation_fraction must lie in [0, 1)");
    const auto n_val = static_cast<std::size_t>(std::ceil(validation_fraction * static_cast<double>(n_transitions)));
    if (n_val >= n_transitions) throw std::invalid_argument("generate_dataset: validation split leaves no training data");

    OfflineDataset data;
    data.behavior_policy = behavior;
    data.source_seed = seed;
    data.transitions.reserve(n_transitions);
    for (std::uint64_t episode = 0; data.transitions.size() < n_transitions; ++episode) {
        const Trajectory traj = rollout(true_mdp, behavior, horizon, derive_seed(seed, tag::episode, episode));
        for (const auto& step : traj.steps) {
            if (data.transitions.size() == n_transitions) break;
            data.transitions.push_back(step);
        }
    }
    if (shuffle_split) {
        Rng rng(derive_seed(seed, tag::split));
        shuffle_in_place(data.transitions, rng);
    }
    data.split_index = n_transitions - n_val;
    return data;
}

/// Per-(s,a) successor counts, visit counts and reward sums.
struct TransitionCounts {
    int n_states = 0;
    int n_actions = 0;
    Eigen::MatrixXd next;        // (S*A) x S
    Eigen::MatrixXd visits;      // S x A
    Eigen::MatrixXd reward_sum;  // S x A

    TransitionCounts(int states, int actions)
        : n_states(states),
          n_actions(actions),
          next(Eigen::MatrixXd::Zero(Eigen::Index{states} * actions, states)),
          visits(Eigen::MatrixXd::Zero(states, actions)),
          reward_sum(Eigen::MatrixXd::Zero(states, actions)) {}

    Eigen::Index row(int s, int a) const { return static_cast<Eigen::Index>(s) * n_actions + a; }

    void add(std::span<const Step> steps) {
        for (const auto& t : steps) {
            if (t.state < 0 || t.state >= n_states || t.next_state < 0 || t.next_state >= n_states || t.action < 0 ||
                t.action >= n_actions)
                throw std::out_of_range("transition index outside the MDP shape");
            next(row(t.state, t.action), t.next_state) += 1.0;
            visits(t.state, t.action) += 1.0;
            reward_sum(t.state, t.action) += t.reward;
        }
    }
};

/// Counts over the training split only.
inline TransitionCounts empirical_counts(const OfflineDataset& data, int n_states, int n_actions) {
    TransitionCounts counts(n_states, n_actions);
    counts.add(data.train());
    return counts;
}

/// Empirical action frequencies from the training split (uniform where a state is unvisited).
inline Policy empirical_behavior_policy(const TransitionCounts& counts) {
    Policy p = Policy::uniform(counts.n_states, counts.n_actions);
    for (int s = 0; s < counts.n_states; ++s) {
        const double total = counts.visits.row(s).sum();
        if (total > 0.0) p.action_probs.row(s) = counts.visits.row(s) / total;
    }
    return p;
}

// Text format:
//   boms-dataset <n_transitions> <split_index> <source_seed> <n_states> <n_actions>
//   policy <pi(0|s)> ... <pi(A-1|s)>        (one line per state)
//   <s> <a> <r> <s'>                        (one line per transition)
// Reals use the shortest round-trip decimal representation.

inline void write_dataset(std::ostream& os, const OfflineDataset& data) {
    const auto& pi = data.behavior_policy.action_probs;
    os << "boms-dataset " << data.transitions.size() << ' ' << data.split_index << ' ' << data.source_seed << ' '
       << pi.rows() << ' ' << pi.cols() << '\n';
    for (Eigen::Index s = 0; s < pi.rows(); ++s) {
        os << "policy";
        for (Eigen::Index a = 0; a < pi.cols(); ++a) os << ' ' << format_double(pi(s, a));
        os << '\n';
    }
    for (const auto& t : data.transitions)
        os << t.state << ' ' << t.action << ' ' << format_double(t.reward) << ' ' << t.next_state << '\n';
}

inline OfflineDataset read_dataset(std::istream& is) {
    auto fail = [](const std::string& why) -> OfflineDataset { throw std::invalid_argument("read_dataset: " + why); };
    std::string magic;
    std::size_t n = 0;
    std::size_t split = 0;
    int states = 0;
    int actions = 0;
    OfflineDataset data;
    if (!(is >> magic >> n >> split >> data.source_seed >> states >> actions) || magic != "boms-dataset")
        return fail("bad header");
    if (split > n) return fail("split index beyond dataset length");
    data.split_index = split;
    data.behavior_policy.action_probs.resize(states, actions);
    std::string word;
    for (int s = 0; s < states; ++s) {
        if (!(is >> word) || word != "policy") return fail("missing policy row");
        for (int a = 0; a < actions; ++a) {
            if (!(is >> word)) return fail("truncated policy row");
            data.behavior_policy.action_probs(s, a) = parse_double(word);
        }
    }
    data.transitions.resize(n);
    for (auto& t : data.transitions) {
        if (!(is >> t.state >> t.action >> word >> t.next_state)) return fail("truncated transition list");
        t.reward = parse_double(word);
    }
    return data;
}

}  // namespace boms
