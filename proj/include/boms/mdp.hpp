#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "boms/common.hpp"

namespace boms {

/// Finite discounted MDP. Transitions are stored as a (S*A) x S matrix whose
/// row `s*A + a` is P(. | s, a); rewards as an S x A table.
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    Eigen::MatrixXd transition;
    Eigen::MatrixXd reward;
    double r_max = 1.0;
    double gamma = 0.9;
    Eigen::VectorXd initial_dist;

    Eigen::Index row(int s, int a) const { return static_cast<Eigen::Index>(s) * n_actions + a; }

    auto next_dist(int s, int a) const { return transition.row(row(s, a)); }

    /// Throws std::invalid_argument if any structural invariant fails.
    void validate(double tol = 1e-9) const {
        if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("TabularMdp: empty state or action space");
        if (transition.rows() != Eigen::Index{n_states} * n_actions || transition.cols() != n_states)
            throw std::invalid_argument("TabularMdp: transition has wrong shape");
        if (reward.rows() != n_states || reward.cols() != n_actions)
            throw std::invalid_argument("TabularMdp: reward has wrong shape");
        if (initial_dist.size() != n_states) throw std::invalid_argument("TabularMdp: initial distribution has wrong size");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMdp: gamma must lie in [0, 1)");
        if (!(r_max > 0.0)) throw std::invalid_argument("TabularMdp: r_max must be positive");
        for (Eigen::Index i = 0; i < transition.rows(); ++i) {
            if (transition.row(i).minCoeff() < 0.0) throw std::invalid_argument("TabularMdp: negative transition probability");
            if (std::abs(transition.row(i).sum() - 1.0) > tol)
                throw std::invalid_argument("TabularMdp: transition row does not sum to 1");
        }
        if (reward.cwiseAbs().maxCoeff() > r_max * (1.0 + 1e-12))
            throw std::invalid_argument("TabularMdp: |reward| exceeds r_max");
        if (initial_dist.minCoeff() < 0.0 || std::abs(initial_dist.sum() - 1.0) > tol)
            throw std::invalid_argument("TabularMdp: initial distribution is not a probability vector");
    }
};

/// Stationary stochastic policy pi(a|s) as an S x A row-stochastic matrix.
struct Policy {
    Eigen::MatrixXd action_probs;

    int n_states() const { return static_cast<int>(action_probs.rows()); }
    int n_actions() const { return static_cast<int>(action_probs.cols()); }

    static Policy deterministic(const std::vector<int>& actions, int n_actions) {
        Policy p;
        p.action_probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
        for (std::size_t s = 0; s < actions.size(); ++s) p.action_probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
        return p;
    }

    static Policy uniform(int n_states, int n_actions) {
        return Policy{Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions)};
    }

    /// Greedy action per state (lowest index among maxima).
    std::vector<int> argmax_actions() const {
        std::vector<int> out(static_cast<std::size_t>(n_states()));
        for (int s = 0; s < n_states(); ++s) action_probs.row(s).maxCoeff(&out[static_cast<std::size_t>(s)]);
        return out;
    }

    void validate(double tol = 1e-9) const {
        for (Eigen::Index s = 0; s < action_probs.rows(); ++s) {
            if (action_probs.row(s).minCoeff() < 0.0 || std::abs(action_probs.row(s).sum() - 1.0) > tol)
                throw std::invalid_argument("Policy: row " + std::to_string(s) + " is not a distribution");
        }
    }

    friend bool operator==(const Policy& a, const Policy& b) {
        return a.action_probs.rows() == b.action_probs.rows() && a.action_probs.cols() == b.action_probs.cols() &&
               a.action_probs == b.action_probs;
    }
};

enum class Norm { l2, l1 };

inline std::string to_string(Norm n) { return n == Norm::l2 ? "l2" : "l1"; }

/// Fixed-dimension coordinates for every state (one row per state).
struct StateEmbedding {
    Eigen::MatrixXd coords;

    int n_states() const { return static_cast<int>(coords.rows()); }

    double distance(int x, int y, Norm norm) const {
        const auto diff = coords.row(x) - coords.row(y);
        return norm == Norm::l2 ? diff.norm() : diff.lpNorm<1>();
    }

    /// S x S matrix of pairwise distances.
    Eigen::MatrixXd pairwise(Norm norm) const {
        const int n = n_states();
        Eigen::MatrixXd d(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) d(i, j) = distance(i, j, norm);
        return d;
    }
};

struct Step {
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = 0;

    friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
    std::vector<Step> steps;
    int horizon = 0;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

namespace detail {

inline void check_policy_shape(const TabularMdp& mdp, const Policy& policy) {
    if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
        throw std::invalid_argument("policy shape (" + std::to_string(policy.n_states()) + "x" +
                                    std::to_string(policy.n_actions()) + ") does not match MDP (" +
                                    std::to_string(mdp.n_states) + "x" + std::to_string(mdp.n_actions) + ")");
}

}  // namespace detail

/// State-to-state transition matrix under a policy.
inline Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const Policy& policy) {
    detail::check_policy_shape(mdp, policy);
    Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double w = policy.action_probs(s, a);
            if (w != 0.0) p_pi.row(s) += w * mdp.next_dist(s, a);
        }
    return p_pi;
}

inline Eigen::VectorXd policy_reward(const TabularMdp& mdp, const Policy& policy) {
    detail::check_policy_shape(mdp, policy);
    return mdp.reward.cwiseProduct(policy.action_probs).rowwise().sum();
}

/// V^pi as the exact solution of (I - gamma P_pi) V = r_pi.
inline Eigen::VectorXd policy_value(const TabularMdp& mdp, const Policy& policy) {
    const Eigen::MatrixXd p_pi = policy_transition(mdp, policy);
    const Eigen::VectorXd r_pi = policy_reward(mdp, policy);
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p_pi;
    return a.partialPivLu().solve(r_pi);
}

/// Max-norm residual of V against the policy Bellman operator.
inline double bellman_residual(const TabularMdp& mdp, const Policy& policy, const Eigen::VectorXd& v) {
    const Eigen::VectorXd backup = policy_reward(mdp, policy) + mdp.gamma * policy_transition(mdp, policy) * v;
    return (v - backup).cwiseAbs().maxCoeff();
}

/// J^pi(omega) = sum_s omega(s) V^pi(s).
inline double total_return(const TabularMdp& mdp, const Policy& policy) {
    return mdp.initial_dist.dot(policy_value(mdp, policy));
}

/// Normalized discounted state occupancy d(s) = (1-gamma) sum_t gamma^t P(s_t = s).
inline Eigen::VectorXd state_occupancy(const TabularMdp& mdp, const Policy& policy) {
    const Eigen::MatrixXd p_pi = policy_transition(mdp, policy);
    const Eigen::MatrixXd a =
        Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p_pi.transpose();
    return (1.0 - mdp.gamma) * a.partialPivLu().solve(mdp.initial_dist);
}

/// rho^pi(s, a) = d(s) pi(a|s), returned as an S x A table summing to one.
inline Eigen::MatrixXd visitation_distribution(const TabularMdp& mdp, const Policy& policy) {
    const Eigen::VectorXd d = state_occupancy(mdp, policy);
    return policy.action_probs.array().colwise() * d.array();
}

/// Q^pi(s, a) = r(s, a) + gamma sum_s' P(s'|s,a) V(s').
inline Eigen::MatrixXd action_values(const TabularMdp& mdp, const Eigen::VectorXd& v) {
    const Eigen::VectorXd next = mdp.transition * v;
    Eigen::MatrixXd q(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) q(s, a) = mdp.reward(s, a) + mdp.gamma * next(mdp.row(s, a));
    return q;
}

struct ValueIterationOptions {
    double tolerance = 1e-10;
    int max_iterations = 1'000'000;
};

namespace detail {

/// Greedy deterministic actions, ties (within tie_tol) resolved to the lowest index.
inline std::vector<int> greedy_actions(const Eigen::MatrixXd& q, double tie_tol) {
    std::vector<int> best(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        const double top = q.row(s).maxCoeff();
        int a = 0;
        while (q(s, a) < top - tie_tol) ++a;
        best[static_cast<std::size_t>(s)] = a;
    }
    return best;
}

}  // namespace detail

/// Deterministic optimal policy. Value iteration runs to the residual
/// tolerance, then greedy policy evaluation/improvement on exact values
/// removes the remaining iteration error. Ties go to the lowest action.
inline Policy optimal_policy(const TabularMdp& mdp, const ValueIterationOptions& opts = {}) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.n_states);
    bool converged = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
        const Eigen::VectorXd next = action_values(mdp, v).rowwise().maxCoeff();
        const double residual = (next - v).cwiseAbs().maxCoeff();
        v = next;
        if (residual <= opts.tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw NumericalError("optimal_policy: value iteration did not converge within " +
                             std::to_string(opts.max_iterations) + " iterations (gamma=" +
                             std::to_string(mdp.gamma) + ")");

    const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
    const double tie_tol = 1e-11 * scale;
    std::vector<int> actions = detail::greedy_actions(action_values(mdp, v), tie_tol);
    for (int round = 0; round < 100; ++round) {
        const Policy current = Policy::deterministic(actions, mdp.n_actions);
        std::vector<int> improved = detail::greedy_actions(action_values(mdp, policy_value(mdp, current)), tie_tol);
        if (improved == actions) return current;
        actions = std::move(improved);
    }
    return Policy::deterministic(actions, mdp.n_actions);
}

/// Max over states of (max_a Q(s,a) - Q(s, pi)), with Q from the exact value of pi.
inline double optimality_gap(const TabularMdp& mdp, const Policy& policy) {
    const Eigen::MatrixXd q = action_values(mdp, policy_value(mdp, policy));
    const Eigen::VectorXd on_policy = q.cwiseProduct(policy.action_probs).rowwise().sum();
    return (q.rowwise().maxCoeff() - on_policy).maxCoeff();
}

/// Seeded trajectory: s0 ~ omega, a ~ pi, s' ~ P. Rollouts with horizon H
/// truncate the discounted return by at most gamma^H r_max / (1 - gamma).
inline Trajectory rollout(const TabularMdp& mdp, const Policy& policy, int horizon, std::uint64_t seed) {
    detail::check_policy_shape(mdp, policy);
    if (horizon < 0) throw std::invalid_argument("rollout: negative horizon");
    Trajectory traj;
    traj.horizon = horizon;
    if (horizon == 0) return traj;
    traj.steps.reserve(static_cast<std::size_t>(horizon));
    Rng rng(seed);
    int s = sample_categorical(mdp.initial_dist, uniform01(rng));
    for (int k = 0; k < horizon; ++k) {
        const int a = sample_categorical(policy.action_probs.row(s), uniform01(rng));
        const int next = sample_categorical(mdp.next_dist(s, a), uniform01(rng));
        traj.steps.push_back({s, a, mdp.reward(s, a), next});
        s = next;
    }
    return traj;
}

inline double discounted_return(const Trajectory& traj, double gamma) {
    double total = 0.0;
    double discount = 1.0;
    for (const auto& step : traj.steps) {
        total += discount * step.reward;
        discount *= gamma;
    }
    return total;
}

/// Mean discounted return over trajectories.
inline double monte_carlo_return(std::span<const Trajectory> trajectories, double gamma) {
    if (trajectories.empty()) throw std::invalid_argument("monte_carlo_return: no trajectories");
    double sum = 0.0;
    for (const auto& t : trajectories) sum += discounted_return(t, gamma);
    return sum / static_cast<double>(trajectories.size());
}

/// Text format: `boms-mdp S A d`, `gamma g r_max r`, `omega ...`, S*A lines
/// `P ...`, S lines `r ...`, then S lines `phi ...` with d embedding coordinates.
inline void write_mdp(std::ostream& os, const TabularMdp& mdp, const StateEmbedding& embedding) {
    mdp.validate();
    if (embedding.n_states() != mdp.n_states) throw std::invalid_argument("write_mdp: embedding does not match the MDP");
    auto line = [&os](const char* head, const auto& values) {
        os << head;
        for (Eigen::Index k = 0; k < values.size(); ++k) os << ' ' << format_double(values(k));
        os << '\n';
    };
    os << "boms-mdp " << mdp.n_states << ' ' << mdp.n_actions << ' ' << embedding.coords.cols() << '\n';
    os << "gamma " << format_double(mdp.gamma) << " r_max " << format_double(mdp.r_max) << '\n';
    line("omega", mdp.initial_dist);
    for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r) line("P", mdp.transition.row(r));
    for (int s = 0; s < mdp.n_states; ++s) line("r", mdp.reward.row(s));
    for (int s = 0; s < mdp.n_states; ++s) line("phi", embedding.coords.row(s));
}

struct MdpWithEmbedding {
    TabularMdp mdp;
    StateEmbedding embedding;
};

inline MdpWithEmbedding read_mdp(std::istream& is) {
    auto fail = [](const std::string& why) { throw std::invalid_argument("read_mdp: " + why); };
    MdpWithEmbedding out;
    TabularMdp& m = out.mdp;
    std::string word;
    int dim = 0;
    if (!(is >> word >> m.n_states >> m.n_actions >> dim) || word != "boms-mdp" || m.n_states < 1 || m.n_actions < 1 ||
        dim < 1)
        fail("bad header");
    auto number = [&]() {
        if (!(is >> word)) fail("truncated file");
        return parse_double(word);
    };
    auto expect = [&](const char* head) {
        if (!(is >> word) || word != head) fail(std::string("expected '") + head + "'");
    };
    expect("gamma");
    m.gamma = number();
    expect("r_max");
    m.r_max = number();
    auto row_of = [&](const char* head, auto&& target, Eigen::Index n) {
        expect(head);
        for (Eigen::Index k = 0; k < n; ++k) target(k) = number();
    };
    m.initial_dist.resize(m.n_states);
    row_of("omega", m.initial_dist, m.n_states);
    m.transition.resize(Eigen::Index{m.n_states} * m.n_actions, m.n_states);
    for (Eigen::Index r = 0; r < m.transition.rows(); ++r) row_of("P", m.transition.row(r), m.n_states);
    m.reward.resize(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s) row_of("r", m.reward.row(s), m.n_actions);
    out.embedding.coords.resize(m.n_states, dim);
    for (int s = 0; s < m.n_states; ++s) row_of("phi", out.embedding.coords.row(s), dim);
    m.validate();
    return out;
}

}  // namespace boms
