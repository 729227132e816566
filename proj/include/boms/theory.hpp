#pragma once

#include "boms/candidates.hpp"
#include "boms/distance.hpp"

namespace boms {

struct SimulationLemmaResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
};

/// Both sides of the simulation lemma for dynamics M' and M'' sharing
/// rewards, gamma and omega:
///   lhs = J_{M'} - J_{M''}
///   rhs = gamma/(1-gamma) E_{(s,a) ~ rho'} [ E_{P'(.|s,a)} V''  -  E_{P''(.|s,a)} V'' ]
/// where rho' is the normalized visitation of pi in M'.
inline SimulationLemmaResult simulation_lemma_check(const TabularMdp& m_prime, const TabularMdp& m_double_prime,
                                                    const Policy& policy) {
    if (m_prime.n_states != m_double_prime.n_states || m_prime.n_actions != m_double_prime.n_actions)
        throw std::invalid_argument("simulation lemma: shape mismatch");
    if (m_prime.gamma != m_double_prime.gamma || m_prime.initial_dist != m_double_prime.initial_dist ||
        m_prime.reward != m_double_prime.reward)
        throw std::invalid_argument("simulation lemma: models must share rewards, gamma and the initial distribution");
    const double gamma = m_prime.gamma;
    const Eigen::VectorXd v2 = policy_value(m_double_prime, policy);
    const Eigen::MatrixXd rho = visitation_distribution(m_prime, policy);
    const Eigen::VectorXd gap_per_pair = (m_prime.transition - m_double_prime.transition) * v2;
    double expectation = 0.0;
    for (int s = 0; s < m_prime.n_states; ++s)
        for (int a = 0; a < m_prime.n_actions; ++a) expectation += rho(s, a) * gap_per_pair(m_prime.row(s, a));
    SimulationLemmaResult r;
    r.lhs = total_return(m_prime, policy) - total_return(m_double_prime, policy);
    r.rhs = gamma / (1.0 - gamma) * expectation;
    r.gap = std::abs(r.lhs - r.rhs);
    return r;
}

/// Tightest L with |V(s) - V(s')| <= L ||phi(s) - phi(s')|| over all state pairs.
inline double lipschitz_constant(const Eigen::VectorXd& values, const StateEmbedding& embedding, Norm norm) {
    const int n = embedding.n_states();
    if (n < 2 || values.size() != n) throw std::invalid_argument("lipschitz_constant: need one value per state and >= 2 states");
    double best = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double d = embedding.distance(i, j, norm);
            if (d == 0.0) throw std::invalid_argument("lipschitz_constant: states " + std::to_string(i) + " and " +
                                                      std::to_string(j) + " share an embedding");
            best = std::max(best, std::abs(values(i) - values(j)) / d);
        }
    return best;
}

inline double lipschitz_constant(const TabularMdp& mdp, const Policy& policy, const StateEmbedding& embedding,
                                 Norm norm = Norm::l1) {
    return lipschitz_constant(policy_value(mdp, policy), embedding, norm);
}

struct BoundReport {
    bool premise_ok = true;
    double lhs = 0.0;         // J*(pi_1) - J*(pi_2)
    double term_a1_a2 = 0.0;  // J*(pi_1) - J*(pi_beta) + 2 lambda eps(pi_beta)
    double term_a3 = 0.0;     // 1/(1-gamma) E[gamma L ||s1' - s2'||_1 + |r1 - r2|]
    double rhs = 0.0;
    double slack = 0.0;       // rhs - lhs
    double lipschitz_L = 0.0;
    double epsilon_beta = 0.0;
    double premise_margin = 0.0;  // min over checked (model, policy) of J*(pi) - J_pen(pi)
};

/// Numerical check of the sub-optimality bound between the optimal policies
/// of two penalized models. The premise J_pen(pi) <= J*(pi) is checked for
/// pi in {pi_1, pi_2, pi_beta} on both penalized models before the bound is
/// evaluated; a failure is reported via premise_ok, not as a bound violation.
/// eps(pi_beta) uses m1's uncertainty under the true visitation of pi_beta.
inline BoundReport proposition1_check(const TabularMdp& true_mdp, const CandidateModel& m1, const CandidateModel& m2,
                                      const Policy& behavior, const StateEmbedding& embedding,
                                      double premise_tol = 1e-10) {
    const TabularMdp& pen1 = m1.penalized_mdp;
    const TabularMdp& pen2 = m2.penalized_mdp;
    if (pen1.n_states != true_mdp.n_states || pen2.n_states != true_mdp.n_states ||
        pen1.n_actions != true_mdp.n_actions || pen2.n_actions != true_mdp.n_actions)
        throw std::invalid_argument("proposition1_check: shape mismatch");
    const double gamma = true_mdp.gamma;
    const Policy& pi1 = m1.policy;
    const Policy& pi2 = m2.policy;

    BoundReport rep;
    rep.premise_margin = std::numeric_limits<double>::infinity();
    for (const Policy* pi : {&pi1, &pi2, &behavior}) {
        const double j_true = total_return(true_mdp, *pi);
        for (const TabularMdp* pen : {&pen1, &pen2})
            rep.premise_margin = std::min(rep.premise_margin, j_true - total_return(*pen, *pi));
    }
    rep.premise_ok = rep.premise_margin >= -premise_tol;

    const double j1 = total_return(true_mdp, pi1);
    const double j2 = total_return(true_mdp, pi2);
    const double jb = total_return(true_mdp, behavior);
    rep.lhs = j1 - j2;
    rep.epsilon_beta = visitation_distribution(true_mdp, behavior).cwiseProduct(m1.uncertainty).sum();
    rep.term_a1_a2 = (j1 - jb) + 2.0 * m1.penalty_weight * rep.epsilon_beta;

    rep.lipschitz_L = lipschitz_constant(pen1, pi1, embedding, Norm::l1);
    const bool same = detail::same_model(pen1, pen2);
    const Eigen::MatrixXd dist = embedding.pairwise(Norm::l1);
    double expectation = 0.0;
    for (int s = 0; s < true_mdp.n_states; ++s) {
        const double ws = true_mdp.initial_dist(s);
        if (ws == 0.0) continue;
        for (int a = 0; a < true_mdp.n_actions; ++a) {
            const double pa = pi1.action_probs(s, a);
            if (pa == 0.0) continue;
            const double succ = same ? 0.0 : (pen1.next_dist(s, a) * dist).dot(pen2.next_dist(s, a));
            expectation += ws * pa * (gamma * rep.lipschitz_L * succ + std::abs(pen1.reward(s, a) - pen2.reward(s, a)));
        }
    }
    rep.term_a3 = expectation / (1.0 - gamma);
    rep.rhs = rep.term_a1_a2 + rep.term_a3;
    rep.slack = rep.rhs - rep.lhs;
    return rep;
}

// ---------------------------------------------------------------------------
// Random instance generators for the randomized verification suites.

inline Eigen::RowVectorXd random_simplex(Rng& rng, int n) {
    return sample_dirichlet(rng, Eigen::RowVectorXd::Ones(n));
}

inline TabularMdp random_mdp(Rng& rng, int n_states, int n_actions, double gamma, double r_max = 1.0) {
    TabularMdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.gamma = gamma;
    m.r_max = r_max;
    m.transition.resize(Eigen::Index{n_states} * n_actions, n_states);
    for (Eigen::Index r = 0; r < m.transition.rows(); ++r) m.transition.row(r) = random_simplex(rng, n_states);
    m.reward.resize(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) m.reward(s, a) = r_max * (2.0 * uniform01(rng) - 1.0);
    m.initial_dist = random_simplex(rng, n_states).transpose();
    return m;
}

inline Policy random_policy(Rng& rng, int n_states, int n_actions) {
    Policy p;
    p.action_probs.resize(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) p.action_probs.row(s) = random_simplex(rng, n_actions);
    return p;
}

/// Distinct random points in the plane with coordinates in [0, 10).
inline StateEmbedding random_embedding(Rng& rng, int n_states) {
    StateEmbedding e;
    e.coords.resize(n_states, 2);
    for (int s = 0; s < n_states; ++s) {
        e.coords(s, 0) = 10.0 * uniform01(rng);
        e.coords(s, 1) = 10.0 * uniform01(rng);
    }
    return e;
}

struct SimulationLemmaInstance {
    TabularMdp m_prime;
    TabularMdp m_double_prime;
    Policy policy;
};

/// |S| in [1, 6], |A| in [1, 3], gamma in [0, 0.99); the two models share rewards and omega.
inline SimulationLemmaInstance random_simulation_lemma_instance(std::uint64_t seed) {
    Rng rng(seed);
    const int ns = 1 + static_cast<int>(uniform_index(rng, 6));
    const int na = 1 + static_cast<int>(uniform_index(rng, 3));
    const double gamma = 0.99 * uniform01(rng);
    SimulationLemmaInstance inst;
    inst.m_prime = random_mdp(rng, ns, na, gamma);
    inst.m_double_prime = inst.m_prime;
    for (Eigen::Index r = 0; r < inst.m_double_prime.transition.rows(); ++r)
        inst.m_double_prime.transition.row(r) = random_simplex(rng, ns);
    inst.policy = random_policy(rng, ns, na);
    return inst;
}

struct Proposition1Instance {
    TabularMdp true_mdp;
    StateEmbedding embedding;
    Policy behavior;
    CandidateModel m1;
    CandidateModel m2;
};

/// Random true MDP (|S| in [2, 6], |A| in [2, 3], gamma in [0.5, 0.95)), a
/// full-support behavior policy, a dataset of 200-2000 transitions, and two
/// posterior-sampled models penalized with the exact uncertainty
/// L_V TV(P_hat, P) and lambda in [1, 2] (or `lambda_override` if >= 0).
inline Proposition1Instance random_proposition1_instance(std::uint64_t seed, double lambda_override = -1.0) {
    Rng rng(seed);
    const int ns = 2 + static_cast<int>(uniform_index(rng, 5));
    const int na = 2 + static_cast<int>(uniform_index(rng, 2));
    const double gamma = 0.5 + 0.45 * uniform01(rng);
    Proposition1Instance inst;
    inst.true_mdp = random_mdp(rng, ns, na, gamma);
    inst.embedding = random_embedding(rng, ns);
    inst.behavior = random_policy(rng, ns, na);
    const double lambda = lambda_override >= 0.0 ? lambda_override : 1.0 + uniform01(rng);
    const std::size_t n = 200 + uniform_index(rng, 1801);
    const OfflineDataset data = generate_dataset(inst.true_mdp, inst.behavior, n, 50, rng(), 0.0);
    const TransitionCounts counts = empirical_counts(data, ns, na);
    const MdpShape shape = MdpShape::of(inst.true_mdp);
    const std::uint64_t model_seed = rng();
    CandidateConfig cfg;
    cfg.penalty_weight = lambda;
    auto build = [&](std::size_t i) {
        CandidateModel sampled = sample_candidate(counts, shape, model_seed, i, cfg);
        Eigen::MatrixXd u = exact_uncertainty(sampled.learned_mdp, inst.true_mdp);
        return make_candidate(std::move(sampled.learned_mdp), std::move(u), lambda, sampled.provenance);
    };
    inst.m1 = build(0);
    inst.m2 = build(1);
    return inst;
}

/// eps(pi_beta) with the exact uncertainty of the (unperturbed) smoothed MLE
/// model learned from `n` transitions of `behavior` on `true_mdp`.
inline double exact_epsilon_beta(const TabularMdp& true_mdp, const Policy& behavior, std::size_t n, std::uint64_t seed) {
    const OfflineDataset data = generate_dataset(true_mdp, behavior, n, 50, seed, 0.0);
    const TabularMdp learned = learn_mle_model(data, MdpShape::of(true_mdp), 1e-3);
    return visitation_distribution(true_mdp, behavior).cwiseProduct(exact_uncertainty(learned, true_mdp)).sum();
}

}  // namespace boms
