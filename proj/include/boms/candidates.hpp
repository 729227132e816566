#pragma once

#include <istream>
#include <ostream>

#include "boms/offline_data.hpp"

namespace boms {

/// Quantities every candidate model shares with the environment.
struct MdpShape {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.9;
    double r_max = 1.0;
    Eigen::VectorXd initial_dist;

    static MdpShape of(const TabularMdp& m) { return {m.n_states, m.n_actions, m.gamma, m.r_max, m.initial_dist}; }
};

/// Smoothed maximum-likelihood model:
///   P(s'|s,a) = (n(s,a,s') + k) / (n(s,a) + k |S|),   r(s,a) = mean observed reward (0 if unvisited).
inline TabularMdp learn_mle_model(const TransitionCounts& counts, const MdpShape& shape, double smoothing) {
    if (!(smoothing > 0.0)) throw std::invalid_argument("learn_mle_model: smoothing must be positive");
    if (counts.n_states != shape.n_states || counts.n_actions != shape.n_actions)
        throw std::invalid_argument("learn_mle_model: counts do not match the model shape");
    TabularMdp m;
    m.n_states = shape.n_states;
    m.n_actions = shape.n_actions;
    m.gamma = shape.gamma;
    m.r_max = shape.r_max;
    m.initial_dist = shape.initial_dist;
    m.transition = (counts.next.array() + smoothing).matrix();
    m.reward = Eigen::MatrixXd::Zero(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
            const double n = counts.visits(s, a);
            m.transition.row(m.row(s, a)) /= n + smoothing * m.n_states;
            if (n > 0.0) m.reward(s, a) = counts.reward_sum(s, a) / n;
        }
    return m;
}

inline TabularMdp learn_mle_model(const OfflineDataset& data, const MdpShape& shape, double smoothing) {
    return learn_mle_model(empirical_counts(data, shape.n_states, shape.n_actions), shape, smoothing);
}

/// Count-based uncertainty u(s,a) = c / sqrt(n(s,a) + 1).
inline Eigen::MatrixXd count_uncertainty(const TransitionCounts& counts, double c) {
    if (!(c >= 0.0)) throw std::invalid_argument("count_uncertainty: scale must be nonnegative");
    return (c / (counts.visits.array() + 1.0).sqrt()).matrix();
}

inline double total_variation(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& q) {
    return 0.5 * (p - q).lpNorm<1>();
}

/// Oracle uncertainty u(s,a) = L_V * TV(P_hat(.|s,a), P(.|s,a)) with
/// L_V = r_max / (1 - gamma). Reads the true dynamics; reserved for the
/// theory checks.
inline Eigen::MatrixXd exact_uncertainty(const TabularMdp& learned, const TabularMdp& true_mdp) {
    if (learned.n_states != true_mdp.n_states || learned.n_actions != true_mdp.n_actions)
        throw std::invalid_argument("exact_uncertainty: shape mismatch");
    const double lv = true_mdp.r_max / (1.0 - true_mdp.gamma);
    Eigen::MatrixXd u(learned.n_states, learned.n_actions);
    for (int s = 0; s < learned.n_states; ++s)
        for (int a = 0; a < learned.n_actions; ++a)
            u(s, a) = lv * total_variation(learned.next_dist(s, a), true_mdp.next_dist(s, a));
    return u;
}

struct CandidateProvenance {
    std::uint64_t seed = 0;
    double reward_noise = 0.0;
    double temperature = 0.0;

    friend bool operator==(const CandidateProvenance&, const CandidateProvenance&) = default;
};

/// A learned model, its uncertainty-penalized counterpart
/// r_pen = r_hat - lambda * u, and the optimal policy of the penalized model.
struct CandidateModel {
    TabularMdp learned_mdp;
    Eigen::MatrixXd uncertainty;
    double penalty_weight = 1.0;
    TabularMdp penalized_mdp;
    Policy policy;
    CandidateProvenance provenance;
};

inline TabularMdp penalize(const TabularMdp& learned, const Eigen::MatrixXd& uncertainty, double penalty_weight) {
    if (!(penalty_weight >= 0.0)) throw std::invalid_argument("penalty weight must be nonnegative");
    if (uncertainty.rows() != learned.n_states || uncertainty.cols() != learned.n_actions)
        throw std::invalid_argument("uncertainty table has wrong shape");
    if (uncertainty.size() > 0 && uncertainty.minCoeff() < 0.0) throw std::invalid_argument("uncertainty must be nonnegative");
    TabularMdp m = learned;
    m.reward = learned.reward - penalty_weight * uncertainty;
    m.r_max = std::max(learned.r_max, m.reward.cwiseAbs().maxCoeff());
    return m;
}

inline CandidateModel make_candidate(TabularMdp learned, Eigen::MatrixXd uncertainty, double penalty_weight,
                                     CandidateProvenance provenance = {}) {
    CandidateModel c;
    c.penalized_mdp = penalize(learned, uncertainty, penalty_weight);
    c.policy = optimal_policy(c.penalized_mdp);
    c.learned_mdp = std::move(learned);
    c.uncertainty = std::move(uncertainty);
    c.penalty_weight = penalty_weight;
    c.provenance = provenance;
    return c;
}

struct CandidateSet {
    std::vector<CandidateModel> candidates;

    std::size_t size() const { return candidates.size(); }
    const CandidateModel& operator[](std::size_t i) const { return candidates[i]; }

    void validate() const {
        if (candidates.empty()) throw std::invalid_argument("CandidateSet: empty");
        const auto& ref = candidates.front().learned_mdp;
        for (const auto& c : candidates) {
            const auto& m = c.learned_mdp;
            if (m.n_states != ref.n_states || m.n_actions != ref.n_actions || m.gamma != ref.gamma ||
                m.initial_dist != ref.initial_dist)
                throw std::invalid_argument("CandidateSet: candidates disagree on shape, gamma or initial distribution");
        }
    }
};

struct CandidateConfig {
    double smoothing = 1.0;
    /// Dirichlet parameters are (counts + smoothing) / temperature; 0 gives the MLE itself.
    double transition_temperature = 1.0;
    double reward_noise = 0.0;
    double penalty_weight = 1.0;
    /// Scale c of the count-based uncertainty; negative means "use r_max".
    double uncertainty_scale = -1.0;
    /// Optional perturbation ladders: when set (>= 0), candidate i of N uses
    /// a temperature geometrically spaced from transition_temperature up to
    /// this value, and a reward noise linearly spaced from reward_noise up to
    /// reward_noise_max, so the set spans small to large perturbations.
    double transition_temperature_max = -1.0;
    double reward_noise_max = -1.0;

    void validate() const {
        if (!(smoothing > 0.0)) throw ConfigError("candidate smoothing must be positive");
        if (!(transition_temperature >= 0.0)) throw ConfigError("transition temperature must be nonnegative");
        if (!(reward_noise >= 0.0)) throw ConfigError("reward noise scale must be nonnegative");
        if (!(penalty_weight >= 0.0)) throw ConfigError("penalty weight (lambda) must be nonnegative");
        if (transition_temperature_max >= 0.0 && !(transition_temperature > 0.0 && transition_temperature_max >= transition_temperature))
            throw ConfigError("temperature ladder needs 0 < transition_temperature <= transition_temperature_max");
        if (reward_noise_max >= 0.0 && reward_noise_max < reward_noise)
            throw ConfigError("reward noise ladder needs reward_noise <= reward_noise_max");
    }

    /// Settings of candidate `index` out of `count` after applying the ladders.
    CandidateConfig for_candidate(std::size_t index, std::size_t count) const {
        CandidateConfig c = *this;
        const double frac = count > 1 ? static_cast<double>(index) / static_cast<double>(count - 1) : 0.0;
        if (transition_temperature_max >= 0.0)
            c.transition_temperature = transition_temperature * std::pow(transition_temperature_max / transition_temperature, frac);
        if (reward_noise_max >= 0.0) c.reward_noise = reward_noise + frac * (reward_noise_max - reward_noise);
        c.transition_temperature_max = -1.0;
        c.reward_noise_max = -1.0;
        return c;
    }
};

/// Dirichlet draw with parameters alpha; falls back to the mean if every
/// gamma variate underflows.
inline Eigen::RowVectorXd sample_dirichlet(Rng& rng, const Eigen::RowVectorXd& alpha) {
    Eigen::RowVectorXd g(alpha.size());
    for (Eigen::Index k = 0; k < alpha.size(); ++k) g(k) = gamma_sample(rng, alpha(k));
    const double total = g.sum();
    if (!(total > 0.0) || !std::isfinite(total)) return alpha / alpha.sum();
    return g / total;
}

/// Posterior-sampled candidate set. Candidate i draws every transition row
/// from Dirichlet((counts + smoothing) / temperature) and perturbs r_hat with
/// N(0, reward_noise^2) (clamped to [-r_max, r_max]), all from its own seed
/// stream so candidates can be built in any order.
inline CandidateModel sample_candidate(const TransitionCounts& counts, const MdpShape& shape, std::uint64_t seed,
                                       std::size_t index, const CandidateConfig& config) {
    const std::uint64_t own_seed = derive_seed(seed, tag::candidates, index);
    Rng rng(own_seed);
    TabularMdp model = learn_mle_model(counts, shape, config.smoothing);
    if (config.transition_temperature > 0.0) {
        for (Eigen::Index r = 0; r < model.transition.rows(); ++r) {
            const Eigen::RowVectorXd alpha =
                (counts.next.row(r).array() + config.smoothing).matrix() / config.transition_temperature;
            model.transition.row(r) = sample_dirichlet(rng, alpha);
        }
    }
    if (config.reward_noise > 0.0) {
        for (int s = 0; s < model.n_states; ++s)
            for (int a = 0; a < model.n_actions; ++a)
                model.reward(s, a) =
                    std::clamp(model.reward(s, a) + config.reward_noise * standard_normal(rng), -shape.r_max, shape.r_max);
    }
    const double c = config.uncertainty_scale < 0.0 ? shape.r_max : config.uncertainty_scale;
    return make_candidate(std::move(model), count_uncertainty(counts, c), config.penalty_weight,
                          {own_seed, config.reward_noise, config.transition_temperature});
}

inline CandidateSet generate_candidate_set(const OfflineDataset& data, const MdpShape& shape, std::size_t n_candidates,
                                           std::uint64_t seed, const CandidateConfig& config) {
    config.validate();
    if (n_candidates == 0) throw ConfigError("generate_candidate_set: need at least one candidate");
    const TransitionCounts counts = empirical_counts(data, shape.n_states, shape.n_actions);
    CandidateSet set;
    set.candidates.reserve(n_candidates);
    for (std::size_t i = 0; i < n_candidates; ++i)
        set.candidates.push_back(sample_candidate(counts, shape, seed, i, config.for_candidate(i, n_candidates)));
    return set;
}

struct TrueReturns {
    std::vector<double> returns;
    double best = 0.0;
    std::size_t best_index = 0;
};

/// Exact J of every candidate's policy in the true MDP. Reporting only.
inline TrueReturns true_returns(const CandidateSet& set, const TabularMdp& true_mdp) {
    TrueReturns out;
    out.returns.reserve(set.size());
    for (const auto& c : set.candidates) out.returns.push_back(total_return(true_mdp, c.policy));
    const auto it = std::max_element(out.returns.begin(), out.returns.end());
    out.best_index = static_cast<std::size_t>(it - out.returns.begin());
    out.best = *it;
    return out;
}

// Text format (reals as shortest round-trip decimals):
//   boms-candidates <N> <S> <A>
//   gamma <g> r_max <r>
//   omega <w_0> ... <w_{S-1}>
//   then per candidate:
//   candidate <i> lambda <l> seed <seed> reward_noise <x> temperature <t>
//   P <row>            (S*A lines, row s*A+a)
//   r <r(0,0)> <r(0,1)> ...  (row-major S x A)
//   u <u(0,0)> ...           (row-major S x A)
// Penalized models and policies are rebuilt on load.

inline void write_candidate_set(std::ostream& os, const CandidateSet& set) {
    set.validate();
    const auto& ref = set.candidates.front().learned_mdp;
    os << "boms-candidates " << set.size() << ' ' << ref.n_states << ' ' << ref.n_actions << '\n';
    os << "gamma " << format_double(ref.gamma) << " r_max " << format_double(ref.r_max) << '\n';
    os << "omega";
    for (Eigen::Index s = 0; s < ref.initial_dist.size(); ++s) os << ' ' << format_double(ref.initial_dist(s));
    os << '\n';
    auto table = [&os](const char* label, const Eigen::MatrixXd& m) {
        os << label;
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) os << ' ' << format_double(m(i, j));
        os << '\n';
    };
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& c = set.candidates[i];
        os << "candidate " << i << " lambda " << format_double(c.penalty_weight) << " seed " << c.provenance.seed
           << " reward_noise " << format_double(c.provenance.reward_noise) << " temperature "
           << format_double(c.provenance.temperature) << '\n';
        for (Eigen::Index r = 0; r < c.learned_mdp.transition.rows(); ++r) table("P", c.learned_mdp.transition.row(r));
        table("r", c.learned_mdp.reward);
        table("u", c.uncertainty);
    }
}

inline CandidateSet read_candidate_set(std::istream& is) {
    auto fail = [](const std::string& why) { throw std::invalid_argument("read_candidate_set: " + why); };
    std::string word;
    auto expect = [&](const char* w) {
        if (!(is >> word) || word != w) fail(std::string("expected '") + w + "'");
    };
    auto real = [&]() {
        if (!(is >> word)) fail("truncated input");
        return parse_double(word);
    };
    std::size_t n = 0;
    int states = 0;
    int actions = 0;
    expect("boms-candidates");
    if (!(is >> n >> states >> actions) || states <= 0 || actions <= 0) fail("bad header");
    MdpShape shape;
    shape.n_states = states;
    shape.n_actions = actions;
    expect("gamma");
    shape.gamma = real();
    expect("r_max");
    shape.r_max = real();
    expect("omega");
    shape.initial_dist.resize(states);
    for (int s = 0; s < states; ++s) shape.initial_dist(s) = real();

    auto read_table = [&](const char* label, Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            if (label[0] == 'P' || i == 0) expect(label);
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = real();
        }
        return m;
    };

    CandidateSet set;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t idx = 0;
        CandidateProvenance prov;
        expect("candidate");
        if (!(is >> idx) || idx != i) fail("candidate index out of order");
        expect("lambda");
        const double lambda = real();
        expect("seed");
        if (!(is >> prov.seed)) fail("bad seed");
        expect("reward_noise");
        prov.reward_noise = real();
        expect("temperature");
        prov.temperature = real();
        TabularMdp m;
        m.n_states = states;
        m.n_actions = actions;
        m.gamma = shape.gamma;
        m.r_max = shape.r_max;
        m.initial_dist = shape.initial_dist;
        m.transition = read_table("P", Eigen::Index{states} * actions, states);
        m.reward = read_table("r", states, actions);
        Eigen::MatrixXd u = read_table("u", states, actions);
        set.candidates.push_back(make_candidate(std::move(m), std::move(u), lambda, prov));
    }
    return set;
}

}  // namespace boms
