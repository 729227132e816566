#pragma once

#include <optional>
#include <ostream>

#include "boms/candidates.hpp"

namespace boms {

/// Which policy generates the actions compared by the model distance.
enum class PolicySource {
    selected_model,        // policy of the model just evaluated
    model_based_fixed,     // policy of one fixed candidate
    model_free_empirical,  // action frequencies of the offline data
    exploratory_random,    // uniform random actions
    parameter_space,       // no policy; L1 distance between model tables
};

inline constexpr PolicySource kAllPolicySources[] = {
    PolicySource::selected_model, PolicySource::model_based_fixed, PolicySource::model_free_empirical,
    PolicySource::exploratory_random, PolicySource::parameter_space};

inline std::string to_string(PolicySource p) {
    switch (p) {
        case PolicySource::selected_model: return "selected-model";
        case PolicySource::model_based_fixed: return "model-based-fixed";
        case PolicySource::model_free_empirical: return "model-free-empirical";
        case PolicySource::exploratory_random: return "exploratory-random";
        case PolicySource::parameter_space: return "parameter-space";
    }
    return "?";
}

inline PolicySource policy_source_from_string(std::string_view s) {
    for (auto p : kAllPolicySources)
        if (to_string(p) == s) return p;
    throw ConfigError("unknown policy source '" + std::string(s) + "'");
}

struct DistanceConfig {
    double alpha = 1.0;
    int rollout_length = 1;
    /// Monte-Carlo rollouts per directional distance when rollout_length > 1;
    /// 0 means one rollout per probe state.
    int n_rollouts = 0;
    Norm norm = Norm::l2;
    PolicySource policy_source = PolicySource::selected_model;
    std::size_t fixed_policy_index = 0;
    std::size_t n_probe = 256;

    void validate() const {
        if (!(alpha >= 0.0)) throw ConfigError("distance alpha must be nonnegative");
        if (rollout_length < 1) throw ConfigError("rollout_length must be at least 1");
        if (n_rollouts < 0) throw ConfigError("distance n_rollouts must be nonnegative");
        if (n_probe == 0) throw ConfigError("n_probe must be positive");
    }
};

/// Symmetric matrix of model distances, filled lazily as models are
/// evaluated. `directional(i, j)` holds d(M_i, M_j) measured when M_i was
/// evaluated; `values` holds the mean of the available directions.
struct DistanceMatrix {
    Eigen::MatrixXd values;
    Eigen::MatrixXd directional;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> filled;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> directional_filled;
    double alpha = 1.0;
    int rollout_length = 1;
    std::vector<int> probe_states;
    PolicySource policy_source = PolicySource::selected_model;

    static DistanceMatrix empty(std::size_t n, const DistanceConfig& config, std::vector<int> probes) {
        const auto ni = static_cast<Eigen::Index>(n);
        DistanceMatrix d;
        d.values = Eigen::MatrixXd::Zero(ni, ni);
        d.directional = Eigen::MatrixXd::Zero(ni, ni);
        d.filled = decltype(d.filled)::Constant(ni, ni, false);
        d.directional_filled = decltype(d.directional_filled)::Constant(ni, ni, false);
        d.alpha = config.alpha;
        d.rollout_length = config.rollout_length;
        d.probe_states = std::move(probes);
        d.policy_source = config.policy_source;
        return d;
    }

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
    bool is_filled(std::size_t i, std::size_t j) const {
        return filled(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    double operator()(std::size_t i, std::size_t j) const {
        return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    std::size_t filled_count() const { return static_cast<std::size_t>(filled.count()); }

    /// Record d(M_i, M_j) measured from i's side and refresh the symmetric value.
    void record(std::size_t i, std::size_t j, double d) {
        const auto a = static_cast<Eigen::Index>(i);
        const auto b = static_cast<Eigen::Index>(j);
        if (a == b) {
            directional(a, a) = 0.0;
            directional_filled(a, a) = true;
            values(a, a) = 0.0;
            filled(a, a) = true;
            return;
        }
        directional(a, b) = d;
        directional_filled(a, b) = true;
        double sum = 0.0;
        int count = 0;
        if (directional_filled(a, b)) sum += directional(a, b), ++count;
        if (directional_filled(b, a)) sum += directional(b, a), ++count;
        values(a, b) = values(b, a) = sum / count;
        filled(a, b) = filled(b, a) = true;
    }

    /// Off-diagonal filled entries (upper triangle).
    std::vector<double> filled_off_diagonal() const {
        std::vector<double> out;
        for (Eigen::Index i = 0; i < values.rows(); ++i)
            for (Eigen::Index j = i + 1; j < values.cols(); ++j)
                if (filled(i, j)) out.push_back(values(i, j));
        return out;
    }
};

/// Probe states drawn uniformly (with replacement) from the training split.
inline std::vector<int> draw_probe_states(const OfflineDataset& data, std::size_t n_probe, std::uint64_t seed) {
    const auto train = data.train();
    if (train.empty()) throw std::invalid_argument("draw_probe_states: empty training split");
    Rng rng(derive_seed(seed, tag::probes));
    std::vector<int> probes(n_probe);
    for (auto& p : probes) p = train[uniform_index(rng, train.size())].state;
    return probes;
}

namespace detail {

/// Probe multiset as per-state weights summing to one.
inline Eigen::VectorXd probe_weights(std::span<const int> probes, int n_states) {
    if (probes.empty()) throw std::invalid_argument("model distance: empty probe set");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n_states);
    for (int s : probes) {
        if (s < 0 || s >= n_states) throw std::out_of_range("probe state outside the MDP");
        w(s) += 1.0;
    }
    return w / static_cast<double>(probes.size());
}

inline void check_same_shape(const TabularMdp& a, const TabularMdp& b) {
    if (a.n_states != b.n_states || a.n_actions != b.n_actions) throw std::invalid_argument("model distance: shape mismatch");
}

inline bool same_model(const TabularMdp& a, const TabularMdp& b) {
    return &a == &b || (a.transition == b.transition && a.reward == b.reward);
}

}  // namespace detail

/// Closed-form one-step model distance between two MDPs:
///   E_{s ~ probes, a ~ pi(.|s)} [ E_{x ~ P_t, y ~ P_o} ||phi(x) - phi(y)|| + alpha |r_t(s,a) - r_o(s,a)| ]
/// with x and y sampled independently. Identical models are at distance 0
/// by definition (independent draws from one stochastic model would
/// otherwise score a positive self-distance).
inline double one_step_distance(const TabularMdp& m_t, const TabularMdp& m_other, const Policy& policy,
                                std::span<const int> probe_states, const StateEmbedding& embedding, double alpha,
                                Norm norm = Norm::l2) {
    detail::check_same_shape(m_t, m_other);
    detail::check_policy_shape(m_t, policy);
    const Eigen::VectorXd w = detail::probe_weights(probe_states, m_t.n_states);
    if (detail::same_model(m_t, m_other)) return 0.0;
    const Eigen::MatrixXd dist = embedding.pairwise(norm);
    double total = 0.0;
    for (int s = 0; s < m_t.n_states; ++s) {
        if (w(s) == 0.0) continue;
        for (int a = 0; a < m_t.n_actions; ++a) {
            const double pa = policy.action_probs(s, a);
            if (pa == 0.0) continue;
            const double state_term = (m_t.next_dist(s, a) * dist).dot(m_other.next_dist(s, a));
            total += w(s) * pa * (state_term + alpha * std::abs(m_t.reward(s, a) - m_other.reward(s, a)));
        }
    }
    return total;
}

/// Distance between candidates compares their penalized models (the MDPs their policies optimize).
inline double one_step_distance(const CandidateModel& m_t, const CandidateModel& m_other, const Policy& policy,
                                std::span<const int> probe_states, const StateEmbedding& embedding, double alpha,
                                Norm norm = Norm::l2) {
    return one_step_distance(m_t.penalized_mdp, m_other.penalized_mdp, policy, probe_states, embedding, alpha, norm);
}

struct MonteCarloEstimate {
    double value = 0.0;
    double standard_error = 0.0;
};

/// Multi-step distance: from each probe state both models are rolled forward
/// `ell_roll` steps under the shared policy with independent transition
/// draws; a rollout scores the mean over steps of
/// ||phi(s1_k) - phi(s2_k)|| + alpha |r1_k - r2_k|. Rollout k starts from
/// probe k mod |probes|. The first action is shared by both models.
inline MonteCarloEstimate multi_step_distance(const TabularMdp& m_t, const TabularMdp& m_other, const Policy& policy,
                                              std::span<const int> probe_states, const StateEmbedding& embedding,
                                              double alpha, int ell_roll, std::size_t n_rollouts, std::uint64_t seed,
                                              Norm norm = Norm::l2) {
    detail::check_same_shape(m_t, m_other);
    detail::check_policy_shape(m_t, policy);
    if (ell_roll < 1) throw std::invalid_argument("multi_step_distance: rollout length must be at least 1");
    if (probe_states.empty()) throw std::invalid_argument("multi_step_distance: empty probe set");
    if (n_rollouts == 0) throw std::invalid_argument("multi_step_distance: need at least one rollout");
    if (detail::same_model(m_t, m_other)) return {0.0, 0.0};
    Rng rng(seed);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < n_rollouts; ++k) {
        int s1 = probe_states[k % probe_states.size()];
        int s2 = s1;
        double acc = 0.0;
        for (int step = 0; step < ell_roll; ++step) {
            const int a1 = sample_categorical(policy.action_probs.row(s1), uniform01(rng));
            const int a2 = step == 0 ? a1 : sample_categorical(policy.action_probs.row(s2), uniform01(rng));
            const double r1 = m_t.reward(s1, a1);
            const double r2 = m_other.reward(s2, a2);
            s1 = sample_categorical(m_t.next_dist(s1, a1), uniform01(rng));
            s2 = sample_categorical(m_other.next_dist(s2, a2), uniform01(rng));
            acc += embedding.distance(s1, s2, norm) + alpha * std::abs(r1 - r2);
        }
        const double v = acc / ell_roll;
        sum += v;
        sum_sq += v * v;
    }
    const double n = static_cast<double>(n_rollouts);
    const double mean = sum / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
    return {mean, std::sqrt(var / n)};
}

/// Tabular analog of a weight-space distance: L1 between transition tensors
/// plus L1 between penalized reward tables, per (s, a) pair.
inline double parameter_distance(const TabularMdp& a, const TabularMdp& b) {
    detail::check_same_shape(a, b);
    const double l1 = (a.transition - b.transition).lpNorm<1>() + (a.reward - b.reward).lpNorm<1>();
    return l1 / (static_cast<double>(a.n_states) * a.n_actions);
}

inline double parameter_distance(const CandidateModel& a, const CandidateModel& b) {
    return parameter_distance(a.penalized_mdp, b.penalized_mdp);
}

/// Fills distance-matrix rows for a fixed candidate set. Caches P_j D for
/// every candidate so a directional one-step distance costs O(|S|^2 |A|).
class DistanceEngine {
public:
    DistanceEngine(const CandidateSet& set, const StateEmbedding& embedding, DistanceConfig config,
                   std::vector<int> probe_states, std::optional<Policy> empirical_policy = std::nullopt,
                   std::uint64_t seed = 0)
        : set_(&set),
          embedding_(&embedding),
          config_(config),
          probes_(std::move(probe_states)),
          empirical_(std::move(empirical_policy)),
          seed_(seed) {
        config_.validate();
        set.validate();
        const auto& ref = set[0].penalized_mdp;
        if (embedding.n_states() != ref.n_states) throw std::invalid_argument("embedding does not cover every state");
        weights_ = detail::probe_weights(probes_, ref.n_states);
        if (config_.policy_source == PolicySource::model_based_fixed && config_.fixed_policy_index >= set.size())
            throw ConfigError("fixed_policy_index outside the candidate set");
        if (config_.policy_source == PolicySource::model_free_empirical && !empirical_)
            throw std::invalid_argument("model-free-empirical distance needs the empirical behavior policy");
        if (config_.rollout_length == 1 && config_.policy_source != PolicySource::parameter_space) {
            const Eigen::MatrixXd dist = embedding.pairwise(config_.norm);
            projected_.reserve(set.size());
            for (const auto& c : set.candidates) projected_.push_back(c.penalized_mdp.transition * dist);
        }
    }

    const DistanceConfig& config() const { return config_; }
    const std::vector<int>& probe_states() const { return probes_; }

    DistanceMatrix empty_matrix() const { return DistanceMatrix::empty(set_->size(), config_, probes_); }

    /// Policy whose actions drive the distance when model t was just evaluated.
    Policy rollout_policy(std::size_t t) const {
        const auto& ref = (*set_)[0].penalized_mdp;
        switch (config_.policy_source) {
            case PolicySource::selected_model: return (*set_)[t].policy;
            case PolicySource::model_based_fixed: return (*set_)[config_.fixed_policy_index].policy;
            case PolicySource::model_free_empirical: return *empirical_;
            case PolicySource::exploratory_random:
            case PolicySource::parameter_space: return Policy::uniform(ref.n_states, ref.n_actions);
        }
        return Policy::uniform(ref.n_states, ref.n_actions);
    }

    /// d(M_t, M_j) under `policy`.
    double directional(std::size_t t, std::size_t j, const Policy& policy) const {
        if (t == j) return 0.0;
        const auto& mt = (*set_)[t].penalized_mdp;
        const auto& mj = (*set_)[j].penalized_mdp;
        if (config_.policy_source == PolicySource::parameter_space) return parameter_distance(mt, mj);
        if (detail::same_model(mt, mj)) return 0.0;
        if (config_.rollout_length > 1) {
            const std::size_t n = config_.n_rollouts > 0 ? static_cast<std::size_t>(config_.n_rollouts) : probes_.size();
            return multi_step_distance(mt, mj, policy, probes_, *embedding_, config_.alpha, config_.rollout_length, n,
                                       derive_seed(seed_, tag::distance, t, j), config_.norm)
                .value;
        }
        const Eigen::MatrixXd& gj = projected_[j];
        double total = 0.0;
        for (int s = 0; s < mt.n_states; ++s) {
            const double ws = weights_(s);
            if (ws == 0.0) continue;
            for (int a = 0; a < mt.n_actions; ++a) {
                const double pa = policy.action_probs(s, a);
                if (pa == 0.0) continue;
                const Eigen::Index r = mt.row(s, a);
                const double state_term = mt.transition.row(r).dot(gj.row(r));
                total += ws * pa * (state_term + config_.alpha * std::abs(mt.reward(s, a) - mj.reward(s, a)));
            }
        }
        return total;
    }

    /// Fill row and column t: d(M_t, M_j) for every j under `policy_t`.
    void update(DistanceMatrix& matrix, std::size_t t, const Policy& policy_t) const {
        if (t >= matrix.size()) throw std::out_of_range("update_distances: index outside the candidate set");
        for (std::size_t j = 0; j < matrix.size(); ++j) matrix.record(t, j, directional(t, j, policy_t));
    }

    void update(DistanceMatrix& matrix, std::size_t t) const { update(matrix, t, rollout_policy(t)); }

private:
    const CandidateSet* set_;
    const StateEmbedding* embedding_;
    DistanceConfig config_;
    std::vector<int> probes_;
    std::optional<Policy> empirical_;
    std::uint64_t seed_;
    Eigen::VectorXd weights_;
    std::vector<Eigen::MatrixXd> projected_;
};

/// One-off row update with the selected model's policy and the matrix's own
/// alpha and probe states.
inline void update_distances(DistanceMatrix& matrix, std::size_t t_index, const CandidateSet& set,
                             const Policy& policy_t, const StateEmbedding& embedding, Norm norm = Norm::l2) {
    DistanceConfig config;
    config.alpha = matrix.alpha;
    config.rollout_length = matrix.rollout_length;
    config.policy_source = matrix.policy_source;
    config.norm = norm;
    config.n_probe = matrix.probe_states.size();
    if (config.policy_source != PolicySource::selected_model && config.policy_source != PolicySource::parameter_space)
        config.policy_source = PolicySource::selected_model;
    DistanceEngine(set, embedding, config, matrix.probe_states).update(matrix, t_index, policy_t);
}

/// Row-major CSV with full precision; unfilled entries are empty fields.
inline void write_distance_csv(std::ostream& os, const DistanceMatrix& m) {
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
            if (j > 0) os << ',';
            if (m.filled(i, j)) os << format_double(m.values(i, j));
        }
        os << '\n';
    }
}

}  // namespace boms
