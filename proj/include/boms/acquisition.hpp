#pragma once

#include <numbers>

#include "boms/gp.hpp"

namespace boms {

enum class AcquisitionKind { gp_ucb, random };
enum class BetaSchedule { constant, log_growth };

inline std::string to_string(AcquisitionKind k) { return k == AcquisitionKind::gp_ucb ? "gp-ucb" : "random"; }
inline std::string to_string(BetaSchedule b) { return b == BetaSchedule::constant ? "constant" : "log-growth"; }

inline AcquisitionKind acquisition_kind_from_string(std::string_view s) {
    if (s == "gp-ucb") return AcquisitionKind::gp_ucb;
    if (s == "random") return AcquisitionKind::random;
    throw ConfigError("unknown acquisition kind '" + std::string(s) + "'");
}

inline BetaSchedule beta_schedule_from_string(std::string_view s) {
    if (s == "constant") return BetaSchedule::constant;
    if (s == "log-growth") return BetaSchedule::log_growth;
    throw ConfigError("unknown beta schedule '" + std::string(s) + "'");
}

struct AcquisitionConfig {
    AcquisitionKind kind = AcquisitionKind::gp_ucb;
    BetaSchedule schedule = BetaSchedule::constant;
    double beta = 4.0;    // constant schedule
    double delta = 0.1;   // log-growth schedule
    std::uint64_t seed = 0;
    bool allow_reselect = false;

    void validate() const {
        if (!(beta >= 0.0)) throw ConfigError("acquisition beta must be nonnegative");
        if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("acquisition delta must lie in (0, 1)");
    }
};

/// beta_t: constant, or 2 ln(N t^2 pi^2 / (6 delta)) for the log-growth schedule.
inline double beta_at(const AcquisitionConfig& config, std::size_t candidate_count, int iteration) {
    if (config.schedule == BetaSchedule::constant) return config.beta;
    const double t = std::max(1, iteration);
    const double n = static_cast<double>(std::max<std::size_t>(1, candidate_count));
    return std::max(0.0, 2.0 * std::log(n * t * t * std::numbers::pi * std::numbers::pi / (6.0 * config.delta)));
}

/// GP-UCB score mu + sqrt(beta_t) sigma. For the random kind the score is a
/// uniform draw keyed on (seed, iteration, candidate).
inline double score(const AcquisitionConfig& config, double mean, double variance, int iteration,
                    std::size_t candidate_count = 1, std::size_t candidate = 0) {
    if (!(variance >= 0.0)) throw std::invalid_argument("acquisition score: negative variance");
    if (config.kind == AcquisitionKind::random) {
        Rng rng(derive_seed(config.seed, tag::acquisition, static_cast<std::uint64_t>(iteration), candidate));
        return uniform01(rng);
    }
    return mean + std::sqrt(beta_at(config, candidate_count, iteration)) * std::sqrt(variance);
}

/// Argmax of the scores over admissible candidates; ties go to the lowest index.
inline std::size_t argmax_admissible(std::span<const double> scores, const std::vector<bool>& admissible) {
    std::size_t best = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!admissible[i]) continue;
        if (best == scores.size() || scores[i] > scores[best]) best = i;
    }
    if (best == scores.size()) throw std::invalid_argument("select_next: every candidate has already been evaluated");
    return best;
}

/// Next model to evaluate: argmax of the acquisition over candidates not yet
/// evaluated (all candidates with allow_reselect).
inline std::size_t select_next(const AcquisitionConfig& config, std::span<const Posterior> posteriors,
                               const std::vector<bool>& evaluated, int iteration) {
    if (evaluated.size() != posteriors.size()) throw std::invalid_argument("select_next: size mismatch");
    std::vector<double> scores(posteriors.size());
    std::vector<bool> admissible(posteriors.size());
    for (std::size_t i = 0; i < posteriors.size(); ++i) {
        admissible[i] = config.allow_reselect || !evaluated[i];
        scores[i] = admissible[i] ? score(config, posteriors[i].mean, posteriors[i].variance, iteration, posteriors.size(), i) : 0.0;
    }
    return argmax_admissible(scores, admissible);
}

inline std::size_t select_next(const AcquisitionConfig& config, const GpState& gp, const DistanceMatrix& distances,
                               std::size_t candidate_count, int iteration) {
    if (candidate_count != distances.size()) throw std::invalid_argument("select_next: candidate count mismatch");
    std::vector<bool> evaluated(candidate_count, false);
    for (auto i : gp.evaluated_indices) evaluated[i] = true;
    const std::vector<Posterior> post = posterior_all(gp, distances);
    return select_next(config, post, evaluated, iteration);
}

}  // namespace boms
