#pragma once

#include <optional>

#include "boms/distance.hpp"

namespace boms {

struct KernelParams {
    double lengthscale = 1.0;
    double signal_variance = 1.0;
    double noise_variance = 0.0;
    double jitter = 1e-8;

    void validate() const {
        if (!(lengthscale > 0.0)) throw std::invalid_argument("kernel lengthscale must be positive");
        if (!(signal_variance > 0.0)) throw std::invalid_argument("kernel signal variance must be positive");
        if (!(noise_variance >= 0.0)) throw std::invalid_argument("kernel noise variance must be nonnegative");
        if (!(jitter > 0.0)) throw std::invalid_argument("kernel jitter must be positive");
    }
};

/// RBF kernel on a model distance: sigma_f^2 exp(-d^2 / (2 l^2)).
inline double kernel_value(double d, const KernelParams& p) {
    if (!(d >= 0.0)) throw std::invalid_argument("kernel_value: distance must be nonnegative");
    return p.signal_variance * std::exp(-(d * d) / (2.0 * p.lengthscale * p.lengthscale));
}

enum class LengthscaleMode { median_heuristic, fixed, mle_grid };

inline std::string to_string(LengthscaleMode m) {
    switch (m) {
        case LengthscaleMode::median_heuristic: return "median-heuristic";
        case LengthscaleMode::fixed: return "fixed";
        case LengthscaleMode::mle_grid: return "mle-grid";
    }
    return "?";
}

inline LengthscaleMode lengthscale_mode_from_string(std::string_view s) {
    for (auto m : {LengthscaleMode::median_heuristic, LengthscaleMode::fixed, LengthscaleMode::mle_grid})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown lengthscale mode '" + std::string(s) + "'");
}

struct GpConfig {
    LengthscaleMode lengthscale_mode = LengthscaleMode::median_heuristic;
    double fixed_lengthscale = 1.0;
    /// Unset: (0.05 * observation range)^2, or 1e-4 with a degenerate range.
    std::optional<double> noise_variance;
    /// Subtract the running mean of the observations before conditioning.
    bool center_observations = true;
    /// Jitter escalates x10 from initial to max, both relative to the signal variance.
    double jitter_initial = 1e-8;
    double jitter_max = 1e-2;

    void validate() const {
        if (!(fixed_lengthscale > 0.0)) throw ConfigError("fixed lengthscale must be positive");
        if (noise_variance && !(*noise_variance >= 0.0)) throw ConfigError("noise variance must be nonnegative");
        if (!(jitter_initial > 0.0) || !(jitter_max >= jitter_initial)) throw ConfigError("invalid jitter range");
    }
};

struct Posterior {
    double mean = 0.0;
    double variance = 0.0;
    double raw_variance = 0.0;  // before clamping at zero
};

/// Evaluated models, their observed returns, fitted kernel and the cached
/// Cholesky factor of K + (noise + jitter) I. Updates build a new state.
struct GpState {
    std::vector<std::size_t> evaluated_indices;
    std::vector<double> observations;
    KernelParams params;
    bool centered = true;
    double offset = 0.0;
    Eigen::MatrixXd chol;    // lower triangular
    Eigen::VectorXd weights;  // (K + s I)^{-1} (y - offset)
    int jitter_escalations = 0;

    std::size_t size() const { return evaluated_indices.size(); }
    bool contains(std::size_t idx) const {
        return std::find(evaluated_indices.begin(), evaluated_indices.end(), idx) != evaluated_indices.end();
    }

    Eigen::MatrixXd regularized_kernel() const { return chol * chol.transpose(); }
};

namespace detail {

inline double checked_distance(const DistanceMatrix& d, std::size_t i, std::size_t j) {
    if (!d.is_filled(i, j))
        throw std::invalid_argument("GP needs the distance between models " + std::to_string(i) + " and " +
                                    std::to_string(j) + ", which has not been computed");
    return d(i, j);
}

inline Eigen::MatrixXd kernel_matrix(const DistanceMatrix& d, std::span<const std::size_t> idx, const KernelParams& p) {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = p.signal_variance;
        for (Eigen::Index j = 0; j < i; ++j)
            k(i, j) = k(j, i) = kernel_value(checked_distance(d, idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]), p);
    }
    return k;
}

struct Factor {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
    int escalations = 0;
};

/// Cholesky of K + (noise + jitter) I with jitter escalation.
inline Factor factorize(const Eigen::MatrixXd& k, const KernelParams& p, const GpConfig& config) {
    const auto n = k.rows();
    double jitter = config.jitter_initial * p.signal_variance;
    const double jitter_cap = config.jitter_max * p.signal_variance * (1.0 + 1e-12);
    for (int escalations = 0; jitter <= jitter_cap; ++escalations, jitter *= 10.0) {
        const Eigen::MatrixXd reg = k + (p.noise_variance + jitter) * Eigen::MatrixXd::Identity(n, n);
        Eigen::LLT<Eigen::MatrixXd> llt(reg);
        if (llt.info() != Eigen::Success) continue;
        Eigen::MatrixXd lower = llt.matrixL();
        if (n > 0 && !(lower.diagonal().minCoeff() > 0.0 && lower.allFinite())) continue;
        return {std::move(lower), jitter, escalations};
    }
    throw NumericalError("GP kernel matrix is not positive definite even with jitter " + format_double(jitter_cap) +
                         " (degenerate distance matrix?)");
}

}  // namespace detail

/// Condition the GP on (indices, observations) with fixed kernel parameters.
inline GpState condition(std::vector<std::size_t> indices, std::vector<double> observations, const DistanceMatrix& d,
                         KernelParams params, const GpConfig& config) {
    if (indices.size() != observations.size()) throw std::invalid_argument("GP: indices and observations differ in length");
    for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (indices[i] == indices[j]) throw std::invalid_argument("GP: duplicate evaluated index " + std::to_string(indices[i]));
    params.validate();
    GpState st;
    st.evaluated_indices = std::move(indices);
    st.observations = std::move(observations);
    st.centered = config.center_observations;
    const auto n = static_cast<Eigen::Index>(st.size());
    const Eigen::Map<const Eigen::VectorXd> y(st.observations.data(), n);
    st.offset = (st.centered && n > 0) ? y.mean() : 0.0;
    const detail::Factor f = detail::factorize(detail::kernel_matrix(d, st.evaluated_indices, params), params, config);
    params.jitter = f.jitter;
    st.params = params;
    st.chol = f.lower;
    st.jitter_escalations = f.escalations;
    const Eigen::VectorXd centered = y.array() - st.offset;
    st.weights = st.chol.transpose().triangularView<Eigen::Upper>().solve(
        st.chol.triangularView<Eigen::Lower>().solve(centered));
    return st;
}

/// Covariance terms for one iteration: K(M_t, M_t) and K(M, M_t) for every candidate.
struct CovarianceTerms {
    Eigen::MatrixXd evaluated;   // t x t
    Eigen::MatrixXd candidates;  // N x t
};

inline CovarianceTerms covariance_terms(const GpState& st, const DistanceMatrix& d) {
    CovarianceTerms c;
    c.evaluated = detail::kernel_matrix(d, st.evaluated_indices, st.params);
    const auto n = static_cast<Eigen::Index>(d.size());
    const auto t = static_cast<Eigen::Index>(st.size());
    c.candidates.resize(n, t);
    for (Eigen::Index j = 0; j < t; ++j) {
        const std::size_t e = st.evaluated_indices[static_cast<std::size_t>(j)];
        for (Eigen::Index m = 0; m < n; ++m)
            c.candidates(m, j) = kernel_value(detail::checked_distance(d, static_cast<std::size_t>(m), e), st.params);
    }
    return c;
}

namespace detail {

inline Posterior posterior_from_cross(const GpState& st, const Eigen::VectorXd& k_cross) {
    if (st.size() == 0) return {0.0, st.params.signal_variance, st.params.signal_variance};
    const Eigen::VectorXd v = st.chol.triangularView<Eigen::Lower>().solve(k_cross);
    Posterior p;
    p.mean = st.offset + k_cross.dot(st.weights);
    p.raw_variance = st.params.signal_variance - v.squaredNorm();
    p.variance = std::max(0.0, p.raw_variance);
    return p;
}

}  // namespace detail

/// mu(M) = offset + K(M, M_t) (K + s I)^{-1} (R_t - offset),
/// var(M) = K(M, M) - K(M, M_t) (K + s I)^{-1} K(M_t, M), clamped at 0.
inline Posterior posterior(const GpState& st, const DistanceMatrix& d, std::size_t query) {
    if (st.size() == 0) return {0.0, st.params.signal_variance, st.params.signal_variance};
    Eigen::VectorXd k(static_cast<Eigen::Index>(st.size()));
    for (std::size_t i = 0; i < st.size(); ++i)
        k(static_cast<Eigen::Index>(i)) = kernel_value(detail::checked_distance(d, query, st.evaluated_indices[i]), st.params);
    return detail::posterior_from_cross(st, k);
}

/// Posterior at every candidate, sharing one set of covariance terms.
inline std::vector<Posterior> posterior_all(const GpState& st, const DistanceMatrix& d) {
    std::vector<Posterior> out(d.size());
    if (st.size() == 0) {
        std::fill(out.begin(), out.end(), Posterior{0.0, st.params.signal_variance, st.params.signal_variance});
        return out;
    }
    const CovarianceTerms c = covariance_terms(st, d);
    for (std::size_t m = 0; m < d.size(); ++m)
        out[m] = detail::posterior_from_cross(st, c.candidates.row(static_cast<Eigen::Index>(m)).transpose());
    return out;
}

/// log N(y - offset | 0, K + (noise + jitter) I).
inline double log_marginal_likelihood(const GpState& st) {
    const auto n = static_cast<double>(st.size());
    if (st.size() == 0) return 0.0;
    const Eigen::Map<const Eigen::VectorXd> y(st.observations.data(), static_cast<Eigen::Index>(st.size()));
    const Eigen::VectorXd centered = y.array() - st.offset;
    return -0.5 * centered.dot(st.weights) - st.chol.diagonal().array().log().sum() -
           0.5 * n * std::log(2.0 * 3.14159265358979323846);
}

/// Log-spaced grid of 25 lengthscales from center/100 to center*100 (6 points per decade).
inline std::vector<double> lengthscale_grid(double center) {
    std::vector<double> grid;
    grid.reserve(25);
    for (int k = -12; k <= 12; ++k) grid.push_back(center * std::pow(10.0, k / 6.0));
    return grid;
}

inline double sample_variance(std::span<const double> y) {
    if (y.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(y.size() - 1);
}

/// Hyperparameters for the current observations:
///   lengthscale     median of filled off-diagonal distances (median-heuristic),
///                   the configured value (fixed), or the log-marginal-likelihood
///                   maximizer over lengthscale_grid(median) (mle-grid);
///   signal variance sample variance of the observations (1.0 if < 2 or zero);
///   noise variance  configured, else (0.05 * range)^2, else 1e-4.
inline KernelParams fit_kernel_params(const DistanceMatrix& d, std::span<const std::size_t> indices,
                                      std::span<const double> observations, const GpConfig& config) {
    config.validate();
    KernelParams p;
    const double var = sample_variance(observations);
    p.signal_variance = var > 0.0 ? var : 1.0;
    if (config.noise_variance) {
        p.noise_variance = *config.noise_variance;
    } else {
        double range = 0.0;
        if (!observations.empty()) {
            const auto [lo, hi] = std::minmax_element(observations.begin(), observations.end());
            range = *hi - *lo;
        }
        p.noise_variance = range > 0.0 ? (0.05 * range) * (0.05 * range) : 1e-4;
    }
    p.jitter = config.jitter_initial * p.signal_variance;
    if (config.lengthscale_mode == LengthscaleMode::fixed) {
        p.lengthscale = config.fixed_lengthscale;
        return p;
    }
    const std::vector<double> filled = d.filled_off_diagonal();
    if (filled.empty()) throw std::invalid_argument("fit_kernel_params: no filled off-diagonal distances");
    const double med = median_of(filled);
    p.lengthscale = med > 0.0 ? med : 1.0;
    if (config.lengthscale_mode == LengthscaleMode::mle_grid && !indices.empty()) {
        double best = -std::numeric_limits<double>::infinity();
        const std::vector<double> grid = lengthscale_grid(p.lengthscale);
        const std::vector<std::size_t> idx(indices.begin(), indices.end());
        const std::vector<double> obs(observations.begin(), observations.end());
        double chosen = p.lengthscale;
        for (double ell : grid) {
            KernelParams trial = p;
            trial.lengthscale = ell;
            const double lml = log_marginal_likelihood(condition(idx, obs, d, trial, config));
            if (lml > best) {
                best = lml;
                chosen = ell;
            }
        }
        p.lengthscale = chosen;
    }
    return p;
}

inline KernelParams fit_lengthscale(const DistanceMatrix& d, const GpState& st, const GpConfig& config) {
    return fit_kernel_params(d, st.evaluated_indices, st.observations, config);
}

/// Fit hyperparameters and condition in one go (batch construction).
inline GpState make_gp_state(std::vector<std::size_t> indices, std::vector<double> observations, const DistanceMatrix& d,
                             const GpConfig& config) {
    const KernelParams p = fit_kernel_params(d, indices, observations, config);
    return condition(std::move(indices), std::move(observations), d, p, config);
}

/// Append one evaluation, refit hyperparameters and refactorize.
inline GpState update(const GpState& st, std::size_t new_index, double new_observation, const DistanceMatrix& d,
                      const GpConfig& config) {
    if (st.contains(new_index)) throw std::invalid_argument("GP update: model " + std::to_string(new_index) + " already evaluated");
    auto indices = st.evaluated_indices;
    auto obs = st.observations;
    indices.push_back(new_index);
    obs.push_back(new_observation);
    return make_gp_state(std::move(indices), std::move(obs), d, config);
}

}  // namespace boms
