#pragma once

// Reference computations used only for verification (tests, acceptance and
// the verify-theory suites). They deliberately avoid the production code
// paths they check.

#include "boms/gp.hpp"
#include "boms/theory.hpp"

namespace boms::oracle {

/// Distance matrix with every entry filled from Euclidean distances between points.
inline DistanceMatrix full_distance_matrix(const Eigen::MatrixXd& points) {
    const auto n = static_cast<std::size_t>(points.rows());
    DistanceMatrix d = DistanceMatrix::empty(n, DistanceConfig{}, {});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            d.record(i, j, (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm());
    return d;
}

/// Joint-Gaussian conditioning with an explicit inverse: f ~ N(offset, K),
/// y = f(evaluated) + noise, with the noise (plus jitter) taken from `params`.
inline std::vector<Posterior> explicit_conditioning(const Eigen::MatrixXd& distances, std::span<const std::size_t> evaluated,
                                                    std::span<const double> y, double offset, const KernelParams& params) {
    const auto n = distances.rows();
    const auto t = static_cast<Eigen::Index>(evaluated.size());
    Eigen::MatrixXd joint(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            joint(i, j) = params.signal_variance *
                          std::exp(-distances(i, j) * distances(i, j) / (2.0 * params.lengthscale * params.lengthscale));
    Eigen::MatrixXd k_ee(t, t);
    Eigen::MatrixXd k_qe(n, t);
    Eigen::VectorXd resid(t);
    for (Eigen::Index a = 0; a < t; ++a) {
        const auto ea = static_cast<Eigen::Index>(evaluated[static_cast<std::size_t>(a)]);
        resid(a) = y[static_cast<std::size_t>(a)] - offset;
        for (Eigen::Index b = 0; b < t; ++b) k_ee(a, b) = joint(ea, static_cast<Eigen::Index>(evaluated[static_cast<std::size_t>(b)]));
        k_ee(a, a) += params.noise_variance + params.jitter;
        k_qe.col(a) = joint.col(ea);
    }
    const Eigen::MatrixXd inv = k_ee.fullPivLu().inverse();
    std::vector<Posterior> out(static_cast<std::size_t>(n));
    for (Eigen::Index q = 0; q < n; ++q) {
        const Eigen::RowVectorXd kq = k_qe.row(q);
        auto& p = out[static_cast<std::size_t>(q)];
        p.mean = offset + (kq * inv * resid)(0);
        p.raw_variance = joint(q, q) - (kq * inv * kq.transpose())(0);
        p.variance = std::max(0.0, p.raw_variance);
    }
    return out;
}

struct GpOracleResult {
    std::size_t n_candidates = 0;
    std::size_t n_evaluated = 0;
    double max_mean_deviation = 0.0;
    double max_variance_deviation = 0.0;
};

/// One random instance: 2-12 candidate points in R^3, 1-8 of them evaluated
/// with random returns; the production posterior (Cholesky path, fitted
/// hyperparameters) against explicit conditioning with the same hyperparameters.
inline GpOracleResult gp_oracle_instance(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = 2 + uniform_index(rng, 11);
    const std::size_t t = 1 + uniform_index(rng, std::min<std::size_t>(8, n));
    Eigen::MatrixXd points(static_cast<Eigen::Index>(n), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        for (Eigen::Index c = 0; c < 3; ++c) points(i, c) = 4.0 * uniform01(rng);
    const DistanceMatrix d = full_distance_matrix(points);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_in_place(order, rng);
    std::vector<std::size_t> idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t));
    std::vector<double> y(t);
    for (auto& v : y) v = 3.0 * standard_normal(rng) + 1.0;

    GpConfig config;
    const std::uint64_t mode = uniform_index(rng, 3);
    config.lengthscale_mode = mode == 0 ? LengthscaleMode::median_heuristic : mode == 1 ? LengthscaleMode::mle_grid
                                                                                        : LengthscaleMode::fixed;
    config.fixed_lengthscale = 0.5 + 2.0 * uniform01(rng);
    config.center_observations = uniform_index(rng, 2) == 0;
    const GpState st = make_gp_state(idx, y, d, config);
    const std::vector<Posterior> got = posterior_all(st, d);
    const std::vector<Posterior> want = explicit_conditioning(d.values, idx, y, st.offset, st.params);

    GpOracleResult r;
    r.n_candidates = n;
    r.n_evaluated = t;
    for (std::size_t q = 0; q < n; ++q) {
        r.max_mean_deviation = std::max(r.max_mean_deviation, std::abs(got[q].mean - want[q].mean));
        r.max_variance_deviation = std::max(r.max_variance_deviation, std::abs(got[q].raw_variance - want[q].raw_variance));
    }
    return r;
}

}  // namespace boms::oracle
