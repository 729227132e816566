#include <gtest/gtest.h>

#include <sstream>

#include "boms/gridworld.hpp"
#include "boms/theory.hpp"

using namespace boms;

namespace {

struct Fixture {
    Gridworld g = make_gridworld(GridworldSpec{.rows = 3, .cols = 3, .slip = 0.1, .gamma = 0.9});
    OfflineDataset data = generate_dataset(g.mdp, make_behavior_policy(g.mdp, BehaviorKind::epsilon_greedy, 0.3), 400,
                                           30, 21, 0.2);
    TransitionCounts counts = empirical_counts(data, 9, 4);
    MdpShape shape = MdpShape::of(g.mdp);
};

}  // namespace

TEST(Mle, SmoothedFormulaByHand) {
    TransitionCounts c(2, 1);
    c.add(std::vector<Step>{{0, 0, 1.0, 1}, {0, 0, 0.0, 1}, {0, 0, 0.5, 0}});
    MdpShape shape{2, 1, 0.9, 1.0, Eigen::Vector2d(1.0, 0.0)};
    const TabularMdp m = learn_mle_model(c, shape, 0.5);
    EXPECT_NEAR(m.transition(0, 0), (1 + 0.5) / (3 + 1.0), 1e-15);
    EXPECT_NEAR(m.transition(0, 1), (2 + 0.5) / (3 + 1.0), 1e-15);
    EXPECT_NEAR(m.transition(1, 0), 0.5, 1e-15);  // unvisited: uniform
    EXPECT_NEAR(m.reward(0, 0), 0.5, 1e-15);
    EXPECT_EQ(m.reward(1, 0), 0.0);
    m.validate();
    EXPECT_THROW(learn_mle_model(c, shape, 0.0), std::invalid_argument);
}

TEST(Uncertainty, CountAndExact) {
    TransitionCounts c(1, 2);
    c.add(std::vector<Step>{{0, 0, 0.0, 0}, {0, 0, 0.0, 0}, {0, 0, 0.0, 0}});
    const Eigen::MatrixXd u = count_uncertainty(c, 2.0);
    EXPECT_NEAR(u(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(u(0, 1), 2.0, 1e-15);
    EXPECT_THROW(count_uncertainty(c, -1.0), std::invalid_argument);

    Rng rng(1);
    const TabularMdp a = random_mdp(rng, 3, 2, 0.8);
    TabularMdp b = a;
    b.transition.row(1) << 1.0, 0.0, 0.0;
    const Eigen::MatrixXd ex = exact_uncertainty(b, a);
    const double tv = 0.5 * (a.transition.row(1) - b.transition.row(1)).cwiseAbs().sum();
    EXPECT_NEAR(ex(0, 1), tv / (1.0 - 0.8), 1e-14);
    EXPECT_EQ(ex(0, 0), 0.0);
    EXPECT_EQ(ex(2, 1), 0.0);
}

TEST(Penalty, RewardShiftAndPolicy) {
    const Fixture f;
    const TabularMdp mle = learn_mle_model(f.counts, f.shape, 1.0);
    const Eigen::MatrixXd u = count_uncertainty(f.counts, 1.0);
    const CandidateModel c = make_candidate(mle, u, 0.7);
    EXPECT_LT((c.penalized_mdp.reward - (mle.reward - 0.7 * u)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(c.penalized_mdp.transition, mle.transition);
    EXPECT_GE(c.penalized_mdp.r_max, c.penalized_mdp.reward.cwiseAbs().maxCoeff());
    c.penalized_mdp.validate();
    EXPECT_LT(optimality_gap(c.penalized_mdp, c.policy), 1e-9);
    EXPECT_THROW(penalize(mle, u, -1.0), std::invalid_argument);
    EXPECT_THROW(penalize(mle, Eigen::MatrixXd::Zero(2, 2), 1.0), std::invalid_argument);
}

TEST(Posterior, SampledRowsAreDistributions) {
    const Fixture f;
    CandidateConfig cfg;
    cfg.reward_noise = 0.3;
    const CandidateSet set = generate_candidate_set(f.data, f.shape, 20, 5, cfg);
    ASSERT_EQ(set.size(), 20u);
    set.validate();
    for (const auto& c : set.candidates) {
        c.learned_mdp.validate();
        EXPECT_TRUE((c.learned_mdp.transition.array() >= 0.0).all());
        EXPECT_LE(c.learned_mdp.reward.cwiseAbs().maxCoeff(), f.shape.r_max);
        c.policy.validate();
    }
    EXPECT_NE(set[0].learned_mdp.transition, set[1].learned_mdp.transition);
}

TEST(Posterior, ZeroTemperatureIsTheMle) {
    const Fixture f;
    CandidateConfig cfg;
    cfg.transition_temperature = 0.0;
    const CandidateSet set = generate_candidate_set(f.data, f.shape, 3, 5, cfg);
    const TabularMdp mle = learn_mle_model(f.counts, f.shape, cfg.smoothing);
    for (const auto& c : set.candidates) {
        EXPECT_EQ(c.learned_mdp.transition, mle.transition);
        EXPECT_EQ(c.learned_mdp.reward, mle.reward);
    }
}

TEST(Posterior, DirichletMeanAndSpread) {
    // Mean of Dirichlet(alpha) is alpha / sum(alpha); variance of component k is
    // m_k (1 - m_k) / (sum(alpha) + 1).
    Rng rng(11);
    Eigen::RowVectorXd alpha(4);
    alpha << 0.5, 2.0, 3.0, 0.1;
    const double a0 = alpha.sum();
    const int n = 100000;
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(4);
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(4);
    for (int i = 0; i < n; ++i) {
        const Eigen::RowVectorXd x = sample_dirichlet(rng, alpha);
        ASSERT_NEAR(x.sum(), 1.0, 1e-12);
        sum += x;
        sq += x.cwiseProduct(x);
    }
    for (int k = 0; k < 4; ++k) {
        const double m = alpha(k) / a0;
        const double var = m * (1 - m) / (a0 + 1);
        EXPECT_NEAR(sum(k) / n, m, 5.0 * std::sqrt(var / n)) << k;
        EXPECT_NEAR(sq(k) / n - (sum(k) / n) * (sum(k) / n), var, 0.05 * var + 1e-5) << k;
    }
}

TEST(Posterior, TemperatureControlsSpread) {
    const Fixture f;
    auto spread = [&](double temperature) {
        CandidateConfig cfg;
        cfg.transition_temperature = temperature;
        const CandidateSet set = generate_candidate_set(f.data, f.shape, 30, 9, cfg);
        const TabularMdp mle = learn_mle_model(f.counts, f.shape, cfg.smoothing);
        double total = 0.0;
        for (const auto& c : set.candidates) total += (c.learned_mdp.transition - mle.transition).cwiseAbs().sum();
        return total / 30;
    };
    EXPECT_LT(spread(0.1), spread(1.0));
    EXPECT_LT(spread(1.0), spread(10.0));
}

TEST(Posterior, CandidatesIndependentOfBuildOrder) {
    const Fixture f;
    const CandidateConfig cfg;
    const CandidateSet set = generate_candidate_set(f.data, f.shape, 6, 42, cfg);
    const CandidateModel alone = sample_candidate(f.counts, f.shape, 42, 4, cfg);
    EXPECT_EQ(alone.learned_mdp.transition, set[4].learned_mdp.transition);
    EXPECT_EQ(alone.provenance, set[4].provenance);
}

TEST(Posterior, Ladders) {
    CandidateConfig cfg;
    cfg.transition_temperature = 0.1;
    cfg.transition_temperature_max = 10.0;
    cfg.reward_noise = 0.0;
    cfg.reward_noise_max = 0.4;
    cfg.validate();
    EXPECT_NEAR(cfg.for_candidate(0, 5).transition_temperature, 0.1, 1e-15);
    EXPECT_NEAR(cfg.for_candidate(2, 5).transition_temperature, 1.0, 1e-12);
    EXPECT_NEAR(cfg.for_candidate(4, 5).transition_temperature, 10.0, 1e-12);
    EXPECT_NEAR(cfg.for_candidate(1, 5).reward_noise, 0.1, 1e-15);
    EXPECT_NEAR(cfg.for_candidate(4, 5).reward_noise, 0.4, 1e-15);
    EXPECT_NEAR(cfg.for_candidate(0, 1).transition_temperature, 0.1, 1e-15);

    CandidateConfig bad;
    bad.transition_temperature = 0.0;
    bad.transition_temperature_max = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = CandidateConfig{};
    bad.reward_noise = 0.5;
    bad.reward_noise_max = 0.1;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(CandidateSet, ConfigErrors) {
    const Fixture f;
    CandidateConfig cfg;
    EXPECT_THROW(generate_candidate_set(f.data, f.shape, 0, 1, cfg), ConfigError);
    cfg.penalty_weight = -1;
    EXPECT_THROW(generate_candidate_set(f.data, f.shape, 3, 1, cfg), ConfigError);
    EXPECT_EQ(generate_candidate_set(f.data, f.shape, 1, 1, CandidateConfig{}).size(), 1u);
}

TEST(CandidateSet, TrueReturnsAndBest) {
    const Fixture f;
    const CandidateSet set = generate_candidate_set(f.data, f.shape, 10, 3, CandidateConfig{});
    const TrueReturns tr = true_returns(set, f.g.mdp);
    ASSERT_EQ(tr.returns.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_NEAR(tr.returns[i], total_return(f.g.mdp, set[i].policy), 1e-12);
        EXPECT_LE(tr.returns[i], tr.best);
    }
    EXPECT_EQ(tr.returns[tr.best_index], tr.best);
}

TEST(CandidateSet, SerializationRoundTrip) {
    const Fixture f;
    CandidateConfig cfg;
    cfg.reward_noise = 0.1;
    cfg.penalty_weight = 0.5;
    const CandidateSet set = generate_candidate_set(f.data, f.shape, 4, 8, cfg);
    std::stringstream ss;
    write_candidate_set(ss, set);
    const CandidateSet back = read_candidate_set(ss);
    ASSERT_EQ(back.size(), set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        EXPECT_EQ(back[i].learned_mdp.transition, set[i].learned_mdp.transition);
        EXPECT_EQ(back[i].learned_mdp.reward, set[i].learned_mdp.reward);
        EXPECT_EQ(back[i].uncertainty, set[i].uncertainty);
        EXPECT_EQ(back[i].penalized_mdp.reward, set[i].penalized_mdp.reward);
        EXPECT_EQ(back[i].policy, set[i].policy);
        EXPECT_EQ(back[i].provenance, set[i].provenance);
        EXPECT_EQ(back[i].penalty_weight, set[i].penalty_weight);
    }
    std::stringstream bad("boms-candidates 1 2 1\ngamma 0.9 r_max 1\nomega 1 0\ncandidate 3 lambda 1\n");
    EXPECT_THROW(read_candidate_set(bad), std::invalid_argument);
}
