#include <gtest/gtest.h>

#include "boms/theory.hpp"

using namespace boms;

TEST(SimulationLemma, HoldsOnRandomInstances) {
    for (std::uint64_t k = 0; k < 200; ++k) {
        const auto inst = random_simulation_lemma_instance(derive_seed(1, k));
        const auto r = simulation_lemma_check(inst.m_prime, inst.m_double_prime, inst.policy);
        EXPECT_LT(r.gap, 1e-10) << k << ": lhs " << r.lhs << " rhs " << r.rhs;
    }
}

TEST(SimulationLemma, IdenticalDynamicsGiveZero) {
    Rng rng(2);
    const TabularMdp m = random_mdp(rng, 4, 2, 0.9);
    const auto r = simulation_lemma_check(m, m, random_policy(rng, 4, 2));
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
}

TEST(SimulationLemma, RejectsDifferentRewards) {
    Rng rng(3);
    const TabularMdp m = random_mdp(rng, 3, 2, 0.9);
    TabularMdp other = m;
    other.reward(0, 0) = 0.123;
    EXPECT_THROW(simulation_lemma_check(m, other, Policy::uniform(3, 2)), std::invalid_argument);
}

TEST(Lipschitz, ByHand) {
    StateEmbedding e;
    e.coords.resize(3, 2);
    e.coords << 0, 0, 1, 0, 1, 2;
    const Eigen::Vector3d v(0.0, 3.0, 4.0);
    // pairs: (0,1) 3/1, (0,2) 4/3, (1,2) 1/2 in L1.
    EXPECT_DOUBLE_EQ(lipschitz_constant(v, e, Norm::l1), 3.0);
    e.coords.row(2) = e.coords.row(1);
    EXPECT_THROW(lipschitz_constant(v, e, Norm::l1), std::invalid_argument);
    StateEmbedding single;
    single.coords = Eigen::MatrixXd::Zero(1, 2);
    EXPECT_THROW(lipschitz_constant(Eigen::VectorXd::Zero(1), single, Norm::l1), std::invalid_argument);
}

TEST(Bound, HoldsWhenThePremiseHolds) {
    int verified = 0;
    for (std::uint64_t k = 0; k < 120 && verified < 40; ++k) {
        const auto inst = random_proposition1_instance(derive_seed(4, k));
        const BoundReport r = proposition1_check(inst.true_mdp, inst.m1, inst.m2, inst.behavior, inst.embedding);
        if (!r.premise_ok) continue;
        ++verified;
        EXPECT_GE(r.slack, -1e-8) << k;
        EXPECT_NEAR(r.rhs, r.term_a1_a2 + r.term_a3, 1e-12);
        EXPECT_GE(r.term_a3, 0.0);
        EXPECT_GE(r.epsilon_beta, 0.0);
        EXPECT_GE(r.lipschitz_L, 0.0);
    }
    EXPECT_GE(verified, 30);
}

TEST(Bound, ExactUncertaintyMakesThePenalizedReturnPessimistic) {
    // With u = L_V TV and lambda >= 1 the penalized return never exceeds the true one.
    for (std::uint64_t k = 0; k < 30; ++k) {
        const auto inst = random_proposition1_instance(derive_seed(6, k), 1.0);
        for (const Policy* pi : {&inst.m1.policy, &inst.m2.policy, &inst.behavior})
            EXPECT_LE(total_return(inst.m1.penalized_mdp, *pi), total_return(inst.true_mdp, *pi) + 1e-10) << k;
    }
}

TEST(Bound, SameModelHasNoStateTerm) {
    const auto inst = random_proposition1_instance(derive_seed(7, 0));
    const BoundReport r = proposition1_check(inst.true_mdp, inst.m1, inst.m1, inst.behavior, inst.embedding);
    EXPECT_EQ(r.term_a3, 0.0);
    EXPECT_EQ(r.lhs, 0.0);
}

TEST(Bound, PremiseViolationIsReportedNotHidden) {
    // lambda = 0 removes the pessimism; optimistic models then break the premise.
    int violated = 0;
    for (std::uint64_t k = 0; k < 30; ++k) {
        const auto inst = random_proposition1_instance(derive_seed(8, k), 0.0);
        const BoundReport r = proposition1_check(inst.true_mdp, inst.m1, inst.m2, inst.behavior, inst.embedding);
        violated += !r.premise_ok;
        EXPECT_EQ(r.premise_ok, r.premise_margin >= -1e-10);
    }
    EXPECT_GT(violated, 0);
}

TEST(Bound, EpsilonShrinksWithData) {
    double small = 0.0, large = 0.0;
    for (std::uint64_t k = 0; k < 10; ++k) {
        Rng rng(derive_seed(9, k));
        const TabularMdp m = random_mdp(rng, 4, 2, 0.9);
        const Policy pi = random_policy(rng, 4, 2);
        small += exact_epsilon_beta(m, pi, 100, k);
        large += exact_epsilon_beta(m, pi, 10000, k);
    }
    EXPECT_LT(large, 0.5 * small);
}
