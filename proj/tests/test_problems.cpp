#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "cefl/problems.hpp"
#include "oracles.hpp"

namespace cefl {
namespace {

using testing::Gen;

ParamVector ones(std::size_t d) { return ParamVector(std::vector<double>(d, 1.0)); }

double min_eig_of_average(const ProblemInstance& inst) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inst.average_form());
    return es.eigenvalues().minCoeff();
}

TEST(MeanEstimation, ConstantsAndGradient) {
    const auto inst = make_mean_estimation(10, 38, 1.0, ones(10));
    EXPECT_EQ(inst.mu(), 1.0);
    EXPECT_EQ(inst.lip(), 1.0);
    EXPECT_EQ(inst.n_honest(), 38u);
    EXPECT_DOUBLE_EQ(inst.sigma_sq(), 10.0);
    EXPECT_EQ(grad_deterministic(inst, 0, ones(10)), ParamVector(10));
    const ParamVector x(std::vector<double>(10, 3.0));
    EXPECT_EQ(grad_deterministic(inst, 5, x), ParamVector(std::vector<double>(10, 2.0)));
}

TEST(MeanEstimation, ZeroNoiseStochasticEqualsDeterministic) {
    const auto inst = make_mean_estimation(3, 4, 0.0, ones(3));
    Gen g(11);
    for (int rep = 0; rep < 20; ++rep) {
        const auto x = g.vec(3, 5.0);
        const RngKey key{1, 0, 0, static_cast<std::uint64_t>(rep), 0, StreamTag::SampleDraw};
        EXPECT_EQ(grad_stochastic(inst, 2, x, key, 7), grad_deterministic(inst, 2, x));
    }
}

TEST(QuadraticForm, DiagonalExample) {
    const auto A = QuadraticForm::diagonal({0.5, 2.0});
    EXPECT_EQ(A.apply({2.0, 1.0}), (ParamVector{1.0, 2.0}));
    const auto [lo, hi] = A.eigen_range();
    EXPECT_EQ(lo, 0.5);
    EXPECT_EQ(hi, 2.0);
}

TEST(QuadraticForm, FullMatrix) {
    const auto A = QuadraticForm::full(2, {2.0, 1.0, 1.0, 2.0});
    EXPECT_EQ(A.apply({1.0, -1.0}), (ParamVector{1.0, -1.0}));
    const auto [lo, hi] = A.eigen_range();
    EXPECT_NEAR(lo, 1.0, 1e-12);
    EXPECT_NEAR(hi, 3.0, 1e-12);
    EXPECT_THROW(QuadraticForm::full(2, {1.0, 0.5, 0.0, 1.0}), ConfigError);
    EXPECT_THROW(QuadraticForm::full(2, {1.0, 0.5, 0.5}), ConfigError);
}

TEST(ProblemInstance, RejectsNonPsdForm) {
    std::vector<AgentCost> agents{{QuadraticForm::full(2, {1.0, 2.0, 2.0, 1.0}), ParamVector{0.0, 0.0}}};
    try {
        ProblemInstance(ProblemKind::Custom, agents, ParamVector{0.0, 0.0}, 1.0, 3.0, 0.0);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("invalid instance"), std::string::npos);
    }
}

TEST(ProblemInstance, ByzantineOrdinalIsContractViolation) {
    const auto inst = make_mean_estimation(2, 3, 1.0, ones(2));
    EXPECT_THROW(grad_deterministic(inst, 3, ones(2)), ContractViolation);
}

TEST(Heterogeneous, SmallestAverageEigenvalueIsMu) {
    const auto inst = make_heterogeneous_quadratic(2, 2, 0.5, 1.0, ParamVector{0.0, 0.0},
                                                   RngKey{5, 0, 0, 0, 0, StreamTag::Init});
    EXPECT_NEAR(min_eig_of_average(inst), 0.5, 1e-12);
    for (const auto& a : inst.agents()) EXPECT_LE(a.curvature.eigen_range().second, 1.0 + 1e-12);
}

TEST(Heterogeneous, ManyKeysAndShapes) {
    Gen g(17);
    bool saw_zero_entry = false;
    for (std::uint64_t s = 0; s < 60; ++s) {
        const std::size_t d = 1 + g.index(10);
        const std::size_t n = 1 + g.index(40);
        const double lip = g.uniform(0.5, 4.0);
        const double mu = lip * g.uniform(0.01, 1.0);
        const auto xs = g.vec(d);
        const auto inst = make_heterogeneous_quadratic(d, n, mu, lip, xs, RngKey{s, 0, 0, 0, 0, StreamTag::Init});
        EXPECT_NEAR(min_eig_of_average(inst), mu, 1e-9 * lip) << "seed " << s;
        for (const auto& a : inst.agents()) {
            const auto [lo, hi] = a.curvature.eigen_range();
            EXPECT_GE(lo, 0.0);
            EXPECT_LE(hi, lip * (1 + 1e-12));
            if (lo == 0.0) saw_zero_entry = true;
            EXPECT_EQ(a.center, xs);
        }
        EXPECT_TRUE(check_redundancy(inst, (n - 1) / 2).pass);
    }
    EXPECT_TRUE(saw_zero_entry);
}

TEST(Heterogeneous, EqualBoundsGiveScaledIdentity) {
    const auto inst = make_heterogeneous_quadratic(3, 1, 2.0, 2.0, ones(3), RngKey{1, 0, 0, 0, 0, StreamTag::Init});
    ASSERT_EQ(inst.n_honest(), 1u);
    EXPECT_EQ(inst.agent(0).curvature, QuadraticForm::diagonal({2.0, 2.0, 2.0}));
    const auto unit = make_heterogeneous_quadratic(4, 5, 1.0, 1.0, ones(4), RngKey{1, 0, 0, 0, 0, StreamTag::Init});
    for (const auto& a : unit.agents()) EXPECT_EQ(a.curvature, QuadraticForm::identity(4));
}

TEST(Heterogeneous, InfeasibleBoundsRejected) {
    const RngKey k{1, 0, 0, 0, 0, StreamTag::Init};
    EXPECT_THROW(make_heterogeneous_quadratic(2, 2, 2.0, 1.0, ones(2), k), ConfigError);
    EXPECT_THROW(make_heterogeneous_quadratic(2, 2, 0.0, 1.0, ones(2), k), ConfigError);
}

// Smoothness and strong convexity of the honest average, checked on random pairs.
TEST(Heterogeneous, AverageGradientIsLipschitzAndStronglyMonotone) {
    const auto inst = make_heterogeneous_quadratic(5, 9, 0.3, 2.0, ones(5), RngKey{8, 0, 0, 0, 0, StreamTag::Init});
    auto avg_grad = [&](const ParamVector& x) {
        ParamVector g(5);
        for (std::size_t i = 0; i < inst.n_honest(); ++i) g += grad_deterministic(inst, i, x);
        g *= 1.0 / static_cast<double>(inst.n_honest());
        return g;
    };
    Gen g(23);
    for (int rep = 0; rep < 200; ++rep) {
        const auto x = g.vec(5, 3.0), y = g.vec(5, 3.0);
        const auto dg = avg_grad(x) - avg_grad(y);
        const auto dx = x - y;
        EXPECT_LE(dg.norm(), inst.lip() * dx.norm() * (1 + 1e-12));
        EXPECT_GE(dot(dg, dx), inst.mu() * dx.sq_norm() * (1 - 1e-9));
        for (std::size_t i = 0; i < inst.n_honest(); ++i)
            EXPECT_LE((grad_deterministic(inst, i, x) - grad_deterministic(inst, i, y)).norm(),
                      inst.lip() * dx.norm() * (1 + 1e-12));
    }
}

TEST(StochasticOracle, EmpiricalMeanMatchesTrueGradient) {
    const auto inst = make_mean_estimation(10, 1, 1.0, ones(10));
    const ParamVector x(std::vector<double>(10, 0.5));
    const auto truth = grad_deterministic(inst, 0, x);
    constexpr std::size_t n = 100000;
    ParamVector acc(10);
    for (std::size_t s = 0; s < n; ++s)
        acc += grad_stochastic(inst, 0, x, RngKey{3, 0, 0, s, 0, StreamTag::SampleDraw});
    acc *= 1.0 / n;
    for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(acc[j], truth[j], 0.02) << "coordinate " << j;
}

TEST(StochasticOracle, PerSampleVarianceMatchesSigmaSquared) {
    const auto inst = make_mean_estimation(10, 1, 1.0, ones(10));
    const auto x = ones(10);
    constexpr std::size_t n = 20000;
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s)
        acc += grad_stochastic(inst, 0, x, RngKey{4, 0, 0, s, 0, StreamTag::SampleDraw}).sq_norm();
    EXPECT_NEAR(acc / n, inst.sigma_sq(), 0.03 * inst.sigma_sq());
}

TEST(StochasticOracle, MiniBatchDeviationWithinChiSquareBound) {
    const auto inst = make_mean_estimation(10, 1, 1.0, ones(10));
    const ParamVector x(std::vector<double>(10, 2.0));
    const auto truth = grad_deterministic(inst, 0, x);
    constexpr std::size_t batch = 10000;
    int passed = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        const auto g = grad_stochastic(inst, 0, x, RngKey{9, rep, 0, 0, 0, StreamTag::SampleDraw}, batch);
        if (sq_dist(g, truth) <= 5.0 * inst.sigma_sq() / batch) ++passed;
    }
    EXPECT_GE(passed, 95);
}

TEST(SamplePool, PoolGradientAveragesToPoolMeanGradient) {
    const auto inst = make_mean_estimation(3, 2, 1.0, ones(3));
    const auto pool = build_pool(inst, 1, RngKey{5, 0, 1, 0, 0, StreamTag::Init}, 100);
    ASSERT_EQ(pool.size(), 100u);
    ParamVector pmean(3);
    for (const auto& p : pool.points) pmean += p;
    pmean *= 1.0 / 100.0;
    const ParamVector x{0.0, 0.0, 0.0};
    // x - pool mean for identity curvature
    const auto expected = x - pmean;
    constexpr std::size_t n = 50000;
    ParamVector acc(3);
    for (std::size_t s = 0; s < n; ++s)
        acc += grad_from_pool(inst, 1, x, pool, RngKey{6, 0, 1, s, 0, StreamTag::SampleDraw});
    acc *= 1.0 / n;
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(acc[j], expected[j], 0.02);
    EXPECT_THROW(build_pool(inst, 1, RngKey{}, 0), ConfigError);
}

TEST(Redundancy, HoldsForMeanEstimation) {
    const auto inst = make_mean_estimation(3, 7, 1.0, ones(3));
    for (std::size_t f = 0; f < 7; ++f) {
        EXPECT_TRUE(check_redundancy(inst, f).pass);
        EXPECT_TRUE(check_redundancy(inst, f, RedundancyMode::Exhaustive).pass);
    }
}

TEST(Redundancy, HeterogeneousExhaustive) {
    const auto inst = make_heterogeneous_quadratic(3, 8, 0.4, 1.0, ones(3), RngKey{2, 0, 0, 0, 0, StreamTag::Init});
    const auto rep = check_redundancy(inst, 3, RedundancyMode::Exhaustive);
    EXPECT_TRUE(rep.pass) << rep.detail;
    EXPECT_GT(rep.subsets_checked, 0u);
}

TEST(Redundancy, DifferentMinimizersFail) {
    std::vector<AgentCost> agents{{QuadraticForm::identity(1), ParamVector{0.0}},
                                  {QuadraticForm::identity(1), ParamVector{0.0}},
                                  {QuadraticForm::identity(1), ParamVector{2.0}}};
    const ProblemInstance inst(ProblemKind::Custom, agents, ParamVector{0.0}, 1.0, 1.0, 0.0);
    const auto shared = check_redundancy(inst, 1);
    EXPECT_FALSE(shared.pass);
    EXPECT_EQ(shared.failing_subset, (std::vector<std::size_t>{2}));
    const auto exhaustive = check_redundancy(inst, 1, RedundancyMode::Exhaustive);
    EXPECT_FALSE(exhaustive.pass);
    EXPECT_FALSE(exhaustive.failing_subset.empty());
    EXPECT_THROW(check_redundancy(inst, 3), ConfigError);
}

}  // namespace
}  // namespace cefl
