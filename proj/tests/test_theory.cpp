#include <gtest/gtest.h>

#include "cefl/theory.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace cefl {
namespace {

using testing::mean_estimation_config;

TEST(Condition, FaultFraction) {
    EXPECT_TRUE(check_condition(12, 50, 1.0, 1.0));
    EXPECT_FALSE(check_condition(13, 50, 1.0, 1.0));
    EXPECT_TRUE(check_condition(0, 1, 0.1, 1.0));
    EXPECT_FALSE(check_condition(1, 10, 0.1, 1.0));
    EXPECT_THROW(check_condition(3, 3, 1.0, 1.0), ConfigError);
    EXPECT_THROW(check_condition(1, 3, 2.0, 1.0), ConfigError);
}

TEST(Ceiling, AllSettings) {
    EXPECT_DOUBLE_EQ(alpha_ceiling(Setting::Deterministic, 1, 1.0, 1.0), 0.25);
    EXPECT_DOUBLE_EQ(alpha_ceiling(Setting::Deterministic, 2, 1.0, 1.0), 1.0 / 32.0);
    EXPECT_DOUBLE_EQ(alpha_ceiling(Setting::Stochastic, 1, 1.0, 1.0), 1.0 / 12.0);
    EXPECT_DOUBLE_EQ(alpha_ceiling(Setting::Stochastic, 2, 1.0, 1.0), 1.0 / 288.0);
    EXPECT_DOUBLE_EQ(alpha_ceiling(Setting::Deterministic, 1, 0.5, 2.0), 0.5 / 16.0);
}

TEST(Bound, StochasticSingleStepBall) {
    const auto b = make_bound(Setting::Stochastic, 1, 1.0, 1.0, 10.0, 12, 50, 38, 0.01);
    EXPECT_TRUE(b.applicable());
    EXPECT_NEAR(b.ball, 1.4 + 120.0 / 19.0, 1e-12);
    EXPECT_NEAR(b.ball, 7.71578, 1e-5);
    EXPECT_DOUBLE_EQ(b.rate, 1.0 - 0.01 / 6.0);
    EXPECT_DOUBLE_EQ(bound_at(b, 0, 3.0), 3.0 + b.ball);
}

TEST(Bound, StochasticMultiStepBall) {
    const auto b = make_bound(Setting::Stochastic, 2, 1.0, 1.0, 10.0, 12, 50, 38, 1.0 / 288.0);
    EXPECT_TRUE(b.applicable());
    EXPECT_NEAR(162.0 * 10.0 * 2.0 / 288.0, 11.25, 1e-12);
    EXPECT_NEAR(b.ball, 11.25 + 54.0 * 10.0 * 12.0 / 38.0, 1e-10);
    EXPECT_NEAR(b.ball - 11.25, 170.526, 1e-3);
    EXPECT_DOUBLE_EQ(b.rate, 1.0 - 2.0 / (288.0 * 18.0));
}

TEST(Bound, DeterministicMultiStepRate) {
    const auto b = make_bound(Setting::Deterministic, 2, 1.0, 1.0, 0.0, 12, 50, 38, 1.0 / 32.0);
    EXPECT_NEAR(b.rate, 0.989583, 1e-6);
    EXPECT_EQ(b.ball, 0.0);
    EXPECT_DOUBLE_EQ(bound_at(b, 0, 5.0), 5.0);
    EXPECT_NEAR(bound_at(b, 10, 5.0), std::pow(b.rate, 10) * 5.0, 1e-15);
}

TEST(Bound, RefusesOutsideHypotheses) {
    const auto over = make_bound(Setting::Deterministic, 1, 1.0, 1.0, 0.0, 12, 50, 38, 0.26);
    EXPECT_FALSE(over.alpha_ok());
    EXPECT_THROW(bound_at(over, 1, 1.0), BoundRefused);
    const auto crowded = make_bound(Setting::Deterministic, 1, 1.0, 1.0, 0.0, 13, 50, 37, 0.1);
    EXPECT_FALSE(crowded.condition_ok);
    EXPECT_THROW(bound_at(crowded, 1, 1.0), BoundRefused);
}

// Properties over a random family of hypotheses.
TEST(Bound, MonotoneAndConsistent) {
    testing::Gen g(41);
    for (int rep = 0; rep < 500; ++rep) {
        const double lip = g.uniform(0.1, 5.0);
        const double mu = lip * g.uniform(0.05, 1.0);
        const std::size_t T = 1 + g.index(5);
        const auto s = g.index(2) == 0 ? Setting::Deterministic : Setting::Stochastic;
        const double amax = alpha_ceiling(s, T, mu, lip);
        EXPECT_GT(amax, 0.0);
        EXPECT_LE(amax, alpha_ceiling(s, 1, mu, lip));
        const double alpha = amax * g.uniform(0.01, 1.0);
        const std::size_t n = 3 + g.index(60);
        std::size_t f = 0;
        while (f + 1 < n && check_condition(f + 1, n, mu, lip)) ++f;
        const double sigma = g.uniform(0.0, 4.0);
        const auto b = make_bound(s, T, mu, lip, sigma, f, n, n - f, alpha);
        ASSERT_TRUE(b.applicable());
        EXPECT_GT(b.rate, 0.0);
        EXPECT_LT(b.rate, 1.0);
        const double e0 = g.uniform(0.0, 100.0);
        EXPECT_LE(bound_at(b, 11, e0), bound_at(b, 10, e0));
        EXPECT_GE(bound_at(b, 1000000, e0), b.ball);
        const auto quiet = make_bound(s, T, mu, lip, 0.0, f, n, n - f, alpha);
        EXPECT_EQ(quiet.ball, 0.0);
        EXPECT_FALSE(make_bound(s, T, mu, lip, sigma, f, n, n - f, amax * 1.01).alpha_ok());
    }
}

TEST(BoundFor, AppliesOnlyToCoveredConfigs) {
    auto cfg = mean_estimation_config(50, 12, 10, 1.0, 0.01, 1, 10);
    cfg.batch = 4;
    const auto b = bound_for(cfg);
    ASSERT_TRUE(b);
    EXPECT_NEAR(b->ball, (1.4 + 120.0 / 19.0) / 4.0, 1e-12);

    std::string why;
    cfg.rule = RuleSpec{RuleKind::Krum, {}};
    EXPECT_FALSE(bound_for(cfg, &why));
    EXPECT_FALSE(why.empty());

    auto free = mean_estimation_config(5, 0, 2, 0.0, 0.25, 1, 10);
    free.rule = RuleSpec{RuleKind::Mean, {}};
    EXPECT_TRUE(bound_for(free));
    free.step = StepSchedule::harmonic(1.0, 4.0);
    EXPECT_FALSE(bound_for(free));

    EXPECT_FALSE(bound_for(mean_estimation_config(50, 20, 10, 0.0, 0.1, 1, 10), &why));
    EXPECT_NE(why.find("condition"), std::string::npos);
}

TEST(Verify, CeUnderShiftedDataMeetsDeterministicBound) {
    auto cfg = mean_estimation_config(50, 12, 10, 0.0, 0.25, 1, 120);
    const auto traj = run(cfg, SimulationId{1, 0, {}});
    const auto b = *bound_for(cfg);
    const auto rep = verify_trajectory(traj, b, rounding_floor(*cfg.inst, cfg.roster.n_total()));
    EXPECT_TRUE(rep.pass) << rep.text;
    EXPECT_EQ(rep.rounds_checked, 120u);
    for (const auto& rec : traj.records) EXPECT_TRUE(check_round_invariants(rec, cfg.roster).empty());
}

TEST(Verify, ReportsFirstViolation) {
    Trajectory t;
    t.initial_sq_error = 1.0;
    const double errs[] = {0.5, 0.25, 0.3, 0.1};
    for (std::size_t k = 0; k < 4; ++k) {
        RoundRecord r;
        r.round = k;
        r.sq_error = errs[k];
        t.records.push_back(r);
    }
    const auto b = make_bound(Setting::Deterministic, 1, 1.0, 1.0, 0.0, 0, 5, 5, 0.25);
    const auto rep = verify_trajectory(t, b);
    EXPECT_FALSE(rep.pass);
    ASSERT_TRUE(rep.first_violation);
    EXPECT_EQ(rep.first_violation->round, 2u);  // 0.3 after 0.25 does not contract
    EXPECT_EQ(rep.first_violation->what, "per-step contraction");
}

TEST(Verify, BatchSoftAllowance) {
    const auto b = make_bound(Setting::Stochastic, 1, 1.0, 1.0, 1.0, 0, 5, 5, 0.05);
    const double e0 = 1.0;
    const double limit = bound_at(b, 1, e0);
    std::vector<RoundSummary> s{{0, limit * 1.001, 100.0, 100}};  // SE = 1
    auto rep = verify_batch(s, e0, b);
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.soft_exceedances, 1u);
    s[0].mean_sq_error = limit + 2.5;
    rep = verify_batch(s, e0, b);
    EXPECT_FALSE(rep.pass);
    EXPECT_EQ(rep.first_violation->round, 0u);
}

TEST(Invariants, DetectTamperedRecord) {
    auto cfg = mean_estimation_config(10, 3, 2, 0.0, 0.25, 1, 3);
    auto traj = run(cfg, SimulationId{1, 0, {}});
    auto rec = traj.records[1];
    ASSERT_TRUE(check_round_invariants(rec, cfg.roster).empty());

    auto tampered = rec;
    tampered.verdict.output[0] += 1e-3;
    EXPECT_FALSE(check_round_invariants(tampered, cfg.roster).empty());

    tampered = rec;
    tampered.kept_byz_count = *rec.kept_byz_count + 1;
    EXPECT_FALSE(check_round_invariants(tampered, cfg.roster).empty());

    tampered = rec;
    tampered.verdict.kept.pop_back();
    EXPECT_FALSE(check_round_invariants(tampered, cfg.roster).empty());

    RoundRecord slim;
    EXPECT_FALSE(check_round_invariants(slim, cfg.roster).empty());
}

// Long deterministic runs settle at the summation floor; the floor absorbs it.
TEST(Verify, LongRunSettlesWithinRoundingFloor) {
    auto cfg = mean_estimation_config(50, 12, 10, 0.0, 0.25, 1, 2000);
    cfg.attack.kind = AttackKind::SignFlip;
    const auto traj = run(cfg, SimulationId{1, 0, {}});
    const double floor = rounding_floor(*cfg.inst, 50);
    EXPECT_LT(traj.records.back().sq_error, floor);
    EXPECT_GT(traj.records.back().sq_error, 0.0);
    EXPECT_TRUE(verify_trajectory(traj, *bound_for(cfg), floor).pass);
    EXPECT_FALSE(verify_trajectory(traj, *bound_for(cfg), 0.0).pass);
}

}  // namespace
}  // namespace cefl
