#pragma once

// Closed-form convergence guarantees for local (S)GD with the CE filter, and checks
// of simulated trajectories against them.
//
//   condition (all cases)     f / (N - f) <= mu / (3 L)
//   deterministic, T = 1      alpha <= mu / (4 L^2),        rate 1 - mu alpha / 6
//   deterministic, T > 1      alpha <= mu / (16 T L^2),     rate 1 - mu T alpha / 6
//   stochastic,    T = 1      alpha <= mu / (12 L^2),       rate 1 - mu alpha / 6,
//                             ball 14 s2 alpha / mu + 2 s2 f / (mu L |H|)
//   stochastic,    T > 1      alpha <= mu / (144 T L^2),    rate 1 - mu T alpha / 18,
//                             ball 162 s2 T alpha / mu + 54 s2 f / (mu L |H|)
//
// with s2 the per-step gradient noise bound (sigma^2 / batch).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cefl/agents.hpp"
#include "cefl/coordinator.hpp"
#include "cefl/errors.hpp"

namespace cefl {

enum class Setting { Deterministic, Stochastic };

inline const char* to_string(Setting s) { return s == Setting::Deterministic ? "deterministic" : "stochastic"; }

/// Raised when a bound is requested outside the hypotheses it was proven under.
class BoundRefused : public std::domain_error {
public:
    explicit BoundRefused(const std::string& what) : std::domain_error(what) {}
};

inline constexpr double kVerifyRelTol = 1e-9;

inline bool check_condition(std::size_t f, std::size_t n, double mu, double lip) {
    if (f >= n) throw ConfigError("check_condition: need n > f");
    if (!(mu > 0.0) || !(mu <= lip)) throw ConfigError("check_condition: need 0 < mu <= lip");
    // f / (n - f) <= mu / (3 lip), cross-multiplied
    return 3.0 * lip * static_cast<double>(f) <= mu * static_cast<double>(n - f);
}

inline double alpha_ceiling(Setting setting, std::size_t T, double mu, double lip) {
    if (T < 1) throw ConfigError("alpha_ceiling: T must be at least 1");
    const double l2 = lip * lip;
    const double t = static_cast<double>(T);
    if (setting == Setting::Deterministic) return T == 1 ? mu / (4.0 * l2) : mu / (16.0 * t * l2);
    return T == 1 ? mu / (12.0 * l2) : mu / (144.0 * t * l2);
}

struct TheoryBound {
    Setting setting = Setting::Deterministic;
    std::size_t T = 1;
    bool condition_ok = false;
    double alpha = 0.0;
    double alpha_max = 0.0;
    double rate = 1.0;
    double ball = 0.0;

    bool alpha_ok() const noexcept { return alpha > 0.0 && alpha <= alpha_max; }
    bool applicable() const noexcept { return condition_ok && alpha_ok(); }
};

/// `sigma_sq` is the per-step noise bound after mini-batching; ignored when deterministic.
inline TheoryBound make_bound(Setting setting, std::size_t T, double mu, double lip, double sigma_sq,
                              std::size_t f, std::size_t n_total, std::size_t n_honest, double alpha) {
    TheoryBound b;
    b.setting = setting;
    b.T = T;
    b.alpha = alpha;
    b.condition_ok = check_condition(f, n_total, mu, lip);
    b.alpha_max = alpha_ceiling(setting, T, mu, lip);
    const double t = static_cast<double>(T);
    const double fh = static_cast<double>(f) / static_cast<double>(n_honest);
    if (setting == Setting::Deterministic) {
        b.rate = 1.0 - mu * t * alpha / 6.0;
        b.ball = 0.0;
    } else if (T == 1) {
        b.rate = 1.0 - mu * alpha / 6.0;
        b.ball = 14.0 * sigma_sq * alpha / mu + 2.0 * sigma_sq * fh / (mu * lip);
    } else {
        b.rate = 1.0 - mu * t * alpha / 18.0;
        b.ball = 162.0 * sigma_sq * t * alpha / mu + 54.0 * sigma_sq * fh / (mu * lip);
    }
    return b;
}

/// rate^k * e0 + ball; refuses outside the bound's hypotheses.
inline double bound_at(const TheoryBound& b, std::size_t k, double e0) {
    if (!b.condition_ok) throw BoundRefused("fault-fraction condition f/(N-f) <= mu/(3L) does not hold");
    if (!b.alpha_ok()) throw BoundRefused("step size exceeds the ceiling for this setting");
    return std::pow(b.rate, static_cast<double>(k)) * e0 + b.ball;
}

/// Bound for a run configuration, or nullopt with the reason it does not apply.
inline std::optional<TheoryBound> bound_for(const RunConfig& cfg, std::string* why = nullptr) {
    auto refuse = [&](const std::string& r) -> std::optional<TheoryBound> {
        if (why) *why = r;
        return std::nullopt;
    };
    if (!cfg.step.is_constant()) return refuse("step size schedule is not constant");
    const bool no_fault_mean = cfg.rule.kind == RuleKind::Mean && cfg.roster.f() == 0;
    if (cfg.rule.kind != RuleKind::CE && !no_fault_mean) return refuse("bounds cover the ce rule only");
    const auto& inst = *cfg.inst;
    const Setting s = cfg.mode == GradientMode::Deterministic ? Setting::Deterministic : Setting::Stochastic;
    const double s2 = inst.sigma_sq() / static_cast<double>(cfg.batch);
    TheoryBound b = make_bound(s, cfg.T, inst.mu(), inst.lip(), s2, cfg.roster.f(), cfg.roster.n_total(),
                               cfg.roster.n_honest(), cfg.step.alpha);
    if (!b.condition_ok) return refuse("fault-fraction condition f/(N-f) <= mu/(3L) violated");
    if (!b.alpha_ok()) return refuse("alpha above the step-size ceiling");
    return b;
}

/// Absolute slack for squared errors that have reached the floating-point floor
/// around the minimizer; the multiplicative tolerance alone cannot absorb it.
/// Averaging n_agents submissions carries a rounding error of about n_agents * eps
/// per coordinate; the extra 16 covers the local steps.
inline double rounding_floor(const ProblemInstance& inst, std::size_t n_agents) {
    double scale = 1.0;
    for (double v : inst.minimizer()) scale = std::max(scale, std::abs(v));
    const double unit = (static_cast<double>(n_agents) + 16.0) * std::numeric_limits<double>::epsilon() * scale;
    return static_cast<double>(inst.dim()) * unit * unit;
}

struct Violation {
    std::size_t round = 0;  // record index; the iterate checked is xbar_{round+1}
    double observed = 0.0;
    double limit = 0.0;
    std::string what;
};

struct VerificationReport {
    bool pass = true;
    std::size_t rounds_checked = 0;
    std::size_t soft_exceedances = 0;  // stochastic only: above bound, within 2 standard errors
    std::optional<Violation> first_violation;
    std::string text;
};

/// Deterministic check: every xbar_{k+1} under rate^{k+1} e0, and every step contracts by rate.
inline VerificationReport verify_trajectory(const Trajectory& traj, const TheoryBound& b, double floor = 0.0) {
    VerificationReport rep;
    const double e0 = traj.initial_sq_error;
    double prev = e0;
    for (const auto& rec : traj.records) {
        ++rep.rounds_checked;
        const double global = bound_at(b, rec.round + 1, e0) * (1.0 + kVerifyRelTol) + floor;
        const double step = b.rate * prev * (1.0 + kVerifyRelTol) + floor;
        if (!(rec.sq_error <= global) && !rep.first_violation)
            rep.first_violation = Violation{rec.round, rec.sq_error, global, "geometric bound"};
        if (b.setting == Setting::Deterministic && !(rec.sq_error <= step) && !rep.first_violation)
            rep.first_violation = Violation{rec.round, rec.sq_error, step, "per-step contraction"};
        prev = rec.sq_error;
    }
    rep.pass = !rep.first_violation;
    std::ostringstream os;
    os << to_string(b.setting) << " T=" << b.T << " rate=" << b.rate << " rounds=" << rep.rounds_checked;
    if (rep.first_violation)
        os << " FAIL at round " << rep.first_violation->round << " (" << rep.first_violation->what
           << "): " << rep.first_violation->observed << " > " << rep.first_violation->limit;
    else
        os << " pass";
    rep.text = os.str();
    return rep;
}

/// Stochastic check on a batch: the per-round sample mean against the expectation bound.
/// Exceeding by at most two standard errors is reported, not failed.
inline VerificationReport verify_batch(std::span<const RoundSummary> summary, double e0, const TheoryBound& b,
                                       double floor = 0.0) {
    VerificationReport rep;
    for (const auto& s : summary) {
        ++rep.rounds_checked;
        const double limit = bound_at(b, s.round + 1, e0) * (1.0 + kVerifyRelTol) + floor;
        if (s.mean_sq_error <= limit) continue;
        const double se = s.runs > 0 ? std::sqrt(s.var_sq_error / static_cast<double>(s.runs)) : 0.0;
        if (s.mean_sq_error <= limit + 2.0 * se) {
            ++rep.soft_exceedances;
        } else if (!rep.first_violation) {
            rep.first_violation = Violation{s.round, s.mean_sq_error, limit, "expectation bound"};
        }
    }
    rep.pass = !rep.first_violation;
    std::ostringstream os;
    os << to_string(b.setting) << " T=" << b.T << " rate=" << b.rate << " ball=" << b.ball
       << " rounds=" << rep.rounds_checked << " soft=" << rep.soft_exceedances;
    if (rep.first_violation)
        os << " FAIL at round " << rep.first_violation->round << ": " << rep.first_violation->observed
           << " > " << rep.first_violation->limit;
    else
        os << " pass";
    rep.text = os.str();
    return rep;
}

/// Filter facts the convergence proofs rely on, checked on one full CE round record:
/// |kept| = N - f; |B_k| = |H \ H_k| when exactly f agents are Byzantine; every kept
/// Byzantine agent is no farther from xbar than some discarded honest agent; the
/// output is the mean of the kept submissions.
inline std::vector<std::string> check_round_invariants(const RoundRecord& rec, const AgentRoster& roster) {
    std::vector<std::string> bad;
    auto note = [&](const std::string& s) { bad.push_back("round " + std::to_string(rec.round) + ": " + s); };
    const std::size_t n = roster.n_total();
    if (rec.submissions.size() != n || rec.xbar_before.dim() == 0) {
        note("record lacks submissions (needs RecordLevel::Full)");
        return bad;
    }
    const auto& v = rec.verdict;
    if (v.kept.size() != n - roster.f()) note("kept set size differs from N - f");
    if (v.kept.size() + v.discarded.size() != n) note("kept and discarded do not cover all agents");

    std::size_t kept_byz = 0, honest_dropped = 0;
    for (AgentIndex i : v.kept) kept_byz += roster.is_byzantine(i) ? 1 : 0;
    for (AgentIndex j : v.discarded) honest_dropped += roster.is_byzantine(j) ? 0 : 1;
    if (roster.n_byz() == roster.f() && kept_byz != honest_dropped) note("|B_k| != |H \\ H_k|");
    if (rec.kept_byz_count && *rec.kept_byz_count != kept_byz) note("recorded kept_byz_count is wrong");

    double farthest_dropped_honest = -1.0;
    for (AgentIndex j : v.discarded)
        if (!roster.is_byzantine(j))
            farthest_dropped_honest =
                std::max(farthest_dropped_honest, sq_dist(rec.xbar_before, rec.submissions[j]));
    for (AgentIndex i : v.kept) {
        if (!roster.is_byzantine(i)) continue;
        if (sq_dist(rec.xbar_before, rec.submissions[i]) > farthest_dropped_honest)
            note("kept Byzantine agent " + std::to_string(i) + " has no discarded honest agent at least as far");
    }
    if (!v.kept.empty() && !(mean_of(rec.submissions, v.kept) == v.output)) note("output is not the kept mean");
    return bad;
}

}  // namespace cefl
