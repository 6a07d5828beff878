#pragma once

// The outer loop: broadcast xbar_k, collect local updates, filter, average.
//
// Record k holds the transition k -> k+1; its sq_error is ||xbar_{k+1} - x*||^2.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cefl/agents.hpp"
#include "cefl/aggregation.hpp"
#include "cefl/parallel.hpp"
#include "cefl/rng.hpp"
#include "cefl/run_config.hpp"
#include "cefl/serialize.hpp"

namespace cefl {

struct RoundRecord {
    std::size_t round = 0;
    ParamVector xbar_before;
    std::vector<ParamVector> submissions;  // empty at RecordLevel::Summary
    FilterVerdict verdict;                 // agent sets empty at RecordLevel::Summary
    double sq_error = 0.0;
    /// |B_k|; unset for coordinate-wise rules, which keep no agent set.
    std::optional<std::size_t> kept_byz_count;

    const ParamVector& xbar_after() const noexcept { return verdict.output; }
};

struct Trajectory {
    std::uint64_t config_digest = 0;
    double initial_sq_error = 0.0;
    std::vector<RoundRecord> records;
};

inline ParamVector initial_estimate(const RunConfig& cfg, const SimulationId& sim) {
    const std::size_t d = cfg.inst->dim();
    switch (cfg.init.kind) {
        case InitSpec::Kind::Zero: return ParamVector(d);
        case InitSpec::Kind::Vector: return *cfg.init.values;
        case InitSpec::Kind::Gaussian:
            return draw_gaussian(sim.key(StreamTag::Init).with_agent(cfg.roster.n_total()), d, ParamVector(d),
                                 cfg.init.stddev);
    }
    throw ContractViolation("unhandled init kind");
}

/// One full run of local (S)GD with the configured aggregation rule.
inline Trajectory run(const RunConfig& cfg, const SimulationId& sim) {
    cfg.validate();
    const ProblemInstance& inst = *cfg.inst;
    const AgentRoster& roster = cfg.roster;
    const std::size_t n = roster.n_total();
    const bool pooled = cfg.mode == GradientMode::Stochastic && cfg.sampling == Sampling::Pool;

    std::vector<SamplePool> honest_pools;
    std::vector<RngKey> byz_pool_keys;
    if (pooled) {
        for (AgentIndex id : roster.honest_ids())
            honest_pools.push_back(build_pool(inst, roster.honest_ordinal(id),
                                              sim.key(StreamTag::Init).with_agent(id), cfg.samples_per_agent));
        for (AgentIndex id : roster.byz_ids()) byz_pool_keys.push_back(sim.key(StreamTag::Init).with_agent(id));
    }
    const AttackContext attack =
        make_attack_context(cfg.attack, inst, cfg.sampling, cfg.samples_per_agent, byz_pool_keys);

    Trajectory traj;
    traj.config_digest = config_digest(cfg);
    ParamVector xbar = initial_estimate(cfg, sim);
    traj.initial_sq_error = sq_dist(xbar, inst.minimizer());
    traj.records.reserve(cfg.rounds);

    std::vector<ParamVector> submissions(n);
    std::vector<ParamVector> honest_subs(roster.n_honest());
    for (std::size_t k = 0; k < cfg.rounds; ++k) {
        const double alpha = step_size_schedule(cfg.step, k);

        for (std::size_t h = 0; h < roster.n_honest(); ++h) {
            const AgentIndex id = roster.honest_ids()[h];
            OracleMode oracle{cfg.mode, cfg.sampling, cfg.batch, pooled ? &honest_pools[h] : nullptr};
            const RngKey key = sim.key(StreamTag::SampleDraw).with_agent(id).with_round(k);
            honest_subs[h] = honest_round(inst, h, xbar, alpha, cfg.T, oracle, key).submitted();
            submissions[id] = honest_subs[h];
        }
        for (std::size_t b = 0; b < roster.n_byz(); ++b) {
            const AgentIndex id = roster.byz_ids()[b];
            OracleMode oracle{cfg.mode, cfg.sampling, cfg.batch, nullptr};
            const RngKey key = sim.key(StreamTag::Attack).with_agent(id).with_round(k);
            submissions[id] = byzantine_round(attack, b, xbar, honest_subs, alpha, cfg.T, oracle, key);
        }

        RoundRecord rec;
        rec.round = k;
        rec.verdict = apply_rule(cfg.rule, xbar, submissions, roster.f());
        guard_finite(rec.verdict.output, k, "aggregated");
        rec.sq_error = sq_dist(rec.verdict.output, inst.minimizer());
        if (!rec.verdict.coordinatewise) {
            std::size_t byz = 0;
            for (AgentIndex i : rec.verdict.kept) byz += roster.is_byzantine(i) ? 1 : 0;
            rec.kept_byz_count = byz;
        }
        ParamVector next = rec.verdict.output;
        if (cfg.record == RecordLevel::Full) {
            rec.xbar_before = std::move(xbar);
            rec.submissions = submissions;
        } else {
            rec.verdict.kept.clear();
            rec.verdict.discarded.clear();
        }
        traj.records.push_back(std::move(rec));
        xbar = std::move(next);
    }
    return traj;
}

struct RunOutcome {
    std::size_t run_index = 0;
    std::optional<Trajectory> trajectory;
    std::string error;  // set when the run aborted

    bool ok() const noexcept { return trajectory.has_value(); }
};

struct RoundSummary {
    std::size_t round = 0;
    double mean_sq_error = 0.0;
    double var_sq_error = 0.0;  // unbiased sample variance, 0 for a single run
    std::size_t runs = 0;
};

struct BatchResult {
    std::vector<RunOutcome> outcomes;
    std::vector<RoundSummary> summary;
    double initial_sq_error = 0.0;  // mean over successful runs

    std::size_t failed() const {
        std::size_t c = 0;
        for (const auto& o : outcomes) c += o.ok() ? 0 : 1;
        return c;
    }
};

/// Per-round mean and variance over successful runs, reduced in run-index order.
inline std::vector<RoundSummary> summarize(const std::vector<RunOutcome>& outcomes, std::size_t rounds,
                                           double* initial_mean = nullptr) {
    std::vector<const Trajectory*> ok;
    for (const auto& o : outcomes)
        if (o.ok()) ok.push_back(&*o.trajectory);
    std::vector<RoundSummary> out(rounds);
    const double n = static_cast<double>(ok.size());
    for (std::size_t k = 0; k < rounds; ++k) {
        out[k].round = k;
        out[k].runs = ok.size();
        if (ok.empty()) continue;
        double s = 0.0;
        for (const auto* t : ok) s += t->records[k].sq_error;
        const double mean = s / n;
        double ss = 0.0;
        for (const auto* t : ok) {
            const double dev = t->records[k].sq_error - mean;
            ss += dev * dev;
        }
        out[k].mean_sq_error = mean;
        out[k].var_sq_error = ok.size() > 1 ? ss / (n - 1.0) : 0.0;
    }
    if (initial_mean) {
        double s = 0.0;
        for (const auto* t : ok) s += t->initial_sq_error;
        *initial_mean = ok.empty() ? 0.0 : s / n;
    }
    return out;
}

inline RunOutcome run_guarded(const RunConfig& cfg, const SimulationId& sim) {
    RunOutcome out;
    out.run_index = sim.run_index;
    try {
        out.trajectory = run(cfg, sim);
    } catch (const DivergenceError& e) {
        out.error = e.what();
    }
    return out;
}

/// `runs` independent trajectories with run indices 0..runs-1 under one seed.
inline BatchResult run_batch(const RunConfig& cfg, std::uint64_t seed, std::size_t runs, std::size_t jobs = 1) {
    if (runs < 1) throw ConfigError("runs must be at least 1");
    cfg.validate();
    BatchResult result;
    result.outcomes.resize(runs);
    parallel_for(runs, jobs, [&](std::size_t r) {
        result.outcomes[r] = run_guarded(cfg, SimulationId{seed, r, {}});
    });
    result.summary = summarize(result.outcomes, cfg.rounds, &result.initial_sq_error);
    return result;
}

}  // namespace cefl
