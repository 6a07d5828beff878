#pragma once

#include <memory>
#include <sstream>

#include "cefl/coordinator.hpp"
#include "cefl/csv.hpp"

namespace cefl::testing {

inline ParamVector ones(std::size_t d) { return ParamVector(std::vector<double>(d, 1.0)); }

/// Mean estimation with data centered at the all-ones vector.
inline RunConfig mean_estimation_config(std::size_t n, std::size_t f, std::size_t d, double noise_std,
                                        double alpha, std::size_t T, std::size_t rounds) {
    RunConfig cfg;
    cfg.roster = AgentRoster::make(n, f);
    cfg.inst = std::make_shared<const ProblemInstance>(make_mean_estimation(d, n - f, noise_std, ones(d)));
    cfg.step = StepSchedule::constant(alpha);
    cfg.T = T;
    cfg.rounds = rounds;
    cfg.mode = noise_std > 0.0 ? GradientMode::Stochastic : GradientMode::Deterministic;
    return cfg;
}

inline std::string summary_text(const std::vector<RoundSummary>& s) {
    std::ostringstream os;
    write_summary_csv(os, s);
    return os.str();
}

}  // namespace cefl::testing
