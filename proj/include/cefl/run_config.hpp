#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cefl/agents.hpp"
#include "cefl/aggregation.hpp"
#include "cefl/problems.hpp"

namespace cefl {

/// alpha_k = alpha (constant) or c / (k + k0) (harmonic).
struct StepSchedule {
    enum class Kind { Constant, Harmonic };
    Kind kind = Kind::Constant;
    double alpha = 0.1;
    double c = 1.0;
    double k0 = 1.0;

    static StepSchedule constant(double a) { return {Kind::Constant, a, 1.0, 1.0}; }
    static StepSchedule harmonic(double c, double k0) { return {Kind::Harmonic, 0.0, c, k0}; }

    bool is_constant() const noexcept { return kind == Kind::Constant; }

    friend bool operator==(const StepSchedule&, const StepSchedule&) = default;
};

inline double step_size_schedule(const StepSchedule& s, std::size_t k) {
    const double a = s.kind == StepSchedule::Kind::Constant ? s.alpha
                                                            : s.c / (static_cast<double>(k) + s.k0);
    if (!(a > 0.0) || !std::isfinite(a))
        throw ConfigError("step size schedule yields a nonpositive step at round " + std::to_string(k));
    return a;
}

/// Initial global estimate.
struct InitSpec {
    enum class Kind { Zero, Vector, Gaussian };
    Kind kind = Kind::Zero;
    std::optional<ParamVector> values;
    double stddev = 1.0;

    friend bool operator==(const InitSpec&, const InitSpec&) = default;
};

/// What a RoundRecord retains. Summary drops submissions and the verdict's agent sets.
enum class RecordLevel { Full, Summary };

struct RunConfig {
    AgentRoster roster;
    std::shared_ptr<const ProblemInstance> inst;
    AttackSpec attack;
    RuleSpec rule;
    StepSchedule step = StepSchedule::constant(0.1);
    std::size_t T = 1;
    std::size_t rounds = 120;
    GradientMode mode = GradientMode::Deterministic;
    Sampling sampling = Sampling::Fresh;
    std::size_t batch = 1;
    std::size_t samples_per_agent = 100;
    InitSpec init;
    RecordLevel record = RecordLevel::Full;

    void validate() const {
        if (!inst) throw ConfigError("run config has no problem instance");
        if (inst->n_honest() != roster.n_honest())
            throw ConfigError("instance has " + std::to_string(inst->n_honest()) + " honest agents, roster has " +
                              std::to_string(roster.n_honest()));
        if (T < 1) throw ConfigError("T must be at least 1");
        if (rounds < 1) throw ConfigError("rounds must be at least 1");
        if (batch < 1) throw ConfigError("batch must be at least 1");
        if (sampling == Sampling::Pool && samples_per_agent < 1)
            throw ConfigError("samples_per_agent must be at least 1");
        if (step.kind == StepSchedule::Kind::Constant) {
            if (!(step.alpha > 0.0) || !std::isfinite(step.alpha)) throw ConfigError("alpha must be positive");
        } else if (!(step.c > 0.0) || !(step.k0 > 0.0)) {
            throw ConfigError("harmonic schedule needs c > 0 and k0 > 0");
        }
        if (init.kind == InitSpec::Kind::Vector &&
            (!init.values || init.values->dim() != inst->dim() || !init.values->all_finite()))
            throw ConfigError("init vector must be finite with the instance dimension");
        if (init.kind == InitSpec::Kind::Gaussian && !(init.stddev >= 0.0))
            throw ConfigError("init stddev must be nonnegative");
        attack.validate(inst->dim());
        check_rule_preconditions(rule, roster.n_total(), roster.f());
    }
};

}  // namespace cefl
