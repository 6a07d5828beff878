#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cefl/core.hpp"
#include "cefl/problems.hpp"
#include "cefl/rng.hpp"

namespace cefl {

/// Iterates whose norm exceeds this abort the run.
inline constexpr double kDivergenceNorm = 1e12;

/// Who is honest and who is Byzantine among N agents.
///
/// `f` is the bound the filter is told about; `byz_ids` holds the agents that
/// actually misbehave (exactly f unless a smaller count is requested). Byzantine
/// agents occupy the lowest indices, which is the adversarial placement under the
/// ascending-index tie-break used by every filter.
class AgentRoster {
public:
    AgentRoster() = default;

    static AgentRoster make(std::size_t n_total, std::size_t f, std::optional<std::size_t> n_byz = {}) {
        const std::size_t b = n_byz.value_or(f);
        if (n_total < 1) throw ConfigError("N must be at least 1");
        if (2 * f >= n_total) throw ConfigError("f must satisfy f < N/2");
        if (b > f) throw ConfigError("n_byz must not exceed f");
        AgentRoster r;
        r.n_total_ = n_total;
        r.f_ = f;
        r.ordinal_.assign(n_total, std::nullopt);
        for (AgentIndex i = 0; i < n_total; ++i) {
            if (i < b) {
                r.byz_ids_.push_back(i);
            } else {
                r.ordinal_[i] = r.honest_ids_.size();
                r.honest_ids_.push_back(i);
            }
        }
        return r;
    }

    std::size_t n_total() const noexcept { return n_total_; }
    std::size_t f() const noexcept { return f_; }
    std::size_t n_byz() const noexcept { return byz_ids_.size(); }
    std::size_t n_honest() const noexcept { return honest_ids_.size(); }
    const std::vector<AgentIndex>& byz_ids() const noexcept { return byz_ids_; }
    const std::vector<AgentIndex>& honest_ids() const noexcept { return honest_ids_; }

    bool is_byzantine(AgentIndex i) const { return !ordinal_.at(i).has_value(); }

    /// Position of an honest agent inside the ProblemInstance.
    std::size_t honest_ordinal(AgentIndex i) const {
        const auto& o = ordinal_.at(i);
        if (!o) throw ContractViolation("agent " + std::to_string(i) + " is Byzantine");
        return *o;
    }

    friend bool operator==(const AgentRoster&, const AgentRoster&) = default;

private:
    std::size_t n_total_ = 0;
    std::size_t f_ = 0;
    std::vector<AgentIndex> byz_ids_;
    std::vector<AgentIndex> honest_ids_;
    std::vector<std::optional<std::size_t>> ordinal_;
};

struct LocalTrace {
    AgentIndex agent = 0;
    std::vector<ParamVector> iterates;  // x_{k,0..T}

    const ParamVector& submitted() const { return iterates.back(); }
};

enum class GradientMode { Deterministic, Stochastic };
enum class Sampling { Fresh, Pool };

/// How G^i is evaluated inside a local step.
struct OracleMode {
    GradientMode mode = GradientMode::Deterministic;
    Sampling sampling = Sampling::Fresh;
    std::size_t batch = 1;
    const SamplePool* pool = nullptr;  // required for Sampling::Pool
};

inline ParamVector evaluate_gradient(const ProblemInstance& inst, std::size_t ordinal, const ParamVector& x,
                                     const OracleMode& oracle, const RngKey& key) {
    if (oracle.mode == GradientMode::Deterministic) return grad_deterministic(inst, ordinal, x);
    if (oracle.sampling == Sampling::Pool) {
        if (oracle.pool == nullptr) throw ContractViolation("pool sampling without a sample pool");
        return grad_from_pool(inst, ordinal, x, *oracle.pool, key, oracle.batch);
    }
    return grad_stochastic(inst, ordinal, x, key, oracle.batch);
}

inline void guard_finite(const ParamVector& v, std::size_t round, const std::string& who) {
    if (!v.all_finite() || v.norm() > kDivergenceNorm)
        throw DivergenceError(round, who + " iterate diverged (norm above 1e12 or non-finite)");
}

/// T local (stochastic) gradient steps from the broadcast estimate.
/// `key` addresses agent and round; the local step index is filled in per step.
inline LocalTrace honest_round(const ProblemInstance& inst, std::size_t ordinal, const ParamVector& xbar,
                               double alpha, std::size_t T, const OracleMode& oracle, const RngKey& key) {
    if (!(alpha > 0.0)) throw ConfigError("step size must be positive");
    if (T < 1) throw ConfigError("T must be at least 1");
    LocalTrace trace;
    trace.agent = static_cast<AgentIndex>(key.agent);
    trace.iterates.reserve(T + 1);
    trace.iterates.push_back(xbar);
    for (std::size_t t = 0; t < T; ++t) {
        ParamVector next = trace.iterates.back();
        next.axpy(-alpha, evaluate_gradient(inst, ordinal, next, oracle, key.with_step(t)));
        guard_finite(next, key.round, "agent " + std::to_string(key.agent));
        trace.iterates.push_back(std::move(next));
    }
    return trace;
}

enum class AttackKind { ShiftedData, FixedPoint, SignFlip, LargeNorm, MimicHonest };

inline const char* to_string(AttackKind k) {
    switch (k) {
        case AttackKind::ShiftedData: return "shifted-data";
        case AttackKind::FixedPoint: return "fixed-point";
        case AttackKind::SignFlip: return "sign-flip";
        case AttackKind::LargeNorm: return "large-norm";
        case AttackKind::MimicHonest: return "mimic-honest";
    }
    return "?";
}

inline AttackKind parse_attack_kind(const std::string& s) {
    for (auto k : {AttackKind::ShiftedData, AttackKind::FixedPoint, AttackKind::SignFlip,
                   AttackKind::LargeNorm, AttackKind::MimicHonest})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown attack kind '" + s + "'");
}

struct AttackSpec {
    AttackKind kind = AttackKind::ShiftedData;
    double shift = 2.0;       // shifted-data: data centered at shift * x*
    double flip_scale = 1.0;  // sign-flip: xbar - flip_scale * (honest mean - xbar)
    double magnitude = 100.0; // large-norm: xbar + magnitude * u
    std::optional<ParamVector> target;  // fixed-point

    void validate(std::size_t dim) const {
        if (!std::isfinite(shift) || !std::isfinite(flip_scale) || !std::isfinite(magnitude))
            throw ConfigError("attack parameters must be finite");
        if (kind == AttackKind::FixedPoint) {
            if (!target) throw ConfigError("fixed-point attack requires 'target'");
            if (target->dim() != dim) throw ConfigError("attack target dimension differs from dim");
            if (!target->all_finite()) throw ConfigError("attack target must be finite");
        }
    }

    friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

/// Per-run state a Byzantine agent may consult: the shifted instance and its data pools.
struct AttackContext {
    AttackSpec spec;
    std::optional<ProblemInstance> shifted;
    std::vector<SamplePool> pools;  // indexed by Byzantine ordinal, Pool sampling only
};

/// Pools of Byzantine ordinal b are keyed by `pool_keys[b]`.
inline AttackContext make_attack_context(const AttackSpec& spec, const ProblemInstance& inst,
                                         Sampling sampling, std::size_t pool_size,
                                         std::span<const RngKey> pool_keys) {
    spec.validate(inst.dim());
    AttackContext ctx{spec, std::nullopt, {}};
    if (spec.kind == AttackKind::ShiftedData) {
        ctx.shifted = inst.shifted(spec.shift);
        if (sampling == Sampling::Pool)
            for (std::size_t b = 0; b < pool_keys.size(); ++b)
                ctx.pools.push_back(build_pool(*ctx.shifted, b % inst.n_honest(), pool_keys[b], pool_size));
    }
    return ctx;
}

/// The vector one Byzantine agent submits this round. It sees every honest submission.
inline ParamVector byzantine_round(const AttackContext& ctx, std::size_t byz_ordinal, const ParamVector& xbar,
                                   std::span<const ParamVector> honest_submissions, double alpha,
                                   std::size_t T, OracleMode oracle, const RngKey& key) {
    const AttackSpec& spec = ctx.spec;
    switch (spec.kind) {
        case AttackKind::ShiftedData: {
            if (!ctx.shifted) throw ContractViolation("shifted-data attack without a shifted instance");
            if (oracle.mode == GradientMode::Stochastic && oracle.sampling == Sampling::Pool)
                oracle.pool = &ctx.pools.at(byz_ordinal);
            const std::size_t role = byz_ordinal % ctx.shifted->n_honest();
            return honest_round(*ctx.shifted, role, xbar, alpha, T, oracle, key).submitted();
        }
        case AttackKind::FixedPoint:
            return *spec.target;
        case AttackKind::SignFlip: {
            ParamVector delta = mean_of(honest_submissions) - xbar;
            ParamVector out = xbar;
            out.axpy(-spec.flip_scale, delta);
            return out;
        }
        case AttackKind::LargeNorm: {
            ParamVector out = xbar;
            const double step = spec.magnitude / std::sqrt(static_cast<double>(xbar.dim()));
            for (std::size_t j = 0; j < out.dim(); ++j) out[j] += step;
            return out;
        }
        case AttackKind::MimicHonest: {
            if (honest_submissions.empty()) throw ContractViolation("mimic-honest needs honest submissions");
            std::size_t best = 0;
            double best_d = sq_dist(xbar, honest_submissions[0]);
            for (std::size_t i = 1; i < honest_submissions.size(); ++i) {
                const double d = sq_dist(xbar, honest_submissions[i]);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            return honest_submissions[best];
        }
    }
    throw ContractViolation("unhandled attack kind");
}

}  // namespace cefl
