#pragma once

// Canonical JSON for configuration values. The dump of these objects is what
// config digests are computed over, so key names and number formatting are stable.

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

#include "cefl/run_config.hpp"

namespace cefl {

using Json = nlohmann::ordered_json;

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex_digest(std::uint64_t h) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xF];
    return s;
}

inline Json to_json(const ParamVector& v) { return Json(v.raw()); }

inline ParamVector param_vector_from_json(const Json& j) {
    auto values = j.get<std::vector<double>>();
    return ParamVector(std::move(values));
}

inline Json to_json(const QuadraticForm& q) {
    if (q.is_diagonal()) return Json{{"diag", q.diag()}};
    return Json{{"full", q.full_entries()}};
}

inline Json to_json(const ProblemInstance& inst) {
    Json agents = Json::array();
    for (const auto& a : inst.agents())
        agents.push_back(Json{{"curvature", to_json(a.curvature)}, {"center", to_json(a.center)}});
    return Json{{"kind", to_string(inst.kind())}, {"dim", inst.dim()},   {"mu", inst.mu()},
                {"lip", inst.lip()},              {"noise_std", inst.noise_std()},
                {"minimizer", to_json(inst.minimizer())}, {"agents", std::move(agents)}};
}

inline Json to_json(const AttackSpec& a) {
    Json j{{"kind", to_string(a.kind)}};
    switch (a.kind) {
        case AttackKind::ShiftedData: j["shift"] = a.shift; break;
        case AttackKind::FixedPoint: j["target"] = a.target ? to_json(*a.target) : Json(nullptr); break;
        case AttackKind::SignFlip: j["scale"] = a.flip_scale; break;
        case AttackKind::LargeNorm: j["magnitude"] = a.magnitude; break;
        case AttackKind::MimicHonest: break;
    }
    return j;
}

inline Json to_json(const StepSchedule& s) {
    if (s.is_constant()) return Json{{"kind", "constant"}, {"alpha", s.alpha}};
    return Json{{"kind", "harmonic"}, {"c", s.c}, {"k0", s.k0}};
}

inline Json to_json(const InitSpec& i) {
    switch (i.kind) {
        case InitSpec::Kind::Zero: return Json{{"kind", "zero"}};
        case InitSpec::Kind::Vector: return Json{{"kind", "vector"}, {"values", to_json(*i.values)}};
        case InitSpec::Kind::Gaussian: return Json{{"kind", "gaussian"}, {"stddev", i.stddev}};
    }
    return Json(nullptr);
}

inline Json to_json(const RunConfig& c) {
    Json rule{{"kind", to_string(c.rule.kind)}};
    if (c.rule.kind == RuleKind::Krum)
        rule["select"] = c.rule.krum_select.value_or(c.roster.n_total() - c.roster.f());
    return Json{{"N", c.roster.n_total()},
                {"f", c.roster.f()},
                {"n_byz", c.roster.n_byz()},
                {"instance", c.inst ? to_json(*c.inst) : Json(nullptr)},
                {"attack", to_json(c.attack)},
                {"rule", std::move(rule)},
                {"step", to_json(c.step)},
                {"T", c.T},
                {"rounds", c.rounds},
                {"mode", c.mode == GradientMode::Deterministic ? "deterministic" : "stochastic"},
                {"sampling", c.sampling == Sampling::Fresh ? "fresh" : "pool"},
                {"batch", c.batch},
                {"samples_per_agent", c.samples_per_agent},
                {"init", to_json(c.init)}};
}

inline std::uint64_t config_digest(const RunConfig& c) { return fnv1a64(to_json(c).dump()); }

}  // namespace cefl
