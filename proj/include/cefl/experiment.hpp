#pragma once

// Experiment configuration: a JSON object with a fixed key set.
//
// Required: "problem" ("mean-estimation" | "heterogeneous"), "N", and one of
// "f" / "f_values". Everything else has a default; see the README for the
// full table. Unknown keys are rejected by name.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cefl/coordinator.hpp"
#include "cefl/serialize.hpp"

namespace cefl {

struct ProblemSpec {
    ProblemKind kind = ProblemKind::MeanEstimation;
    std::size_t dim = 10;
    double noise_std = 1.0;
    ParamVector minimizer = ParamVector(10, 1.0);
    double mu = 1.0;   // heterogeneous only
    double lip = 1.0;  // heterogeneous only
    std::uint64_t instance_seed = 0;

    friend bool operator==(const ProblemSpec&, const ProblemSpec&) = default;
};

struct ExperimentSpec {
    std::string label;
    ProblemSpec problem;
    std::size_t N = 50;
    std::vector<std::size_t> f_values;
    std::optional<std::size_t> n_byz;
    std::vector<std::size_t> T_values{1};
    std::vector<RuleKind> rules{RuleKind::CE};
    std::optional<std::size_t> krum_select;
    StepSchedule step = StepSchedule::constant(0.1);
    std::size_t rounds = 120;
    std::size_t runs = 100;
    std::uint64_t seed = 1;
    GradientMode mode = GradientMode::Stochastic;
    Sampling sampling = Sampling::Fresh;
    std::size_t batch = 1;
    std::size_t samples_per_agent = 100;
    AttackSpec attack;
    InitSpec init;
    std::string output_dir = "out";
    bool write_runs = false;

    friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

namespace detail {

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "label", "problem", "dim", "noise_std", "minimizer", "mu", "lip", "instance_seed",
        "N", "f", "f_values", "n_byz", "T", "T_values", "rule", "rules", "krum_select",
        "alpha", "rounds", "runs", "seed", "mode", "sampling", "batch", "samples_per_agent",
        "attack", "init", "output_dir", "write_runs"};
    return keys;
}

template <class T>
T get_as(const Json& obj, const std::string& key) {
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

inline std::size_t get_count(const Json& obj, const std::string& key) {
    const Json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError("config key '" + key + "' must be a nonnegative integer");
    return v.get<std::size_t>();
}

inline double get_real(const Json& obj, const std::string& key) {
    const Json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return v.get<double>();
}

inline std::vector<std::size_t> get_count_list(const Json& obj, const std::string& key) {
    const Json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError("config key '" + key + "' must be an array");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_integer() || e.get<long long>() < 0)
            throw ConfigError("config key '" + key + "' must hold nonnegative integers");
        out.push_back(e.get<std::size_t>());
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' must not be empty");
    return out;
}

/// Scalar key or its list twin ("f" / "f_values"); both at once is an error.
inline std::optional<Json> scalar_or_list(const Json& obj, const std::string& scalar, const std::string& list) {
    if (obj.contains(scalar) && obj.contains(list))
        throw ConfigError("config keys '" + scalar + "' and '" + list + "' are mutually exclusive");
    if (obj.contains(list)) return obj.at(list);
    if (obj.contains(scalar)) return Json::array({obj.at(scalar)});
    return std::nullopt;
}

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
}

inline AttackSpec parse_attack(const Json& j, std::size_t dim) {
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("config key 'attack' needs a 'kind'");
    AttackSpec a;
    a.kind = parse_attack_kind(get_as<std::string>(j, "kind"));
    std::set<std::string> allowed{"kind"};
    switch (a.kind) {
        case AttackKind::ShiftedData: allowed.insert("shift"); break;
        case AttackKind::FixedPoint: allowed.insert("target"); break;
        case AttackKind::SignFlip: allowed.insert("scale"); break;
        case AttackKind::LargeNorm: allowed.insert("magnitude"); break;
        case AttackKind::MimicHonest: break;
    }
    reject_unknown(j, allowed, "attack.");
    if (j.contains("shift")) a.shift = get_real(j, "shift");
    if (j.contains("scale")) a.flip_scale = get_real(j, "scale");
    if (j.contains("magnitude")) a.magnitude = get_real(j, "magnitude");
    if (j.contains("target")) {
        const Json& t = j.at("target");
        if (t.is_number())
            a.target = ParamVector(dim, t.get<double>());
        else
            a.target = ParamVector(get_as<std::vector<double>>(j, "target"));
    }
    try {
        a.validate(dim);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config key 'attack': ") + e.what());
    }
    return a;
}

inline InitSpec parse_init(const Json& j, std::size_t dim) {
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("config key 'init' needs a 'kind'");
    InitSpec i;
    const auto kind = get_as<std::string>(j, "kind");
    if (kind == "zero") {
        reject_unknown(j, {"kind"}, "init.");
    } else if (kind == "vector") {
        reject_unknown(j, {"kind", "values"}, "init.");
        if (!j.contains("values")) throw ConfigError("config key 'init.values' is required for kind=vector");
        i.kind = InitSpec::Kind::Vector;
        const Json& v = j.at("values");
        i.values = v.is_number() ? ParamVector(dim, v.get<double>())
                                 : ParamVector(get_as<std::vector<double>>(j, "values"));
        if (i.values->dim() != dim) throw ConfigError("config key 'init.values' has the wrong dimension");
    } else if (kind == "gaussian") {
        reject_unknown(j, {"kind", "stddev"}, "init.");
        i.kind = InitSpec::Kind::Gaussian;
        if (j.contains("stddev")) i.stddev = get_real(j, "stddev");
        if (!(i.stddev >= 0.0)) throw ConfigError("config key 'init.stddev' must be nonnegative");
    } else {
        throw ConfigError("config key 'init.kind' must be zero, vector or gaussian");
    }
    return i;
}

inline StepSchedule parse_alpha(const Json& j) {
    if (j.is_number()) {
        const double a = j.get<double>();
        if (!(a > 0.0)) throw ConfigError("config key 'alpha' must be positive");
        return StepSchedule::constant(a);
    }
    if (!j.is_object()) throw ConfigError("config key 'alpha' must be a number or a schedule object");
    const auto kind = get_as<std::string>(j, "kind");
    if (kind == "constant") {
        reject_unknown(j, {"kind", "alpha"}, "alpha.");
        return parse_alpha(j.at("alpha"));
    }
    if (kind != "harmonic") throw ConfigError("config key 'alpha.kind' must be constant or harmonic");
    reject_unknown(j, {"kind", "c", "k0"}, "alpha.");
    const double c = get_real(j, "c");
    const double k0 = j.contains("k0") ? get_real(j, "k0") : 1.0;
    if (!(c > 0.0) || !(k0 > 0.0)) throw ConfigError("config key 'alpha' harmonic needs c > 0 and k0 > 0");
    return StepSchedule::harmonic(c, k0);
}

}  // namespace detail

inline ExperimentSpec spec_from_json(const Json& j) {
    using namespace detail;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(j, known_keys(), "");
    ExperimentSpec s;
    if (!j.contains("problem")) throw ConfigError("missing required config key 'problem'");
    const auto problem = get_as<std::string>(j, "problem");
    if (problem == "mean-estimation") {
        s.problem.kind = ProblemKind::MeanEstimation;
        for (const char* k : {"mu", "lip", "instance_seed"})
            if (j.contains(k))
                throw ConfigError(std::string("config key '") + k + "' only applies to problem=heterogeneous");
    } else if (problem == "heterogeneous") {
        s.problem.kind = ProblemKind::Heterogeneous;
        for (const char* k : {"mu", "lip"})
            if (!j.contains(k)) throw ConfigError(std::string("missing required config key '") + k + "'");
        s.problem.mu = get_real(j, "mu");
        s.problem.lip = get_real(j, "lip");
        if (!(s.problem.mu > 0.0) || !(s.problem.mu <= s.problem.lip))
            throw ConfigError("config keys 'mu'/'lip' must satisfy 0 < mu <= lip");
        if (j.contains("instance_seed")) s.problem.instance_seed = get_as<std::uint64_t>(j, "instance_seed");
    } else {
        throw ConfigError("config key 'problem' must be mean-estimation or heterogeneous");
    }
    if (j.contains("dim")) s.problem.dim = get_count(j, "dim");
    if (s.problem.dim < 1) throw ConfigError("config key 'dim' must be at least 1");
    if (j.contains("noise_std")) s.problem.noise_std = get_real(j, "noise_std");
    if (!(s.problem.noise_std >= 0.0)) throw ConfigError("config key 'noise_std' must be nonnegative");
    s.problem.minimizer = ParamVector(s.problem.dim, 1.0);
    if (j.contains("minimizer")) {
        const Json& m = j.at("minimizer");
        s.problem.minimizer = m.is_number() ? ParamVector(s.problem.dim, m.get<double>())
                                            : ParamVector(get_as<std::vector<double>>(j, "minimizer"));
        if (s.problem.minimizer.dim() != s.problem.dim)
            throw ConfigError("config key 'minimizer' has the wrong dimension");
    }

    if (!j.contains("N")) throw ConfigError("missing required config key 'N'");
    s.N = get_count(j, "N");
    if (s.N < 1) throw ConfigError("config key 'N' must be at least 1");
    const auto fj = scalar_or_list(j, "f", "f_values");
    if (!fj) throw ConfigError("missing required config key 'f'");
    s.f_values = get_count_list(Json{{"f_values", *fj}}, "f_values");
    for (std::size_t f : s.f_values) {
        if (f >= s.N) throw ConfigError("config key 'f': f = " + std::to_string(f) + " must be below N");
        if (2 * f >= s.N) throw ConfigError("config key 'f': f = " + std::to_string(f) + " violates f < N/2");
    }
    if (j.contains("n_byz") && !j.at("n_byz").is_null()) {
        s.n_byz = get_count(j, "n_byz");
        for (std::size_t f : s.f_values)
            if (*s.n_byz > f) throw ConfigError("config key 'n_byz' exceeds f = " + std::to_string(f));
    }
    if (const auto tj = scalar_or_list(j, "T", "T_values")) {
        s.T_values = get_count_list(Json{{"T_values", *tj}}, "T_values");
        for (std::size_t t : s.T_values)
            if (t < 1) throw ConfigError("config key 'T' must be at least 1");
    }
    if (const auto rj = scalar_or_list(j, "rule", "rules")) {
        s.rules.clear();
        if (!rj->is_array() || rj->empty()) throw ConfigError("config key 'rules' must be a nonempty array");
        for (const auto& r : *rj) {
            if (!r.is_string()) throw ConfigError("config key 'rules' must hold strings");
            try {
                s.rules.push_back(parse_rule(r.get<std::string>()));
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("config key 'rules': ") + e.what());
            }
        }
    }
    if (j.contains("krum_select") && !j.at("krum_select").is_null()) s.krum_select = get_count(j, "krum_select");
    if (j.contains("alpha")) s.step = parse_alpha(j.at("alpha"));
    if (j.contains("rounds")) s.rounds = get_count(j, "rounds");
    if (s.rounds < 1) throw ConfigError("config key 'rounds' must be at least 1");
    if (j.contains("runs")) s.runs = get_count(j, "runs");
    if (s.runs < 1) throw ConfigError("config key 'runs' must be at least 1");
    if (j.contains("seed")) s.seed = get_as<std::uint64_t>(j, "seed");
    if (j.contains("mode")) {
        const auto m = get_as<std::string>(j, "mode");
        if (m == "deterministic")
            s.mode = GradientMode::Deterministic;
        else if (m == "stochastic")
            s.mode = GradientMode::Stochastic;
        else
            throw ConfigError("config key 'mode' must be deterministic or stochastic");
    }
    if (j.contains("sampling")) {
        const auto m = get_as<std::string>(j, "sampling");
        if (m == "fresh")
            s.sampling = Sampling::Fresh;
        else if (m == "pool")
            s.sampling = Sampling::Pool;
        else
            throw ConfigError("config key 'sampling' must be fresh or pool");
    }
    if (j.contains("batch")) s.batch = get_count(j, "batch");
    if (s.batch < 1) throw ConfigError("config key 'batch' must be at least 1");
    if (j.contains("samples_per_agent")) s.samples_per_agent = get_count(j, "samples_per_agent");
    if (s.samples_per_agent < 1) throw ConfigError("config key 'samples_per_agent' must be at least 1");
    if (j.contains("attack")) s.attack = parse_attack(j.at("attack"), s.problem.dim);
    if (j.contains("init")) s.init = parse_init(j.at("init"), s.problem.dim);
    if (j.contains("output_dir")) s.output_dir = get_as<std::string>(j, "output_dir");
    if (j.contains("write_runs")) s.write_runs = get_as<bool>(j, "write_runs");
    if (j.contains("label")) s.label = get_as<std::string>(j, "label");
    return s;
}

inline ExperimentSpec load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return spec_from_json(j);
}

/// Every field spelled out; spec_from_json(normalized_json(s)) == s.
inline Json normalized_json(const ExperimentSpec& s) {
    Json j;
    j["label"] = s.label;
    j["problem"] = to_string(s.problem.kind);
    j["dim"] = s.problem.dim;
    j["noise_std"] = s.problem.noise_std;
    j["minimizer"] = to_json(s.problem.minimizer);
    if (s.problem.kind == ProblemKind::Heterogeneous) {
        j["mu"] = s.problem.mu;
        j["lip"] = s.problem.lip;
        j["instance_seed"] = s.problem.instance_seed;
    }
    j["N"] = s.N;
    j["f_values"] = s.f_values;
    j["n_byz"] = s.n_byz ? Json(*s.n_byz) : Json(nullptr);
    j["T_values"] = s.T_values;
    Json rules = Json::array();
    for (auto r : s.rules) rules.push_back(to_string(r));
    j["rules"] = std::move(rules);
    j["krum_select"] = s.krum_select ? Json(*s.krum_select) : Json(nullptr);
    j["alpha"] = s.step.is_constant() ? Json(s.step.alpha) : to_json(s.step);
    j["rounds"] = s.rounds;
    j["runs"] = s.runs;
    j["seed"] = s.seed;
    j["mode"] = s.mode == GradientMode::Deterministic ? "deterministic" : "stochastic";
    j["sampling"] = s.sampling == Sampling::Fresh ? "fresh" : "pool";
    j["batch"] = s.batch;
    j["samples_per_agent"] = s.samples_per_agent;
    j["attack"] = to_json(s.attack);
    j["init"] = to_json(s.init);
    j["output_dir"] = s.output_dir;
    j["write_runs"] = s.write_runs;
    return j;
}

/// One (rule, f, T) combination of a sweep.
struct Cell {
    RuleKind rule = RuleKind::CE;
    std::size_t f = 0;
    std::size_t T = 1;
    std::string name;
    std::string skip_reason;  // nonempty when the rule cannot run here
    RunConfig cfg;
    std::string digest;

    bool skipped() const noexcept { return !skip_reason.empty(); }
    std::string summary_file() const { return "summary_" + name + ".csv"; }
};

inline std::shared_ptr<const ProblemInstance> build_instance(const ProblemSpec& p, std::size_t n_honest) {
    if (p.kind == ProblemKind::MeanEstimation)
        return std::make_shared<const ProblemInstance>(
            make_mean_estimation(p.dim, n_honest, p.noise_std, p.minimizer));
    return std::make_shared<const ProblemInstance>(make_heterogeneous_quadratic(
        p.dim, n_honest, p.mu, p.lip, p.minimizer, RngKey{p.instance_seed, 0, 0, 0, 0, StreamTag::Init},
        p.noise_std));
}

/// Cells in rule-major, then f, then T order.
inline std::vector<Cell> make_cells(const ExperimentSpec& s, RecordLevel record = RecordLevel::Summary) {
    std::vector<Cell> cells;
    for (RuleKind rule : s.rules)
        for (std::size_t f : s.f_values)
            for (std::size_t T : s.T_values) {
                Cell c;
                c.rule = rule;
                c.f = f;
                c.T = T;
                c.name = std::string(to_string(rule)) + "_f" + std::to_string(f) + "_T" + std::to_string(T);
                RunConfig& cfg = c.cfg;
                cfg.roster = AgentRoster::make(s.N, f, s.n_byz);
                cfg.inst = build_instance(s.problem, cfg.roster.n_honest());
                cfg.attack = s.attack;
                cfg.rule = RuleSpec{rule, s.krum_select};
                cfg.step = s.step;
                cfg.T = T;
                cfg.rounds = s.rounds;
                cfg.mode = s.mode;
                cfg.sampling = s.sampling;
                cfg.batch = s.batch;
                cfg.samples_per_agent = s.samples_per_agent;
                cfg.init = s.init;
                cfg.record = record;
                try {
                    check_rule_preconditions(cfg.rule, s.N, f);
                } catch (const ConfigError& e) {
                    c.skip_reason = e.what();
                }
                c.digest = hex_digest(fnv1a64(to_json(cfg).dump() + "|seed=" + std::to_string(s.seed) +
                                              "|runs=" + std::to_string(s.runs)));
                cells.push_back(std::move(c));
            }
    return cells;
}

}  // namespace cefl
