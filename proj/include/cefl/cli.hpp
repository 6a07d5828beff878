#pragma once

// Command implementations behind the `cefl` tool. Exit codes: 0 success,
// 1 experiment or verification failure, 2 configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cefl/coordinator.hpp"
#include "cefl/csv.hpp"
#include "cefl/experiment.hpp"
#include "cefl/theory.hpp"

namespace cefl {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2 };

namespace fs = std::filesystem;

inline void write_json(const fs::path& path, const Json& j) {
    write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

/// Runs every cell of the sweep and writes summaries, optional per-run CSVs and a manifest.
inline int cmd_run(const ExperimentSpec& spec, std::size_t jobs, std::ostream& log) {
    const fs::path out = spec.output_dir;
    fs::create_directories(out);
    const Json normalized = normalized_json(spec);
    write_json(out / "config.normalized.json", normalized);

    std::vector<Cell> cells = make_cells(spec);
    std::vector<std::pair<std::size_t, std::size_t>> tasks;  // (cell, run)
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cells[c].skipped()) {
            log << "skip " << cells[c].name << ": " << cells[c].skip_reason << '\n';
            continue;
        }
        cells[c].cfg.validate();
        for (std::size_t r = 0; r < spec.runs; ++r) tasks.emplace_back(c, r);
    }
    std::vector<std::vector<RunOutcome>> outcomes(cells.size(), std::vector<RunOutcome>(spec.runs));
    parallel_for(tasks.size(), jobs, [&](std::size_t t) {
        const auto [c, r] = tasks[t];
        outcomes[c][r] = run_guarded(cells[c].cfg, SimulationId{spec.seed, r, cells[c].name});
    });

    bool any_failed = false;
    Json manifest_cells = Json::array();
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const Cell& cell = cells[c];
        Json entry{{"name", cell.name}, {"rule", to_string(cell.rule)}, {"f", cell.f}, {"T", cell.T},
                   {"digest", cell.digest}};
        if (cell.skipped()) {
            entry["status"] = "skipped";
            entry["reason"] = cell.skip_reason;
            manifest_cells.push_back(std::move(entry));
            continue;
        }
        const auto summary = summarize(outcomes[c], spec.rounds);
        write_file(out / cell.summary_file(), [&](std::ostream& os) { write_summary_csv(os, summary); });
        if (spec.write_runs)
            for (const auto& o : outcomes[c])
                if (o.ok())
                    write_file(out / "runs" / cell.name / ("run_" + std::to_string(o.run_index) + ".csv"),
                               [&](std::ostream& os) { write_trajectory_csv(os, *o.trajectory); });
        std::size_t failed = 0;
        Json errors = Json::array();
        for (const auto& o : outcomes[c])
            if (!o.ok()) {
                ++failed;
                errors.push_back(Json{{"run", o.run_index}, {"error", o.error}});
            }
        entry["status"] = failed ? "failed" : "ok";
        entry["file"] = cell.summary_file();
        entry["runs_ok"] = spec.runs - failed;
        entry["runs_failed"] = failed;
        if (failed) {
            entry["errors"] = std::move(errors);
            any_failed = true;
            log << "FAILED " << cell.name << ": " << failed << " of " << spec.runs << " runs aborted\n";
        }
        entry["parameters"] = Json{{"N", spec.N},
                                   {"f", cell.f},
                                   {"n_byz", cell.cfg.roster.n_byz()},
                                   {"T", cell.T},
                                   {"rule", to_string(cell.rule)},
                                   {"alpha", to_json(spec.step)},
                                   {"rounds", spec.rounds},
                                   {"runs", spec.runs},
                                   {"seed", spec.seed}};
        manifest_cells.push_back(std::move(entry));
    }
    Json manifest{{"label", spec.label},
                  {"config_digest", hex_digest(fnv1a64(normalized.dump()))},
                  {"config", "config.normalized.json"},
                  {"cells", std::move(manifest_cells)}};
    write_json(out / "manifest.json", manifest);
    log << "wrote " << cells.size() << " cells to " << out.string() << '\n';
    return any_failed ? kExitFailure : kExitOk;
}

struct CellVerification {
    std::string name;
    std::string status;  // pass | fail | skipped
    std::string reason;
    std::optional<Violation> violation;
    std::size_t soft_exceedances = 0;
    std::size_t invariant_violations = 0;
};

inline CellVerification verify_cell(const Cell& cell, const ExperimentSpec& spec, std::size_t jobs) {
    CellVerification v{cell.name, "skipped", {}, std::nullopt, 0, 0};
    if (cell.skipped()) {
        v.reason = cell.skip_reason;
        return v;
    }
    std::string why;
    const auto bound = bound_for(cell.cfg, &why);
    if (!bound) {
        v.reason = why;
        return v;
    }
    const double floor = rounding_floor(*cell.cfg.inst, cell.cfg.roster.n_total());
    v.status = "pass";
    if (cell.cfg.mode == GradientMode::Deterministic) {
        RunConfig cfg = cell.cfg;
        cfg.record = RecordLevel::Full;
        // without a random initial point every deterministic run is identical
        const std::size_t runs = cfg.init.kind == InitSpec::Kind::Gaussian ? spec.runs : 1;
        std::vector<CellVerification> per_run(runs);
        parallel_for(runs, jobs, [&](std::size_t r) {
            CellVerification& pr = per_run[r];
            const RunOutcome o = run_guarded(cfg, SimulationId{spec.seed, r, cell.name});
            if (!o.ok()) {
                pr.status = "fail";
                pr.reason = o.error;
                return;
            }
            const auto rep = verify_trajectory(*o.trajectory, *bound, floor);
            if (!rep.pass) {
                pr.status = "fail";
                pr.reason = "run " + std::to_string(r) + ": " + rep.text;
                pr.violation = rep.first_violation;
            }
            if (cfg.rule.kind == RuleKind::CE)
                for (const auto& rec : o.trajectory->records) {
                    const auto bad = check_round_invariants(rec, cfg.roster);
                    pr.invariant_violations += bad.size();
                    if (!bad.empty() && pr.status != "fail") {
                        pr.status = "fail";
                        pr.reason = "run " + std::to_string(r) + ": " + bad.front();
                        pr.violation = Violation{rec.round, 0.0, 0.0, bad.front()};
                    }
                }
        });
        for (const auto& pr : per_run) {
            v.invariant_violations += pr.invariant_violations;
            if (pr.status == "fail" && v.status != "fail") {
                v.status = "fail";
                v.reason = pr.reason;
                v.violation = pr.violation;
            }
        }
        if (v.status == "pass") v.reason = "runs=" + std::to_string(runs) + " rate=" + format_double(bound->rate);
        return v;
    }
    RunConfig cfg = cell.cfg;
    cfg.record = RecordLevel::Summary;
    const BatchResult batch = run_batch(cfg, spec.seed, spec.runs, jobs);
    if (batch.failed()) {
        v.status = "fail";
        for (const auto& o : batch.outcomes)
            if (!o.ok()) {
                v.reason = o.error;
                break;
            }
        return v;
    }
    const auto rep = verify_batch(batch.summary, batch.initial_sq_error, *bound, floor);
    v.soft_exceedances = rep.soft_exceedances;
    v.status = rep.pass ? "pass" : "fail";
    v.reason = rep.text;
    v.violation = rep.first_violation;
    return v;
}

/// Checks each cell covered by a convergence bound against its bound; others are reported as skipped.
inline int cmd_verify(const ExperimentSpec& spec, std::size_t jobs, std::ostream& log) {
    const auto cells = make_cells(spec);
    bool all_pass = true;
    std::optional<std::pair<std::string, std::size_t>> first_fail;
    Json report_cells = Json::array();
    for (const auto& cell : cells) {
        const auto v = verify_cell(cell, spec, jobs);
        log << v.status << ' ' << v.name;
        if (!v.reason.empty()) log << ": " << v.reason;
        log << '\n';
        Json e{{"name", v.name}, {"status", v.status}, {"reason", v.reason},
               {"soft_exceedances", v.soft_exceedances}, {"invariant_violations", v.invariant_violations}};
        if (v.violation)
            e["first_violation"] = Json{{"round", v.violation->round},
                                        {"observed", v.violation->observed},
                                        {"limit", v.violation->limit},
                                        {"what", v.violation->what}};
        report_cells.push_back(std::move(e));
        if (v.status == "fail") {
            all_pass = false;
            if (!first_fail) first_fail = {v.name, v.violation ? v.violation->round : 0};
        }
    }
    fs::create_directories(spec.output_dir);
    write_json(fs::path(spec.output_dir) / "verify.json", Json{{"pass", all_pass}, {"cells", report_cells}});
    if (first_fail) log << "first violation: cell " << first_fail->first << " round " << first_fail->second << '\n';
    return all_pass ? kExitOk : kExitFailure;
}

/// Plot selections: f1 is T = 1 over f in {8, 12, 16, 20}; f2 is f in {20, 24} over all T.
inline bool cell_in_figure(const Cell& c, const std::string& figure) {
    if (figure.empty() || figure == "all") return true;
    if (figure == "f1") return c.T == 1 && (c.f == 8 || c.f == 12 || c.f == 16 || c.f == 20);
    if (figure == "f2") return c.f == 20 || c.f == 24;
    throw ConfigError("--figure must be f1 or f2");
}

/// Long-format plot data (rule, f, T, round, mean_sq_error, var_sq_error) from existing summaries.
inline int cmd_plotdata(const ExperimentSpec& spec, const std::string& figure, std::ostream& log) {
    const fs::path out = spec.output_dir;
    std::ostringstream body;
    body << "rule,f,T,round,mean_sq_error,var_sq_error\n";
    for (const auto& cell : make_cells(spec)) {
        if (!cell_in_figure(cell, figure) || cell.skipped()) continue;
        const fs::path file = out / cell.summary_file();
        std::ifstream in(file);
        if (!in) {
            log << "missing summary file " << file.string() << '\n';
            return kExitFailure;
        }
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            // round,mean,var,runs -> drop runs
            const auto last = line.rfind(',');
            body << to_string(cell.rule) << ',' << cell.f << ',' << cell.T << ',' << line.substr(0, last) << '\n';
        }
    }
    const std::string name = "plot_" + (figure.empty() ? std::string("all") : figure) + ".csv";
    write_file(out / name, [&](std::ostream& os) { os << body.str(); });
    log << "wrote " << (out / name).string() << '\n';
    return kExitOk;
}

struct GlobalOptions {
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

/// Flag beats environment (CEFL_SEED, CEFL_OUT) beats config file.
inline void apply_overrides(ExperimentSpec& spec, const GlobalOptions& g) {
    if (g.seed) {
        spec.seed = *g.seed;
    } else if (const char* env = std::getenv("CEFL_SEED"); env && *env) {
        try {
            spec.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("CEFL_SEED must be an unsigned integer");
        }
    }
    if (g.out)
        spec.output_dir = *g.out;
    else if (const char* env = std::getenv("CEFL_OUT"); env && *env)
        spec.output_dir = env;
}

inline int cli_main(int argc, char** argv, std::ostream& log = std::cerr) {
    CLI::App app{"Byzantine-robust local SGD simulator with comparative elimination"};
    app.require_subcommand(1);
    GlobalOptions g;
    std::uint64_t seed = 0;
    std::string out;
    app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
    auto* out_opt = app.add_option("--out", out, "override the output directory");

    std::string config;
    std::string figure;
    auto* run = app.add_subcommand("run", "execute the sweep and write summaries + manifest");
    auto* verify = app.add_subcommand("verify", "check bound-covered cells against their convergence bounds");
    auto* plot = app.add_subcommand("plotdata", "emit long-format plot data from existing summaries");
    for (auto* sub : {run, verify, plot}) {
        sub->add_option("config", config, "JSON config file")->required();
        sub->fallthrough();
    }
    plot->add_option("--figure", figure, "f1 or f2")->check(CLI::IsMember({"f1", "f2"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        log << e.what() << '\n';
        return kExitConfig;
    }
    if (*seed_opt) g.seed = seed;
    if (*out_opt) g.out = out;

    try {
        ExperimentSpec spec = load_config(config);
        apply_overrides(spec, g);
        if (*run) return cmd_run(spec, g.jobs, log);
        if (*verify) return cmd_verify(spec, g.jobs, log);
        return cmd_plotdata(spec, figure, log);
    } catch (const ConfigError& e) {
        log << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace cefl
