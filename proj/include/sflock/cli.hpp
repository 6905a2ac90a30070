#pragma once

#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "diagnostics.hpp"
#include "integrator.hpp"
#include "io.hpp"
#include "model.hpp"
#include "scenarios.hpp"

namespace sflock {

/// Process exit codes.
enum ExitCode : int
{
    kExitOk = 0,
    kExitUsage = 1,
    kExitCollision = 2,
    kExitStepFloor = 3,
    kExitCheckFailed = 4,
};

enum class RunExit
{
    Completed,
    Collision,
    StepFloor,
    Error,
};

struct RunSummary
{
    RunExit exit_reason{RunExit::Completed};
    double wall_time{0.0};
    std::size_t n_steps{0};
    DiagnosticsRecord final_record;
};

inline const char *to_string(RunExit r)
{
    switch (r)
    {
    case RunExit::Completed:
        return "Completed";
    case RunExit::Collision:
        return "Collision";
    case RunExit::StepFloor:
        return "StepFloor";
    case RunExit::Error:
        return "Error";
    }
    return "Error";
}

inline json to_json(const DiagnosticsRecord &r)
{
    return json{{"t", r.t},
                {"min_gap", r.min_gap},
                {"max_speed", r.max_speed},
                {"v_center", r.v_center},
                {"kinetic", r.kinetic},
                {"dissipation_integral", r.dissipation_integral},
                {"L_beta", r.L_beta},
                {"log_functional", r.log_functional},
                {"vel_diam_inf", r.vel_diam_inf},
                {"pos_diam_inf", r.pos_diam_inf}};
}

inline json to_json(const RunSummary &s)
{
    return json{{"exit_reason", to_string(s.exit_reason)},
                {"wall_time", s.wall_time},
                {"n_steps", s.n_steps},
                {"final_record", to_json(s.final_record)}};
}

/// SF_THREADS and SF_SEED overrides.
struct EnvOverrides
{
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;

    static EnvOverrides from_environment()
    {
        EnvOverrides env;
        if (const char *t = std::getenv("SF_THREADS"); t && *t)
        {
            char *end = nullptr;
            const unsigned long v = std::strtoul(t, &end, 10);
            if (*end != '\0' || v < 1)
                throw ConfigError(std::string("SF_THREADS must be a positive integer, got '") + t + "'");
            env.threads = static_cast<unsigned>(v);
        }
        if (const char *s = std::getenv("SF_SEED"); s && *s)
        {
            char *end = nullptr;
            const unsigned long long v = std::strtoull(s, &end, 10);
            if (*end != '\0')
                throw ConfigError(std::string("SF_SEED must be an unsigned integer, got '") + s + "'");
            env.seed = static_cast<std::uint64_t>(v);
        }
        return env;
    }

    void apply(IntegratorConfig &c) const
    {
        if (threads)
            c.threads = *threads;
    }
    void apply(ScenarioSpec &s) const
    {
        if (seed)
            s.seed = *seed;
    }
};

struct VerifyOptions
{
    double energy_tol{1e-5};
    double speed_tol{1e-6};
    double center_tol{1e-10};
};

struct VerifyCheck
{
    std::string name;
    bool pass{true};
    double value{0.0};
    double limit{0.0};
};

/// Re-runs the trajectory checks on stored states.
inline std::vector<VerifyCheck> verify_trajectory(const KernelSpec &k, const std::vector<ParticleState> &states,
                                                  double rel_tol, const VerifyOptions &opt = {})
{
    std::vector<VerifyCheck> checks;
    if (states.empty())
    {
        checks.push_back({"nonempty", false, 0.0, 1.0});
        return checks;
    }
    const std::vector<DiagnosticsRecord> recs = records_from_states(k, states, default_beta(k));
    const DiagnosticsRecord &first = recs.front();

    double worst_gap = first.min_gap;
    double worst_speed = first.max_speed;
    double worst_center = 0.0;
    for (const DiagnosticsRecord &r : recs)
    {
        worst_gap = std::min(worst_gap, r.min_gap);
        worst_speed = std::max(worst_speed, r.max_speed);
        for (std::size_t a = 0; a < r.v_center.size(); ++a)
            worst_center = std::max(worst_center, std::abs(r.v_center[a] - first.v_center[a]));
    }
    checks.push_back({"min_gap_above_delta", worst_gap > k.delta, worst_gap, k.delta});
    const double speed_limit = first.max_speed * (1.0 + opt.speed_tol);
    checks.push_back({"max_speed_nonincreasing", worst_speed <= speed_limit, worst_speed, speed_limit});
    const double center_limit = opt.center_tol * std::max(first.max_speed, 1e-300);
    checks.push_back({"mean_velocity_constant", worst_center <= center_limit, worst_center, center_limit});

    const EnergyResidual energy = energy_balance_residual(recs);
    checks.push_back({energy.absolute ? "energy_balance_absolute" : "energy_balance", energy.value <= opt.energy_tol,
                      energy.value, opt.energy_tol});
    const double kin_limit = 100.0 * rel_tol * std::max(first.kinetic, 1e-300);
    const double kin_increase = max_kinetic_increase(recs);
    checks.push_back({"kinetic_nonincreasing", kin_increase <= kin_limit, kin_increase, kin_limit});

    if (k.alpha >= 2.0)
    {
        const BoundCheck g = gronwall_bound_check(k, states);
        checks.push_back({"gronwall_bound", g.holds, g.worst_margin, 0.0});
    }
    return checks;
}

namespace detail {

inline int exit_for(ExitReason r)
{
    switch (r)
    {
    case ExitReason::Completed:
        return kExitOk;
    case ExitReason::Collision:
        return kExitCollision;
    case ExitReason::StepFloor:
        return kExitStepFloor;
    }
    return kExitUsage;
}

inline RunExit run_exit_for(ExitReason r)
{
    switch (r)
    {
    case ExitReason::Completed:
        return RunExit::Completed;
    case ExitReason::Collision:
        return RunExit::Collision;
    case ExitReason::StepFloor:
        return RunExit::StepFloor;
    }
    return RunExit::Error;
}

inline int cmd_simulate(const std::string &path, const EnvOverrides &env, std::ostream &out)
{
    RunConfig cfg = run_config_from_json(load_json_file(path));
    env.apply(cfg.scenario);
    env.apply(cfg.integrator);
    const auto start = std::chrono::steady_clock::now();
    const KernelSpec k = cfg.scenario.kernel();
    const ParticleState st0 = generate(cfg.scenario);

    TrajectoryRecorder::Options opt;
    opt.sample_every = cfg.sample_every;
    opt.keep_states = cfg.outputs.trajectory.has_value();
    TrajectoryRecorder recorder(k, st0, opt);
    const IntegrationResult res = integrate(k, cfg.integrator, st0, cfg.scenario.t_end, recorder.observer());
    const Trajectory traj = recorder.finish();

    const Metadata meta = run_metadata(cfg.scenario, cfg.integrator);
    write_diagnostics(cfg.outputs.diagnostics, meta, traj.records);
    write_events(cfg.outputs.events, meta, res.events);
    if (cfg.outputs.trajectory)
        write_trajectory(*cfg.outputs.trajectory, meta, traj.states);

    RunSummary summary;
    summary.exit_reason = run_exit_for(res.exit);
    summary.n_steps = res.n_steps;
    summary.final_record = traj.records.back();
    summary.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << to_json(summary).dump(2) << '\n';
    return exit_for(res.exit);
}

inline int cmd_sweep(const std::string &path, const EnvOverrides &env, std::ostream &out)
{
    SweepConfig cfg = sweep_config_from_json(load_json_file(path));
    env.apply(cfg.sweep.base);
    env.apply(cfg.integrator);
    const std::vector<UniformityRow> rows =
        run_uniformity_sweep(cfg.sweep, cfg.integrator, cfg.gronwall_C, cfg.integrator.threads);

    std::ofstream table = open_for_write(cfg.table);
    write_metadata(table, run_metadata(cfg.sweep.base, cfg.integrator));
    table << "N,replicate,seed,L0,kinetic0,sup_L,bound_rhs,min_gap,n_steps,exit,failed,message\n";
    int code = kExitOk;
    for (const UniformityRow &r : rows)
    {
        table << r.n << ',' << r.replicate << ',' << r.seed << ',' << format_double(r.l0) << ','
              << format_double(r.kinetic0) << ',' << format_double(r.sup_l) << ',' << format_double(r.bound_rhs)
              << ',' << format_double(r.min_gap) << ',' << r.n_steps << ',' << to_string(r.exit) << ','
              << (r.failed ? 1 : 0) << ',' << '"' << r.message << '"' << '\n';
        out << "N=" << r.n << " rep=" << r.replicate << " sup_L=" << format_double(r.sup_l)
            << " bound=" << format_double(r.bound_rhs) << (r.failed ? " FAILED: " + r.message : "") << '\n';
        if (r.failed && code == kExitOk)
            code = r.exit == ExitReason::Completed ? kExitUsage : exit_for(r.exit);
        else if (!r.failed && r.sup_l > r.bound_rhs && code == kExitOk)
            code = kExitCheckFailed;
    }
    finish_write(table, cfg.table);
    return code;
}

inline json to_json(const CollisionProbeReport &r)
{
    auto opt = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
    return json{{"alpha", r.alpha},
                {"r0", r.r0},
                {"w0", r.w0},
                {"collided", r.collided},
                {"t_observed", opt(r.t_observed)},
                {"t_oracle", opt(r.t_oracle)},
                {"time_rel_error", opt(r.time_rel_error)},
                {"impact_velocity", opt(r.impact_velocity)},
                {"expected_impact_velocity", r.expected_impact_velocity},
                {"impact_rel_error", opt(r.impact_rel_error)},
                {"sticking", r.sticking},
                {"exit", std::string(to_string(r.exit))},
                {"n_steps", r.n_steps}};
}

inline int cmd_probe(const std::string &path, const EnvOverrides &env, std::ostream &out)
{
    ProbeConfig cfg = probe_config_from_json(load_json_file(path));
    env.apply(cfg.integrator);
    const CollisionProbeReport rep = run_collision_probe(cfg.alpha, cfg.r0, cfg.w0, cfg.integrator, cfg.t_max);
    const std::string text = to_json(rep).dump(2);
    {
        std::ofstream f = open_for_write(cfg.report);
        f << text << '\n';
        finish_write(f, cfg.report);
    }
    if (cfg.events)
    {
        ScenarioSpec s;
        s.name = "collision-probe";
        s.alpha = cfg.alpha;
        s.init = TwoBody{cfg.r0, cfg.w0};
        write_events(*cfg.events, run_metadata(s, cfg.integrator), rep.events);
    }
    out << text << '\n';
    return exit_for(rep.exit);
}

inline int cmd_verify(const std::string &path, const VerifyOptions &opt, std::ostream &out)
{
    const TrajectoryFile tf = read_trajectory(path);
    auto number = [&](const char *key) {
        const std::string v = metadata_value(tf.meta, key);
        if (v.empty())
            throw ConfigError(path + ": metadata key '" + key + "' missing");
        return std::stod(v);
    };
    const KernelSpec k{number("alpha"), number("delta")};
    k.validate();
    const double rel_tol = number("rel_tol");
    const std::vector<VerifyCheck> checks = verify_trajectory(k, tf.states, rel_tol, opt);
    bool all = true;
    for (const VerifyCheck &c : checks)
    {
        out << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << format_double(c.value)
            << " limit=" << format_double(c.limit) << '\n';
        all = all && c.pass;
    }
    out << (all ? "verify: all checks passed" : "verify: violations found") << '\n';
    return all ? kExitOk : kExitCheckFailed;
}

inline int cmd_flock_check(const std::string &path, const EnvOverrides &env, std::ostream &out)
{
    RunConfig cfg = run_config_from_json(load_json_file(path));
    env.apply(cfg.scenario);
    const ParticleState st0 = generate(cfg.scenario);
    const FlockingCondition fc = flocking_condition(cfg.scenario.kernel(), st0);
    const json j{{"holds", fc.holds},
                 {"margin", std::isfinite(fc.margin) ? json(fc.margin) : json("inf")},
                 {"velocity_spread", fc.velocity_spread},
                 {"position_spread", fc.position_spread}};
    out << j.dump(2) << '\n';
    return fc.holds ? kExitOk : kExitCheckFailed;
}

} // namespace detail

/// Entry point: simulate | sweep | probe | verify | flock-check.
inline int cli_main(int argc, char **argv, std::ostream &out = std::cout, std::ostream &err = std::cerr)
{
    CLI::App app{"Singular Cucker-Smale flocking simulator and verification harness", "sflock"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string config;
    std::string trajectory;
    VerifyOptions vopt;
    auto *simulate = app.add_subcommand("simulate", "Run a single scenario and write diagnostics/events");
    simulate->add_option("config", config, "JSON run configuration")->required();
    auto *sweep = app.add_subcommand("sweep", "Run a uniform-in-N sweep");
    sweep->add_option("config", config, "JSON sweep configuration")->required();
    auto *probe = app.add_subcommand("probe", "Two-body collision probe against the quadrature oracle");
    probe->add_option("config", config, "JSON probe configuration")->required();
    auto *verify = app.add_subcommand("verify", "Re-check a stored trajectory");
    verify->add_option("trajectory", trajectory, "Trajectory CSV written by simulate")->required();
    verify->add_option("--energy-tol", vopt.energy_tol, "Energy balance residual limit");
    verify->add_option("--speed-tol", vopt.speed_tol, "Relative max-speed growth limit");
    auto *flock = app.add_subcommand("flock-check", "Evaluate the flocking condition on generated data");
    flock->add_option("config", config, "JSON run configuration")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp &e)
    {
        out << app.help();
        return kExitOk;
    }
    catch (const CLI::CallForVersion &e)
    {
        out << kToolVersion << '\n';
        return kExitOk;
    }
    catch (const CLI::ParseError &e)
    {
        err << "error: " << e.what() << '\n' << app.help();
        return kExitUsage;
    }

    try
    {
        const EnvOverrides env = EnvOverrides::from_environment();
        if (simulate->parsed())
            return detail::cmd_simulate(config, env, out);
        if (sweep->parsed())
            return detail::cmd_sweep(config, env, out);
        if (probe->parsed())
            return detail::cmd_probe(config, env, out);
        if (verify->parsed())
            return detail::cmd_verify(trajectory, vopt, out);
        if (flock->parsed())
            return detail::cmd_flock_check(config, env, out);
    }
    catch (const std::exception &e)
    {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace sflock
