#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "integrator.hpp"
#include "io.hpp"
#include "scenarios.hpp"

namespace sflock {

using json = nlohmann::json;

struct OutputPaths
{
    std::optional<std::string> trajectory;
    std::string diagnostics{"diagnostics.csv"};
    std::string events{"events.csv"};

    friend bool operator==(const OutputPaths &, const OutputPaths &) = default;
};

struct RunConfig
{
    ScenarioSpec scenario;
    IntegratorConfig integrator;
    OutputPaths outputs;
    std::size_t sample_every{1};

    friend bool operator==(const RunConfig &, const RunConfig &) = default;
};

struct SweepConfig
{
    SweepSpec sweep;
    IntegratorConfig integrator;
    /// Gronwall constant; <= 0 selects the default for alpha.
    double gronwall_C{0.0};
    std::string table{"sweep.csv"};

    friend bool operator==(const SweepConfig &, const SweepConfig &) = default;
};

struct ProbeConfig
{
    double alpha{0.5};
    double r0{1.0};
    double w0{-4.0};
    double t_max{10.0};
    IntegratorConfig integrator;
    std::string report{"probe.json"};
    std::optional<std::string> events;

    friend bool operator==(const ProbeConfig &, const ProbeConfig &) = default;
};

namespace detail {

/// Reads fields of one JSON object, rejecting unknown keys. Errors name the
/// dotted field path.
class FieldReader
{
  public:
    FieldReader(const json &obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object())
            throw ConfigError(where() + ": expected an object");
    }

    template <typename T>
    void optional(const char *key, T &out)
    {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end() || it->is_null())
            return;
        read(*it, key, out);
    }

    template <typename T>
    void required(const char *key, T &out)
    {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end())
            throw ConfigError(field(key) + ": required field missing");
        read(*it, key, out);
    }

    const json *child(const char *key)
    {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() || it->is_null() ? nullptr : &*it;
    }

    std::string field(const char *key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const
    {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(field(it.key().c_str()) + ": unknown field");
    }

  private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    void read(const json &j, const char *key, double &out)
    {
        if (!j.is_number())
            throw ConfigError(field(key) + ": expected a number");
        out = j.get<double>();
    }
    void read(const json &j, const char *key, std::size_t &out)
    {
        if (!j.is_number_unsigned())
            throw ConfigError(field(key) + ": expected a nonnegative integer");
        out = j.get<std::size_t>();
    }
    void read(const json &j, const char *key, unsigned &out)
    {
        if (!j.is_number_unsigned())
            throw ConfigError(field(key) + ": expected a nonnegative integer");
        out = j.get<unsigned>();
    }
    void read(const json &j, const char *key, bool &out)
    {
        if (!j.is_boolean())
            throw ConfigError(field(key) + ": expected true or false");
        out = j.get<bool>();
    }
    void read(const json &j, const char *key, std::string &out)
    {
        if (!j.is_string())
            throw ConfigError(field(key) + ": expected a string");
        out = j.get<std::string>();
    }
    void read(const json &j, const char *key, std::optional<std::string> &out)
    {
        std::string s;
        read(j, key, s);
        out = s;
    }

    const json &obj_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::string axis_name(SweepAxis axis)
{
    switch (axis)
    {
    case SweepAxis::N:
        return "N";
    case SweepAxis::Alpha:
        return "alpha";
    case SweepAxis::Delta:
        return "delta";
    case SweepAxis::VelocityScale:
        return "velocity_scale";
    }
    return "N";
}

} // namespace detail

inline json to_json(const IntegratorConfig &c)
{
    return json{{"rel_tol", c.rel_tol}, {"abs_tol", c.abs_tol}, {"dt_init", c.dt_init},
                {"dt_min", c.dt_min},   {"dt_max", c.dt_max},   {"eta", c.eta},
                {"g_min", c.g_min},     {"w_min", c.w_min},     {"near_gap", c.near_gap},
                {"threads", c.threads}, {"max_steps", c.max_steps}};
}

inline IntegratorConfig integrator_from_json(const json &j, const std::string &path)
{
    IntegratorConfig c;
    detail::FieldReader r(j, path);
    r.optional("rel_tol", c.rel_tol);
    r.optional("abs_tol", c.abs_tol);
    r.optional("dt_init", c.dt_init);
    r.optional("dt_min", c.dt_min);
    r.optional("dt_max", c.dt_max);
    r.optional("eta", c.eta);
    r.optional("g_min", c.g_min);
    r.optional("w_min", c.w_min);
    r.optional("near_gap", c.near_gap);
    r.optional("threads", c.threads);
    r.optional("max_steps", c.max_steps);
    r.finish();
    try
    {
        c.validate();
    }
    catch (const ConfigError &e)
    {
        throw ConfigError(path + ": " + e.what());
    }
    return c;
}

inline json to_json(const InitSpec &init)
{
    return std::visit(
        [](const auto &v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, UniformBox>)
                return json{{"kind", "UniformBox"}, {"side", v.side}};
            else if constexpr (std::is_same_v<T, Lattice>)
                return json{{"kind", "Lattice"}, {"spacing", v.spacing}};
            else if constexpr (std::is_same_v<T, TwoBody>)
                return json{{"kind", "TwoBody"}, {"r0", v.r0}, {"w0", v.w0}};
            else
                return json{{"kind", "Custom"}, {"path", v.path}};
        },
        init);
}

inline InitSpec init_from_json(const json &j, const std::string &path)
{
    detail::FieldReader r(j, path);
    std::string kind;
    r.required("kind", kind);
    InitSpec out;
    if (kind == "UniformBox")
    {
        UniformBox b;
        r.required("side", b.side);
        out = b;
    }
    else if (kind == "Lattice")
    {
        Lattice l;
        r.required("spacing", l.spacing);
        out = l;
    }
    else if (kind == "TwoBody")
    {
        TwoBody t;
        r.required("r0", t.r0);
        r.required("w0", t.w0);
        out = t;
    }
    else if (kind == "Custom")
    {
        CustomFile f;
        r.required("path", f.path);
        out = f;
    }
    else
    {
        throw ConfigError(r.field("kind") + ": unknown init kind '" + kind +
                          "' (expected UniformBox, Lattice, TwoBody or Custom)");
    }
    r.finish();
    return out;
}

inline json to_json(const ScenarioSpec &s)
{
    return json{{"name", s.name},
                {"n", s.n},
                {"d", s.d},
                {"alpha", s.alpha},
                {"delta", s.delta},
                {"t_end", s.t_end},
                {"seed", s.seed},
                {"init", to_json(s.init)},
                {"velocity_scale", s.velocity_scale},
                {"gap_margin", s.gap_margin},
                {"recenter_velocity", s.recenter_velocity},
                {"max_retries", s.max_retries}};
}

inline ScenarioSpec scenario_from_json(const json &j, const std::string &path)
{
    ScenarioSpec s;
    detail::FieldReader r(j, path);
    r.optional("name", s.name);
    r.required("n", s.n);
    r.required("d", s.d);
    r.required("alpha", s.alpha);
    r.optional("delta", s.delta);
    r.required("t_end", s.t_end);
    if (const json *seed = r.child("seed"))
    {
        if (!seed->is_number_unsigned())
            throw ConfigError(r.field("seed") + ": expected a nonnegative 64-bit integer");
        s.seed = seed->get<std::uint64_t>();
    }
    const json *init = r.child("init");
    if (!init)
        throw ConfigError(r.field("init") + ": required field missing");
    s.init = init_from_json(*init, r.field("init"));
    r.optional("velocity_scale", s.velocity_scale);
    r.optional("gap_margin", s.gap_margin);
    r.optional("recenter_velocity", s.recenter_velocity);
    r.optional("max_retries", s.max_retries);
    r.finish();
    try
    {
        s.validate();
    }
    catch (const ConfigError &e)
    {
        throw ConfigError(path + ": " + e.what());
    }
    return s;
}

inline json to_json(const RunConfig &c)
{
    json outputs{{"diagnostics", c.outputs.diagnostics}, {"events", c.outputs.events}};
    outputs["trajectory"] = c.outputs.trajectory ? json(*c.outputs.trajectory) : json(nullptr);
    return json{{"scenario", to_json(c.scenario)},
                {"integrator", to_json(c.integrator)},
                {"outputs", outputs},
                {"sample_every", c.sample_every}};
}

inline RunConfig run_config_from_json(const json &j)
{
    RunConfig c;
    detail::FieldReader r(j, "");
    const json *scenario = r.child("scenario");
    if (!scenario)
        throw ConfigError("scenario: required field missing");
    c.scenario = scenario_from_json(*scenario, "scenario");
    if (const json *integ = r.child("integrator"))
        c.integrator = integrator_from_json(*integ, "integrator");
    if (const json *outputs = r.child("outputs"))
    {
        detail::FieldReader o(*outputs, "outputs");
        o.optional("trajectory", c.outputs.trajectory);
        o.optional("diagnostics", c.outputs.diagnostics);
        o.optional("events", c.outputs.events);
        o.finish();
    }
    r.optional("sample_every", c.sample_every);
    if (c.sample_every < 1)
        throw ConfigError("sample_every: must be >= 1");
    r.finish();
    return c;
}

inline json to_json(const SweepConfig &c)
{
    return json{{"sweep",
                 {{"base", to_json(c.sweep.base)},
                  {"axis", detail::axis_name(c.sweep.axis)},
                  {"values", c.sweep.values},
                  {"replicates", c.sweep.replicates}}},
                {"integrator", to_json(c.integrator)},
                {"gronwall_C", c.gronwall_C},
                {"outputs", {{"table", c.table}}}};
}

inline SweepConfig sweep_config_from_json(const json &j)
{
    SweepConfig c;
    detail::FieldReader r(j, "");
    const json *sweep = r.child("sweep");
    if (!sweep)
        throw ConfigError("sweep: required field missing");
    {
        detail::FieldReader s(*sweep, "sweep");
        const json *base = s.child("base");
        if (!base)
            throw ConfigError("sweep.base: required field missing");
        c.sweep.base = scenario_from_json(*base, "sweep.base");
        std::string axis = "N";
        s.optional("axis", axis);
        if (axis == "N")
            c.sweep.axis = SweepAxis::N;
        else if (axis == "alpha")
            c.sweep.axis = SweepAxis::Alpha;
        else if (axis == "delta")
            c.sweep.axis = SweepAxis::Delta;
        else if (axis == "velocity_scale")
            c.sweep.axis = SweepAxis::VelocityScale;
        else
            throw ConfigError("sweep.axis: unknown axis '" + axis + "' (expected N, alpha, delta or velocity_scale)");
        const json *values = s.child("values");
        if (!values || !values->is_array() || values->empty())
            throw ConfigError("sweep.values: expected a nonempty array of numbers");
        for (const json &v : *values)
        {
            if (!v.is_number())
                throw ConfigError("sweep.values: expected a nonempty array of numbers");
            c.sweep.values.push_back(v.get<double>());
        }
        s.optional("replicates", c.sweep.replicates);
        s.finish();
    }
    if (const json *integ = r.child("integrator"))
        c.integrator = integrator_from_json(*integ, "integrator");
    r.optional("gronwall_C", c.gronwall_C);
    if (const json *outputs = r.child("outputs"))
    {
        detail::FieldReader o(*outputs, "outputs");
        o.optional("table", c.table);
        o.finish();
    }
    r.finish();
    try
    {
        c.sweep.validate();
    }
    catch (const ConfigError &e)
    {
        throw ConfigError(std::string("sweep: ") + e.what());
    }
    return c;
}

inline json to_json(const ProbeConfig &c)
{
    json outputs{{"report", c.report}};
    outputs["events"] = c.events ? json(*c.events) : json(nullptr);
    return json{{"probe", {{"alpha", c.alpha}, {"r0", c.r0}, {"w0", c.w0}, {"t_max", c.t_max}}},
                {"integrator", to_json(c.integrator)},
                {"outputs", outputs}};
}

inline ProbeConfig probe_config_from_json(const json &j)
{
    ProbeConfig c;
    detail::FieldReader r(j, "");
    const json *probe = r.child("probe");
    if (!probe)
        throw ConfigError("probe: required field missing");
    {
        detail::FieldReader p(*probe, "probe");
        p.required("alpha", c.alpha);
        p.required("r0", c.r0);
        p.required("w0", c.w0);
        p.optional("t_max", c.t_max);
        p.finish();
    }
    if (const json *integ = r.child("integrator"))
        c.integrator = integrator_from_json(*integ, "integrator");
    if (const json *outputs = r.child("outputs"))
    {
        detail::FieldReader o(*outputs, "outputs");
        o.optional("report", c.report);
        o.optional("events", c.events);
        o.finish();
    }
    r.finish();
    return c;
}

/// Parses a JSON file; syntax errors carry nlohmann's line/column position.
inline json load_json_file(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path + ": cannot open config file");
    try
    {
        return json::parse(in);
    }
    catch (const json::parse_error &e)
    {
        throw ConfigError(path + ": " + e.what());
    }
}

/// Metadata block recorded in every output file.
inline Metadata run_metadata(const ScenarioSpec &s, const IntegratorConfig &c)
{
    return Metadata{
        {"tool", kToolVersion},
        {"scenario", s.name},
        {"rng", kRngName},
        {"seed", std::to_string(s.seed)},
        {"alpha", format_double(s.alpha)},
        {"delta", format_double(s.delta)},
        {"N", std::to_string(s.n)},
        {"d", std::to_string(s.d)},
        {"t_end", format_double(s.t_end)},
        {"init", to_json(s.init).dump()},
        {"velocity_scale", format_double(s.velocity_scale)},
        {"rel_tol", format_double(c.rel_tol)},
        {"abs_tol", format_double(c.abs_tol)},
        {"dt_init", format_double(c.dt_init)},
        {"dt_min", format_double(c.dt_min)},
        {"dt_max", format_double(c.dt_max)},
        {"eta", format_double(c.eta)},
        {"g_min", format_double(c.g_min)},
        {"w_min", format_double(c.w_min)},
    };
}

} // namespace sflock
