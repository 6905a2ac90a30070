#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "integrator.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "state.hpp"

namespace sflock {

/// Generator failed to place particles under the gap constraint.
class GenerationError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct UniformBox
{
    double side{1.0};
    friend bool operator==(const UniformBox &, const UniformBox &) = default;
};

struct Lattice
{
    double spacing{1.0};
    friend bool operator==(const Lattice &, const Lattice &) = default;
};

/// Two particles on the first axis at relative position r0 and relative
/// velocity w0 = v_1 - v_0.
struct TwoBody
{
    double r0{1.0};
    double w0{0.0};
    friend bool operator==(const TwoBody &, const TwoBody &) = default;
};

/// Initial data read from the first row of a trajectory CSV file.
struct CustomFile
{
    std::string path;
    friend bool operator==(const CustomFile &, const CustomFile &) = default;
};

using InitSpec = std::variant<UniformBox, Lattice, TwoBody, CustomFile>;

struct ScenarioSpec
{
    std::string name{"scenario"};
    std::size_t n{2};
    std::size_t d{1};
    double alpha{1.0};
    double delta{0.0};
    double t_end{1.0};
    std::uint64_t seed{0};
    InitSpec init{UniformBox{}};
    double velocity_scale{1.0};
    /// Extra clearance above delta required between generated particles.
    double gap_margin{0.05};
    bool recenter_velocity{true};
    std::size_t max_retries{10000};

    KernelSpec kernel() const { return KernelSpec{alpha, delta}; }

    void validate() const
    {
        kernel().validate();
        if (n < 2)
            throw ConfigError("scenario n must be >= 2");
        if (d < 1)
            throw ConfigError("scenario d must be >= 1");
        if (!(t_end >= 0.0) || !std::isfinite(t_end))
            throw ConfigError("scenario t_end must be finite and nonnegative");
        if (!(velocity_scale >= 0.0) || !std::isfinite(velocity_scale))
            throw ConfigError("scenario velocity_scale must be finite and nonnegative");
        if (!(gap_margin >= 0.0))
            throw ConfigError("scenario gap_margin must be nonnegative");
        if (const auto *box = std::get_if<UniformBox>(&init); box && !(box->side > 0.0))
            throw ConfigError("UniformBox side must be positive");
        if (const auto *lat = std::get_if<Lattice>(&init); lat && !(lat->spacing > 0.0))
            throw ConfigError("Lattice spacing must be positive");
        if (const auto *two = std::get_if<TwoBody>(&init))
        {
            if (n != 2)
                throw ConfigError("TwoBody init requires n = 2");
            if (!(two->r0 > 0.0))
                throw ConfigError("TwoBody r0 must be positive");
        }
    }

    friend bool operator==(const ScenarioSpec &, const ScenarioSpec &) = default;
};

/// Name of the generator algorithm, recorded in output metadata.
inline constexpr const char *kRngName = "mt19937_64";

/// 53-bit uniform in [0, 1), independent of the standard library's
/// distribution implementation so streams match across platforms.
inline double uniform01(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// SplitMix64 finaliser, used to derive child seeds.
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t row, std::uint64_t replicate)
{
    return splitmix64(splitmix64(base ^ splitmix64(row)) + replicate);
}

namespace detail {

inline void place_uniform_box(const ScenarioSpec &spec, double side, std::mt19937_64 &rng, ParticleState &st)
{
    const double min_gap = spec.delta + spec.gap_margin;
    std::vector<double> candidate(spec.d);
    for (std::size_t i = 0; i < spec.n; ++i)
    {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < spec.max_retries && !placed; ++attempt)
        {
            for (double &c : candidate)
                c = side * uniform01(rng);
            placed = true;
            for (std::size_t j = 0; j < i && placed; ++j)
                placed = distance(candidate, st.pos(j)) > min_gap;
        }
        if (!placed)
            throw GenerationError("could not place particle " + std::to_string(i) + " of " + std::to_string(spec.n) +
                                  " in a box of side " + std::to_string(side) + " with gaps > " +
                                  std::to_string(min_gap) + " after " + std::to_string(spec.max_retries) +
                                  " retries");
        std::copy(candidate.begin(), candidate.end(), st.pos(i).begin());
    }
}

inline void place_lattice(const ScenarioSpec &spec, double spacing, ParticleState &st)
{
    if (!(spacing > spec.delta + spec.gap_margin))
        throw GenerationError("lattice spacing " + std::to_string(spacing) + " does not exceed delta + margin");
    std::size_t per_axis = 1;
    while (std::pow(static_cast<double>(per_axis), static_cast<double>(spec.d)) < static_cast<double>(spec.n))
        ++per_axis;
    for (std::size_t i = 0; i < spec.n; ++i)
    {
        std::size_t rest = i;
        for (std::size_t a = 0; a < spec.d; ++a)
        {
            st.x[i * spec.d + a] = spacing * static_cast<double>(rest % per_axis);
            rest /= per_axis;
        }
    }
}

} // namespace detail

/// Admissible initial data for the scenario; identical for identical specs.
inline ParticleState generate(const ScenarioSpec &spec)
{
    spec.validate();
    if (const auto *file = std::get_if<CustomFile>(&spec.init))
    {
        TrajectoryFile tf = read_trajectory(file->path);
        if (tf.states.empty())
            throw GenerationError("custom initial data file '" + file->path + "' has no rows");
        ParticleState st = tf.states.front();
        st.t = 0.0;
        require_admissible(spec.kernel(), st);
        return st;
    }

    ParticleState st(spec.n, spec.d);
    std::mt19937_64 rng(spec.seed);
    if (const auto *two = std::get_if<TwoBody>(&spec.init))
    {
        st.x[spec.d] = two->r0;
        st.v[0] = -0.5 * two->w0;
        st.v[spec.d] = 0.5 * two->w0;
        require_admissible(spec.kernel(), st);
        return st;
    }
    if (const auto *box = std::get_if<UniformBox>(&spec.init))
        detail::place_uniform_box(spec, box->side, rng, st);
    else if (const auto *lat = std::get_if<Lattice>(&spec.init))
        detail::place_lattice(spec, lat->spacing, st);

    for (double &e : st.v)
        e = spec.velocity_scale * (2.0 * uniform01(rng) - 1.0);
    if (spec.recenter_velocity)
    {
        const std::vector<double> vc = mean_velocity(st);
        for (std::size_t i = 0; i < st.n; ++i)
            for (std::size_t a = 0; a < st.d; ++a)
                st.v[i * st.d + a] -= vc[a];
    }
    require_admissible(spec.kernel(), st);
    return st;
}

enum class SweepAxis
{
    N,
    Alpha,
    Delta,
    VelocityScale,
};

struct SweepSpec
{
    ScenarioSpec base;
    SweepAxis axis{SweepAxis::N};
    std::vector<double> values;
    std::size_t replicates{1};

    void validate() const
    {
        base.validate();
        if (values.empty())
            throw ConfigError("sweep values must be nonempty");
        if (replicates < 1)
            throw ConfigError("sweep replicates must be >= 1");
    }

    friend bool operator==(const SweepSpec &, const SweepSpec &) = default;
};

/// Scenario for one sweep cell. Sweeping N over a UniformBox keeps the number
/// density constant: side scales with (N / base.n)^(1/d).
inline ScenarioSpec sweep_cell(const SweepSpec &sw, std::size_t row, std::size_t replicate)
{
    ScenarioSpec s = sw.base;
    const double value = sw.values.at(row);
    switch (sw.axis)
    {
    case SweepAxis::N: {
        if (!(value >= 2.0) || value != std::floor(value))
            throw ConfigError("sweep over N needs integer values >= 2");
        s.n = static_cast<std::size_t>(value);
        if (auto *box = std::get_if<UniformBox>(&s.init))
            box->side *= std::pow(static_cast<double>(s.n) / static_cast<double>(sw.base.n),
                                  1.0 / static_cast<double>(s.d));
        break;
    }
    case SweepAxis::Alpha:
        s.alpha = value;
        break;
    case SweepAxis::Delta:
        s.delta = value;
        break;
    case SweepAxis::VelocityScale:
        s.velocity_scale = value;
        break;
    }
    s.seed = derive_seed(sw.base.seed, row, replicate);
    s.name = sw.base.name + "/" + std::to_string(row) + "/" + std::to_string(replicate);
    return s;
}

struct UniformityRow
{
    std::size_t n{0};
    std::size_t replicate{0};
    std::uint64_t seed{0};
    double l0{0.0};
    double kinetic0{0.0};
    double sup_l{0.0};
    double bound_rhs{0.0};
    double min_gap{0.0};
    std::size_t n_steps{0};
    ExitReason exit{ExitReason::Completed};
    bool failed{false};
    std::string message;

    friend bool operator==(const UniformityRow &, const UniformityRow &) = default;
};

/// Runs every (N, replicate) cell to t_end and records sup_t L^(alpha-2)(t)
/// against the a priori bound L^(alpha-2)(0) e^{CT} + C e^{CT} kinetic(0).
/// Rows are independent; a failing row is marked, not fatal. Up to
/// row_threads rows run concurrently; results are ordered by (row, replicate).
inline std::vector<UniformityRow> run_uniformity_sweep(const SweepSpec &sw, const IntegratorConfig &cfg,
                                                       double C = 0.0, unsigned row_threads = 1)
{
    sw.validate();
    if (sw.axis != SweepAxis::N)
        throw ConfigError("uniformity sweep must run over the N axis");
    if (!(sw.base.alpha > 2.0))
        throw ConfigError("uniformity sweep requires alpha > 2");
    const double constant = C > 0.0 ? C : default_gronwall_constant(sw.base.alpha);
    const std::size_t total = sw.values.size() * sw.replicates;
    std::vector<UniformityRow> rows(total);

    auto run_cell = [&](std::size_t cell) {
        const std::size_t row = cell / sw.replicates;
        const std::size_t rep = cell % sw.replicates;
        UniformityRow &out = rows[cell];
        out.replicate = rep;
        try
        {
            const ScenarioSpec spec = sweep_cell(sw, row, rep);
            out.n = spec.n;
            out.seed = spec.seed;
            const KernelSpec k = spec.kernel();
            const double beta = spec.alpha - 2.0;
            const ParticleState st0 = generate(spec);
            out.l0 = l_beta(k, st0, beta);
            out.kinetic0 = kinetic_energy(st0);
            out.sup_l = out.l0;
            out.min_gap = min_gap(st0);
            IntegratorConfig row_cfg = cfg;
            row_cfg.threads = 1;
            const IntegrationResult res =
                integrate(k, row_cfg, st0, spec.t_end, [&](const ParticleState &st, const StepOutcome &) {
                    out.sup_l = std::max(out.sup_l, l_beta(k, st, beta));
                    out.min_gap = std::min(out.min_gap, min_gap(st));
                });
            out.exit = res.exit;
            out.n_steps = res.n_steps;
            const double growth = std::exp(constant * spec.t_end);
            out.bound_rhs = out.l0 * growth + constant * growth * out.kinetic0;
            if (res.exit != ExitReason::Completed)
            {
                out.failed = true;
                out.message = std::string("terminated by ") + std::string(to_string(res.exit));
            }
        }
        catch (const std::exception &e)
        {
            out.failed = true;
            out.message = e.what();
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(row_threads, 1, total);
    if (workers == 1)
    {
        for (std::size_t c = 0; c < total; ++c)
            run_cell(c);
    }
    else
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t c = w; c < total; c += workers)
                    run_cell(c);
            });
    }
    return rows;
}

struct CollisionProbeReport
{
    double alpha{0.0};
    double r0{0.0};
    double w0{0.0};
    bool collided{false};
    std::optional<double> t_observed;
    std::optional<double> t_oracle;
    /// |t_observed - t_oracle| / t_oracle when both exist.
    std::optional<double> time_rel_error;
    /// Signed closing velocity at the collision event.
    std::optional<double> impact_velocity;
    /// w0 + Psi(r0): relative velocity at contact from the first integral.
    double expected_impact_velocity{0.0};
    std::optional<double> impact_rel_error;
    bool sticking{false};
    ExitReason exit{ExitReason::Completed};
    std::size_t n_steps{0};
    std::vector<EventRecord> events;
};

/// Head-on 1D two-body run for alpha in (0, 1), compared with the quadrature
/// collision time and with the contact velocity predicted by the first integral.
inline CollisionProbeReport run_collision_probe(double alpha, double r0, double w0, const IntegratorConfig &cfg,
                                                double t_max = 10.0)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("collision probe requires alpha in (0, 1)");
    if (!(t_max > 0.0))
        throw ConfigError("collision probe t_max must be positive");
    CollisionProbeReport rep;
    rep.alpha = alpha;
    rep.r0 = r0;
    rep.w0 = w0;
    const KernelSpec k{alpha, 0.0};
    rep.expected_impact_velocity = w0 + psi_primitive(k, r0);
    rep.t_oracle = collision_time_oracle(alpha, r0, w0);

    ScenarioSpec spec;
    spec.name = "collision-probe";
    spec.n = 2;
    spec.d = 1;
    spec.alpha = alpha;
    spec.init = TwoBody{r0, w0};
    const ParticleState st0 = generate(spec);
    const IntegrationResult res = integrate(k, cfg, st0, t_max);
    rep.exit = res.exit;
    rep.n_steps = res.n_steps;
    rep.events = res.events;
    for (const EventRecord &ev : res.events)
    {
        if (ev.kind == EventKind::Collision && !rep.collided)
        {
            rep.collided = true;
            rep.t_observed = ev.time;
            rep.impact_velocity = ev.closing_velocity;
            rep.sticking = ev.rel_speed <= cfg.w_min;
        }
    }
    if (rep.t_observed && rep.t_oracle && *rep.t_oracle > 0.0)
        rep.time_rel_error = std::abs(*rep.t_observed - *rep.t_oracle) / *rep.t_oracle;
    if (rep.impact_velocity && rep.expected_impact_velocity != 0.0)
        rep.impact_rel_error = std::abs(*rep.impact_velocity - rep.expected_impact_velocity) /
                               std::abs(rep.expected_impact_velocity);
    return rep;
}

} // namespace sflock
