#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "errors.hpp"
#include "kernel.hpp"
#include "model.hpp"
#include "state.hpp"

namespace sflock {

struct IntegratorConfig
{
    double rel_tol{1e-8};
    double abs_tol{1e-10};
    double dt_init{1e-3};
    double dt_min{1e-12};
    double dt_max{0.1};
    double eta{0.1};      // gap safety: dt <= eta * (min_gap - delta) / max_rel_speed
    double g_min{1e-9};   // collision declared at gap <= delta + g_min
    double w_min{1e-7};   // sticking declared when additionally rel_speed <= w_min
    double near_gap{1e-6}; // near-collision reported at gap <= delta + near_gap
    unsigned threads{1};
    std::size_t max_steps{50'000'000};

    void validate() const
    {
        auto positive = [](double value, const char *name) {
            if (!(value > 0.0) || !std::isfinite(value))
                throw ConfigError(std::string("integrator ") + name + " must be finite and positive");
        };
        positive(rel_tol, "rel_tol");
        positive(abs_tol, "abs_tol");
        positive(dt_init, "dt_init");
        positive(dt_min, "dt_min");
        positive(dt_max, "dt_max");
        positive(g_min, "g_min");
        positive(w_min, "w_min");
        positive(near_gap, "near_gap");
        if (!(dt_min < dt_max))
            throw ConfigError("integrator dt_min must be smaller than dt_max");
        if (!(eta > 0.0 && eta <= 1.0))
            throw ConfigError("integrator eta must lie in (0, 1]");
        if (threads < 1)
            throw ConfigError("integrator threads must be >= 1");
    }

    friend bool operator==(const IntegratorConfig &, const IntegratorConfig &) = default;
};

enum class EventKind
{
    NearCollision,
    Collision,
    Sticking,
    StepFloor,
};

inline std::string_view to_string(EventKind kind)
{
    switch (kind)
    {
    case EventKind::NearCollision:
        return "NearCollision";
    case EventKind::Collision:
        return "Collision";
    case EventKind::Sticking:
        return "Sticking";
    case EventKind::StepFloor:
        return "StepFloor";
    }
    return "Unknown";
}

inline std::optional<EventKind> event_kind_from_string(std::string_view s)
{
    for (EventKind k : {EventKind::NearCollision, EventKind::Collision, EventKind::Sticking, EventKind::StepFloor})
        if (to_string(k) == s)
            return k;
    return std::nullopt;
}

struct EventRecord
{
    double time{0.0};
    EventKind kind{EventKind::NearCollision};
    std::size_t i{0};
    std::size_t j{0};
    double gap{0.0};
    double rel_speed{0.0};
    /// Signed relative velocity (v_j - v_i) projected on (x_j - x_i)/|x_j - x_i|.
    /// Negative while the pair approaches.
    double closing_velocity{0.0};

    friend bool operator==(const EventRecord &, const EventRecord &) = default;
};

struct StepOutcome
{
    ParticleState state;
    double dt_used{0.0};
    double error_estimate{0.0};
    std::vector<EventRecord> events;
    double dt_next{0.0};
    /// Integral of the dissipation rate over the step, from the RK stage values.
    double dissipation_increment{0.0};
    std::size_t rejected{0};
    bool accepted{false};
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince
{
    static constexpr std::array<double, 7> c{0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
    static constexpr double a[7][6]{
        {},
        {1.0 / 5.0},
        {3.0 / 40.0, 9.0 / 40.0},
        {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0},
        {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0},
        {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0},
        {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0},
    };
    static constexpr std::array<double, 7> b{35.0 / 384.0,      0.0, 500.0 / 1113.0, 125.0 / 192.0,
                                             -2187.0 / 6784.0, 11.0 / 84.0, 0.0};
    // b - b_hat (embedded 4th order)
    static constexpr std::array<double, 7> e{71.0 / 57600.0,   0.0,          -71.0 / 16695.0, 71.0 / 1920.0,
                                             -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0};
};

/// Signed closing velocity of the pair (i, j).
inline double closing_velocity(const ParticleState &st, std::size_t i, std::size_t j)
{
    double dot = 0.0;
    double r2 = 0.0;
    for (std::size_t a = 0; a < st.d; ++a)
    {
        const double dx = st.x[j * st.d + a] - st.x[i * st.d + a];
        const double dv = st.v[j * st.d + a] - st.v[i * st.d + a];
        dot += dx * dv;
        r2 += dx * dx;
    }
    return r2 > 0.0 ? dot / std::sqrt(r2) : 0.0;
}

} // namespace detail

/// Adaptive embedded Runge-Kutta stepper that owns the current state.
///
/// The attempted step is capped by eta * (min_gap - delta) / max_rel_speed so
/// that no pair can cross a fraction eta of its remaining distance to the
/// singular set within one step.
class Stepper
{
  public:
    Stepper(const KernelSpec &k, const IntegratorConfig &cfg, ParticleState st0) : k_(k), cfg_(cfg), y_(std::move(st0))
    {
        k_.validate();
        cfg_.validate();
        y_.validate_shape();
        require_admissible(k_, y_);
        scan_ = scan_pairs(y_);
        const std::size_t m = 2 * y_.n * y_.d;
        for (auto &stage : stages_)
            stage.assign(m, 0.0);
        stage_diss_.fill(0.0);
        tmp_ = y_;
        candidate_ = y_;
    }

    const ParticleState &state() const { return y_; }
    const PairScan &pair_scan() const { return scan_; }

    /// Largest dt permitted by the gap cap at the current state.
    double gap_cap() const
    {
        if (!(scan_.max_rel_speed > 0.0))
            return std::numeric_limits<double>::infinity();
        return cfg_.eta * (scan_.min_gap - k_.delta) / scan_.max_rel_speed;
    }

    /// One Dormand-Prince attempt of size dt from the current state without
    /// accepting it. Returns false if a stage entered the singular set.
    bool attempt(double dt, ParticleState &out, double &err, double &diss_increment)
    {
        const std::size_t nd = y_.n * y_.d;
        const std::size_t m = 2 * nd;
        if (!fsal_valid_)
        {
            if (!eval(y_, stages_[0], stage_diss_[0]))
                return false;
            fsal_valid_ = true;
        }
        using T = detail::DormandPrince;
        for (std::size_t s = 1; s < 7; ++s)
        {
            tmp_.t = y_.t + T::c[s] * dt;
            for (std::size_t e = 0; e < m; ++e)
            {
                double incr = 0.0;
                for (std::size_t r = 0; r < s; ++r)
                    incr += T::a[s][r] * stages_[r][e];
                const double base = e < nd ? y_.x[e] : y_.v[e - nd];
                if (e < nd)
                    tmp_.x[e] = base + dt * incr;
                else
                    tmp_.v[e - nd] = base + dt * incr;
            }
            if (s == 6)
            {
                // Stage 7 sits at the 5th-order solution (FSAL).
                out = tmp_;
                out.t = y_.t + dt;
            }
            if (!eval(tmp_, stages_[s], stage_diss_[s]))
                return false;
        }
        err = 0.0;
        for (std::size_t e = 0; e < m; ++e)
        {
            double est = 0.0;
            for (std::size_t s = 0; s < 7; ++s)
                est += T::e[s] * stages_[s][e];
            est *= dt;
            const double y0 = e < nd ? y_.x[e] : y_.v[e - nd];
            const double y1 = e < nd ? out.x[e] : out.v[e - nd];
            const double scale = cfg_.abs_tol + cfg_.rel_tol * std::max(std::abs(y0), std::abs(y1));
            err = std::max(err, std::abs(est) / scale);
        }
        diss_increment = 0.0;
        for (std::size_t s = 0; s < 7; ++s)
            diss_increment += T::b[s] * stage_diss_[s];
        diss_increment *= dt;
        return true;
    }

    /// Advances by one accepted step of at most min(dt_proposed, t_limit - t).
    /// On failure the outcome has accepted == false and carries a StepFloor event.
    StepOutcome advance(double dt_proposed, double t_limit = std::numeric_limits<double>::infinity())
    {
        StepOutcome out;
        const double remaining = t_limit - y_.t;
        double dt = std::min({dt_proposed, cfg_.dt_max, gap_cap()});
        bool final_clip = false;
        if (dt >= remaining)
        {
            dt = remaining;
            final_clip = true;
        }
        while (true)
        {
            if (dt < cfg_.dt_min && !(final_clip && dt == remaining && dt > 0.0))
            {
                out.state = y_;
                out.dt_used = 0.0;
                out.dt_next = dt;
                out.events.push_back(EventRecord{y_.t, EventKind::StepFloor, scan_.i, scan_.j, scan_.min_gap,
                                                 scan_.rel_speed_at_min,
                                                 detail::closing_velocity(y_, scan_.i, scan_.j)});
                return out;
            }
            double err = std::numeric_limits<double>::infinity();
            double diss = 0.0;
            const bool ok = attempt(dt, candidate_, err, diss);
            if (ok && err <= 1.0)
            {
                const double used = dt;
                double factor;
                if (err == 0.0)
                    factor = kMaxGrowth;
                else
                    factor = kSafety * std::pow(err, -kBeta1) * std::pow(err_prev_, kBeta2);
                factor = std::clamp(factor, kMinShrink, kMaxGrowth);
                if (rejected_in_row_ > 0)
                    factor = std::min(factor, 1.0);
                err_prev_ = std::max(err, 1e-4);
                rejected_in_row_ = 0;

                y_ = candidate_;
                if (final_clip)
                    y_.t = t_limit;
                std::swap(stages_[0], stages_[6]);
                stage_diss_[0] = stage_diss_[6];
                fsal_valid_ = true;

                out.dt_used = used;
                out.error_estimate = err;
                out.dissipation_increment = diss;
                // Keep proposing the unclipped size when the last step was shortened to hit t_limit.
                out.dt_next = std::min(std::max(used, final_clip ? dt_proposed : used) * factor, cfg_.dt_max);
                out.accepted = true;
                detect_events(out.events);
                out.state = y_;
                return out;
            }
            ++out.rejected;
            ++rejected_in_row_;
            if (!ok)
            {
                dt *= 0.25;
                // stage states are invalid but stages_[0] still belongs to y_
            }
            else
            {
                dt *= std::max(kMinShrink, kSafety * std::pow(err, -1.0 / 5.0));
            }
            final_clip = false;
        }
    }

  private:
    static constexpr double kSafety = 0.9;
    static constexpr double kBeta1 = 0.7 / 5.0;
    static constexpr double kBeta2 = 0.4 / 5.0;
    static constexpr double kMinShrink = 0.2;
    static constexpr double kMaxGrowth = 5.0;

    bool eval(const ParticleState &st, std::vector<double> &stage, double &diss)
    {
        const std::size_t nd = st.n * st.d;
        std::copy(st.v.begin(), st.v.end(), stage.begin());
        if (evaluate_rhs(k_, st, dv_, &diss, ws_, cfg_.threads))
            return false;
        std::copy(dv_.begin(), dv_.end(), stage.begin() + static_cast<std::ptrdiff_t>(nd));
        return true;
    }

    void detect_events(std::vector<EventRecord> &events)
    {
        scan_ = PairScan{};
        const double near = k_.delta + cfg_.near_gap;
        const double hit = k_.delta + cfg_.g_min;
        for (std::size_t i = 0; i < y_.n; ++i)
            for (std::size_t j = i + 1; j < y_.n; ++j)
            {
                const double g = distance(y_.pos(i), y_.pos(j));
                const double w = distance(y_.vel(i), y_.vel(j));
                if (g < scan_.min_gap)
                {
                    scan_.min_gap = g;
                    scan_.i = i;
                    scan_.j = j;
                    scan_.rel_speed_at_min = w;
                }
                scan_.max_rel_speed = std::max(scan_.max_rel_speed, w);
                if (g <= near)
                {
                    const double cv = detail::closing_velocity(y_, i, j);
                    if (g <= hit)
                    {
                        events.push_back(EventRecord{y_.t, EventKind::Collision, i, j, g, w, cv});
                        if (w <= cfg_.w_min)
                            events.push_back(EventRecord{y_.t, EventKind::Sticking, i, j, g, w, cv});
                    }
                    else
                    {
                        events.push_back(EventRecord{y_.t, EventKind::NearCollision, i, j, g, w, cv});
                    }
                }
            }
    }

    KernelSpec k_;
    IntegratorConfig cfg_;
    ParticleState y_;
    ParticleState tmp_;
    ParticleState candidate_;
    PairScan scan_;
    RhsWorkspace ws_;
    std::vector<double> dv_;
    std::array<std::vector<double>, 7> stages_;
    std::array<double, 7> stage_diss_{};
    bool fsal_valid_{false};
    double err_prev_{1e-4};
    std::size_t rejected_in_row_{0};
};

/// Single adaptive step from st. Retries with smaller dt until accepted or the
/// step floor is hit.
inline StepOutcome step(const KernelSpec &k, const IntegratorConfig &cfg, const ParticleState &st, double dt_proposed)
{
    Stepper stepper(k, cfg, st);
    return stepper.advance(dt_proposed);
}

enum class ExitReason
{
    Completed,
    Collision,
    StepFloor,
};

inline std::string_view to_string(ExitReason r)
{
    switch (r)
    {
    case ExitReason::Completed:
        return "Completed";
    case ExitReason::Collision:
        return "Collision";
    case ExitReason::StepFloor:
        return "StepFloor";
    }
    return "Unknown";
}

struct IntegrationResult
{
    ParticleState final_state;
    std::vector<EventRecord> events;
    ExitReason exit{ExitReason::Completed};
    std::size_t n_steps{0};
    std::size_t n_rejected{0};
};

/// Called after every accepted step. The state is const; observers must not
/// retain references past the call.
using StepObserver = std::function<void(const ParticleState &, const StepOutcome &)>;

/// Integrates from st0 to t_end, stopping early at the first Collision or
/// StepFloor. NearCollision events are reported once per pair.
inline IntegrationResult integrate(const KernelSpec &k, const IntegratorConfig &cfg, const ParticleState &st0,
                                   double t_end, const StepObserver &observer = {})
{
    IntegrationResult res;
    if (!(t_end >= st0.t))
        throw ConfigError("t_end must not precede the initial time");
    Stepper stepper(k, cfg, st0);
    if (t_end == st0.t)
    {
        res.final_state = st0;
        return res;
    }
    std::set<std::pair<std::size_t, std::size_t>> near_seen;
    double dt = std::min(cfg.dt_init, cfg.dt_max);
    while (stepper.state().t < t_end)
    {
        if (res.n_steps >= cfg.max_steps)
            throw DomainError("integration exceeded max_steps = " + std::to_string(cfg.max_steps));
        StepOutcome out = stepper.advance(dt, t_end);
        res.n_rejected += out.rejected;
        if (!out.accepted)
        {
            res.events.insert(res.events.end(), out.events.begin(), out.events.end());
            res.exit = ExitReason::StepFloor;
            break;
        }
        ++res.n_steps;
        bool collided = false;
        std::vector<EventRecord> kept;
        for (const EventRecord &ev : out.events)
        {
            if (ev.kind == EventKind::NearCollision && !near_seen.insert({ev.i, ev.j}).second)
                continue;
            collided = collided || ev.kind == EventKind::Collision;
            kept.push_back(ev);
        }
        out.events = kept;
        res.events.insert(res.events.end(), kept.begin(), kept.end());
        if (observer)
            observer(stepper.state(), out);
        dt = out.dt_next;
        if (collided)
        {
            res.exit = ExitReason::Collision;
            break;
        }
    }
    res.final_state = stepper.state();
    return res;
}

/// Classical fixed-step RK4, used as a cross-check oracle. Throws if any stage
/// leaves the admissible set.
inline ParticleState integrate_fixed_rk4(const KernelSpec &k, const ParticleState &st0, double dt, std::size_t n_steps)
{
    k.validate();
    st0.validate_shape();
    const std::size_t nd = st0.n * st0.d;
    ParticleState y = st0;
    ParticleState tmp = st0;
    RhsWorkspace ws;
    std::array<std::vector<double>, 4> kx, kv;
    auto eval = [&](const ParticleState &s, std::vector<double> &dx, std::vector<double> &dv) {
        dx = s.v;
        if (auto bad = evaluate_rhs(k, s, dv, nullptr, ws))
            throw PairDomainError(bad->i, bad->j, bad->gap, k.delta);
    };
    static constexpr double kStageOffset[4] = {0.0, 0.5, 0.5, 1.0};
    for (std::size_t step = 0; step < n_steps; ++step)
    {
        for (std::size_t s = 0; s < 4; ++s)
        {
            if (s == 0)
            {
                eval(y, kx[0], kv[0]);
                continue;
            }
            const double h = kStageOffset[s] * dt;
            for (std::size_t e = 0; e < nd; ++e)
            {
                tmp.x[e] = y.x[e] + h * kx[s - 1][e];
                tmp.v[e] = y.v[e] + h * kv[s - 1][e];
            }
            eval(tmp, kx[s], kv[s]);
        }
        for (std::size_t e = 0; e < nd; ++e)
        {
            y.x[e] += dt / 6.0 * (kx[0][e] + 2.0 * kx[1][e] + 2.0 * kx[2][e] + kx[3][e]);
            y.v[e] += dt / 6.0 * (kv[0][e] + 2.0 * kv[1][e] + 2.0 * kv[2][e] + kv[3][e]);
        }
        y.t = st0.t + static_cast<double>(step + 1) * dt;
    }
    return y;
}

/// Collision time of the 1D two-body reduction r' = w, w' = -psi(r) w, for
/// alpha in (0, 1). w + Psi(r) is conserved, so contact happens iff
/// w0 + Psi(r0) <= Psi(0+) = 0; the contact time is
///   t* = int_0^{r0} dr / (Psi(r) - Psi(r0) - w0).
/// Returns nullopt when the pair never reaches contact.
inline std::optional<double> collision_time_oracle(double alpha, double r0, double w0)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw DomainError("collision time oracle requires alpha in (0, 1); no finite-time collision exists for alpha >= 1");
    if (!(r0 > 0.0))
        throw DomainError("collision time oracle requires r0 > 0");
    if (w0 >= 0.0)
        return std::nullopt;
    const KernelSpec k{alpha, 0.0};
    const double level = w0 + psi_primitive(k, r0);
    if (level > 0.0)
        return std::nullopt;
    // r = r0 * s^(1/alpha) removes the endpoint singularity of the integrand at r = 0.
    const double p = 1.0 / alpha;
    auto integrand = [&](double s) {
        const double r = r0 * std::pow(s, p);
        const double jac = r0 * p * std::pow(s, p - 1.0);
        return jac / (std::pow(r, 1.0 - alpha) / (1.0 - alpha) - level);
    };
    double error = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, 1.0, 20, 1e-13, &error);
    return value;
}

} // namespace sflock
