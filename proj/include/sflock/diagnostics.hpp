#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "integrator.hpp"
#include "kernel.hpp"
#include "state.hpp"

namespace sflock {

/// One time sample of the monitored functionals.
///
/// vel_diam_inf and pos_diam_inf are the l-infinity deviations from the
/// current centre, max_i |v_i - v_c| and max_i |x_i - x_c|.
struct DiagnosticsRecord
{
    double t{0.0};
    double min_gap{0.0};
    double max_speed{0.0};
    std::vector<double> v_center;
    double kinetic{0.0};
    double dissipation_rate{0.0};
    double dissipation_integral{0.0};
    double L_beta{0.0};
    double log_functional{0.0};
    double vel_diam_inf{0.0};
    double pos_diam_inf{0.0};

    friend bool operator==(const DiagnosticsRecord &, const DiagnosticsRecord &) = default;
};

struct ClusterNorms
{
    std::vector<std::size_t> cluster;
    double x_norm{0.0};
    double v_norm{0.0};
};

/// (1/N) sum_i |v_i|^2
inline double kinetic_energy(const ParticleState &st)
{
    double s = 0.0;
    for (double e : st.v)
        s += e * e;
    return s / static_cast<double>(st.n);
}

namespace detail {

template <typename PairFn>
void for_each_pair_gap(const KernelSpec &k, const ParticleState &st, PairFn &&fn)
{
    for (std::size_t i = 0; i < st.n; ++i)
        for (std::size_t j = i + 1; j < st.n; ++j)
        {
            const double g = distance(st.pos(i), st.pos(j));
            if (!(g > k.delta))
                throw PairDomainError(i, j, g, k.delta);
            fn(i, j, g - k.delta);
        }
}

} // namespace detail

/// (1/N^2) sum_{i != j} psi_delta(|x_i - x_j|) |v_i - v_j|^2, the rate at which
/// kinetic energy is dissipated.
inline double dissipation_rate(const KernelSpec &k, const ParticleState &st)
{
    double s = 0.0;
    detail::for_each_pair_gap(k, st, [&](std::size_t i, std::size_t j, double shifted) {
        const double w = distance(st.vel(i), st.vel(j));
        s += weight_of_shifted(k.alpha, shifted) * w * w;
    });
    const double n = static_cast<double>(st.n);
    return 2.0 * s / (n * n);
}

/// L^beta = (1/N^2) sum_{i != j} (|x_i - x_j| - delta)^(-beta).
inline double l_beta(const KernelSpec &k, const ParticleState &st, double beta)
{
    if (!(beta > 0.0))
        throw DomainError("l_beta requires beta > 0");
    double s = 0.0;
    detail::for_each_pair_gap(k, st, [&](std::size_t, std::size_t, double shifted) { s += std::pow(shifted, -beta); });
    const double n = static_cast<double>(st.n);
    return 2.0 * s / (n * n);
}

/// (1/N^2) sum_{i != j} log(|x_i - x_j| - delta).
inline double log_functional(const KernelSpec &k, const ParticleState &st)
{
    double s = 0.0;
    detail::for_each_pair_gap(k, st, [&](std::size_t, std::size_t, double shifted) { s += std::log(shifted); });
    const double n = static_cast<double>(st.n);
    return 2.0 * s / (n * n);
}

/// Exponent used for the L_beta column when none is given: alpha - 2 for
/// alpha > 2 (the uniform-in-N functional), 1 otherwise.
inline double default_beta(const KernelSpec &k) { return k.alpha > 2.0 ? k.alpha - 2.0 : 1.0; }

inline DiagnosticsRecord make_record(const KernelSpec &k, const ParticleState &st, double beta,
                                     double dissipation_integral)
{
    DiagnosticsRecord r;
    r.t = st.t;
    r.min_gap = min_gap(st);
    r.max_speed = max_speed(st);
    r.v_center = mean_velocity(st);
    r.kinetic = kinetic_energy(st);
    r.dissipation_rate = dissipation_rate(k, st);
    r.dissipation_integral = dissipation_integral;
    r.L_beta = l_beta(k, st, beta);
    r.log_functional = log_functional(k, st);
    r.vel_diam_inf = max_deviation(st.v, st.d, r.v_center);
    const std::vector<double> xc = mean_position(st);
    r.pos_diam_inf = max_deviation(st.x, st.d, xc);
    return r;
}

inline ClusterNorms cluster_norms(const ParticleState &st, std::vector<std::size_t> cluster)
{
    if (cluster.empty())
        throw DomainError("cluster must be nonempty");
    for (std::size_t i : cluster)
        if (i >= st.n)
            throw DomainError("cluster index " + std::to_string(i) + " out of range for N = " + std::to_string(st.n));
    ClusterNorms out;
    double sx = 0.0;
    double sv = 0.0;
    for (std::size_t a = 0; a < cluster.size(); ++a)
        for (std::size_t b = a + 1; b < cluster.size(); ++b)
        {
            const double dx = distance(st.pos(cluster[a]), st.pos(cluster[b]));
            const double dv = distance(st.vel(cluster[a]), st.vel(cluster[b]));
            sx += dx * dx;
            sv += dv * dv;
        }
    // ordered pairs: (i, j) and (j, i) both count
    out.x_norm = std::sqrt(2.0 * sx);
    out.v_norm = std::sqrt(2.0 * sv);
    out.cluster = std::move(cluster);
    return out;
}

/// How the recorder integrates the dissipation rate in time.
enum class DissipationQuadrature
{
    /// Trapezoidal rule on the accepted-step samples.
    Trapezoid,
    /// Runge-Kutta stage quadrature carried by each accepted step.
    Stages,
    /// Piecewise cubic interpolation through neighbouring samples; for stored
    /// trajectories where stage values are gone.
    Cubic,
};

/// Sampled trajectory: records at the sample times and, optionally, the states.
struct Trajectory
{
    KernelSpec kernel;
    double beta{1.0};
    std::vector<ParticleState> states;
    std::vector<DiagnosticsRecord> records;
};

/// Step observer that accumulates the dissipation integral at every accepted
/// step and keeps a record every sample_every steps.
class TrajectoryRecorder
{
  public:
    struct Options
    {
        double beta{0.0}; // <= 0 selects default_beta
        std::size_t sample_every{1};
        bool keep_states{true};
        DissipationQuadrature quadrature{DissipationQuadrature::Stages};
    };

    TrajectoryRecorder(const KernelSpec &k, const ParticleState &st0, Options opt) : opt_(opt)
    {
        if (opt_.sample_every < 1)
            throw ConfigError("sample_every must be >= 1");
        traj_.kernel = k;
        traj_.beta = opt_.beta > 0.0 ? opt_.beta : default_beta(k);
        last_ = make_record(k, st0, traj_.beta, 0.0);
        push(st0, last_);
    }
    TrajectoryRecorder(const KernelSpec &k, const ParticleState &st0) : TrajectoryRecorder(k, st0, Options{}) {}

    void observe(const ParticleState &st, const StepOutcome &out)
    {
        DiagnosticsRecord rec = make_record(traj_.kernel, st, traj_.beta, 0.0);
        if (opt_.quadrature != DissipationQuadrature::Trapezoid)
            integral_ += out.dissipation_increment;
        else
            integral_ += 0.5 * (st.t - last_.t) * (last_.dissipation_rate + rec.dissipation_rate);
        rec.dissipation_integral = integral_;
        last_ = rec;
        ++steps_;
        pending_ = steps_ % opt_.sample_every != 0;
        if (!pending_)
            push(st, rec);
        else
            pending_state_ = st;
    }

    StepObserver observer()
    {
        return [this](const ParticleState &st, const StepOutcome &out) { observe(st, out); };
    }

    /// Flushes the last observed step if it fell between samples.
    Trajectory finish()
    {
        if (pending_)
        {
            push(pending_state_, last_);
            pending_ = false;
        }
        return std::move(traj_);
    }

    const Trajectory &trajectory() const { return traj_; }
    const DiagnosticsRecord &last_record() const { return last_; }
    std::size_t steps() const { return steps_; }

  private:
    void push(const ParticleState &st, const DiagnosticsRecord &rec)
    {
        traj_.records.push_back(rec);
        if (opt_.keep_states)
            traj_.states.push_back(st);
    }

    Options opt_;
    Trajectory traj_;
    DiagnosticsRecord last_;
    ParticleState pending_state_;
    double integral_{0.0};
    std::size_t steps_{0};
    bool pending_{false};
};

namespace detail {

/// Integral over [t[k], t[k+1]] of the cubic through four consecutive samples
/// containing that interval. Two-point Gauss-Legendre is exact for cubics.
inline double cubic_interval_integral(const std::vector<double> &t, const std::vector<double> &f, std::size_t k)
{
    const std::size_t m = t.size();
    const std::size_t start = std::min(k > 0 ? k - 1 : 0, m - 4);
    auto interp = [&](double tau) {
        double value = 0.0;
        for (std::size_t a = start; a < start + 4; ++a)
        {
            double basis = 1.0;
            for (std::size_t b = start; b < start + 4; ++b)
                if (b != a)
                    basis *= (tau - t[b]) / (t[a] - t[b]);
            value += basis * f[a];
        }
        return value;
    };
    const double half = 0.5 * (t[k + 1] - t[k]);
    const double mid = 0.5 * (t[k + 1] + t[k]);
    const double off = half / std::sqrt(3.0);
    return half * (interp(mid - off) + interp(mid + off));
}

} // namespace detail

/// Rebuilds records from stored states. Stage values are not available, so
/// Stages falls back to Cubic; Cubic needs at least four samples and uses the
/// trapezoidal rule otherwise.
inline std::vector<DiagnosticsRecord> records_from_states(
    const KernelSpec &k, const std::vector<ParticleState> &states, double beta,
    DissipationQuadrature quadrature = DissipationQuadrature::Cubic)
{
    std::vector<DiagnosticsRecord> out;
    out.reserve(states.size());
    std::vector<double> times, rates;
    for (const ParticleState &st : states)
    {
        out.push_back(make_record(k, st, beta, 0.0));
        times.push_back(st.t);
        rates.push_back(out.back().dissipation_rate);
    }
    const bool cubic = quadrature != DissipationQuadrature::Trapezoid && states.size() >= 4;
    double integral = 0.0;
    for (std::size_t s = 1; s < out.size(); ++s)
    {
        if (cubic)
            integral += detail::cubic_interval_integral(times, rates, s - 1);
        else
            integral += 0.5 * (times[s] - times[s - 1]) * (rates[s - 1] + rates[s]);
        out[s].dissipation_integral = integral;
    }
    return out;
}

struct EnergyResidual
{
    double value{0.0};
    /// True when kinetic(0) = 0 and the residual is absolute rather than relative.
    bool absolute{false};
};

/// max over samples of |kinetic(t) + dissipation_integral(t) - kinetic(0)| / kinetic(0).
inline EnergyResidual energy_balance_residual(const std::vector<DiagnosticsRecord> &records)
{
    EnergyResidual out;
    if (records.empty())
        return out;
    const double k0 = records.front().kinetic;
    out.absolute = !(k0 > 0.0);
    const double scale = out.absolute ? 1.0 : k0;
    for (const DiagnosticsRecord &r : records)
        out.value = std::max(out.value, std::abs(r.kinetic + r.dissipation_integral - k0) / scale);
    return out;
}

/// Largest sample-to-sample increase of the kinetic energy (0 if non-increasing).
inline double max_kinetic_increase(const std::vector<DiagnosticsRecord> &records)
{
    double worst = 0.0;
    for (std::size_t s = 1; s < records.size(); ++s)
        worst = std::max(worst, records[s].kinetic - records[s - 1].kinetic);
    return worst;
}

/// Explicit constant for the L^(alpha-2) Gronwall bound, (alpha - 2) * max(1, (alpha - 1)/2).
inline double default_gronwall_constant(double alpha) { return (alpha - 2.0) * std::max(1.0, (alpha - 1.0) / 2.0); }

struct BoundCheck
{
    bool holds{true};
    double worst_margin{std::numeric_limits<double>::infinity()};
};

/// Checks the a priori bound on the stored states:
///   alpha > 2:  L^(alpha-2)(t) <= L^(alpha-2)(0) e^{Ct} + C e^{Ct} kinetic(0)
///   alpha = 2:  |log_functional(t)| <= |log_functional(0)| + t/2 + kinetic(0)/2
/// with t measured from the first state. Returns the minimum slack.
inline BoundCheck gronwall_bound_check(const KernelSpec &k, const std::vector<ParticleState> &states, double C)
{
    if (!(k.alpha >= 2.0))
        throw ConfigError("gronwall bound check requires alpha >= 2");
    if (!(C > 0.0) && k.alpha > 2.0)
        throw ConfigError("gronwall constant must be positive");
    BoundCheck out;
    if (states.empty())
        return out;
    const ParticleState &first = states.front();
    const double k0 = kinetic_energy(first);
    if (k.alpha == 2.0)
    {
        const double log0 = std::abs(log_functional(k, first));
        for (const ParticleState &st : states)
        {
            const double t = st.t - first.t;
            const double slack = log0 + 0.5 * t + 0.5 * k0 - std::abs(log_functional(k, st));
            out.worst_margin = std::min(out.worst_margin, slack);
        }
    }
    else
    {
        const double beta = k.alpha - 2.0;
        const double l0 = l_beta(k, first, beta);
        for (const ParticleState &st : states)
        {
            const double t = st.t - first.t;
            const double growth = std::exp(C * t);
            const double slack = l0 * growth + C * growth * k0 - l_beta(k, st, beta);
            out.worst_margin = std::min(out.worst_margin, slack);
        }
    }
    out.holds = out.worst_margin >= 0.0;
    return out;
}

inline BoundCheck gronwall_bound_check(const KernelSpec &k, const std::vector<ParticleState> &states)
{
    return gronwall_bound_check(k, states, k.alpha > 2.0 ? default_gronwall_constant(k.alpha) : 1.0);
}

/// sup over the states of max_i |x_i(t) - x_c(0)|.
inline double observed_c1(const std::vector<ParticleState> &states)
{
    if (states.empty())
        return 0.0;
    const std::vector<double> xc0 = mean_position(states.front());
    double c1 = 0.0;
    for (const ParticleState &st : states)
        c1 = std::max(c1, max_deviation(st.x, st.d, xc0));
    return c1;
}

struct DecayCheck
{
    bool holds{true};
    /// Least-squares decay rate of log max_i |v_i(t) - v_c(0)|; +infinity for
    /// already flocked data.
    double fitted_rate{std::numeric_limits<double>::infinity()};
    double predicted_rate{0.0};
    double worst_ratio{0.0};
};

/// Verifies max_i |v_i(t) - v_c(0)| <= max_i |v_i(0) - v_c(0)| e^{-psi(2 c1) t} (1 + rel_slack)
/// at every stored state, and fits the empirical exponential rate.
inline DecayCheck flocking_decay_check(const std::vector<ParticleState> &states, double c1, const KernelSpec &k,
                                       double rel_slack = 1e-6)
{
    DecayCheck out;
    if (states.empty())
        return out;
    const ParticleState &first = states.front();
    const std::vector<double> vc0 = mean_velocity(first);
    const double dev0 = max_deviation(first.v, first.d, vc0);
    out.predicted_rate = kernel_eval(k, 2.0 * c1);
    // Deviations at the round-off level of the mean velocity count as zero.
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(max_speed(first), 1e-300);
    if (dev0 <= noise)
    {
        for (const ParticleState &st : states)
            if (max_deviation(st.v, st.d, vc0) > noise)
                out.holds = false;
        return out;
    }
    // Samples too close to round-off are left out of the fit.
    const double floor = dev0 * 1e-11;
    double st_sum = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    std::size_t count = 0;
    for (const ParticleState &st : states)
    {
        const double t = st.t - first.t;
        const double dev = max_deviation(st.v, st.d, vc0);
        const double bound = dev0 * std::exp(-out.predicted_rate * t);
        out.worst_ratio = std::max(out.worst_ratio, dev / bound);
        if (dev > bound * (1.0 + rel_slack) + noise)
            out.holds = false;
        if (dev > floor)
        {
            const double y = std::log(dev);
            st_sum += t;
            sy += y;
            stt += t * t;
            sty += t * y;
            ++count;
        }
    }
    if (count >= 2)
    {
        const double c = static_cast<double>(count);
        const double denom = c * stt - st_sum * st_sum;
        if (denom > 0.0)
            out.fitted_rate = -(c * sty - st_sum * sy) / denom;
    }
    return out;
}

inline DecayCheck flocking_decay_check(const Trajectory &traj, double c1, double rel_slack = 1e-6)
{
    return flocking_decay_check(traj.states, c1, traj.kernel, rel_slack);
}

} // namespace sflock
