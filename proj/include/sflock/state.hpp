#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "kernel.hpp"

namespace sflock {

/// Positions and velocities of n particles in d dimensions, stored row-major
/// (particle i occupies entries [i*d, (i+1)*d)).
struct ParticleState
{
    double t{0.0};
    std::size_t n{0};
    std::size_t d{0};
    std::vector<double> x;
    std::vector<double> v;

    ParticleState() = default;
    ParticleState(std::size_t n_particles, std::size_t dim, double time = 0.0)
        : t(time), n(n_particles), d(dim), x(n_particles * dim, 0.0), v(n_particles * dim, 0.0)
    {
    }
    ParticleState(double time, std::size_t dim, std::vector<double> pos, std::vector<double> vel)
        : t(time), n(dim == 0 ? 0 : pos.size() / dim), d(dim), x(std::move(pos)), v(std::move(vel))
    {
        validate_shape();
    }

    std::span<double> pos(std::size_t i) { return {x.data() + i * d, d}; }
    std::span<const double> pos(std::size_t i) const { return {x.data() + i * d, d}; }
    std::span<double> vel(std::size_t i) { return {v.data() + i * d, d}; }
    std::span<const double> vel(std::size_t i) const { return {v.data() + i * d, d}; }

    /// Checks shape (n >= 2, d >= 1, x and v of size n*d) and finiteness.
    void validate_shape() const
    {
        if (d < 1)
            throw ConfigError("state dimension must be >= 1");
        if (n < 2)
            throw ConfigError("state needs at least two particles, got " + std::to_string(n));
        if (x.size() != n * d || v.size() != n * d)
            throw ConfigError("position/velocity arrays do not match n*d = " + std::to_string(n * d));
        for (std::size_t k = 0; k < x.size(); ++k)
            if (!std::isfinite(x[k]) || !std::isfinite(v[k]))
                throw DomainError("state contains a non-finite entry at flat index " + std::to_string(k));
    }

    friend bool operator==(const ParticleState &, const ParticleState &) = default;
};

struct StateDerivative
{
    std::vector<double> dx;
    std::vector<double> dv;
};

inline double distance(std::span<const double> a, std::span<const double> b) noexcept
{
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c)
    {
        const double diff = a[c] - b[c];
        s += diff * diff;
    }
    return std::sqrt(s);
}

inline double norm(std::span<const double> a) noexcept
{
    double s = 0.0;
    for (double e : a)
        s += e * e;
    return std::sqrt(s);
}

/// Closest pair and, in the same sweep, the largest pairwise relative speed.
struct PairScan
{
    double min_gap{std::numeric_limits<double>::infinity()};
    std::size_t i{0};
    std::size_t j{0};
    double rel_speed_at_min{0.0};
    double max_rel_speed{0.0};
};

inline PairScan scan_pairs(const ParticleState &st)
{
    PairScan out;
    for (std::size_t i = 0; i < st.n; ++i)
        for (std::size_t j = i + 1; j < st.n; ++j)
        {
            const double g = distance(st.pos(i), st.pos(j));
            const double w = distance(st.vel(i), st.vel(j));
            if (g < out.min_gap)
            {
                out.min_gap = g;
                out.i = i;
                out.j = j;
                out.rel_speed_at_min = w;
            }
            if (w > out.max_rel_speed)
                out.max_rel_speed = w;
        }
    return out;
}

inline double min_gap(const ParticleState &st) { return scan_pairs(st).min_gap; }

inline bool is_admissible(const KernelSpec &k, const ParticleState &st)
{
    return scan_pairs(st).min_gap > k.delta;
}

/// Throws PairDomainError naming the closest pair when the state is not admissible.
inline void require_admissible(const KernelSpec &k, const ParticleState &st)
{
    const PairScan s = scan_pairs(st);
    if (!(s.min_gap > k.delta))
        throw PairDomainError(s.i, s.j, s.min_gap, k.delta);
}

inline std::vector<double> mean_position(const ParticleState &st)
{
    std::vector<double> c(st.d, 0.0);
    for (std::size_t i = 0; i < st.n; ++i)
        for (std::size_t a = 0; a < st.d; ++a)
            c[a] += st.x[i * st.d + a];
    for (double &e : c)
        e /= static_cast<double>(st.n);
    return c;
}

inline std::vector<double> mean_velocity(const ParticleState &st)
{
    std::vector<double> c(st.d, 0.0);
    for (std::size_t i = 0; i < st.n; ++i)
        for (std::size_t a = 0; a < st.d; ++a)
            c[a] += st.v[i * st.d + a];
    for (double &e : c)
        e /= static_cast<double>(st.n);
    return c;
}

/// max_i |row_i - center| over an n*d row-major block.
inline double max_deviation(std::span<const double> rows, std::size_t d, std::span<const double> center)
{
    double m = 0.0;
    for (std::size_t off = 0; off < rows.size(); off += d)
        m = std::max(m, distance(rows.subspan(off, d), center));
    return m;
}

inline double max_speed(const ParticleState &st)
{
    double m = 0.0;
    for (std::size_t i = 0; i < st.n; ++i)
        m = std::max(m, norm(st.vel(i)));
    return m;
}

inline double max_radius(const ParticleState &st)
{
    double m = 0.0;
    for (std::size_t i = 0; i < st.n; ++i)
        m = std::max(m, norm(st.pos(i)));
    return m;
}

} // namespace sflock
