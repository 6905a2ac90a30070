#pragma once

#include <cmath>
#include <string>

#include "errors.hpp"

namespace sflock {

/// Communication weight psi_delta(s) = (s - delta)^(-alpha).
///
/// delta = 0 gives the plain singular weight s^(-alpha); delta > 0 moves the
/// singular set from {0} to [0, delta].
struct KernelSpec
{
    double alpha{1.0};
    double delta{0.0};

    void validate() const
    {
        if (!(alpha > 0.0) || !std::isfinite(alpha))
            throw ConfigError("kernel alpha must be a finite positive number, got " + std::to_string(alpha));
        if (!(delta >= 0.0) || !std::isfinite(delta))
            throw ConfigError("kernel delta must be finite and nonnegative, got " + std::to_string(delta));
    }

    friend bool operator==(const KernelSpec &, const KernelSpec &) = default;
};

/// Weight evaluated on an already shifted argument r = s - delta > 0.
/// Hot path of the pair loop; no domain checks.
inline double weight_of_shifted(double alpha, double r) noexcept
{
    if (alpha == 1.0)
        return 1.0 / r;
    if (alpha == 2.0)
        return 1.0 / (r * r);
    return std::pow(r, -alpha);
}

inline double kernel_eval(const KernelSpec &k, double s)
{
    if (!(s > k.delta))
        throw DomainError("kernel argument " + std::to_string(s) + " is inside the singular set [0, " +
                          std::to_string(k.delta) + "]");
    return weight_of_shifted(k.alpha, s - k.delta);
}

/// Primitive of s^(-alpha): ln(s) for alpha = 1, s^(1-alpha)/(1-alpha) otherwise.
/// Taken in the unshifted variable; callers apply the delta shift.
inline double psi_primitive(const KernelSpec &k, double s)
{
    if (!(s > 0.0))
        throw DomainError("primitive argument must be positive, got " + std::to_string(s));
    if (k.alpha == 1.0)
        return std::log(s);
    const double p = 1.0 - k.alpha;
    return std::pow(s, p) / p;
}

/// Limit of the primitive at 0+: -infinity for alpha >= 1, 0 below.
inline double psi_primitive_at_zero(const KernelSpec &k) noexcept
{
    return k.alpha >= 1.0 ? -INFINITY : 0.0;
}

} // namespace sflock
