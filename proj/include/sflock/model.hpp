#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "kernel.hpp"
#include "state.hpp"

namespace sflock {

/// A pair whose gap fell into the singular set during a RHS evaluation.
struct BadPair
{
    std::size_t i;
    std::size_t j;
    double gap;
};

/// Scratch buffers for repeated RHS evaluations.
///
/// Rows are split into a fixed number of contiguous blocks with roughly equal
/// pair counts. The block layout depends only on n, never on the worker count,
/// and per-block partial sums are reduced in block order, so the result is
/// bit-identical for any number of threads.
class RhsWorkspace
{
  public:
    static std::size_t block_count(std::size_t n) { return std::clamp<std::size_t>(n / 8, 1, 32); }

    void prepare(std::size_t n, std::size_t d)
    {
        if (n == n_ && d == d_)
            return;
        n_ = n;
        d_ = d;
        const std::size_t blocks = block_count(n);
        bounds_.assign(blocks + 1, 0);
        const double total = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
        std::size_t row = 0;
        double acc = 0.0;
        for (std::size_t b = 1; b < blocks; ++b)
        {
            const double target = total * static_cast<double>(b) / static_cast<double>(blocks);
            while (row < n && acc < target)
            {
                acc += static_cast<double>(n - 1 - row);
                ++row;
            }
            bounds_[b] = row;
        }
        bounds_[blocks] = n;
        partial.assign(blocks, std::vector<double>(n * d, 0.0));
        dissipation.assign(blocks, 0.0);
        bad.assign(blocks, std::nullopt);
    }

    std::size_t blocks() const { return partial.size(); }
    std::size_t block_begin(std::size_t b) const { return bounds_[b]; }
    std::size_t block_end(std::size_t b) const { return bounds_[b + 1]; }

    std::vector<std::vector<double>> partial;
    std::vector<double> dissipation;
    std::vector<std::optional<BadPair>> bad;

  private:
    std::size_t n_{0};
    std::size_t d_{0};
    std::vector<std::size_t> bounds_;
};

namespace detail {

inline void rhs_block(const KernelSpec &k, const ParticleState &st, std::size_t row_begin, std::size_t row_end,
                      std::vector<double> &acc, double &diss, std::optional<BadPair> &bad)
{
    const std::size_t n = st.n;
    const std::size_t d = st.d;
    std::fill(acc.begin(), acc.end(), 0.0);
    diss = 0.0;
    bad.reset();
    const double *x = st.x.data();
    const double *v = st.v.data();
    double local[8];
    std::vector<double> heap;
    double *row_acc = local;
    if (d > 8)
    {
        heap.resize(d);
        row_acc = heap.data();
    }
    for (std::size_t i = row_begin; i < row_end; ++i)
    {
        std::fill(row_acc, row_acc + d, 0.0);
        const double *xi = x + i * d;
        const double *vi = v + i * d;
        for (std::size_t j = i + 1; j < n; ++j)
        {
            const double *xj = x + j * d;
            const double *vj = v + j * d;
            double r2 = 0.0;
            double w2 = 0.0;
            for (std::size_t a = 0; a < d; ++a)
            {
                const double dxa = xi[a] - xj[a];
                const double dva = vj[a] - vi[a];
                r2 += dxa * dxa;
                w2 += dva * dva;
            }
            const double gap = std::sqrt(r2);
            const double shifted = gap - k.delta;
            if (!(shifted > 0.0))
            {
                if (!bad)
                    bad = BadPair{i, j, gap};
                continue;
            }
            const double weight = weight_of_shifted(k.alpha, shifted);
            diss += weight * w2;
            double *accj = acc.data() + j * d;
            for (std::size_t a = 0; a < d; ++a)
            {
                const double f = weight * (vj[a] - vi[a]);
                row_acc[a] += f;
                accj[a] -= f;
            }
        }
        double *acci = acc.data() + i * d;
        for (std::size_t a = 0; a < d; ++a)
            acci[a] += row_acc[a];
    }
}

} // namespace detail

/// Velocity derivative of the (delta-)Cucker-Smale system, written into dv:
///   dv_i = (1/N) sum_{j != i} psi_delta(|x_i - x_j|) (v_j - v_i).
/// Each unordered pair is visited once and applied antisymmetrically. If
/// dissipation is non-null it receives (1/N^2) sum_{i != j} psi_delta |v_i - v_j|^2.
/// Returns the first offending pair (in row order) instead of throwing.
inline std::optional<BadPair> evaluate_rhs(const KernelSpec &k, const ParticleState &st, std::vector<double> &dv,
                                           double *dissipation, RhsWorkspace &ws, unsigned threads = 1)
{
    const std::size_t n = st.n;
    const std::size_t d = st.d;
    ws.prepare(n, d);
    const std::size_t blocks = ws.blocks();
    auto run_block = [&](std::size_t b) {
        detail::rhs_block(k, st, ws.block_begin(b), ws.block_end(b), ws.partial[b], ws.dissipation[b], ws.bad[b]);
    };
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), blocks);
    if (workers <= 1)
    {
        for (std::size_t b = 0; b < blocks; ++b)
            run_block(b);
    }
    else
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t b = w; b < blocks; b += workers)
                    run_block(b);
            });
        for (std::size_t b = 0; b < blocks; b += workers)
            run_block(b);
    }

    for (std::size_t b = 0; b < blocks; ++b)
        if (ws.bad[b])
            return ws.bad[b];

    dv.assign(n * d, 0.0);
    double diss = 0.0;
    for (std::size_t b = 0; b < blocks; ++b)
    {
        const std::vector<double> &p = ws.partial[b];
        for (std::size_t e = 0; e < dv.size(); ++e)
            dv[e] += p[e];
        diss += ws.dissipation[b];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double &e : dv)
        e *= inv_n;
    if (dissipation)
        *dissipation = 2.0 * diss * inv_n * inv_n;
    return std::nullopt;
}

/// Right-hand side of the (delta-)CS system. Throws PairDomainError naming the
/// offending pair when any gap is <= delta.
inline StateDerivative rhs(const KernelSpec &k, const ParticleState &st, unsigned threads = 1)
{
    RhsWorkspace ws;
    StateDerivative out;
    out.dx = st.v;
    if (auto bad = evaluate_rhs(k, st, out.dv, nullptr, ws, threads))
        throw PairDomainError(bad->i, bad->j, bad->gap, k.delta);
    return out;
}

struct FlockingCondition
{
    bool holds{false};
    /// RHS minus LHS of the sufficient condition; +infinity when the tail
    /// integral of psi diverges (alpha <= 1).
    double margin{0.0};
    double velocity_spread{0.0};
    double position_spread{0.0};
};

/// Sufficient condition for exponential flocking:
///   ||v - v_c||_inf < 1/2 * int_{2 ||x - x_c||_inf}^inf psi_delta(s) ds
/// where ||.||_inf is the max over particles of the Euclidean norm.
inline FlockingCondition flocking_condition(const KernelSpec &k, const ParticleState &st)
{
    k.validate();
    require_admissible(k, st);
    const std::vector<double> xc = mean_position(st);
    const std::vector<double> vc = mean_velocity(st);
    FlockingCondition out;
    out.position_spread = max_deviation(st.x, st.d, xc);
    out.velocity_spread = max_deviation(st.v, st.d, vc);
    if (k.delta > 0.0 && !(out.position_spread > k.delta))
        throw DomainError("flocking condition with delta > 0 requires ||x - x_c||_inf > delta");

    if (k.alpha <= 1.0)
    {
        out.holds = true;
        out.margin = std::numeric_limits<double>::infinity();
        return out;
    }
    // int_{L}^inf (s - delta)^(-alpha) ds = -Psi(L - delta) for alpha > 1.
    const double lower = 2.0 * out.position_spread - k.delta;
    const double tail = -psi_primitive(k, lower);
    out.margin = 0.5 * tail - out.velocity_spread;
    out.holds = out.margin > 0.0;
    return out;
}

} // namespace sflock
