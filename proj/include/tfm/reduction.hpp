#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "tfm/densities.hpp"
#include "tfm/ext_real.hpp"
#include "tfm/optimize.hpp"
#include "tfm/parallel.hpp"

namespace tfm {

inline constexpr double rank_threshold = 1e-12;

struct ReduceBulkOptions {
    int grid = 33;       // points per coordinate of the coarse scan
    int starts = 4;      // local descents from the best grid points
    double ftol = 1e-15;
    double xtol = 1e-11;
    int max_iter = 6000;
    int threads = 1;
};

struct ReducedBulkResult {
    ExtReal value = ExtReal::infinity();
    Vec3 xi{};
    int iterations = 0;
    double residual = 0;  // final simplex diameter
    bool converged = true;
};

namespace detail {

/// Coordinates (λ, Λ, μ) ↦ ξ = λE¹ + ΛE² + μ n/|n|² when rank E = 2, else the
/// canonical basis. In incompressible mode μ is pinned to 1.
struct ThirdColumnChart {
    Vec3 t1, t2, t3;
    bool rank2 = false;

    explicit ThirdColumnChart(const Matrix32& E) {
        const Vec3 n = cross_columns(E);
        const double nn = norm(n);
        rank2 = nn >= rank_threshold;
        if (rank2) {
            t1 = E.col(0);
            t2 = E.col(1);
            t3 = n / (nn * nn);
        } else {
            t1 = {{1, 0, 0}};
            t2 = {{0, 1, 0}};
            t3 = {{0, 0, 1}};
        }
    }
    Vec3 operator()(double a, double b, double m) const { return a * t1 + b * t2 + m * t3; }
};

}  // namespace detail

/// W₀(E) = inf over ξ of W(E|ξ): coarse scan on a box bounded by
/// coercivity, then Nelder–Mead from the best grid points.
inline ReducedBulkResult reduce_bulk(const BulkDensity& W, const Matrix32& E, const ReduceBulkOptions& opts = {}) {
    ReducedBulkResult res;
    const detail::ThirdColumnChart chart(E);
    const bool incomp = W.mode == ConstraintMode::incompressible;
    const bool orient = W.mode == ConstraintMode::orientation_preserving;
    if (!chart.rank2 && (incomp || orient)) return res;  // +∞, nothing to optimize

    const auto eval = [&](double a, double b, double m) -> ExtReal {
        return W.tolerant(append_column(E, chart(a, b, m)));
    };
    constexpr double big = 1e300;

    // Box from coercivity: any ξ with W(E|ξ) ≤ V0 has |ξ| ≤ R.
    const ExtReal v0 = chart.rank2 ? eval(0, 0, 1) : eval(0, 0, 0);
    if (v0.is_infinite()) throw std::runtime_error("reduce_bulk: reference third column is not admissible");
    const double Fp_max = incomp ? W.c * (v0.value() + W.c) : (v0.value() + 1 / W.C1) / W.C1;
    const double R = std::pow(std::max(Fp_max, 0.0), 1 / W.p);

    double kt = R, mlo = -R, mhi = R;
    if (chart.rank2) {
        const Matrix22 G = transpose(E) * E;
        const double tr = G(0, 0) + G(1, 1), dt = G(0, 0) * G(1, 1) - G(0, 1) * G(1, 0);
        const double lmin = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4 * dt)));
        const double nn = norm(cross_columns(E));
        kt = R / std::sqrt(std::max(lmin, 1e-300));
        mhi = R * nn;
        mlo = orient ? 0.0 : -R * nn;
    }

    const int g = std::max(opts.grid, 3);
    const int gm = incomp ? 1 : g;
    auto coord = [&](int i, double lo, double hi) { return lo + (hi - lo) * i / (g - 1); };
    auto mu_at = [&](int k) {
        if (incomp) return 1.0;
        if (orient) return mhi * (k + 1) / gm;  // stay inside μ > 0
        return coord(k, mlo, mhi);
    };
    const std::size_t total = std::size_t(g) * g * gm;
    std::vector<double> vals(total);
    parallel_for(total, opts.threads, [&](std::size_t idx) {
        const int k = int(idx % gm), j = int((idx / gm) % g), i = int(idx / (std::size_t(gm) * g));
        vals[idx] = eval(coord(i, -kt, kt), coord(j, -kt, kt), mu_at(k)).value_or(big);
    });
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    const std::size_t ns = std::min<std::size_t>(std::max(opts.starts, 1), total);
    std::partial_sort(order.begin(), order.begin() + ns, order.end(),
                      [&](std::size_t a, std::size_t b) { return vals[a] < vals[b] || (vals[a] == vals[b] && a < b); });

    const double hstep = 2 * kt / (g - 1);
    const double mstep = incomp ? 0.0 : (mhi - mlo) / std::max(gm - 1, 1);
    double best_f = big;
    Vec3 best_xi{};
    res.converged = false;
    for (std::size_t s = 0; s < ns; ++s) {
        const std::size_t idx = order[s];
        if (vals[idx] >= big) continue;
        const int k = int(idx % gm), j = int((idx / gm) % g), i = int(idx / (std::size_t(gm) * g));
        const double a0 = coord(i, -kt, kt), b0 = coord(j, -kt, kt), m0 = mu_at(k);
        if (incomp) {
            auto f = [&](const std::array<double, 2>& x) { return eval(x[0], x[1], 1.0).value_or(big); };
            auto r = nelder_mead<2>(f, {a0, b0}, {hstep, hstep}, opts.ftol, opts.xtol, opts.max_iter);
            // One restart shakes off a collapsed simplex.
            r = nelder_mead<2>(f, r.x, {0.1 * hstep, 0.1 * hstep}, opts.ftol, opts.xtol, opts.max_iter);
            res.iterations += r.iterations;
            if (r.f < best_f) {
                best_f = r.f;
                best_xi = chart(r.x[0], r.x[1], 1.0);
                res.residual = r.diameter;
                res.converged = r.converged;
            }
        } else {
            auto f = [&](const std::array<double, 3>& x) { return eval(x[0], x[1], x[2]).value_or(big); };
            const double ms = std::min(mstep, orient ? 0.5 * m0 : mstep);
            auto r = nelder_mead<3>(f, {a0, b0, m0}, {hstep, hstep, ms}, opts.ftol, opts.xtol, opts.max_iter);
            r = nelder_mead<3>(f, r.x, {0.1 * hstep, 0.1 * hstep, 0.1 * ms}, opts.ftol, opts.xtol, opts.max_iter);
            res.iterations += r.iterations;
            if (r.f < best_f) {
                best_f = r.f;
                best_xi = chart(r.x[0], r.x[1], r.x[2]);
                res.residual = r.diameter;
                res.converged = r.converged;
            }
        }
    }
    if (best_f >= big) return res;
    res.xi = best_xi;
    res.value = W.tolerant(append_column(E, best_xi));
    return res;
}

/// W₀ for densities of the form W(F) = g(|F|², det F) with g nondecreasing in
/// |F|²: the tangential part of ξ only adds to |F|², so the infimum is a 1-D
/// problem in μ = det(E|ξ) along ξ = μ n/|n|².
inline ExtReal reduce_bulk_radial(const BulkDensity& W, const Matrix32& E, double* mu_out = nullptr) {
    if (!W.radial) throw std::invalid_argument("reduce_bulk_radial: density has no radial form");
    const Vec3 n = cross_columns(E);
    const double nn = norm(n);
    double e2 = 0;
    for (double x : E.a) e2 += x * x;
    if (nn < rank_threshold) {
        if (W.mode != ConstraintMode::unconstrained) return ExtReal::infinity();
        // Rank ≤ 1: det is 0 for every ξ, so ξ = 0 is optimal.
        if (mu_out) *mu_out = 0;
        return W.radial(e2, 0.0);
    }
    const double inv = 1 / (nn * nn);
    auto g = [&](double mu) { return W.radial(e2 + mu * mu * inv, mu); };
    if (W.mode == ConstraintMode::incompressible) {
        if (mu_out) *mu_out = 1;
        return g(1.0);
    }
    // Log-spaced scan brackets the minimum, golden section refines it.
    const bool pos = W.mode == ConstraintMode::orientation_preserving;
    double best_t = 0, best_f = std::numeric_limits<double>::infinity();
    auto mu_of = [&](double t) { return pos ? std::exp(t) : t; };
    const double lo = pos ? std::log(1e-6 * nn) : -1e3, hi = pos ? std::log(1e6 * nn) : 1e3;
    const int N = 25;
    for (int i = 0; i < N; ++i) {
        const double t = lo + (hi - lo) * i / (N - 1);
        const double f = g(mu_of(t));
        if (f < best_f) {
            best_f = f;
            best_t = t;
        }
    }
    const double h = (hi - lo) / (N - 1);
    std::uintmax_t iters = 200;
    const auto [t, f] = boost::math::tools::brent_find_minima([&](double t) { return g(mu_of(t)); }, best_t - h,
                                                              best_t + h, 40, iters);
    if (mu_out) *mu_out = mu_of(f < best_f ? t : best_t);
    return std::min(f, best_f);
}

/// Callable W₀: the radial path when available, else the scan-and-descend
/// minimizer with a coarser grid.
inline std::function<ExtReal(const Matrix32&)> reduced_bulk(const BulkDensity& W) {
    if (W.radial) return [W](const Matrix32& E) { return reduce_bulk_radial(W, E); };
    return [W](const Matrix32& E) {
        ReduceBulkOptions o;
        o.grid = 13;
        o.starts = 2;
        return reduce_bulk(W, E, o).value;
    };
}

struct ReduceSurfaceOptions {
    int grid = 1025;
    double tol = 1e-10;
};

struct ReducedSurfaceResult {
    double value = 0;
    double zeta = 0;
    double bracket = 0;  // search interval is [−bracket, bracket]
    int evaluations = 0;
};

/// Half-width K of the ζ-interval outside of which ψ(z, ν_α, ζ) exceeds ψ(z, ν_α, 0):
/// C₃√(1+ζ²) > C₄(1+|z|) rules ζ out.
inline double surface_bracket(const SurfaceDensity& psi, const Vec3& z) {
    const double r = psi.C4 * (1 + norm(z)) / psi.C3;
    return std::sqrt(std::max(r * r - 1, 0.0));
}

/// ψ₀(z, ν_α) = inf over ζ of ψ(z, ν_α, ζ).
inline ReducedSurfaceResult reduce_surface(const SurfaceDensity& psi, const Vec3& z, const Vec2& nu,
                                           const ReduceSurfaceOptions& opts = {}) {
    if (norm(z) == 0.0) throw std::domain_error("reduce_surface: jump z must be nonzero");
    ReducedSurfaceResult r;
    r.bracket = std::max(surface_bracket(psi, z), 1e-6);
    auto f = [&](double zeta) { return psi(z, {{nu[0], nu[1], zeta}}); };
    const auto m = scan_then_golden(f, -r.bracket, r.bracket, std::max(opts.grid, 3), opts.tol);
    r.zeta = m.x;
    r.value = f(m.x);
    r.evaluations = m.evaluations + 1;
    // Values alone fix a smooth minimizer only to ~√ε. Bisect on the sign of
    // the central difference instead, which resolves it to ~ε/h.
    const double h = 1e-5 * (1 + std::abs(m.x)), w = 1e-5 * (1 + std::abs(m.x));
    auto slope = [&](double x) { return f(x + h) - f(x - h); };
    double lo = m.x - w, hi = m.x + w;
    if (slope(lo) < 0 && slope(hi) > 0) {
        for (int it = 0; it < 60 && hi - lo > 1e-15 * (1 + std::abs(lo)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (slope(mid) > 0 ? hi : lo) = mid;
        }
        const double x = 0.5 * (lo + hi), v = f(x);
        if (v <= r.value * (1 + 1e-14)) {
            r.zeta = x;
            r.value = std::min(v, r.value);
        }
        r.evaluations += 124;
    }
    return r;
}

/// ψ₀ packaged as a surface density on planar normals; the (B3) constants
/// carry over (ζ = 0 keeps the upper bound, |(ν_α, ζ)| ≥ 1 the lower one).
inline SurfaceDensity reduced_surface(const SurfaceDensity& psi, const ReduceSurfaceOptions& opts = {}) {
    SurfaceDensity s = psi;
    s.name = psi.name + "_0";
    s.on_sphere = [psi, opts](const Vec3& z, const Vec3& nu) {
        const double r = std::hypot(nu[0], nu[1]);
        if (r == 0.0) return 0.0;
        return r * reduce_surface(psi, z, {{nu[0] / r, nu[1] / r}}, opts).value;
    };
    return s;
}

struct BoundReport {
    bool rank_deficient = false;
    ExtReal w0 = ExtReal::infinity();
    double c = 1;  // constant used on both sides
    double lower = 0, upper = 0;
    bool holds = false;
    std::string note;
};

/// Two-sided bound for incompressible W₀:
/// c⁻¹|E|^p + c⁻¹|E¹∧E²|^{−p} − c ≤ W₀(E) ≤ c|E|^p + c|E¹∧E²|^{−p} + c,
/// with c the density's constant scaled by 2^{|p/2−1|} to split
/// (|E|² + |n|⁻²)^{p/2} into the two powers.
inline BoundReport check_reduced_bounds(const BulkDensity& W, const Matrix32& E, const ReducedBulkResult* known = nullptr) {
    if (W.mode != ConstraintMode::incompressible)
        throw std::invalid_argument("check_reduced_bounds: density must be incompressible");
    BoundReport b;
    const double nn = norm(cross_columns(E));
    if (nn < rank_threshold) {
        b.rank_deficient = true;
        b.holds = true;
        b.note = "infinite, bound vacuous";
        return b;
    }
    b.w0 = known ? known->value : reduce_bulk(W, E).value;
    double e2 = 0;
    for (double x : E.a) e2 += x * x;
    const double p = W.p;
    b.c = W.c * std::pow(2.0, std::abs(0.5 * p - 1));
    const double Ep = std::pow(e2, 0.5 * p), Np = std::pow(nn, -p);
    b.lower = (Ep + Np) / b.c - b.c;
    b.upper = b.c * (Ep + Np) + b.c;
    if (b.w0.is_infinite()) {
        b.note = "reduced value infinite on a rank-2 matrix";
        return b;
    }
    const double v = b.w0.value(), tol = 1e-10 * std::max(1.0, v);
    b.holds = b.lower <= v + tol && v <= b.upper + tol;
    b.note = b.holds ? "bounds hold" : "bounds violated";
    return b;
}

}  // namespace tfm
