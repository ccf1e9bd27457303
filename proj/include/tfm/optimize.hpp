#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

namespace tfm {

template <std::size_t N>
struct NelderMeadResult {
    std::array<double, N> x{};
    double f = 0;
    int iterations = 0;
    double diameter = 0;
    bool converged = false;
};

/// Derivative-free simplex descent. Stops when the simplex values agree to
/// ftol·(1+|f|) and its diameter is below xtol, or after max_iter steps.
template <std::size_t N, class F>
NelderMeadResult<N> nelder_mead(F&& f, const std::array<double, N>& x0, const std::array<double, N>& step,
                                double ftol = 1e-14, double xtol = 1e-10, int max_iter = 5000) {
    using P = std::array<double, N>;
    std::array<P, N + 1> s;
    std::array<double, N + 1> fv;
    s[0] = x0;
    for (std::size_t i = 0; i < N; ++i) {
        s[i + 1] = x0;
        s[i + 1][i] += step[i];
    }
    for (std::size_t i = 0; i <= N; ++i) fv[i] = f(s[i]);

    NelderMeadResult<N> r;
    auto order = [&] {
        std::array<std::size_t, N + 1> idx;
        for (std::size_t i = 0; i <= N; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        auto s2 = s;
        auto f2 = fv;
        for (std::size_t i = 0; i <= N; ++i) {
            s[i] = s2[idx[i]];
            fv[i] = f2[idx[i]];
        }
    };
    auto diameter = [&] {
        double d = 0;
        for (std::size_t i = 1; i <= N; ++i)
            for (std::size_t k = 0; k < N; ++k) d = std::max(d, std::abs(s[i][k] - s[0][k]));
        return d;
    };
    auto combine = [](const P& a, const P& b, double t) {
        P c;
        for (std::size_t k = 0; k < N; ++k) c[k] = a[k] + t * (b[k] - a[k]);
        return c;
    };

    const double alpha = 1, gamma = 2, rho = 0.5, sigma = 0.5;
    int it = 0;
    for (; it < max_iter; ++it) {
        order();
        double xscale = 0;
        for (double v : s[0]) xscale = std::max(xscale, std::abs(v));
        if (std::abs(fv[N] - fv[0]) <= ftol * (1 + std::abs(fv[0])) && diameter() <= xtol * (1 + xscale)) {
            r.converged = true;
            break;
        }
        P c{};
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t k = 0; k < N; ++k) c[k] += s[i][k] / N;
        const P xr = combine(c, s[N], -alpha);
        const double fr = f(xr);
        if (fr < fv[0]) {
            const P xe = combine(c, s[N], -gamma);
            const double fe = f(xe);
            if (fe < fr) {
                s[N] = xe;
                fv[N] = fe;
            } else {
                s[N] = xr;
                fv[N] = fr;
            }
        } else if (fr < fv[N - 1]) {
            s[N] = xr;
            fv[N] = fr;
        } else {
            const bool outside = fr < fv[N];
            const P xc = outside ? combine(c, xr, rho) : combine(c, s[N], rho);
            const double fc = f(xc);
            if (fc < (outside ? fr : fv[N])) {
                s[N] = xc;
                fv[N] = fc;
            } else {
                for (std::size_t i = 1; i <= N; ++i) {
                    s[i] = combine(s[0], s[i], sigma);
                    fv[i] = f(s[i]);
                }
            }
        }
    }
    order();
    r.x = s[0];
    r.f = fv[0];
    r.iterations = it;
    r.diameter = diameter();
    return r;
}

struct ScalarMin {
    double x = 0;
    double f = 0;
    int evaluations = 0;
};

/// Golden-section search on [a, b] down to an interval of width tol.
template <class F>
ScalarMin golden_section(F&& f, double a, double b, double tol) {
    const double g = 0.5 * (std::sqrt(5.0) - 1);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    int n = 2;
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        ++n;
        if (n > 400) break;
    }
    const double x = fc <= fd ? c : d;
    return {x, std::min(fc, fd), n};
}

/// Grid scan on [a, b] followed by golden refinement of the best cell.
template <class F>
ScalarMin scan_then_golden(F&& f, double a, double b, int points, double tol) {
    std::vector<double> xs(points), fs(points);
    std::size_t best = 0;
    for (int i = 0; i < points; ++i) {
        xs[i] = a + (b - a) * i / (points - 1);
        fs[i] = f(xs[i]);
        if (fs[i] < fs[best]) best = i;
    }
    const double lo = xs[best == 0 ? 0 : best - 1];
    const double hi = xs[std::min<std::size_t>(best + 1, points - 1)];
    ScalarMin g = golden_section(f, lo, hi, tol);
    g.evaluations += points;
    if (fs[best] < g.f) {
        g.x = xs[best];
        g.f = fs[best];
    }
    return g;
}

}  // namespace tfm
