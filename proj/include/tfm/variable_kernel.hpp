#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/special_functions/expint.hpp>

#include "tfm/linalg.hpp"
#include "tfm/membrane.hpp"
#include "tfm/quadrature.hpp"

namespace tfm {

/// Smooth distance surrogate d = (Σ dᵢ^{−q})^{−1/q} over segment distances dᵢ.
/// dist·m^{−1/q} ≤ d ≤ dist, so q ≥ log₂ m gives dist/2 ≤ d ≤ dist, and
/// ∇d = Σ (d/dᵢ)^{q+1}∇dᵢ has |∇d| ≤ 1. Larger q bends harder where two
/// segments compete (|∇²d| ~ q/dist), so q is the smallest admissible value.
struct RegularizedDistance {
    std::vector<std::pair<Vec2, Vec2>> segments;
    double q = 2;

    static RegularizedDistance of(std::vector<std::pair<Vec2, Vec2>> segs) {
        if (segs.empty()) throw std::invalid_argument("RegularizedDistance: empty crack set");
        RegularizedDistance d;
        d.q = std::max(2.0, std::log2(double(segs.size())));
        d.segments = std::move(segs);
        return d;
    }

    static std::pair<double, Vec2> segment(const Vec2& x, const Vec2& a, const Vec2& b) {
        const Vec2 ab = b - a;
        const double L2 = dot(ab, ab);
        const double t = L2 > 0 ? std::clamp(dot(x - a, ab) / L2, 0.0, 1.0) : 0.0;
        const Vec2 r = x - (a + t * ab);
        const double n = norm(r);
        return {n, n > 0 ? r / n : Vec2{}};
    }

    double exact(const Vec2& x) const {
        double m = INFINITY;
        for (const auto& [a, b] : segments) m = std::min(m, segment(x, a, b).first);
        return m;
    }

    /// (d, ∇d); d = 0 on K.
    std::pair<double, Vec2> operator()(const Vec2& x) const {
        if (segments.size() == 1) return segment(x, segments[0].first, segments[0].second);
        std::vector<std::pair<double, Vec2>> parts;
        double dmin = INFINITY;
        for (const auto& [a, b] : segments) {
            parts.push_back(segment(x, a, b));
            dmin = std::min(dmin, parts.back().first);
        }
        if (dmin == 0) return {0.0, Vec2{}};
        // Scaled by dmin to keep the powers in range.
        double s = 0;
        for (const auto& p : parts) s += std::pow(dmin / p.first, q);
        const double d = dmin * std::pow(s, -1 / q);
        Vec2 g{};
        for (const auto& p : parts) g += std::pow(d / p.first, q + 1) * p.second;
        return {d, g};
    }
};

/// h(t) = S(t/2) with S(u) = 1/(1 + exp(1/u − 1/(1 − u))): h = 0 at 0 with all
/// derivatives, h = 1 for t ≥ 2, 0 ≤ h' ≤ 1.
struct Ramp {
    static double value(double t) {
        if (t <= 0) return 0;
        if (t >= 2) return 1;
        const double u = t / 2;
        const double z = 1 / u - 1 / (1 - u);
        if (z > 700) return 0;
        if (z < -700) return 1;
        return 1 / (1 + std::exp(z));
    }
    static double slope(double t) {
        if (t <= 0 || t >= 2) return 0;
        const double u = t / 2;
        const double z = 1 / u - 1 / (1 - u);
        if (std::abs(z) > 700) return 0;
        const double E = std::exp(-std::abs(z));
        // E/(1+E)² is symmetric in z ↦ −z.
        return 0.5 * E / ((1 + E) * (1 + E)) * (1 / (u * u) + 1 / ((1 - u) * (1 - u)));
    }
};

struct RampReport {
    double min_h = 0, max_h = 0;
    std::array<double, 4> min_d{}, max_d{};  // derivatives j = 0..3
};

/// Sampled extrema of h and its first three derivatives (higher ones by
/// differences of the analytic h').
inline RampReport ramp_report(int n = 20000) {
    RampReport r;
    r.min_d.fill(INFINITY);
    r.max_d.fill(-INFINITY);
    const double e = 1e-4;
    for (int i = 0; i <= n; ++i) {
        const double t = 2.2 * i / n;
        const double d0 = Ramp::value(t), d1 = Ramp::slope(t);
        const double d2 = (Ramp::slope(t + e) - Ramp::slope(t - e)) / (2 * e);
        const double d3 = (Ramp::slope(t + e) - 2 * d1 + Ramp::slope(t - e)) / (e * e);
        const std::array<double, 4> d{d0, d1, d2, d3};
        for (int j = 0; j < 4; ++j) {
            r.min_d[j] = std::min(r.min_d[j], d[j]);
            r.max_d[j] = std::max(r.max_d[j], d[j]);
        }
    }
    r.min_h = r.min_d[0];
    r.max_h = r.max_d[0];
    return r;
}

/// exp(−1/(1 − |y|²)) normalized on the unit disc; the mass is
/// 2π∫₀¹ r e^{−1/(1−r²)} dr = π(e^{−1} − E₁(1)).
struct Mollifier {
    static double mass() {
        static const double m = std::numbers::pi * (std::exp(-1.0) - boost::math::expint(1, 1.0));
        return m;
    }
    static double density(double r2) { return r2 >= 1 ? 0.0 : std::exp(-1 / (1 - r2)) / mass(); }
};

enum class Interp { bilinear, cubic };

/// Scalar field on a node grid over a box, bilinear in each cell, or
/// Catmull–Rom cubic (C¹ across cell edges). Outside the box it extends by
/// the nearest value.
struct GridField {
    Rect box;
    int nx = 2, ny = 2;  // nodes per direction
    std::vector<double> v;
    Interp interp = Interp::bilinear;

    template <class F>
    static GridField sample(F&& f, const Rect& box, int nx, int ny) {
        if (nx < 2 || ny < 2) throw std::invalid_argument("GridField: need at least 2 nodes per direction");
        GridField g{box, nx, ny, std::vector<double>(std::size_t(nx) * ny), Interp::bilinear};
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) g.v[std::size_t(j) * nx + i] = f(g.node(i, j));
        return g;
    }

    Vec2 node(int i, int j) const {
        return {{box.x0 + i * (box.x1 - box.x0) / (nx - 1), box.y0 + j * (box.y1 - box.y0) / (ny - 1)}};
    }
    double at(int i, int j) const { return v[std::size_t(j) * nx + i]; }

    bool contains(const Vec2& x) const { return x[0] >= box.x0 && x[0] <= box.x1 && x[1] >= box.y0 && x[1] <= box.y1; }

    struct Local {
        int i, j;
        double s, t, hx, hy;
    };
    Local locate(Vec2 x) const {
        x[0] = std::clamp(x[0], box.x0, box.x1);
        x[1] = std::clamp(x[1], box.y0, box.y1);
        const double hx = (box.x1 - box.x0) / (nx - 1), hy = (box.y1 - box.y0) / (ny - 1);
        const double fx = (x[0] - box.x0) / hx, fy = (x[1] - box.y0) / hy;
        const int i = std::clamp(int(std::floor(fx)), 0, nx - 2), j = std::clamp(int(std::floor(fy)), 0, ny - 2);
        return {i, j, fx - i, fy - j, hx, hy};
    }

    /// Catmull–Rom weights of nodes i−1..i+2 and their t-derivatives.
    static void cubic_weights(double t, std::array<double, 4>& w, std::array<double, 4>& dw) {
        const double t2 = t * t, t3 = t2 * t;
        w = {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t), 0.5 * (t3 - t2)};
        dw = {0.5 * (-3 * t2 + 4 * t - 1), 0.5 * (9 * t2 - 10 * t), 0.5 * (-9 * t2 + 8 * t + 1), 0.5 * (3 * t2 - 2 * t)};
    }
    double at_clamped(int i, int j) const { return at(std::clamp(i, 0, nx - 1), std::clamp(j, 0, ny - 1)); }

    /// Value and gradient of the cubic interpolant.
    std::pair<double, Vec2> cubic(const Vec2& x) const {
        const Local l = locate(x);
        std::array<double, 4> wx, dwx, wy, dwy;
        cubic_weights(l.s, wx, dwx);
        cubic_weights(l.t, wy, dwy);
        double v0 = 0, gx = 0, gy = 0;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                const double f = at_clamped(l.i - 1 + a, l.j - 1 + b);
                v0 += wx[a] * wy[b] * f;
                gx += dwx[a] * wy[b] * f;
                gy += wx[a] * dwy[b] * f;
            }
        Vec2 g{{gx / l.hx, gy / l.hy}};
        if (x[0] < box.x0 || x[0] > box.x1) g[0] = 0;
        if (x[1] < box.y0 || x[1] > box.y1) g[1] = 0;
        return {v0, g};
    }

    double value(const Vec2& x) const {
        if (interp == Interp::cubic) return cubic(x).first;
        const Local l = locate(x);
        return (1 - l.s) * (1 - l.t) * at(l.i, l.j) + l.s * (1 - l.t) * at(l.i + 1, l.j) +
               (1 - l.s) * l.t * at(l.i, l.j + 1) + l.s * l.t * at(l.i + 1, l.j + 1);
    }

    /// Gradient of the interpolant (zero across the clamped directions).
    Vec2 gradient(const Vec2& x) const {
        if (interp == Interp::cubic) return cubic(x).second;
        const Local l = locate(x);
        const double a = at(l.i, l.j), b = at(l.i + 1, l.j), c = at(l.i, l.j + 1), d = at(l.i + 1, l.j + 1);
        Vec2 g{{((1 - l.t) * (b - a) + l.t * (d - c)) / l.hx, ((1 - l.s) * (c - a) + l.s * (d - b)) / l.hy}};
        if (x[0] < box.x0 || x[0] > box.x1) g[0] = 0;
        if (x[1] < box.y0 || x[1] > box.y1) g[1] = 0;
        return g;
    }

    /// Largest interpolant gradient. Bilinear gradients are affine per cell,
    /// so corners give the max; the cubic one is sampled on a 4× finer lattice.
    double max_gradient() const {
        if (interp == Interp::cubic) {
            double m = 0;
            for (int j = 0; j <= 4 * (ny - 1); ++j)
                for (int i = 0; i <= 4 * (nx - 1); ++i) {
                    const Vec2 x{{box.x0 + i * (box.x1 - box.x0) / (4 * (nx - 1)), box.y0 + j * (box.y1 - box.y0) / (4 * (ny - 1))}};
                    m = std::max(m, norm(cubic(x).second));
                }
            return m;
        }
        const double hx = (box.x1 - box.x0) / (nx - 1), hy = (box.y1 - box.y0) / (ny - 1);
        double m = 0;
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i + 1 < nx; ++i) {
                const double a = at(i, j), b = at(i + 1, j), c = at(i, j + 1), d = at(i + 1, j + 1);
                for (double s : {0.0, 1.0})
                    for (double t : {0.0, 1.0})
                        m = std::max(m, std::hypot(((1 - t) * (b - a) + t * (d - c)) / hx, ((1 - s) * (c - a) + s * (d - b)) / hy));
            }
        return m;
    }
};

/// u_σ(x) = ∫_{B₁} u(x − σh(d(x))y) ρ(y) dy with polar Gauss quadrature.
struct SmoothingKernel {
    RegularizedDistance d;
    double sigma = 0.1;
    int n_r = 48;
    int n_theta = 48;
    std::vector<Vec2> y;
    std::vector<double> w;  // quadrature weight × ρ(y)

    SmoothingKernel(RegularizedDistance dist, double s, int nr = 48, int nth = 48)
        : d(std::move(dist)), sigma(s), n_r(nr), n_theta(nth) {
        if (!(sigma > 0 && sigma < 0.5)) throw std::invalid_argument("SmoothingKernel: sigma must lie in (0, 1/2)");
        const PolarRule p = polar_rule(0, 1, 0, 2 * std::numbers::pi, n_r, n_theta);
        y = p.offsets;
        for (std::size_t k = 0; k < y.size(); ++k) w.push_back(p.weights[k] * Mollifier::density(dot(y[k], y[k])));
    }

    double mass() const {
        double s = 0;
        for (double x : w) s += x;
        return s;
    }

    Vec2 translate(const Vec2& x, std::size_t k, double hd) const { return x - (sigma * hd) * y[k]; }
};

struct ConvolutionValue {
    double value = 0;
    bool flagged = false;  // some T(x) left the field box
};

template <class Field>
ConvolutionValue convolve_variable(const Field& u, const SmoothingKernel& K, const Vec2& x) {
    const double hd = Ramp::value(K.d(x).first);
    ConvolutionValue r;
    for (std::size_t k = 0; k < K.y.size(); ++k) {
        const Vec2 T = K.translate(x, k, hd);
        if (!u.contains(T)) r.flagged = true;
        r.value += K.w[k] * u.value(T);
    }
    return r;
}

struct GradientSplit {
    Vec2 grad_conv;  // (∇u)_σ
    Vec2 xi;         // ξ^σ
    bool flagged = false;
    Vec2 gradient(double sigma) const { return grad_conv + sigma * xi; }
};

/// ∇(u_σ) = (∇u)_σ + σξ^σ, ξ^σ = −h'(d)∇d ∫ (∇u(T)·y) ρ(y) dy.
template <class Field>
GradientSplit convolution_gradient_split(const Field& u, const SmoothingKernel& K, const Vec2& x) {
    const auto [dist, gd] = K.d(x);
    const double hd = Ramp::value(dist), hp = Ramp::slope(dist);
    GradientSplit r;
    double m = 0;
    for (std::size_t k = 0; k < K.y.size(); ++k) {
        const Vec2 T = K.translate(x, k, hd);
        if (!u.contains(T)) r.flagged = true;
        const Vec2 g = u.gradient(T);
        r.grad_conv += K.w[k] * g;
        m += K.w[k] * dot(g, K.y[k]);
    }
    r.xi = (-hp * m) * gd;
    return r;
}

/// ‖f‖_p over a rectangle, n×n cells with 2×2 Gauss points.
template <class F>
double lp_norm_rect(F&& f, const Rect& R, double p, int n = 32) {
    double s = 0;
    const double hx = (R.x1 - R.x0) / n, hy = (R.y1 - R.y0) / n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for_each_gauss(R.x0 + i * hx, R.x0 + (i + 1) * hx, 2, [&](double x, double wx) {
                for_each_gauss(R.y0 + j * hy, R.y0 + (j + 1) * hy, 2, [&](double yy, double wy) {
                    s += wx * wy * std::pow(std::abs(f(Vec2{{x, yy}})), p);
                });
            });
    return std::pow(s, 1 / p);
}

/// ‖f‖_p over the σ-neighbourhood of R: the cross of three rectangles plus
/// four quarter discs at the corners.
template <class F>
double lp_norm_neighbourhood(F&& f, const Rect& R, double sigma, double p, int n = 32) {
    auto pth = [&](const Rect& r, int m) {
        const double v = lp_norm_rect(f, r, p, m);
        return std::pow(v, p);
    };
    const int ns = std::max(2, int(std::ceil(n * sigma / std::max(R.x1 - R.x0, R.y1 - R.y0))));
    double s = pth({R.x0 - sigma, R.x1 + sigma, R.y0, R.y1}, n) + pth({R.x0, R.x1, R.y0 - sigma, R.y0}, ns) +
               pth({R.x0, R.x1, R.y1, R.y1 + sigma}, ns);
    const std::array<std::pair<Vec2, double>, 4> corners{{{{{R.x1, R.y1}}, 0.0},
                                                          {{{R.x0, R.y1}}, 0.5 * std::numbers::pi},
                                                          {{{R.x0, R.y0}}, std::numbers::pi},
                                                          {{{R.x1, R.y0}}, 1.5 * std::numbers::pi}}};
    for (const auto& [c, th] : corners) {
        const PolarRule q = polar_rule(0, sigma, th, th + 0.5 * std::numbers::pi, 16, 16);
        for (std::size_t k = 0; k < q.offsets.size(); ++k) s += q.weights[k] * std::pow(std::abs(f(c + q.offsets[k])), p);
    }
    return std::pow(s, 1 / p);
}

/// Sum of a few random plane waves sampled on a grid.
inline GridField random_smooth_field(std::uint64_t seed, const Rect& box, int nodes = 161, Interp interp = Interp::bilinear) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0, 1);
    std::uniform_real_distribution<double> U(0, 2 * std::numbers::pi);
    struct Wave {
        double a, kx, ky, ph;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 4; ++i) waves.push_back({N(rng), 3 * N(rng), 3 * N(rng), U(rng)});
    const double c = N(rng);
    GridField g = GridField::sample(
        [&](const Vec2& x) {
            double s = c;
            for (const auto& w : waves) s += w.a * std::sin(w.kx * x[0] + w.ky * x[1] + w.ph);
            return s;
        },
        box, nodes, nodes);
    g.interp = interp;
    return g;
}

struct DistanceReport {
    double min_ratio = INFINITY, max_ratio = 0;  // d / dist
    double max_grad = 0;                          // |∇d|
    double max_hessian = 0;                       // |∇²d| where dist ≥ 1/2
    double max_scaled_hessian = 0;                // dist·|∇²d| everywhere
    std::size_t samples = 0;
};

/// Samples dist/2 ≤ d ≤ dist and the derivative bounds, Hessian by central
/// differences of ∇d. Near a crack tip any d squeezed between dist/2 and dist
/// has |∇²d| ~ 1/dist, so the literal bound 2 is only sampled at dist ≥ 1/2
/// and the scale-free dist·|∇²d| everywhere.
inline DistanceReport check_distance(const RegularizedDistance& d, const Rect& box, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> X(box.x0, box.x1), Y(box.y0, box.y1);
    DistanceReport r;
    const double h = 1e-5;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 x{{X(rng), Y(rng)}};
        const double ex = d.exact(x);
        if (ex < 1e-3) continue;
        const auto [v, g] = d(x);
        r.min_ratio = std::min(r.min_ratio, v / ex);
        r.max_ratio = std::max(r.max_ratio, v / ex);
        r.max_grad = std::max(r.max_grad, norm(g));
        Matrix22 H;
        for (std::size_t k = 0; k < 2; ++k) {
            Vec2 p = x, q = x;
            p[k] += h;
            q[k] -= h;
            const Vec2 dg = (1 / (2 * h)) * (d(p).second - d(q).second);
            H(0, k) = dg[0];
            H(1, k) = dg[1];
        }
        r.max_scaled_hessian = std::max(r.max_scaled_hessian, ex * norm(H));
        if (ex >= 0.5) r.max_hessian = std::max(r.max_hessian, norm(H));
        ++r.samples;
    }
    return r;
}

}  // namespace tfm
