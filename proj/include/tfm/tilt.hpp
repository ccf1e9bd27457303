#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "tfm/dual.hpp"
#include "tfm/linalg.hpp"
#include "tfm/parallel.hpp"

namespace tfm {

/// The rotation that takes (κ, 0) to (κ, ρζ)/s and fixes (κ⊥, 0).
/// Row-major, s = √(1+ρ²ζ²), λ = 1/s − 1.
inline Matrix33 build_O_rho(const Vec2& kappa, double zeta, double rho) {
    if (!(rho > 0)) throw std::invalid_argument("build_O_rho: rho must be positive");
    const double s = std::sqrt(1 + rho * rho * zeta * zeta);
    const double lam = 1 / s - 1;
    const double k1 = kappa[0], k2 = kappa[1];
    const double t = rho * zeta / s;
    Matrix33 O;
    O(0, 0) = 1 + k1 * k1 * lam;
    O(0, 1) = k1 * k2 * lam;
    O(0, 2) = -k1 * t;
    O(1, 0) = k1 * k2 * lam;
    O(1, 1) = 1 + k2 * k2 * lam;
    O(1, 2) = -k2 * t;
    O(2, 0) = k1 * t;
    O(2, 1) = k2 * t;
    O(2, 2) = 1 / s;
    return O;
}

/// Radial bump: 1 on r ≤ r_U, 0 on r ≥ r_V, septic smoothstep between
/// (C³, so the third derivatives needed by the correction are continuous).
struct Cutoff {
    double r_U = 0.1;
    double r_V = 0.2;

    void validate() const {
        if (!(r_U > 0 && r_V > r_U)) throw std::invalid_argument("Cutoff: need 0 < r_U < r_V");
    }

    template <class T>
    static T step(const T& s) {
        return s * s * s * s * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)));
    }

    /// φ at planar offset (dx, dy) from the centre; exact 0 and 1 off the annulus.
    template <class T>
    T operator()(const T& dx, const T& dy) const {
        const T r2 = dx * dx + dy * dy;
        const double p = primal(r2);
        if (p <= r_U * r_U) return T(1.0);
        if (p >= r_V * r_V) return T(0.0);
        using std::sqrt;
        const T s = (sqrt(r2) - r_U) / (r_V - r_U);
        return 1.0 - step(s);
    }

    /// dφ/dr.
    double slope(double r) const {
        if (r <= r_U || r >= r_V) return 0.0;
        const double s = (r - r_U) / (r_V - r_U);
        const double q = s * (1 - s);
        return -140 * q * q * q / (r_V - r_U);
    }
};

struct MapEval {
    Vec3 value;
    Matrix33 jacobian;
};

struct MapPreconditionError : std::domain_error {
    Vec3 where;
    MapPreconditionError(const std::string& what, const Vec3& x) : std::domain_error(what), where(x) {}
};

/// f(x) = x₀ + φ O(x − x₀) + (1 − φ)(x − x₀), φ depending on x_α only.
struct TiltMap {
    Vec2 x0{{0.5, 0.5}};
    Vec2 kappa{{1, 0}};
    double zeta = 0;
    double rho = 1;
    Cutoff cutoff;
    bool incompressible = false;

    void validate() const {
        cutoff.validate();
        if (!(rho > 0)) throw std::invalid_argument("TiltMap: rho must be positive");
        if (std::abs(norm(kappa) - 1) > 1e-12) throw std::invalid_argument("TiltMap: kappa must be a unit vector");
        if (!std::isfinite(zeta)) throw std::invalid_argument("TiltMap: zeta must be finite");
    }

    double s() const { return std::sqrt(1 + rho * rho * zeta * zeta); }
    Matrix33 O() const { return build_O_rho(kappa, zeta, rho); }

    double radius(const Vec2& xa) const { return norm(xa - x0); }
    bool outside(const Vec2& xa) const {
        const Vec2 d = xa - x0;
        return dot(d, d) >= cutoff.r_V * cutoff.r_V;
    }
    bool inside_U(const Vec2& xa) const {
        const Vec2 d = xa - x0;
        return dot(d, d) <= cutoff.r_U * cutoff.r_U;
    }

    double phi(const Vec2& xa) const { return cutoff(xa[0] - x0[0], xa[1] - x0[1]); }
    Vec2 grad_phi(const Vec2& xa) const {
        const Vec2 d = xa - x0;
        const double r = norm(d);
        const double sl = cutoff.slope(r);
        return sl == 0.0 ? Vec2{} : (sl / r) * d;
    }

    /// Generic value for dual-number differentiation.
    template <class T>
    Vec<T, 3> value(const Matrix33& O, const T& x1, const T& x2, const T& x3) const {
        const T d1 = x1 - x0[0], d2 = x2 - x0[1];
        const T ph = cutoff(d1, d2);
        const Vec<T, 3> d{{d1, d2, x3}};
        Vec<T, 3> out{{x1, x2, x3}};
        for (std::size_t i = 0; i < 3; ++i) {
            T acc = T(0.0);
            for (std::size_t j = 0; j < 3; ++j) acc += (O(i, j) - (i == j ? 1.0 : 0.0)) * d[j];
            out[i] += ph * acc;
        }
        return out;
    }

    MapEval eval(const Vec3& x) const {
        if (incompressible) throw std::logic_error("TiltMap::eval: map is marked incompressible, use the corrected map");
        const Vec2 xa = planar(x);
        if (outside(xa)) return {x, Matrix33::identity()};
        const Matrix33 O = this->O();
        const Vec3 d{{x[0] - x0[0], x[1] - x0[1], x[2]}};
        const Vec3 c{{x0[0], x0[1], 0}};
        Matrix33 OmI = O - Matrix33::identity();
        if (inside_U(xa)) return {c + O * d, O};
        const double ph = phi(xa);
        const Vec2 g = grad_phi(xa);
        const Vec3 od = OmI * d;
        MapEval e;
        e.value = x + ph * od;
        e.jacobian = Matrix33::identity() + ph * OmI + outer(od, Vec3{{g[0], g[1], 0}});
        return e;
    }
};

inline MapEval eval_tilt(const TiltMap& m, const Vec3& x) { return m.eval(x); }

struct NewtonFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Damped Newton for f(x) = y started at y; any map with eval(x) -> MapEval.
template <class Map>
Vec3 newton_inverse(const Map& f, const Vec3& y, double tol = 1e-13, int max_iter = 60) {
    Vec3 x = y;
    MapEval e = f.eval(x);
    Vec3 r = e.value - y;
    double rn = norm(r);
    const double target = tol * (1 + norm(y));
    for (int it = 0; it < max_iter && rn > target; ++it) {
        const Vec3 step = inverse3(e.jacobian) * r;
        double t = 1;
        for (int k = 0; k < 30; ++k, t *= 0.5) {
            const Vec3 xn = x - t * step;
            const MapEval en = f.eval(xn);
            const Vec3 rr = en.value - y;
            if (norm(rr) < rn || k == 29) {
                x = xn;
                e = en;
                r = rr;
                break;
            }
        }
        const double prev = rn;
        rn = norm(r);
        if (rn >= prev && rn > target) throw NewtonFailure("newton_inverse: no progress");
    }
    if (rn > target) throw NewtonFailure("newton_inverse: not converged");
    return x;
}

/// Unit normal of the image of the plane through x₀ with normal (κ, 0), at
/// the image of x₀ + sτ + t e₃, τ = (−κ₂, κ₁, 0). Orientation agrees with
/// (κ, 0) when the map is the identity.
inline Vec3 pushed_normal(const TiltMap& m, double s, double t) {
    const Vec3 tau{{-m.kappa[1], m.kappa[0], 0}};
    const Vec3 x{{m.x0[0] + s * tau[0], m.x0[1] + s * tau[1], t}};
    const Matrix33 J = m.eval(x).jacobian;
    const Vec3 n = cross(J * tau, J.col(2));
    return n / norm(n);
}

// ---------------------------------------------------------------------------
// Normal-fibre ODE  ∂₃Γ = 1/(1 + PΓ + QΓ²), Γ(0) = 0, with P, Q constant along
// the fibre.

/// Closed form: Γ + PΓ²/2 + QΓ³/3 = x₃, by Newton from x₃.
inline double gamma_closed_form(double P, double Q, double x3) {
    if (x3 == 0.0) return 0.0;
    double g = x3;
    for (int it = 0; it < 100; ++it) {
        const double J = 1 + g * (P + g * Q);
        if (!(J > 0)) throw std::domain_error("gamma_closed_form: det grad w <= 0 along the fibre");
        const double F = g * (1 + g * (P / 2 + g * Q / 3)) - x3;
        const double dg = F / J;
        g -= dg;
        if (std::abs(dg) <= 1e-16 * (1 + std::abs(g))) break;
    }
    return g;
}

/// Adaptive Dormand–Prince with dense output; Γ at each requested height.
inline std::vector<double> gamma_runge_kutta(double P, double Q, std::span<const double> x3, double tol) {
    namespace ode = boost::numeric::odeint;
    using State = std::array<double, 1>;
    std::vector<double> out(x3.size(), 0.0);
    for (int sign : {1, -1}) {
        std::vector<std::pair<double, std::size_t>> req;
        for (std::size_t i = 0; i < x3.size(); ++i)
            if (sign * x3[i] > 0) req.push_back({sign * x3[i], i});
        if (req.empty()) continue;
        std::sort(req.begin(), req.end());
        std::vector<double> times{0.0};
        for (const auto& r : req) times.push_back(r.first);
        // τ = sign·x₃ runs forward; Γ̃(τ) = Γ(sign·τ).
        auto sys = [&](const State& g, State& dg, double) {
            const double J = 1 + g[0] * (P + g[0] * Q);
            if (!(J > 0)) throw std::domain_error("normal-fibre ODE: det grad w <= 0 along the fibre");
            dg[0] = sign / J;
        };
        State g{0.0};
        std::size_t k = 0;
        auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<State>());
        ode::integrate_times(stepper, sys, g, times.begin(), times.end(), std::min(0.01, times.back()),
                             [&](const State& s, double) {
                                 if (k > 0) out[req[k - 1].second] = s[0];
                                 ++k;
                             });
    }
    return out;
}

/// Per-x_α data of the corrected map: u = f(x_α,0), b = ∂₃f/det∇f there,
/// det∇w(x_α, t) = 1 + tP + t²Q.
struct ColumnData {
    Vec2 xa;
    Vec3 u;
    Matrix32 du;
    Vec3 b;
    Matrix32 db;
    double J0 = 1;
    double P = 0, Q = 0;
    Vec2 dP, dQ;
};

/// The tilt map modified along normal fibres to f̂(x) = u(x_α) + Γ(x)b(x_α)
/// so that det∇f̂ = 1.
class CorrectedTilt {
public:
    explicit CorrectedTilt(TiltMap m, double ode_tol = 1e-10) : map_(std::move(m)), tol_(ode_tol) {
        map_.validate();
        map_.incompressible = true;
        if (!(tol_ > 0)) throw std::invalid_argument("CorrectedTilt: ode tolerance must be positive");
        O_ = map_.O();
    }

    const TiltMap& base() const { return map_; }
    double ode_tol() const { return tol_; }

    /// Third derivatives of the cutoff enter ∇P, ∇Q: evaluated with D3 duals.
    ColumnData column(const Vec2& xa) const {
        ColumnData c;
        c.xa = xa;
        const D3 X1 = Seeder<D3>::seed(xa[0], 0);
        const D3 X2 = Seeder<D3>::seed(xa[1], 1);
        const Vec<D3, 3> U = map_.value(O_, X1, X2, D3(0.0));
        // ∂₃f = e₃ + φ(O − I)e₃ does not depend on x₃.
        const D3 ph = map_.cutoff(X1 - map_.x0[0], X2 - map_.x0[1]);
        Vec<D2, 3> a;
        for (std::size_t i = 0; i < 3; ++i) a[i] = (ph * (O_(i, 2) - (i == 2 ? 1.0 : 0.0)) + (i == 2 ? 1.0 : 0.0)).v;

        Vec<D2, 3> du1, du2;
        for (std::size_t i = 0; i < 3; ++i) {
            du1[i] = U[i].d[0];
            du2[i] = U[i].d[1];
        }
        const D2 J0 = det3(du1, du2, a);
        c.J0 = primal(J0);
        if (!(c.J0 >= 0.5))
            throw MapPreconditionError("incompressible correction: det grad f = " + std::to_string(c.J0) +
                                           " < 1/2 at x = (" + std::to_string(xa[0]) + ", " +
                                           std::to_string(xa[1]) + ", 0); reduce rho",
                                       Vec3{{xa[0], xa[1], 0}});
        Vec<D2, 3> b;
        for (std::size_t i = 0; i < 3; ++i) b[i] = a[i] / J0;

        Vec<D1, 3> b1, db1, db2, u1, u2;
        for (std::size_t i = 0; i < 3; ++i) {
            b1[i] = b[i].v;
            db1[i] = b[i].d[0];
            db2[i] = b[i].d[1];
            u1[i] = du1[i].v;
            u2[i] = du2[i].v;
        }
        const D1 P = det3(db1, u2, b1) + det3(u1, db2, b1);
        const D1 Q = det3(db1, db2, b1);

        for (std::size_t i = 0; i < 3; ++i) {
            c.u[i] = primal(U[i]);
            c.du(i, 0) = u1[i].v;
            c.du(i, 1) = u2[i].v;
            c.b[i] = b1[i].v;
            c.db(i, 0) = db1[i].v;
            c.db(i, 1) = db2[i].v;
        }
        c.P = P.v;
        c.Q = Q.v;
        c.dP = {{P.d[0], P.d[1]}};
        c.dQ = {{Q.d[0], Q.d[1]}};
        return c;
    }

    std::vector<double> gamma(const ColumnData& c, std::span<const double> x3) const {
        if (c.P == 0.0 && c.Q == 0.0) return {x3.begin(), x3.end()};
        return gamma_runge_kutta(c.P, c.Q, x3, tol_);
    }

    /// Value and Jacobian from a column and Γ; ∂_αΓ from the integral identity
    /// J(Γ)∂_αΓ = −(∂_αP Γ²/2 + ∂_αQ Γ³/3).
    static MapEval assemble(const ColumnData& c, double g) {
        const double J = 1 + g * (c.P + g * c.Q);
        MapEval e;
        e.value = c.u + g * c.b;
        for (std::size_t k = 0; k < 2; ++k) {
            const double dg = -(c.dP[k] * g * g / 2 + c.dQ[k] * g * g * g / 3) / J;
            e.jacobian.set_col(k, c.du.col(k) + g * c.db.col(k) + dg * c.b);
        }
        e.jacobian.set_col(2, (1 / J) * c.b);
        return e;
    }

    std::vector<MapEval> eval_column(const Vec2& xa, std::span<const double> x3) const {
        std::vector<MapEval> out(x3.size());
        if (map_.outside(xa)) {
            for (std::size_t i = 0; i < x3.size(); ++i) out[i] = {embed(xa, x3[i]), Matrix33::identity()};
            return out;
        }
        if (map_.inside_U(xa)) {
            // φ ≡ 1 near x_α: f = O(x − x₀) + x₀, Γ = x₃.
            const Vec3 c{{map_.x0[0], map_.x0[1], 0}};
            for (std::size_t i = 0; i < x3.size(); ++i) out[i] = {c + O_ * (embed(xa, x3[i]) - c), O_};
            return out;
        }
        const ColumnData c = column(xa);
        std::vector<double> g;
        try {
            g = gamma(c, x3);
        } catch (const std::domain_error& e) {
            double far = 0;
            for (double t : x3) far = std::abs(t) > std::abs(far) ? t : far;
            throw MapPreconditionError(e.what(), embed(xa, far));
        }
        for (std::size_t i = 0; i < x3.size(); ++i) out[i] = assemble(c, g[i]);
        return out;
    }

    MapEval eval(const Vec3& x) const {
        const double t = x[2];
        return eval_column(planar(x), std::span<const double>(&t, 1))[0];
    }

private:
    TiltMap map_;
    double tol_;
    Matrix33 O_;
};

inline CorrectedTilt incompressible_correct(const TiltMap& m, double ode_tol = 1e-10) {
    return CorrectedTilt(m, ode_tol);
}

/// Central-difference Jacobian of any map with eval().
template <class Map>
Matrix33 fd_jacobian(const Map& f, const Vec3& x, double h = 1e-5) {
    Matrix33 J;
    for (std::size_t k = 0; k < 3; ++k) {
        Vec3 xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        J.set_col(k, (1 / (2 * h)) * (f.eval(xp).value - f.eval(xm).value));
    }
    return J;
}

struct DetReport {
    double max_analytic = 0;  // |det∇f̂ − 1| from the assembled Jacobian
    double max_fd = 0;        // same with the central-difference Jacobian
    Vec3 worst;
    std::size_t points = 0;
};

/// |det − 1| over n×n×m cell centres of the square of half-width 1.1 r_V
/// around x₀ times (−1, 1). The difference Jacobian solves the fibre ODE
/// again at x_α ± h e_k and x₃ ± h, so it checks the integrator, not just
/// the algebra.
inline DetReport corrected_det_check(const CorrectedTilt& f, int n = 64, int m = 16, double h = 1e-5, int threads = 1) {
    const TiltMap& t = f.base();
    const double R = 1.1 * t.cutoff.r_V;
    std::vector<double> x3(m), x3fd;
    for (int k = 0; k < m; ++k) x3[k] = -1 + (k + 0.5) * 2.0 / m;
    for (double z : x3) {
        x3fd.push_back(z + h);
        x3fd.push_back(z - h);
    }
    std::vector<DetReport> rows(n);
    parallel_for(std::size_t(n), threads, [&](std::size_t i) {
        DetReport& r = rows[i];
        for (int j = 0; j < n; ++j) {
            const Vec2 xa{{t.x0[0] - R + (i + 0.5) * 2 * R / n, t.x0[1] - R + (j + 0.5) * 2 * R / n}};
            const auto centre = f.eval_column(xa, x3);
            const auto vert = f.eval_column(xa, x3fd);
            std::array<std::vector<MapEval>, 4> side;
            for (int k = 0; k < 2; ++k) {
                Vec2 p = xa, q = xa;
                p[k] += h;
                q[k] -= h;
                side[2 * k] = f.eval_column(p, x3);
                side[2 * k + 1] = f.eval_column(q, x3);
            }
            for (int k = 0; k < m; ++k) {
                Matrix33 J;
                J.set_col(0, (1 / (2 * h)) * (side[0][k].value - side[1][k].value));
                J.set_col(1, (1 / (2 * h)) * (side[2][k].value - side[3][k].value));
                J.set_col(2, (1 / (2 * h)) * (vert[2 * k].value - vert[2 * k + 1].value));
                const double ea = std::abs(det3(centre[k].jacobian) - 1);
                const double ef = std::abs(det3(J) - 1);
                r.max_analytic = std::max(r.max_analytic, ea);
                if (ef > r.max_fd) {
                    r.max_fd = ef;
                    r.worst = embed(xa, x3[k]);
                }
                ++r.points;
            }
        }
    });
    DetReport out;
    for (const auto& r : rows) {
        out.max_analytic = std::max(out.max_analytic, r.max_analytic);
        if (r.max_fd > out.max_fd) {
            out.max_fd = r.max_fd;
            out.worst = r.worst;
        }
        out.points += r.points;
    }
    return out;
}

/// Sampled diagnostics of one tilt map over V × (−1, 1).
struct TiltDiagnostics {
    double rho = 0;
    double isometry = 0;      // ‖OᵀO − I‖_max
    double tilt_ratio = 0;    // sup |(∇f)ᵢ³| / ρ, i = 1, 2
    double normal_ratio = 0;  // sup |ν₃| / ρ over the pushed jump plane
    double w1inf = 0;         // sup|f − x| + sup|∇f − I|
};

inline TiltDiagnostics diagnose_tilt(const TiltMap& m, int n = 32) {
    m.validate();
    TiltDiagnostics d;
    d.rho = m.rho;
    const Matrix33 O = m.O();
    d.isometry = max_abs(transpose(O) * O - Matrix33::identity());
    const double R = m.cutoff.r_V;
    double sup0 = 0, sup1 = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n / 2; ++k) {
                const Vec3 x{{m.x0[0] - R + (i + 0.5) * 2 * R / n, m.x0[1] - R + (j + 0.5) * 2 * R / n,
                              -1 + (k + 0.5) * 4.0 / n}};
                const MapEval e = m.eval(x);
                d.tilt_ratio = std::max({d.tilt_ratio, std::abs(e.jacobian(0, 2)) / m.rho,
                                         std::abs(e.jacobian(1, 2)) / m.rho});
                sup0 = std::max(sup0, norm(e.value - x));
                sup1 = std::max(sup1, max_abs(e.jacobian - Matrix33::identity()));
            }
    d.w1inf = sup0 + sup1;
    for (int i = 0; i <= 2 * n; ++i)
        for (int k = 0; k <= n; ++k) {
            const double s = -R + i * R / n, t = -1 + k * 2.0 / n;
            d.normal_ratio = std::max(d.normal_ratio, std::abs(pushed_normal(m, s, t)[2]) / m.rho);
        }
    return d;
}

}  // namespace tfm
