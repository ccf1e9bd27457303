#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/membrane.hpp"
#include "tfm/tilt.hpp"

namespace tfm {

/// Affine third-column field on one cell, b(x) = b0 + B x.
struct ColumnField {
    Vec3 b0;
    Matrix32 B;

    Vec3 at(const Vec2& x) const { return b0 + B * x; }
};

/// Constant field n/|n|², n = A¹∧A²: det(A | b) = 1 and ∇b = 0.
inline ColumnField normal_column(const Matrix32& A) {
    const Vec3 n = cross_columns(A);
    return {n / dot(n, n), Matrix32{}};
}

enum class GammaSolver { closed_form, runge_kutta };

/// Incompressible thick extension v(x) = u(x_α) + Γ(x)b(x_α) on Σ × (−ρ/2, ρ/2).
/// With u affine and b affine on a cell, det∇w = 1 + tP + t²Q has P, Q affine
/// in x_α; Γ solves ∂₃Γ = 1/(1 + PΓ + QΓ²), Γ(·,0) = 0.
class ThickExtension {
public:
    struct Local {
        std::size_t cell = 0;
        Vec3 u;
        Matrix32 A;
        Vec3 b;
        Matrix32 B;
        double P = 0, Q = 0;
        Vec2 dP, dQ;
    };

    ThickExtension(CrackedMembrane u, std::vector<ColumnField> b, double rho, GammaSolver solver = GammaSolver::closed_form,
                   double ode_tol = 1e-10)
        : u_(std::move(u)), b_(std::move(b)), rho_(rho), solver_(solver), tol_(ode_tol) {}

    double rho() const { return rho_; }
    const CrackedMembrane& membrane() const { return u_; }
    const std::vector<ColumnField>& fields() const { return b_; }

    Local local(const Vec2& xa) const {
        const auto k = u_.locate(xa);
        if (!k) throw std::out_of_range("ThickExtension: point outside every cell");
        return local_in(xa, *k);
    }

    /// Cell k's affine data continued to x_α (traces, points just outside Σ).
    Local local_in(const Vec2& xa, std::size_t k) const {
        Local l;
        l.cell = k;
        const Cell& c = u_.cells[k];
        const ColumnField& f = b_[k];
        l.u = c.eval(xa);
        l.A = c.A;
        l.b = f.at(xa);
        l.B = f.B;
        const Vec3 A1 = c.A.col(0), A2 = c.A.col(1), B1 = f.B.col(0), B2 = f.B.col(1);
        l.P = det3(B1, A2, l.b) + det3(A1, B2, l.b);
        l.Q = det3(B1, B2, l.b);
        for (std::size_t j = 0; j < 2; ++j) {
            const Vec3 Bj = f.B.col(j);
            l.dP[j] = det3(B1, A2, Bj) + det3(A1, B2, Bj);
            l.dQ[j] = det3(B1, B2, Bj);
        }
        return l;
    }

    double gamma(const Local& l, double x3) const {
        if (x3 == 0.0) return 0.0;
        if (l.P == 0.0 && l.Q == 0.0) return x3;
        if (solver_ == GammaSolver::closed_form) return gamma_closed_form(l.P, l.Q, x3);
        return gamma_runge_kutta(l.P, l.Q, std::span<const double>(&x3, 1), tol_)[0];
    }

    MapEval eval(const Vec3& x) const {
        if (std::abs(x[2]) > rho_ / 2) throw std::out_of_range("ThickExtension: |x3| exceeds rho/2");
        return assemble(local(planar(x)), x[2]);
    }

    MapEval eval_in(const Vec3& x, std::size_t k) const {
        if (std::abs(x[2]) > rho_ / 2) throw std::out_of_range("ThickExtension: |x3| exceeds rho/2");
        return assemble(local_in(planar(x), k), x[2]);
    }

    MapEval assemble(const Local& l, double x3) const {
        const double g = gamma(l, x3);
        const double J = 1 + g * (l.P + g * l.Q);
        MapEval e;
        e.value = l.u + g * l.b;
        for (std::size_t k = 0; k < 2; ++k) {
            const double dg = -(l.dP[k] * g * g / 2 + l.dQ[k] * g * g * g / 3) / J;
            e.jacobian.set_col(k, l.A.col(k) + g * l.B.col(k) + dg * l.b);
        }
        e.jacobian.set_col(2, (1 / J) * l.b);
        return e;
    }

    /// (∇u | b) at x_α.
    Matrix33 base_gradient(const Vec2& xa) const {
        const Local l = local(xa);
        return append_column(l.A, l.b);
    }

private:
    CrackedMembrane u_;
    std::vector<ColumnField> b_;
    double rho_;
    GammaSolver solver_;
    double tol_;
};

struct ExtensionError : std::domain_error {
    std::size_t cell;
    ExtensionError(const std::string& what, std::size_t k) : std::domain_error(what), cell(k) {}
};

/// Checks det(∇u | b) = 1 on every cell (affine in x, so vertices suffice) and
/// that det∇w stays in [1/2, 2] for |t| ≤ ρ/2, then builds the extension.
inline ThickExtension incompressible_extend(const CrackedMembrane& u, std::vector<ColumnField> b, double rho,
                                            GammaSolver solver = GammaSolver::closed_form, double ode_tol = 1e-10) {
    if (!(rho > 0)) throw std::invalid_argument("incompressible_extend: rho must be positive");
    if (b.size() != u.cells.size()) throw std::invalid_argument("incompressible_extend: one field per cell required");
    for (std::size_t k = 0; k < u.cells.size(); ++k) {
        const Cell& c = u.cells[k];
        const Vec3 A1 = c.A.col(0), A2 = c.A.col(1), B1 = b[k].B.col(0), B2 = b[k].B.col(1);
        for (const Vec2& p : c.polygon) {
            const Vec3 bp = b[k].at(p);
            const double d = det3(A1, A2, bp);
            if (std::abs(d - 1) > 1e-10)
                throw ExtensionError("cell " + std::to_string(k) + ": det(grad u | b) = " + std::to_string(d) +
                                         " at a vertex, expected 1",
                                     k);
            // J(t) = 1 + tP + t²Q is affine in x for fixed t: vertices bound it.
            const double P = det3(B1, A2, bp) + det3(A1, B2, bp), Q = det3(B1, B2, bp);
            std::vector<double> ts{-rho / 2, rho / 2};
            if (Q != 0 && std::abs(P / (2 * Q)) < rho / 2) ts.push_back(-P / (2 * Q));
            for (double t : ts) {
                const double J = 1 + t * (P + t * Q);
                if (!(J >= 0.5 && J <= 2))
                    throw ExtensionError("cell " + std::to_string(k) + ": det grad w = " + std::to_string(J) +
                                             " leaves [1/2, 2] within the thickness; reduce rho",
                                         k);
            }
        }
    }
    return ThickExtension(u, std::move(b), rho, solver, ode_tol);
}

/// Two cells with non-constant b and P ≠ 0 on both sides:
/// left  A = (e₁|e₂),  b = e₃ + 0.3x₁e₁ + 0.2x₂e₂        (P = 0.5,  Q = 0.06)
/// right A = ((1,0,.3)|(.2,1,0)), b = n/|n|² + λA¹ + ΛA², λ = 0.1 − 0.25x₁, Λ = 0.15x₂
///                                                      (P = −0.1, Q = −0.0375)
inline std::pair<CrackedMembrane, std::vector<ColumnField>> two_cell_extension_fixture() {
    CrackedMembrane m;
    m.domain = {0, 1, 0, 1};
    const Vec3 e1{{1, 0, 0}}, e2{{0, 1, 0}}, e3{{0, 0, 1}};
    const Matrix32 AL = Matrix32::from_cols({e1, e2});
    const Vec3 R1{{1, 0, 0.3}}, R2{{0.2, 1, 0}};
    const Matrix32 AR = Matrix32::from_cols({R1, R2});
    m.cells.push_back({{{{0, 0}}, {{0.5, 0}}, {{0.5, 1}}, {{0, 1}}}, AL, {}});
    // Right cell offset so the traces jump across x₁ = 1/2.
    m.cells.push_back({{{{0.5, 0}}, {{1, 0}}, {{1, 1}}, {{0.5, 1}}}, AR, {{0.1, 0.2, 0.4}}});
    m.jumps.push_back(make_jump(m, {{0.5, 0}}, {{0.5, 1}}, {{1, 0}}));

    std::vector<ColumnField> b(2);
    b[0].b0 = e3;
    b[0].B = Matrix32::from_cols({0.3 * e1, 0.2 * e2});
    const Vec3 n = cross(R1, R2);
    b[1].b0 = n / dot(n, n) + 0.1 * R1;
    b[1].B = Matrix32::from_cols({-0.25 * R1, 0.15 * R2});
    return {m, b};
}

struct ErrorLawPoint {
    double x3;
    double err;  // max over the planar sample of |∇v − (∇u|b)|
};

struct ErrorLaw {
    std::vector<ErrorLawPoint> points;
    double slope = 0;  // least squares in log–log
};

/// max|∇v − (∇u|b)| at heights x₃ over an n×n cell-centre sample of Σ.
inline ErrorLaw extension_error_law(const ThickExtension& v, const std::vector<double>& heights, int n = 16) {
    ErrorLaw law;
    const Rect& D = v.membrane().domain;
    for (double x3 : heights) {
        double e = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const Vec2 xa{{D.x0 + (i + 0.5) * (D.x1 - D.x0) / n, D.y0 + (j + 0.5) * (D.y1 - D.y0) / n}};
                e = std::max(e, max_abs(v.eval(embed(xa, x3)).jacobian - v.base_gradient(xa)));
            }
        law.points.push_back({x3, e});
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = double(law.points.size());
    for (const auto& p : law.points) {
        const double lx = std::log(std::abs(p.x3)), ly = std::log(p.err);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    law.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return law;
}

}  // namespace tfm
