#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tfm/linalg.hpp"

namespace tfm {

/// Crack S = graph of a polynomial g over [a, b]. Ψ_δ lifts the part of the
/// strip between g and g + δ f onto the part between g + δ² f and g + δ f,
/// opening the crack into the lens Δ_δ = {g ≤ x₂ ≤ g + δ² f}. Identity
/// elsewhere. f(x₁) = scale·τ(1 − τ), τ = (x₁ − a)/(b − a).
struct CrackOpening {
    double a = 0, b = 1;
    std::vector<double> g{0.5};  // coefficients, g(x) = Σ gₖ x^k
    double scale = 1;
    double delta = 0.1;

    void validate() const {
        if (!(b > a)) throw std::invalid_argument("CrackOpening: need a < b");
        if (!(delta > 0 && delta < 1)) throw std::invalid_argument("CrackOpening: delta must lie in (0, 1)");
        if (!(scale > 0)) throw std::invalid_argument("CrackOpening: scale must be positive");
        if (g.empty()) throw std::invalid_argument("CrackOpening: empty graph polynomial");
    }

    double graph(double x) const {
        double v = 0;
        for (std::size_t k = g.size(); k-- > 0;) v = v * x + g[k];
        return v;
    }
    double graph_slope(double x) const {
        double v = 0;
        for (std::size_t k = g.size(); k-- > 1;) v = v * x + k * g[k];
        return v;
    }
    double profile(double x) const {
        const double t = (x - a) / (b - a);
        return scale * t * (1 - t);
    }
    double profile_slope(double x) const {
        const double t = (x - a) / (b - a);
        return scale * (1 - 2 * t) / (b - a);
    }

    /// Piecewise-affine φ_δ: t, (1 − δ)t + δ², t.
    double phi(double t) const { return (t > 0 && t < delta) ? (1 - delta) * t + delta * delta : t; }
    double phi_slope(double t) const { return (t > 0 && t < delta) ? 1 - delta : 1.0; }

    bool on_crack(const Vec2& x) const { return x[0] > a && x[0] < b && x[1] == graph(x[0]); }

    Vec2 operator()(const Vec2& x) const {
        if (!(x[0] > a && x[0] < b)) return x;
        const double f = profile(x[0]), gg = graph(x[0]);
        const double t = (x[1] - gg) / f;
        if (!(t > 0 && t < delta)) return x;
        return {{x[0], phi(t) * f + gg}};
    }

    Matrix22 jacobian(const Vec2& x) const {
        Matrix22 J = Matrix22::identity();
        if (!(x[0] > a && x[0] < b)) return J;
        const double f = profile(x[0]), gg = graph(x[0]);
        const double t = (x[1] - gg) / f;
        if (!(t > 0 && t < delta)) return J;
        const double fp = profile_slope(x[0]), gp = graph_slope(x[0]);
        const double ps = phi_slope(t);
        J(1, 0) = -ps * (gp + t * fp) + phi(t) * fp + gp;
        J(1, 1) = ps;
        return J;
    }

    /// Inverse on R² \ Δ_δ; throws for points inside the opened lens.
    Vec2 inverse(const Vec2& y) const {
        if (!(y[0] > a && y[0] < b)) return y;
        const double f = profile(y[0]), gg = graph(y[0]);
        const double s = (y[1] - gg) / f;
        if (s <= 0 || s >= delta) return y;
        if (s <= delta * delta) throw std::domain_error("CrackOpening::inverse: point lies in the opened lens");
        return {{y[0], (s - delta * delta) / (1 - delta) * f + gg}};
    }

    bool in_lens(const Vec2& y) const {
        if (!(y[0] > a && y[0] < b)) return false;
        const double s = (y[1] - graph(y[0])) / profile(y[0]);
        return s >= 0 && s <= delta * delta;
    }
};

inline CrackOpening open_crack(double a, double b, std::vector<double> g, double delta, double scale = 1) {
    CrackOpening c{a, b, std::move(g), scale, delta};
    c.validate();
    return c;
}

/// sup|Ψ − x| + sup|∇Ψ − I|. Ψ differs from the identity only on the strip
/// 0 < (x₂ − g)/f < δ, so the sample runs over (x₁, t) ∈ (a, b) × (0, δ).
inline double w1inf_distance(const CrackOpening& c, int n = 400) {
    double s0 = 0, s1 = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x1 = c.a + (i + 0.5) * (c.b - c.a) / n;
            const double t = (j + 0.5) * c.delta / n;
            const Vec2 x{{x1, c.graph(x1) + t * c.profile(x1)}};
            s0 = std::max(s0, norm(c(x) - x));
            s1 = std::max(s1, max_abs(c.jacobian(x) - Matrix22::identity()));
        }
    return s0 + s1;
}

}  // namespace tfm
