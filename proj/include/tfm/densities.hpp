#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/ext_real.hpp"
#include "tfm/linalg.hpp"
#include "tfm/membrane.hpp"
#include "tfm/parallel.hpp"

namespace tfm {

/// Stored energy W on 3×3 matrices with its constraint mode and growth data.
struct BulkDensity {
    std::string name;
    ConstraintMode mode = ConstraintMode::unconstrained;
    double p = 2;
    double C1 = 1;  // W ≥ C1|F|^p − 1/C1 where finite
    double c = 1;   // incompressible: c⁻¹|F|^p − c ≤ W ≤ c|F|^p + c
    std::function<double(double)> c_delta;              // W ≤ c_δ(1+|F|^p) when det F ≥ δ
    std::function<double(const Matrix33&)> finite_branch;  // value where the constraint holds
    /// Optional: W(F) = radial(|F|², det F). Enables the 1-D reduction path.
    std::function<double(double, double)> radial;

    static constexpr double det_tol = 1e-10;

    /// Exact constraint test: incompressible mode is finite only for det F == 1.
    ExtReal operator()(const Matrix33& F) const {
        const double d = det3(F);
        if (mode == ConstraintMode::orientation_preserving && !(d > 0)) return ExtReal::infinity();
        if (mode == ConstraintMode::incompressible && d != 1.0) return ExtReal::infinity();
        return finite_branch(F);
    }

    /// Same, with |det F − 1| ≤ tol accepted in incompressible mode.
    ExtReal tolerant(const Matrix33& F, double tol = det_tol) const {
        const double d = det3(F);
        if (mode == ConstraintMode::orientation_preserving && !(d > 0)) return ExtReal::infinity();
        if (mode == ConstraintMode::incompressible && !(std::abs(d - 1.0) <= tol)) return ExtReal::infinity();
        return finite_branch(F);
    }
};

/// Jump energy ψ(z, ν), stored on unit ν and extended 1-homogeneously.
struct SurfaceDensity {
    std::string name;
    std::function<double(const Vec3&, const Vec3&)> on_sphere;  // ν unit
    std::function<double(const Vec3&)> phi;
    double C2 = 1, C3 = 1, C4 = 1;
    std::function<double(double)> sigma;

    double operator()(const Vec3& z, const Vec3& nu) const {
        if (norm(z) == 0.0) throw std::domain_error(name + ": jump z must be nonzero");
        const double r = norm(nu);
        if (r == 0.0) return 0.0;
        return r * on_sphere(z, nu / r);
    }
};

/// ψ_ρ(z, ν) = ψ(z, ν₁, ν₂, ν₃/ρ).
inline double eval_psi_rho(const SurfaceDensity& psi, const Vec3& z, const Vec3& nu, double rho) {
    if (!(rho > 0)) throw std::domain_error("eval_psi_rho: rho must be positive");
    return psi(z, {{nu[0], nu[1], nu[2] / rho}});
}

inline double frob_pow(const Matrix33& F, double p) {
    double s = 0;
    for (double x : F.a) s += x * x;
    return std::pow(s, 0.5 * p);
}

// ---------------------------------------------------------------- catalog

/// |F|^p + 1/det F for det F > 0, +∞ otherwise.
inline BulkDensity orient_power(double p = 2) {
    if (!(p > 1)) throw std::invalid_argument("ORIENT_POWER: p must exceed 1");
    BulkDensity W;
    W.name = "ORIENT_POWER";
    W.mode = ConstraintMode::orientation_preserving;
    W.p = p;
    W.C1 = 0.5;
    W.c_delta = [](double delta) { return 2 + 1 / delta; };
    W.finite_branch = [p](const Matrix33& F) { return frob_pow(F, p) + 1 / det3(F); };
    W.radial = [p](double n2, double d) { return std::pow(n2, 0.5 * p) + 1 / d; };
    return W;
}

/// |F|^p on det F = 1, +∞ otherwise.
inline BulkDensity incomp_power(double p = 2) {
    if (!(p > 1)) throw std::invalid_argument("INCOMP_POWER: p must exceed 1");
    BulkDensity W;
    W.name = "INCOMP_POWER";
    W.mode = ConstraintMode::incompressible;
    W.p = p;
    W.c = 1;
    W.finite_branch = [p](const Matrix33& F) { return frob_pow(F, p); };
    W.radial = [p](double n2, double) { return std::pow(n2, 0.5 * p); };
    return W;
}

inline double quad_phi(double t, double cap) { return 1 + std::min(t, cap); }

/// φ(|z|)·√(νᵀQν) with φ(t) = 1 + min(t, cap), i.e. φ(|z|)|Mν| for Q = MᵀM.
/// The default cap 1/2 gives φ(1) = 3/2. `q_of_z` optionally replaces Q by an
/// even function of z.
inline SurfaceDensity surf_quad(const Matrix33& Q, double cap = 0.5,
                                std::function<Matrix33(const Vec3&)> q_of_z = nullptr) {
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (Q(i, j) != Q(j, i)) throw std::invalid_argument("SURF_QUAD: Q must be symmetric");
    const Vec3 ev = symmetric_eigenvalues(Q);
    if (!(ev[0] > 0)) throw std::invalid_argument("SURF_QUAD: Q must be positive definite");
    if (!(cap > 0)) throw std::invalid_argument("SURF_QUAD: cap must be positive");
    SurfaceDensity s;
    s.name = "SURF_QUAD";
    s.phi = [cap](const Vec3& z) { return quad_phi(norm(z), cap); };
    s.on_sphere = [Q, cap, q_of_z](const Vec3& z, const Vec3& nu) {
        const Matrix33 M = q_of_z ? q_of_z(z) : Q;
        return quad_phi(norm(z), cap) * std::sqrt(dot(nu, M * nu));
    };
    s.C2 = std::max(2.0, 1 + cap);
    s.C3 = std::sqrt(ev[0]);
    s.C4 = std::sqrt(ev[2]);
    s.sigma = [cap](double t) { return 0.5 * std::min(t, cap); };
    return s;
}

/// ψ = |ν|, the jump-independent (Griffith) energy.
inline SurfaceDensity griffith() {
    SurfaceDensity s;
    s.name = "GRIFFITH";
    s.phi = [](const Vec3&) { return 1.0; };
    s.on_sphere = [](const Vec3&, const Vec3&) { return 1.0; };
    s.sigma = [](double) { return 0.0; };
    return s;
}

/// ψ = |z||ν|: vanishes for small openings, so it has no positive lower bound.
inline SurfaceDensity barenblatt_counterexample() {
    SurfaceDensity s;
    s.name = "BARENBLATT";
    s.phi = [](const Vec3&) { return 1.0; };
    s.on_sphere = [](const Vec3& z, const Vec3&) { return norm(z); };
    s.sigma = [](double t) { return t; };
    return s;
}

// ------------------------------------------------------------- validators

struct HypothesisCheck {
    std::string name;
    bool passed = true;
    std::size_t tested = 0;
    std::size_t failures = 0;
    double worst = 0;      // largest violation margin seen (≤ 0 when passing)
    std::string witness;   // first failing sample, if any
};

struct ValidationReport {
    std::string subject;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    std::vector<HypothesisCheck> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
    const HypothesisCheck& at(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return c;
        throw std::out_of_range("no check named " + name);
    }
};

namespace detail {

/// Per-sample generator so results do not depend on the thread count.
inline std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t i, std::uint64_t stream) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(i), std::uint32_t(i >> 32),
                      std::uint32_t(stream)};
    return std::mt19937_64(seq);
}

/// Violation margins per sample (≤ 0 means satisfied), folded into a check.
struct Tally {
    std::vector<double> margin;
    std::vector<std::string> witness;
    explicit Tally(std::size_t n) : margin(n, -1.0), witness(n) {}

    HypothesisCheck fold(const std::string& name) const {
        HypothesisCheck c;
        c.name = name;
        c.worst = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < margin.size(); ++i) {
            if (std::isnan(margin[i])) continue;  // sample not applicable
            ++c.tested;
            c.worst = std::max(c.worst, margin[i]);
            if (margin[i] > 0) {
                ++c.failures;
                if (c.witness.empty()) c.witness = witness[i];
            }
        }
        c.passed = c.failures == 0;
        return c;
    }
};

inline Matrix33 random_matrix(std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> N(0, 1);
    Matrix33 F;
    for (auto& x : F.a) x = scale * N(rng);
    return F;
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> U(std::log(lo), std::log(hi));
    return std::exp(U(rng));
}

inline Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> N(0, 1);
    Vec3 v{{N(rng), N(rng), N(rng)}};
    return v / norm(v);
}

template <class T>
std::string describe(const T& x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace detail

/// Sampled check of the bulk hypotheses against the declared constants.
/// Orientation/unconstrained: (A1) continuity, (A2) infinity set, (A3)
/// coercivity, (A4) growth. Incompressible: (Ã1), (Ã2-inf), (Ã2-bounds),
/// sampled on SL(3) with the 1e−10 determinant tolerance.
inline ValidationReport validate_bulk(const BulkDensity& W, std::size_t samples, std::uint64_t seed, int threads = 1) {
    using namespace detail;
    if (samples < 1) throw std::invalid_argument("validate_bulk: samples must be >= 1");
    ValidationReport rep{W.name, seed, samples, {}};
    const double p = W.p;
    const bool incomp = W.mode == ConstraintMode::incompressible;

    Tally cont(samples), inf_set(samples), nonneg(samples), coerc(samples), growth(samples);
    parallel_for(samples, threads, [&](std::size_t i) {
        auto rng = sample_rng(seed, i, 1);
        const double scale = log_uniform(rng, 0.05, 5.0);
        Matrix33 F = random_matrix(rng, scale);
        std::uniform_real_distribution<double> U(0, 1);

        if (incomp) {
            // Infinity set: a generic matrix has det ≠ 1 and must give +∞; an
            // exactly unimodular diagonal matrix must stay finite.
            const double d = det3(F);
            const bool inf = W(F).is_infinite();
            const int k = std::uniform_int_distribution<int>(-4, 4)(rng);
            Matrix33 Dg;
            Dg(0, 0) = std::ldexp(1.0, k);
            Dg(1, 1) = std::ldexp(1.0, -k);
            Dg(2, 2) = 1.0;
            const bool ok = (d != 1.0) == inf && W(Dg).is_finite();
            inf_set.margin[i] = ok ? -1.0 : 1.0;
            if (!ok) inf_set.witness[i] = describe(F);

            // Project to SL(3).
            if (d < 0) F.set_col(0, -1.0 * F.col(0));
            F = (1.0 / std::cbrt(std::abs(d))) * F;
        }

        const double Fp = frob_pow(F, p);
        const ExtReal w = incomp ? W.tolerant(F) : W(F);
        const double d = det3(F);

        if (!incomp) {
            const bool ok = (W.mode == ConstraintMode::orientation_preserving) ? (d <= 0) == w.is_infinite()
                                                                              : w.is_finite();
            inf_set.margin[i] = ok ? -1.0 : 1.0;
            if (!ok) inf_set.witness[i] = describe(F);
        }
        if (w.is_infinite()) {
            nonneg.margin[i] = coerc.margin[i] = growth.margin[i] = cont.margin[i] = std::nan("");
            return;
        }
        const double v = w.value();
        const double tol = 1e-12 * std::max(1.0, std::abs(v));
        nonneg.margin[i] = -v - tol;
        if (nonneg.margin[i] > 0) nonneg.witness[i] = describe(F);

        if (incomp) {
            const double lo = Fp / W.c - W.c, hi = W.c * Fp + W.c;
            coerc.margin[i] = std::max(lo - v, v - hi) - tol;
        } else {
            coerc.margin[i] = W.C1 * Fp - 1 / W.C1 - v - tol;
        }
        if (coerc.margin[i] > 0) coerc.witness[i] = describe(F);

        if (!incomp && W.c_delta) {
            double m = std::nan("");
            for (double delta : {0.01, 0.1, 0.5, 1.0, 2.0})
                if (d >= delta) {
                    const double mm = v - W.c_delta(delta) * (1 + Fp) - tol;
                    m = std::isnan(m) ? mm : std::max(m, mm);
                }
            growth.margin[i] = m;
            if (m > 0) growth.witness[i] = describe(F);
        } else {
            growth.margin[i] = std::nan("");
        }

        // Continuity: the change under a perturbation of size h must shrink
        // with h. Incompressible perturbations stay on SL(3).
        const Matrix33 X = random_matrix(rng, 1.0);
        auto perturbed = [&](double h) {
            Matrix33 G = F + h * (F * X);
            if (incomp) G = (1.0 / std::cbrt(det3(G))) * G;
            return G;
        };
        auto val = [&](const Matrix33& G) {
            const ExtReal e = incomp ? W.tolerant(G) : W(G);
            return e.value_or(std::numeric_limits<double>::max());
        };
        if (!incomp && W.mode == ConstraintMode::orientation_preserving && d < 1e-3 * std::pow(norm(F), 3)) {
            cont.margin[i] = std::nan("");
            return;
        }
        const double d1 = std::abs(val(perturbed(1e-4)) - v);
        const double d2 = std::abs(val(perturbed(1e-7)) - v);
        cont.margin[i] = d2 - (0.05 * d1 + 1e-11 * std::max(1.0, std::abs(v)));
        if (cont.margin[i] > 0) cont.witness[i] = describe(F);
    });

    if (incomp) {
        rep.checks.push_back(cont.fold("~A1 continuity"));
        rep.checks.push_back(inf_set.fold("~A2 infinite iff det != 1"));
        rep.checks.push_back(nonneg.fold("nonnegative"));
        rep.checks.push_back(coerc.fold("~A2 two-sided growth"));
    } else {
        rep.checks.push_back(cont.fold("A1 continuity"));
        rep.checks.push_back(inf_set.fold(W.mode == ConstraintMode::orientation_preserving ? "A2 infinite iff det <= 0"
                                                                                           : "A2 finite everywhere"));
        rep.checks.push_back(nonneg.fold("nonnegative"));
        rep.checks.push_back(coerc.fold("A3 coercivity"));
        if (W.c_delta) rep.checks.push_back(growth.fold("A4 growth"));
    }
    return rep;
}

/// Sampled check of (B1)–(B5), the two-sided φ bound and 1-homogeneity.
/// With `planar`, normals are drawn with ν₃ = 0 (for reduced densities).
inline ValidationReport validate_surface(const SurfaceDensity& psi, std::size_t samples, std::uint64_t seed,
                                         bool planar = false, int threads = 1) {
    using namespace detail;
    if (samples < 1) throw std::invalid_argument("validate_surface: samples must be >= 1");
    ValidationReport rep{psi.name, seed, samples, {}};
    Tally homog(samples), b1(samples), b2a(samples), b2b(samples), b3phi(samples), b3(samples), b4(samples),
        b5(samples);

    parallel_for(samples, threads, [&](std::size_t i) {
        auto rng = sample_rng(seed, i, 2);
        std::uniform_real_distribution<double> U(0, 1);
        auto draw_nu = [&] {
            Vec3 v = random_unit(rng);
            if (planar) {
                v[2] = 0;
                v = v / norm(v);
            }
            return v;
        };
        auto draw_z = [&] { return log_uniform(rng, 1e-3, 1e2) * random_unit(rng); };
        const Vec3 z = draw_z();
        const Vec3 nu = draw_nu();
        const double v = psi(z, nu);
        const double tol = 1e-12 * std::max(1.0, v);

        {
            double m = -1;
            for (double t : {0.0, 0.5, 1.0, 3.0, 5.0 * U(rng)}) {
                const double lhs = psi(z, t * nu), rhs = t * v;
                m = std::max(m, std::abs(lhs - rhs) - 1e-12 * std::max(1.0, std::abs(rhs)));
            }
            homog.margin[i] = m;
            if (m > 0) homog.witness[i] = "z=" + describe(z) + " nu=" + describe(nu);
        }
        {
            const Vec3 z2 = z + log_uniform(rng, 1e-6, 1.0) * norm(z) * random_unit(rng);
            if (norm(z2) > 0) {
                const double v2 = psi(z2, nu);
                const double bound = psi.sigma(norm(z - z2)) * (v + v2);
                b1.margin[i] = std::abs(v - v2) - bound - 1e-12 * (v + v2);
                if (b1.margin[i] > 0) b1.witness[i] = "z1=" + describe(z) + " z2=" + describe(z2);
            } else {
                b1.margin[i] = std::nan("");
            }
        }
        {
            // |z1| ≤ |z2| ⇒ ψ(z1) ≤ C2 ψ(z2)
            const Vec3 za = draw_z(), zb = draw_z();
            const Vec3& z1 = norm(za) <= norm(zb) ? za : zb;
            const Vec3& z2 = norm(za) <= norm(zb) ? zb : za;
            const double v1 = psi(z1, nu), v2 = psi(z2, nu);
            b2a.margin[i] = v1 - psi.C2 * v2 - 1e-12 * std::max(1.0, v1);
            if (b2a.margin[i] > 0) b2a.witness[i] = "z1=" + describe(z1) + " z2=" + describe(z2);
        }
        {
            // C2|z1| ≤ |z2| ⇒ ψ(z1) ≤ ψ(z2), sampled on its own pairs.
            const Vec3 z1 = draw_z();
            const Vec3 z2 = psi.C2 * norm(z1) * (1 + 3 * U(rng)) * random_unit(rng);
            const double v1 = psi(z1, nu), v2 = psi(z2, nu);
            b2b.margin[i] = v1 - v2 - 1e-12 * std::max(1.0, v1);
            if (b2b.margin[i] > 0) b2b.witness[i] = "z1=" + describe(z1) + " z2=" + describe(z2);
        }
        {
            const double ph = psi.phi(z);
            b3phi.margin[i] = std::max(1 - ph, ph - (1 + norm(z))) - 1e-12;
            if (b3phi.margin[i] > 0) b3phi.witness[i] = "z=" + describe(z);
            b3.margin[i] = std::max(psi.C3 * ph - v, v - psi.C4 * ph) - tol;
            if (b3.margin[i] > 0) b3.witness[i] = "z=" + describe(z) + " nu=" + describe(nu) + " psi=" + describe(v);
        }
        {
            b4.margin[i] = std::abs(psi(-1.0 * z, -1.0 * nu) - v) - tol;
            if (b4.margin[i] > 0) b4.witness[i] = "z=" + describe(z) + " nu=" + describe(nu);
        }
        {
            // Upper semicontinuity: values along a sequence converging to
            // (z, ν) may not end above ψ(z, ν).
            const Vec3 dz = random_unit(rng), dn = random_unit(rng);
            double last = 0;
            for (double h : {1e-3, 1e-5, 1e-7, 1e-9}) {
                Vec3 nn = nu + h * dn;
                if (planar) nn[2] = 0;
                last = psi(z + h * norm(z) * dz, nn);
            }
            b5.margin[i] = last - v - 1e-6 * std::max(1.0, v);
            if (b5.margin[i] > 0) b5.witness[i] = "z=" + describe(z) + " nu=" + describe(nu);
        }
    });
    rep.checks.push_back(homog.fold("1-homogeneity"));
    rep.checks.push_back(b1.fold("B1 continuity modulus"));
    rep.checks.push_back(b2a.fold("B2 monotone (|z1|<=|z2|)"));
    rep.checks.push_back(b2b.fold("B2 monotone (C2|z1|<=|z2|)"));
    rep.checks.push_back(b3phi.fold("B3 1 <= phi <= 1+|z|"));
    rep.checks.push_back(b3.fold("B3 C3 phi <= psi <= C4 phi"));
    rep.checks.push_back(b4.fold("B4 symmetry"));
    rep.checks.push_back(b5.fold("B5 upper semicontinuity"));
    return rep;
}

}  // namespace tfm
