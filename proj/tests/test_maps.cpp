#include <gtest/gtest.h>

#include <random>

#include "tfm/maps.hpp"

using namespace tfm;

namespace {

TiltMap sample_tilt(double zeta = 2.0, double rho = 0.1, double angle = 0.7) {
    TiltMap m;
    m.x0 = {{0.5, 0.5}};
    m.kappa = {{std::cos(angle), std::sin(angle)}};
    m.zeta = zeta;
    m.rho = rho;
    m.cutoff = {0.1, 0.2};
    return m;
}

Vec3 annulus_point(std::mt19937_64& rng, const TiltMap& m) {
    std::uniform_real_distribution<double> R(m.cutoff.r_U, m.cutoff.r_V), A(0, 2 * M_PI), T(-1, 1);
    const double r = R(rng), a = A(rng);
    return {{m.x0[0] + r * std::cos(a), m.x0[1] + r * std::sin(a), T(rng)}};
}

}  // namespace

TEST(BuildO, ZeroTiltIsIdentity) {
    const Matrix33 O = build_O_rho({{0.6, 0.8}}, 0.0, 0.3);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(O.a[i], Matrix33::identity().a[i]);
}

TEST(BuildO, ActionOnKappaAndE3) {
    const Vec2 k{{0.6, -0.8}};
    const double zeta = 3, rho = 0.2, s = std::sqrt(1 + rho * rho * zeta * zeta);
    const Matrix33 O = build_O_rho(k, zeta, rho);
    const Vec3 a = O * Vec3{{k[0], k[1], 0}};
    EXPECT_NEAR(a[0], k[0] / s, 1e-15);
    EXPECT_NEAR(a[1], k[1] / s, 1e-15);
    EXPECT_NEAR(a[2], rho * zeta / s, 1e-15);
    const Vec3 c = O.col(2);
    EXPECT_NEAR(c[0], -rho * zeta * k[0] / s, 1e-15);
    EXPECT_NEAR(c[1], -rho * zeta * k[1] / s, 1e-15);
    EXPECT_NEAR(c[2], 1 / s, 1e-15);
    // (κ⊥, 0) is fixed.
    const Vec3 p = O * Vec3{{-k[1], k[0], 0}};
    EXPECT_NEAR(p[0], -k[1], 1e-15);
    EXPECT_NEAR(p[1], k[0], 1e-15);
    EXPECT_NEAR(p[2], 0, 1e-15);
}

TEST(BuildO, OrthogonalOverRandomParameters) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> A(0, 2 * M_PI), Z(-5, 5), R(0, 1);
    for (int i = 0; i < 1000; ++i) {
        const double a = A(rng);
        const Matrix33 O = build_O_rho({{std::cos(a), std::sin(a)}}, Z(rng), R(rng) + 1e-12);
        EXPECT_LE(max_abs(transpose(O) * O - Matrix33::identity()), 1e-12);
        EXPECT_NEAR(det3(O), 1.0, 1e-12);
    }
}

TEST(Tilt, IdentityOutsideVIsExact) {
    const TiltMap m = sample_tilt();
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> U(-1, 2), T(-1, 1);
    int n = 0;
    while (n < 500) {
        const Vec3 x{{U(rng), U(rng), T(rng)}};
        if (!m.outside(planar(x))) continue;
        const MapEval e = eval_tilt(m, x);
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(e.value[i], x[i]);
        for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(e.jacobian.a[i], Matrix33::identity().a[i]);
        ++n;
    }
}

TEST(Tilt, IsometryOnU) {
    const TiltMap m = sample_tilt();
    const Matrix33 O = m.O();
    const Vec3 x{{0.53, 0.46, 0.4}};
    const MapEval e = eval_tilt(m, x);
    const Vec3 c{{0.5, 0.5, 0}};
    const Vec3 expect = c + O * (x - c);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(e.value[i], expect[i], 1e-15);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(e.jacobian.a[i], O.a[i]);
}

TEST(Tilt, ThirdColumnEntriesAndBound) {
    std::mt19937_64 rng(23);
    for (double zeta : {-4.0, 0.5, 3.0}) {
        const TiltMap m = sample_tilt(zeta, 0.3);
        for (int i = 0; i < 300; ++i) {
            const Vec3 x = annulus_point(rng, m);
            const MapEval e = eval_tilt(m, x);
            const double ph = m.phi(planar(x));
            for (std::size_t k = 0; k < 2; ++k) {
                EXPECT_NEAR(e.jacobian(k, 2), -ph * m.rho * m.kappa[k] * zeta / m.s(), 1e-15);
                EXPECT_LE(std::abs(e.jacobian(k, 2)) / m.rho, std::abs(zeta) + 1e-12);
            }
        }
    }
}

TEST(Tilt, JacobianMatchesDifferences) {
    std::mt19937_64 rng(24);
    const TiltMap m = sample_tilt(3, 0.4);
    for (int i = 0; i < 200; ++i) {
        const Vec3 x = annulus_point(rng, m);
        EXPECT_LE(max_abs(eval_tilt(m, x).jacobian - fd_jacobian(m, x, 1e-6)), 1e-7);
    }
}

TEST(Tilt, CutoffIsSmoothAcrossRadii) {
    const Cutoff c{0.1, 0.2};
    EXPECT_EQ(c(0.1, 0.0), 1.0);
    EXPECT_EQ(c(0.2, 0.0), 0.0);
    EXPECT_NEAR(c(0.15, 0.0), 0.5, 1e-15);
    // The third radial derivative is −840·s/(r_V − r_U)³, s = (r − r_U)/(r_V − r_U):
    // continuous, vanishing linearly.
    for (double e : {1e-9, 1e-10}) {
        const D3 x = Seeder<D3>::seed(0.1 + e, 0), y = Seeder<D3>::seed(0.0, 1);
        const D3 v = c(x, y);
        EXPECT_NEAR(v.d[0].v.v, 0, 1e-12);
        EXPECT_NEAR(v.d[0].d[0].v, 0, 1e-6);
        EXPECT_NEAR(v.d[0].d[0].d[0], -840 * e / 1e-4, 1e-4 * 840 * e / 1e-4);
    }
}

TEST(Tilt, NewtonInverse) {
    std::mt19937_64 rng(25);
    const TiltMap m = sample_tilt(2, 0.01);
    for (int i = 0; i < 200; ++i) {
        const Vec3 x = annulus_point(rng, m);
        const Vec3 y = eval_tilt(m, x).value;
        const Vec3 g = newton_inverse(m, y, 1e-15);
        EXPECT_LE(norm(eval_tilt(m, g).value - y), 1e-10);
        EXPECT_LE(norm(g - x), 1e-10);
        // ∇g at f(x) from differences of the inverse.
        struct Inverse {
            const TiltMap& m;
            MapEval eval(const Vec3& p) const { return {newton_inverse(m, p, 1e-15), {}}; }
        } inv{m};
        const Matrix33 Dg = fd_jacobian(inv, y, 2e-6);
        EXPECT_LE(max_abs(Dg - inverse3(eval_tilt(m, x).jacobian)), 1e-8);
    }
}

TEST(Tilt, PushedNormalTilt) {
    for (double zeta : {1.0, 3.0}) {
        const TiltMap m = sample_tilt(zeta, 1e-2, 0.3);
        const auto d = diagnose_tilt(m, 24);
        EXPECT_LE(d.normal_ratio, 2.2 * zeta);
        // Near x₀ the plane is rotated rigidly: ν = O(κ, 0), ν₃ = ρζ/s.
        EXPECT_NEAR(pushed_normal(m, 0.0, 0.3)[2], m.rho * zeta / m.s(), 1e-15);
    }
}

TEST(Tilt, ConvergesToIdentityLinearlyInRho) {
    std::vector<double> w;
    for (double rho : {0.1, 0.05, 0.025}) w.push_back(diagnose_tilt(sample_tilt(2, rho), 16).w1inf);
    for (std::size_t i = 1; i < w.size(); ++i) {
        EXPECT_LT(w[i], w[i - 1]);
        EXPECT_NEAR(w[i - 1] / w[i], 2.0, 0.2);
    }
}

TEST(Correction, ZeroTiltGivesIdentity) {
    const CorrectedTilt f = incompressible_correct(sample_tilt(0.0));
    std::mt19937_64 rng(26);
    for (int i = 0; i < 100; ++i) {
        const Vec3 x = annulus_point(rng, f.base());
        const MapEval e = f.eval(x);
        EXPECT_LE(norm(e.value - x), 1e-14);
        EXPECT_LE(max_abs(e.jacobian - Matrix33::identity()), 1e-14);
    }
}

TEST(Correction, RigidOnU) {
    const CorrectedTilt f = incompressible_correct(sample_tilt(2.5, 0.2));
    const Matrix33 O = f.base().O();
    const Vec2 xa{{0.55, 0.52}};
    const std::vector<double> x3{-0.9, -0.1, 0.3, 0.8};
    const auto fast = f.eval_column(xa, x3);
    const ColumnData c = f.column(xa);
    EXPECT_EQ(c.P, 0.0);
    EXPECT_EQ(c.Q, 0.0);
    const auto g = f.gamma(c, x3);
    const Vec3 ctr{{0.5, 0.5, 0}};
    for (std::size_t k = 0; k < x3.size(); ++k) {
        EXPECT_EQ(g[k], x3[k]);
        const MapEval slow = CorrectedTilt::assemble(c, g[k]);
        const Vec3 expect = ctr + O * (embed(xa, x3[k]) - ctr);
        EXPECT_LE(norm(fast[k].value - expect), 1e-15);
        EXPECT_LE(norm(slow.value - expect), 1e-14);
        EXPECT_LE(max_abs(slow.jacobian - O), 1e-14);
    }
}

TEST(Correction, IdentityOutsideV) {
    const CorrectedTilt f = incompressible_correct(sample_tilt(2.5, 0.2));
    const Vec3 x{{0.9, 0.1, 0.7}};
    const MapEval e = f.eval(x);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(e.value[i], x[i]);
}

TEST(Correction, ColumnDerivativesMatchDifferences) {
    const CorrectedTilt f = incompressible_correct(sample_tilt(3, 0.2));
    std::mt19937_64 rng(27);
    const double h = 1e-6;
    for (int i = 0; i < 50; ++i) {
        const Vec2 xa = planar(annulus_point(rng, f.base()));
        const ColumnData c = f.column(xa);
        EXPECT_NEAR(det3(c.du.col(0), c.du.col(1), c.b), 1.0, 1e-14);
        // u = f(x_α, 0) and the derivative of the tilt map agree
        const MapEval e = eval_tilt(sample_tilt(3, 0.2), embed(xa));
        EXPECT_LE(norm(c.u - e.value), 1e-15);
        EXPECT_LE(norm(c.du.col(0) - e.jacobian.col(0)), 1e-13);
        for (std::size_t k = 0; k < 2; ++k) {
            Vec2 p = xa, q = xa;
            p[k] += h;
            q[k] -= h;
            const ColumnData cp = f.column(p), cq = f.column(q);
            EXPECT_NEAR(c.dP[k], (cp.P - cq.P) / (2 * h), 1e-5 * (1 + std::abs(c.dP[k])));
            EXPECT_NEAR(c.dQ[k], (cp.Q - cq.Q) / (2 * h), 1e-5 * (1 + std::abs(c.dQ[k])));
            EXPECT_LE(norm(c.db.col(k) - (1 / (2 * h)) * (cp.b - cq.b)), 1e-6);
        }
    }
}

TEST(Correction, RungeKuttaMatchesClosedForm) {
    std::mt19937_64 rng(28);
    std::uniform_real_distribution<double> U(-0.25, 0.25), X(-1, 1);
    for (int i = 0; i < 200; ++i) {
        const double P = U(rng), Q = U(rng);
        const std::vector<double> x3{X(rng), X(rng), 0.0, X(rng)};
        const auto g = gamma_runge_kutta(P, Q, x3, 1e-10);
        for (std::size_t k = 0; k < x3.size(); ++k) EXPECT_NEAR(g[k], gamma_closed_form(P, Q, x3[k]), 1e-7);
    }
}

TEST(Correction, DeterminantIsOne) {
    const CorrectedTilt f = incompressible_correct(sample_tilt(2, 0.01), 1e-10);
    const DetReport r = corrected_det_check(f, 16, 8);
    EXPECT_EQ(r.points, 16u * 16u * 8u);
    EXPECT_LE(r.max_analytic, 1e-12);
    EXPECT_LE(r.max_fd, 1e-6) << r.worst;
}

TEST(Correction, UncorrectedMapIsNotIncompressible) {
    // The correction is doing work: the raw tilt map has det ≠ 1 in the annulus.
    const TiltMap m = sample_tilt(3, 0.1);
    std::mt19937_64 rng(29);
    double worst = 0;
    for (int i = 0; i < 200; ++i) worst = std::max(worst, std::abs(det3(eval_tilt(m, annulus_point(rng, m)).jacobian) - 1));
    EXPECT_GT(worst, 1e-3);
}

TEST(Correction, PreconditionNamesThePoint) {
    TiltMap m = sample_tilt(5, 1.0);
    m.cutoff = {0.1, 0.11};
    const CorrectedTilt f(m);
    int thrown = 0;
    for (int i = 0; i < 40; ++i) {
        for (int j = 0; j < 40; ++j) {
            const Vec2 xa{{0.38 + i * 0.006, 0.38 + j * 0.006}};
            if (m.outside(xa) || m.inside_U(xa)) continue;
            const double J0 = det3(eval_tilt(m, embed(xa)).jacobian);
            if (J0 < 0.5) {
                try {
                    f.column(xa);
                    ADD_FAILURE() << "expected a precondition failure";
                } catch (const MapPreconditionError& e) {
                    EXPECT_EQ(e.where[0], xa[0]);
                    EXPECT_EQ(e.where[1], xa[1]);
                    ++thrown;
                }
            } else {
                EXPECT_NO_THROW(f.column(xa));
            }
        }
    }
    EXPECT_GT(thrown, 0);
}

TEST(Correction, FibreBreakdownIsLocated) {
    // det grad f >= 1/2 on the base but 1 + tP + t^2 Q hits zero before |x3| = 1.
    TiltMap m = sample_tilt(2, 0.025);
    m.cutoff = {0.1, 0.15};
    const CorrectedTilt f(m);
    const std::vector<double> x3{-0.5, 0.99};
    int thrown = 0;
    for (int i = 0; i < 60 && !thrown; ++i) {
        const Vec2 xa{{m.x0[0] + 0.1 + i * 0.05 / 60, m.x0[1]}};
        try {
            f.eval_column(xa, x3);
        } catch (const MapPreconditionError& e) {
            EXPECT_EQ(e.where[0], xa[0]);
            EXPECT_EQ(e.where[2], 0.99);
            ++thrown;
        }
    }
    EXPECT_GT(thrown, 0);
}

TEST(Extension, ConstantFieldKeepsStraightFibres) {
    const Matrix32 A = Matrix32::from_cols({Vec3{{1, 0.2, 0}}, Vec3{{0, 1, 0.5}}});
    const auto m = single_cell({0, 1, 0, 1}, A, {{0.1, 0, 0}});
    const ThickExtension v = incompressible_extend(m, {normal_column(A)}, 0.4);
    const auto l = v.local({{0.3, 0.3}});
    EXPECT_EQ(l.P, 0.0);
    EXPECT_EQ(l.Q, 0.0);
    const MapEval e = v.eval({{0.3, 0.3, 0.15}});
    EXPECT_EQ(v.gamma(l, 0.15), 0.15);
    EXPECT_LE(norm(e.value - (m.cells[0].eval({{0.3, 0.3}}) + 0.15 * l.b)), 1e-15);
    EXPECT_NEAR(det3(e.jacobian), 1.0, 1e-14);
}

TEST(Extension, TwoCellFixtureCoefficients) {
    const auto [m, b] = two_cell_extension_fixture();
    const ThickExtension v = incompressible_extend(m, b, 0.5);
    const auto l = v.local({{0.2, 0.7}});
    EXPECT_NEAR(l.P, 0.5, 1e-14);
    EXPECT_NEAR(l.Q, 0.06, 1e-14);
    const auto r = v.local({{0.8, 0.3}});
    EXPECT_NEAR(r.P, -0.1, 1e-14);
    EXPECT_NEAR(r.Q, -0.0375, 1e-14);
}

TEST(Extension, DeterminantOneAgainstDifferences) {
    const auto [m, b] = two_cell_extension_fixture();
    const ThickExtension v = incompressible_extend(m, b, 0.5);
    std::mt19937_64 rng(30);
    std::uniform_real_distribution<double> U(0.01, 0.99), T(-0.24, 0.24);
    int n = 0;
    while (n < 1000) {
        const Vec3 x{{U(rng), U(rng), T(rng)}};
        if (std::abs(x[0] - 0.5) < 1e-3) continue;
        EXPECT_NEAR(det3(fd_jacobian(v, x, 1e-5)), 1.0, 1e-8);
        EXPECT_NEAR(det3(v.eval(x).jacobian), 1.0, 1e-13);
        ++n;
    }
}

TEST(Extension, MidplaneIsMembrane) {
    const auto [m, b] = two_cell_extension_fixture();
    const ThickExtension v = incompressible_extend(m, b, 0.5);
    for (const Vec2 xa : {Vec2{{0.2, 0.3}}, Vec2{{0.77, 0.9}}}) {
        const Vec3 u = m.cell_at(xa).eval(xa);
        const Vec3 w = v.eval(embed(xa)).value;
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(w[i], u[i]);
    }
}

TEST(Extension, ErrorLawIsLinear) {
    const auto [m, b] = two_cell_extension_fixture();
    const ThickExtension v = incompressible_extend(m, b, 0.5);
    std::vector<double> hs;
    for (int k = 3; k <= 8; ++k) hs.push_back(std::ldexp(1.0, -k));
    const ErrorLaw law = extension_error_law(v, hs);
    EXPECT_GE(law.slope, 0.95);
    for (const auto& p : law.points) EXPECT_LE(p.err / p.x3, 2.0);
}

TEST(Extension, RungeKuttaRouteAgrees) {
    const auto [m, b] = two_cell_extension_fixture();
    const ThickExtension a = incompressible_extend(m, b, 0.5);
    const ThickExtension r = incompressible_extend(m, b, 0.5, GammaSolver::runge_kutta, 1e-10);
    for (const Vec3 x : {Vec3{{0.2, 0.3, 0.2}}, Vec3{{0.7, 0.6, -0.23}}}) {
        EXPECT_LE(norm(a.eval(x).value - r.eval(x).value), 1e-9);
    }
}

TEST(Extension, RejectsBrokenConstraintByCell) {
    auto [m, b] = two_cell_extension_fixture();
    b[1].b0 = b[1].b0 + Vec3{{0, 0, 0.01}};
    try {
        incompressible_extend(m, b, 0.5);
        FAIL();
    } catch (const ExtensionError& e) {
        EXPECT_EQ(e.cell, 1u);
        EXPECT_NE(std::string(e.what()).find("cell 1"), std::string::npos);
    }
    EXPECT_THROW(incompressible_extend(m, std::vector<ColumnField>(1), 0.5), std::invalid_argument);
}

TEST(Extension, RejectsThicknessBeyondRange) {
    const auto [m, b] = two_cell_extension_fixture();
    EXPECT_THROW(incompressible_extend(m, b, 4.0), ExtensionError);
}

TEST(CrackOpening, IdentityBelowAndAbove) {
    const CrackOpening c = open_crack(0, 1, {0.5, 0.1}, 0.1);
    EXPECT_EQ(c({{0.4, 0.3}})[1], 0.3);
    const double top = c.graph(0.4) + 0.2 * c.profile(0.4);
    EXPECT_EQ(c({{0.4, top}})[1], top);
    EXPECT_EQ(c({{1.2, 0.54}})[1], 0.54);
}

TEST(CrackOpening, MiddleBranchDisplacement) {
    const double delta = 0.1;
    const CrackOpening c = open_crack(0, 1, {0.5, 0.1}, delta);
    const double x1 = 0.3, f = c.profile(x1), g = c.graph(x1);
    const Vec2 y = c({{x1, g + delta / 2 * f}});
    EXPECT_NEAR(y[1] - (g + delta / 2 * f), delta * delta * f / 2, 1e-15);
}

TEST(CrackOpening, JacobianAndInverse) {
    const CrackOpening c = open_crack(0.2, 0.9, {0.5, 0.2, -0.1}, 0.05, 2.0);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> X(0.21, 0.89), T(0.002, 0.048);
    for (int i = 0; i < 200; ++i) {
        const double x1 = X(rng);
        const Vec2 x{{x1, c.graph(x1) + T(rng) * c.profile(x1)}};
        const double h = 1e-7;
        Matrix22 D;
        for (std::size_t k = 0; k < 2; ++k) {
            Vec2 p = x, q = x;
            p[k] += h;
            q[k] -= h;
            const Vec2 d = (1 / (2 * h)) * (c(p) - c(q));
            D(0, k) = d[0];
            D(1, k) = d[1];
        }
        EXPECT_LE(max_abs(D - c.jacobian(x)), 1e-6);
        EXPECT_LE(norm(c.inverse(c(x)) - x), 1e-14);
        EXPECT_FALSE(c.in_lens(c(x)));
    }
    const double x1 = 0.5;
    EXPECT_THROW(c.inverse({{x1, c.graph(x1) + 0.5 * 0.05 * 0.05 * c.profile(x1)}}), std::domain_error);
}

TEST(CrackOpening, IdentityAwayFromCrack) {
    const double delta = 0.05;
    const CrackOpening c = open_crack(0, 1, {0.5}, delta);
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> U(-0.5, 1.5);
    for (int i = 0; i < 2000; ++i) {
        const Vec2 x{{U(rng), U(rng)}};
        if (point_segment_distance(x, {{0, 0.5}}, {{1, 0.5}}) < 2 * delta) continue;
        const Vec2 y = c(x);
        EXPECT_EQ(y[0], x[0]);
        EXPECT_EQ(y[1], x[1]);
    }
}

TEST(CrackOpening, ApproachesIdentity) {
    std::vector<double> w;
    for (double delta : {0.1, 0.05, 0.025}) w.push_back(w1inf_distance(open_crack(0, 1, {0.5, 0.3}, delta)));
    EXPECT_LT(w[1], w[0]);
    EXPECT_LT(w[2], w[1]);
}

namespace {

const Rect omega{0, 1, 0, 1};
const Rect field_box{-0.5, 1.5, -0.5, 1.5};

SmoothingKernel crack_kernel(double sigma) {
    return SmoothingKernel(RegularizedDistance::of({{{{0.25, 0.5}}, {{0.75, 0.5}}}}), sigma);
}

}  // namespace

TEST(VariableKernel, MollifierHasUnitMass) {
    EXPECT_NEAR(Mollifier::mass(), 0.46651239317833, 1e-13);
    EXPECT_NEAR(crack_kernel(0.1).mass(), 1.0, 1e-10);
}

TEST(VariableKernel, RegularizedDistanceBounds) {
    const auto one = RegularizedDistance::of({{{{0.25, 0.5}}, {{0.75, 0.5}}}});
    const auto poly = RegularizedDistance::of(
        {{{{0.1, 0.1}}, {{0.5, 0.4}}}, {{{0.5, 0.4}}, {{0.9, 0.2}}}, {{{0.3, 0.8}}, {{0.7, 0.9}}}});
    for (const auto* d : {&one, &poly}) {
        const auto r = check_distance(*d, field_box, 5000, 33);
        EXPECT_GE(r.min_ratio, 0.5);
        EXPECT_LE(r.max_ratio, 1.0 + 1e-15);
        EXPECT_LE(r.max_grad, 1.0 + 1e-12);
        EXPECT_LE(r.max_hessian, 2.0);
        EXPECT_LE(r.max_scaled_hessian, 2.0);
    }
}

TEST(VariableKernel, RampShape) {
    EXPECT_EQ(Ramp::value(0), 0.0);
    EXPECT_EQ(Ramp::value(2), 1.0);
    EXPECT_EQ(Ramp::value(3), 1.0);
    EXPECT_NEAR(Ramp::value(1), 0.5, 1e-15);
    const RampReport r = ramp_report();
    EXPECT_GE(r.min_d[0], 0.0);
    EXPECT_LE(r.max_d[0], 1.0);
    EXPECT_GE(r.min_d[1], 0.0);
    EXPECT_LE(r.max_d[1], 1.0);
    // h' vanishes at both ends and is positive inside, so h'' must change sign.
    EXPECT_LT(r.min_d[2], 0.0);
    EXPECT_GT(r.max_d[2], 0.0);
}

TEST(VariableKernel, ConstantIsPreserved) {
    const auto K = crack_kernel(0.3);
    const GridField u = GridField::sample([](const Vec2&) { return 2.5; }, field_box, 11, 11);
    for (const Vec2 x : {Vec2{{0.1, 0.1}}, Vec2{{0.5, 0.52}}, Vec2{{0.9, 0.7}}}) {
        const auto r = convolve_variable(u, K, x);
        EXPECT_NEAR(r.value, 2.5, 1e-10);
        EXPECT_FALSE(r.flagged);
    }
}

TEST(VariableKernel, LpBoundAndConvergence) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const GridField u = random_smooth_field(seed, field_box);
        std::vector<double> diffs;
        for (double sigma : {0.2, 0.1, 0.05}) {
            const auto K = crack_kernel(sigma);
            for (double p : {1.0, 2.0}) {
                const double lhs = lp_norm_rect([&](const Vec2& x) { return convolve_variable(u, K, x).value; }, omega, p, 12);
                const double rhs = lp_norm_neighbourhood([&](const Vec2& x) { return u.value(x); }, omega, sigma, p, 12);
                EXPECT_LE(lhs, 2 * rhs);
            }
            diffs.push_back(lp_norm_rect(
                [&](const Vec2& x) { return convolve_variable(u, K, x).value - u.value(x); }, omega, 2.0, 12));
        }
        EXPECT_LT(diffs[1], diffs[0]);
        EXPECT_LT(diffs[2], diffs[1]);
    }
}

TEST(VariableKernel, AffineFarFromCrackHasNoCorrection) {
    const SmoothingKernel K(RegularizedDistance::of({{{{0, 0}}, {{0.1, 0}}}}), 0.2);
    const Rect box{-6, 6, -6, 6};
    const GridField u = GridField::sample([](const Vec2& x) { return 1 + 2 * x[0] - x[1]; }, box, 25, 25);
    const GradientSplit s = convolution_gradient_split(u, K, {{3, 1}});
    EXPECT_EQ(s.xi[0], 0.0);
    EXPECT_EQ(s.xi[1], 0.0);
    EXPECT_NEAR(s.grad_conv[0], 2.0, 1e-10);
    EXPECT_NEAR(s.grad_conv[1], -1.0, 1e-10);
}

TEST(VariableKernel, GradientSplitAgainstDifferences) {
    const double sigma = 0.2, h = 1e-5;
    const auto K = crack_kernel(sigma);
    std::mt19937_64 rng(34);
    std::uniform_real_distribution<double> U(0.02, 0.98);
    for (std::uint64_t seed : {4, 5}) {
        // Bilinear interpolation has kinks on cell edges that a difference
        // quotient straddles; the C¹ cubic keeps the oracle meaningful.
        const GridField u = random_smooth_field(seed, field_box, 161, Interp::cubic);
        const double gmax = u.max_gradient();
        for (int i = 0; i < 20; ++i) {
            const Vec2 x{{U(rng), U(rng)}};
            if (std::abs(x[1] - 0.5) < 0.01) continue;
            const GradientSplit s = convolution_gradient_split(u, K, x);
            Vec2 fd;
            for (std::size_t k = 0; k < 2; ++k) {
                Vec2 p = x, q = x;
                p[k] += h;
                q[k] -= h;
                fd[k] = (convolve_variable(u, K, p).value - convolve_variable(u, K, q).value) / (2 * h);
            }
            EXPECT_LE(norm(fd - s.gradient(sigma)), 1e-6);
            EXPECT_LE(norm(s.xi), 2 * gmax + 1e-3);
        }
    }
}

TEST(VariableKernel, FlagsPointsLeavingTheGrid) {
    const auto K = crack_kernel(0.4);
    const GridField u = GridField::sample([](const Vec2& x) { return x[0]; }, omega, 5, 5);
    EXPECT_TRUE(convolve_variable(u, K, {{0.02, 0.02}}).flagged);
    EXPECT_THROW(crack_kernel(0.6), std::invalid_argument);
}
