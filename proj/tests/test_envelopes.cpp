#include <gtest/gtest.h>

#include <random>

#include "tfm/envelopes.hpp"
#include "tfm/reduction.hpp"

using namespace tfm;

namespace {

Matrix32 random_matrix32(std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> N(0, scale);
    Matrix32 E;
    for (auto& x : E.a) x = N(rng);
    return E;
}

const MatrixDensity frob2 = [](const Matrix32& F) {
    const double n = norm(F);
    return ExtReal(n * n);
};

SearchSpec small_spec() {
    SearchSpec s;
    s.top = {8, 7, 3, 3, 0, true};
    s.inner = {3, 3, 1, 2, 0, false};
    return s;
}

// Two wells A and B = A + b⊗a, asked about at their average.
struct TwoWellFixture {
    Matrix32 A, B, F;
    Vec2 a;
    Vec3 b;
    MatrixDensity f;
};

TwoWellFixture two_well_fixture(double theta) {
    TwoWellFixture t;
    t.A = Matrix32::from_cols({Vec3{{1, 0, 0.2}}, Vec3{{0.1, 1, 0}}});
    t.a = Vec2{{std::cos(theta), std::sin(theta)}};
    t.b = Vec3{{0.8, -0.4, 0.3}};
    t.B = t.A + outer(t.b, t.a);
    t.F = 0.5 * (t.A + t.B);
    t.f = two_well(t.A, t.B);
    return t;
}

}  // namespace

TEST(KohnStrang, ConvexDensityHasNoImprovingSplit) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 5; ++i) {
        const Matrix32 F = random_matrix32(rng);
        const auto node = kohn_strang_step(frob2, F, SplitGrid{16, 13, 4, 7, 0, true});
        EXPECT_EQ(node.value, frob2(F));
        EXPECT_FALSE(node.split.has_value());
    }
}

TEST(KohnStrang, TwoWellMidpointOnGrid) {
    // a = e₁ lies on the angle grid and λ = 1/2 on the λ grid
    const auto t = two_well_fixture(0.0);
    const auto node = kohn_strang_step(t.f, t.F);
    ASSERT_TRUE(node.split.has_value());
    EXPECT_LE(node.value.value(), 1e-8);
    EXPECT_GT(t.f(t.F).value(), 0.1);
}

TEST(KohnStrang, TwoWellMidpointOffGridIsRefined) {
    const auto t = two_well_fixture(0.3);
    const auto node = kohn_strang_step(t.f, t.F);
    ASSERT_TRUE(node.split.has_value());
    EXPECT_LE(node.value.value(), 1e-8);
}

TEST(KohnStrang, SplitsAverageToF) {
    const auto t = two_well_fixture(0.7);
    const auto node = kohn_strang_step(t.f, t.F, SplitGrid{16, 13, 4, 7, 0, false});
    ASSERT_TRUE(node.split.has_value());
    const auto& s = *node.split;
    const Matrix32 ba = outer(s.b, s.a);
    const Matrix32 Fp = t.F + s.lambda * ba, Fm = t.F - (1 - s.lambda) * ba;
    EXPECT_LE(max_abs((1 - s.lambda) * Fp + s.lambda * Fm - t.F), 1e-15);
    EXPECT_GT(s.lambda, 0);
    EXPECT_LT(s.lambda, 1);
    EXPECT_NEAR(norm(s.a), 1.0, 1e-15);
    EXPECT_EQ(node.value, (1 - s.lambda) * t.f(Fp) + s.lambda * t.f(Fm));
}

TEST(KohnStrang, AllSplitsInfiniteReturnsF) {
    const MatrixDensity spike = [](const Matrix32& F) {
        return norm(F) < 1e-12 ? ExtReal(1.0) : ExtReal::infinity();
    };
    const auto node = kohn_strang_step(spike, Matrix32{}, SplitGrid{4, 3, 2, 3, 0, true});
    EXPECT_EQ(node.value, ExtReal(1.0));
    EXPECT_FALSE(node.split.has_value());
}

TEST(KohnStrang, ReducedOrientAgainstDenseEnumeration) {
    const auto W0 = reduced_bulk(orient_power(2));
    std::mt19937_64 rng(2);
    for (int i = 0; i < 2; ++i) {
        const Matrix32 F = random_matrix32(rng);
        const auto node = kohn_strang_step(W0, F);
        const auto dense = kohn_strang_step(W0, F, SplitGrid{640, 13, 6, 7, 0, false});
        EXPECT_LE(node.value, W0(F));
        // grid plus refinement should do at least as well as the 10x grid alone
        EXPECT_LE(node.value.value(), dense.value.value() + 1e-9 * dense.value.value());
    }
}

TEST(RankOneEnvelope, LevelZeroIsTheDensity) {
    const auto W0 = reduced_bulk(orient_power(2));
    std::mt19937_64 rng(3);
    for (int i = 0; i < 5; ++i) {
        const Matrix32 F = random_matrix32(rng);
        EXPECT_EQ(rank_one_envelope(W0, F, 0), W0(F));
    }
}

TEST(RankOneEnvelope, MonotoneInDepth) {
    const auto W0 = reduced_bulk(orient_power(2));
    auto spec = small_spec();
    spec.top = {8, 4, 2, 3, 0, false};
    RankOneEnvelope env(W0, spec);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 4; ++i) {
        const auto ch = env.chain(random_matrix32(rng), 3);
        ASSERT_EQ(ch.size(), 4u);
        for (int k = 0; k < 3; ++k) EXPECT_LE(ch[k + 1].value.value(), ch[k].value.value() + 1e-12);
    }
    EXPECT_GT(env.memo_size(), 0u);
}

TEST(RankOneEnvelope, ConvexFixedPoint) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 4; ++i) {
        const Matrix32 F = random_matrix32(rng);
        EXPECT_NEAR(rank_one_envelope(frob2, F, 2, small_spec()).value(), frob2(F).value(), 1e-8);
    }
}

TEST(RankOneEnvelope, TwoWellDepthOne) {
    const auto t = two_well_fixture(0.0);
    RankOneEnvelope env(t.f, small_spec());
    const auto ch = env.chain(t.F, 2);
    EXPECT_LE(ch[1].value.value(), 0.5 * (t.f(t.A).value() + t.f(t.B).value()) + 1e-8);
}

TEST(RankOneEnvelope, ThreadCountDoesNotChangeValues) {
    const auto W0 = reduced_bulk(orient_power(2));
    std::mt19937_64 rng(6);
    const Matrix32 F = random_matrix32(rng);
    auto s1 = small_spec(), s3 = small_spec();
    s3.threads = 3;
    EXPECT_EQ(rank_one_envelope(W0, F, 2, s1), rank_one_envelope(W0, F, 2, s3));
}

TEST(RankOneEnvelope, DepthLimits) {
    EXPECT_THROW(rank_one_envelope(frob2, Matrix32{}, 5), std::invalid_argument);
    EXPECT_THROW(rank_one_envelope(frob2, Matrix32{}, -1), std::invalid_argument);
}

TEST(QuasiconvexEstimate, ConvexDensityKeepsZeroField) {
    std::mt19937_64 rng(7);
    const Matrix32 F = random_matrix32(rng);
    QCOptions o;
    o.mesh = 4;
    const auto q = quasiconvex_upper_estimate(frob2, F, o);
    EXPECT_NEAR(q.value.value(), frob2(F).value(), 1e-6);
    EXPECT_GE(q.value.value(), 0);
    for (std::size_t k = 1; k < q.history.size(); ++k) EXPECT_LE(q.history[k], q.history[k - 1]);
}

TEST(QuasiconvexEstimate, NeverAboveReducedDensity) {
    const auto W0 = reduced_bulk(orient_power(2));
    std::mt19937_64 rng(8);
    for (int i = 0; i < 3; ++i) {
        const Matrix32 F = random_matrix32(rng);
        QCOptions o;
        o.mesh = 3;
        o.laminate_grid = {8, 7, 3, 3, 0, true};
        const auto q = quasiconvex_upper_estimate(W0, F, o);
        EXPECT_LE(q.value.value(), W0(F).value() + 1e-9);
        EXPECT_GE(q.value.value(), 0);
        for (std::size_t k = 1; k < q.history.size(); ++k) EXPECT_LE(q.history[k], q.history[k - 1]);
    }
}

TEST(QuasiconvexEstimate, TwoWellLaminateAdaptedMesh) {
    const auto t = two_well_fixture(0.3);
    const double R1 = kohn_strang_step(t.f, t.F).value.value();
    QCOptions o;
    o.mesh = 32;
    o.adapt_to_laminate = true;
    o.random_starts = 0;
    o.max_sweeps = 60;
    const auto q = quasiconvex_upper_estimate(t.f, t.F, o);
    EXPECT_LE(q.value.value(), R1 + 0.05 * t.f(t.F).value()) << q.start;
    EXPECT_NEAR(q.angle, 0.3, 1e-6);
}

TEST(QuasiconvexEstimate, EnvelopeOfEnvelopeIsNoWorse) {
    // Warm-starting from the W₀ optimum makes QC(R_k W₀) ≤ QC(W₀) exact,
    // since R_k W₀ ≤ W₀ pointwise at the matrices the root chain sees.
    const auto W0 = reduced_bulk(orient_power(2));
    auto env = std::make_shared<RankOneEnvelope>(W0, small_spec());
    const MatrixDensity R1 = [env](const Matrix32& F) { return (*env)(F, 1); };
    std::mt19937_64 rng(9);
    for (int i = 0; i < 2; ++i) {
        const Matrix32 F = random_matrix32(rng);
        QCOptions o;
        o.mesh = 2;
        o.laminate_start = false;
        o.random_starts = 0;
        o.max_sweeps = 30;
        const auto base = quasiconvex_upper_estimate(W0, F, o);
        o.warm_starts = {base.field};
        o.max_sweeps = 3;
        const auto relaxed = quasiconvex_upper_estimate(R1, F, o);
        EXPECT_LE(relaxed.value.value(), base.value.value() + 1e-12);
    }
}

TEST(QuasiconvexEstimate, RejectsTinyMesh) {
    QCOptions o;
    o.mesh = 1;
    EXPECT_THROW(quasiconvex_upper_estimate(frob2, Matrix32{}, o), std::invalid_argument);
}

TEST(BVEllipticity, IdentityCompetitorRatioIsOne) {
    const auto psi0 = reduced_surface(surf_quad(Matrix33::identity()));
    const auto r = bv_ellipticity_test(psi0, Vec3{{0, 1, 0}}, Vec3{{0, 0, 0}}, Vec2{{1, 0}});
    ASSERT_EQ(r.tested, 1u);
    EXPECT_DOUBLE_EQ(r.min_ratio, 1.0);
    EXPECT_TRUE(r.passed());
}

TEST(BVEllipticity, GriffithCompetitorsNeverBeatFlatCut) {
    const auto g = griffith();
    CompetitorFamily fam;
    fam.wedges = 500;
    fam.triangles = 500;
    const double th = 0.4;
    const auto r = bv_ellipticity_test(g, Vec3{{1, 2, 0}}, Vec3{{0, 0, 1}}, Vec2{{std::cos(th), std::sin(th)}}, fam);
    EXPECT_EQ(r.tested, 1001u);
    EXPECT_TRUE(r.passed()) << r.argmin << " " << r.min_ratio;
    EXPECT_GE(r.min_ratio, 1.0 - 1e-12);
    // interface length is the Griffith energy
    for (const auto& c : r.results)
        if (c.kind == "wedge") {
            EXPECT_GT(c.ratio, 1.0);
        }
}

TEST(BVEllipticity, TriangleWithTraceValueReducesToWedge) {
    // w = i above the line: the triangle's slanted sides carry no jump and the
    // energy is the flat cut's.
    const auto g = griffith();
    CompetitorFamily fam;
    fam.identity = false;
    fam.triangles = 40;
    const auto r = bv_ellipticity_test(g, Vec3{{1, 0, 0}}, Vec3{{0, 0, 0}}, Vec2{{0, 1}}, fam);
    int checked = 0;
    for (const auto& c : r.results) {
        if (c.params[4] != 0 || c.params[3] <= 0) continue;
        EXPECT_NEAR(c.ratio, 1.0, 1e-12) << c.describe();
        ++checked;
    }
    EXPECT_GT(checked, 0);
}

TEST(BVEllipticity, AnisotropicReducedDensityWedges) {
    Matrix33 Q;
    Q(0, 0) = 2;
    Q(0, 2) = Q(2, 0) = 1;
    Q(1, 1) = 1;
    Q(2, 2) = 1;
    const auto psi0 = reduced_surface(surf_quad(Q));
    CompetitorFamily fam;
    fam.wedges = 1000;
    const auto r = bv_ellipticity_test(psi0, Vec3{{0, 1, 0}}, Vec3{{0, 0, 0}}, Vec2{{1, 0}}, fam);
    EXPECT_EQ(r.tested, 1001u);
    EXPECT_GT(r.min_ratio, 0);
    EXPECT_LE(r.min_ratio, 1.0);  // the identity competitor is in the family
    EXPECT_NEAR(r.reference, 1.5, 1e-8);
}

TEST(BVEllipticity, RejectsDegenerateData) {
    const auto g = griffith();
    EXPECT_THROW(bv_ellipticity_test(g, Vec3{{1, 0, 0}}, Vec3{{1, 0, 0}}, Vec2{{1, 0}}), std::domain_error);
    EXPECT_THROW(bv_ellipticity_test(g, Vec3{{1, 0, 0}}, Vec3{{0, 0, 0}}, Vec2{{2, 0}}), std::invalid_argument);
}
