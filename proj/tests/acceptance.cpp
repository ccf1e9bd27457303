// Acceptance run: one PASS/FAIL line per criterion with its runtime, then
// indented measurements. Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tfm/energy.hpp"
#include "tfm/envelopes.hpp"
#include "tfm/fixtures.hpp"
#include "tfm/maps.hpp"
#include "tfm/reduction.hpp"

using namespace tfm;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& s) { notes.push_back("     " + s); }
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int failures = 0;

void criterion(int id, const char* title, double limit_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.check(false, std::string("exception: ") + e.what());
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(dt < limit_s, fmt("runtime %.2f s < %.0f s", dt, limit_s));
    std::printf("%s criterion %2d: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, title, dt);
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

const Vec3 e1{{1, 0, 0}}, e2{{0, 1, 0}};

Matrix32 random_matrix32(std::mt19937_64& rng) {
    std::normal_distribution<double> N(0, 1);
    Matrix32 E;
    for (auto& x : E.a) x = N(rng);
    return E;
}

// ----------------------------------------------------------------- 1, 2, 3

void isometry_and_tilt(Outcome& o) {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> A(0, 2 * M_PI), Z(-5, 5), R(0, 1), U(-1, 1);
    double iso = 0, excess = -inf;
    std::size_t outside = 0, outside_bad = 0;
    for (int i = 0; i < 1000; ++i) {
        TiltMap m;
        const double a = A(rng);
        m.kappa = {{std::cos(a), std::sin(a)}};
        m.zeta = Z(rng);
        double rho = R(rng);
        while (rho == 0.0) rho = R(rng);
        m.rho = rho;
        m.cutoff = {0.1, 0.2};
        const Matrix33 O = m.O();
        iso = std::max(iso, max_abs(transpose(O) * O - Matrix33::identity()));
        for (int k = 0; k < 20; ++k) {
            const Vec3 x{{0.5 + 0.3 * U(rng), 0.5 + 0.3 * U(rng), U(rng)}};
            const MapEval e = m.eval(x);
            if (m.outside(planar(x))) {
                ++outside;
                bool same = true;
                for (std::size_t j = 0; j < 3; ++j) same = same && e.value[j] == x[j];
                for (std::size_t j = 0; j < 9; ++j) same = same && e.jacobian.a[j] == Matrix33::identity().a[j];
                if (!same) ++outside_bad;
            }
            for (std::size_t j = 0; j < 2; ++j)
                excess = std::max(excess, std::abs(e.jacobian(j, 2)) / m.rho - std::abs(m.zeta));
        }
    }
    o.check(iso <= 1e-12, fmt("max |O^T O - I| = %.3g <= 1e-12", iso));
    o.check(excess <= 1e-12, fmt("max sup|(grad f)_i3|/rho - |zeta| = %.3g <= 1e-12", excess));
    o.check(outside_bad == 0, fmt("f = Id exactly at %zu/%zu points outside V", outside - outside_bad, outside));
}

void normal_tilt(Outcome& o) {
    for (double zeta : {1.0, 3.0}) {
        TiltMap m;
        m.kappa = {{std::cos(0.3), std::sin(0.3)}};
        m.zeta = zeta;
        m.rho = 1e-2;
        m.cutoff = {0.1, 0.2};
        const auto d = diagnose_tilt(m, 48);
        o.check(d.normal_ratio <= 2.2 * zeta,
                fmt("zeta = %g: sup|nu_3|/rho = %.6f <= %.2f", zeta, d.normal_ratio, 2.2 * zeta));
    }
}

void incompressibility(Outcome& o) {
    TiltMap m;
    m.kappa = {{std::cos(0.7), std::sin(0.7)}};
    m.zeta = 1;
    m.rho = 0.01;
    m.cutoff = {0.1, 0.2};
    m.incompressible = true;
    const CorrectedTilt f(m, 1e-10);
    const DetReport r = corrected_det_check(f, 64, 16);
    o.check(r.max_fd <= 1e-6, fmt("corrected tilt, rho*zeta = 0.01: max |det - 1| = %.3g (difference Jacobian), "
                                  "%.3g (assembled), %zu points",
                                  r.max_fd, r.max_analytic, r.points));
    const auto M = standard_membrane();
    const SweepPartition sp;
    const auto part = partition_jump(M, sp.n, sp.eps, sp.theta);
    RecoveryOptions ro;
    ro.ode_tol = 1e-10;
    for (double rho : {0.1, 0.0125}) {
        const auto d = assemble_recovery(M, incomp_power(2), surf_quad(aniso_q()), rho, part,
                                         ConstraintMode::incompressible, ro);
        const auto rr = recovery_det_check(d, 64, 16);
        o.check(rr.max_fd <= 1e-6 && rr.max_analytic <= 1e-6,
                fmt("recovery, rho = %g: max |det - 1| = %.3g (difference), %.3g (assembled); %zu points, "
                    "%zu straddling a cell edge skipped",
                    rho, rr.max_fd, rr.max_analytic, rr.points, rr.skipped));
    }
}

// ------------------------------------------------------------------- 4, 5

void error_law(Outcome& o) {
    const auto [m, b] = two_cell_extension_fixture();
    const ThickExtension v = incompressible_extend(m, b, 0.5);
    std::vector<double> hs;
    for (int k = 3; k <= 8; ++k) hs.push_back(std::ldexp(1.0, -k));
    const ErrorLaw law = extension_error_law(v, hs);
    std::string pts;
    for (const auto& p : law.points) pts += fmt(" %.3g:%.3g", p.x3, p.err);
    o.note("x3:err" + pts);
    o.check(law.slope >= 0.95, fmt("log-log slope %.4f >= 0.95", law.slope));
}

void reduced_oracles(Outcome& o) {
    const Matrix32 I = Matrix32::from_cols({e1, e2});
    const double wi = reduce_bulk(incomp_power(2), I).value.value();
    const double wo = reduce_bulk(orient_power(2), I).value.value();
    const double wo_exact = 2 + std::pow(2.0, -2.0 / 3) + std::cbrt(2.0);
    o.check(std::abs(wi - 3) <= 1e-6 * 3, fmt("INCOMP_POWER W0(e1|e2) = %.10f, oracle 3", wi));
    o.check(std::abs(wo - wo_exact) <= 1e-6 * wo_exact, fmt("ORIENT_POWER W0(e1|e2) = %.10f, oracle %.10f", wo, wo_exact));
    const auto s = reduce_surface(surf_quad(aniso_q()), e1, {{1, 0}});
    o.check(std::abs(s.zeta + 1) <= 1e-8 && std::abs(s.value - 1.5) <= 1e-8,
            fmt("reduce_surface: zeta* = %.12f (oracle -1), psi0 = %.12f (oracle 1.5)", s.zeta, s.value));
    std::mt19937_64 rng(105);
    int held = 0, tested = 0;
    std::string worst;
    while (tested < 200) {
        const Matrix32 E = random_matrix32(rng);
        if (norm(cross_columns(E)) < 1e-6) continue;
        ++tested;
        const auto b = check_reduced_bounds(incomp_power(2), E);
        if (b.holds) ++held;
        else if (worst.empty()) worst = fmt("first failure: W0 = %.6g, bounds [%.6g, %.6g]", b.w0.value_or(inf), b.lower, b.upper);
    }
    o.check(held == tested, fmt("two-sided W0 bounds hold on %d/%d random rank-2 matrices %s", held, tested, worst.c_str()));
}

// ------------------------------------------------------------------- 6, 7

void envelope_properties(Outcome& o) {
    const auto W0 = reduced_bulk(orient_power(2));
    SearchSpec spec;
    spec.top = {8, 4, 2, 3, 0, false};
    spec.inner = {3, 3, 1, 2, 0, false};
    RankOneEnvelope env(W0, spec);
    std::mt19937_64 rng(106);
    int exact0 = 0, mono = 0;
    double worst = -inf;
    for (int i = 0; i < 50; ++i) {
        const Matrix32 F = random_matrix32(rng);
        const auto ch = env.chain(F, 3);
        if (ch[0].value == W0(F)) ++exact0;
        bool ok = true;
        for (int k = 0; k <= 2; ++k) {
            const double d = ch[k + 1].value.value_or(inf) - ch[k].value.value_or(inf);
            if (std::isfinite(d)) worst = std::max(worst, d);
            ok = ok && (ch[k + 1].value.value_or(inf) <= ch[k].value.value_or(inf) + 1e-12);
        }
        if (ok) ++mono;
    }
    o.check(exact0 == 50, fmt("R0 = W0 bit for bit on %d/50 matrices", exact0));
    o.check(mono == 50, fmt("R_{k+1} <= R_k + 1e-12 for k <= 2 on %d/50 matrices (max R_{k+1} - R_k = %.3g)", mono, worst));

    const MatrixDensity frob2 = [](const Matrix32& F) { return ExtReal(norm(F) * norm(F)); };
    RankOneEnvelope cenv(frob2, spec);
    double cdev = 0;
    for (int i = 0; i < 10; ++i) {
        const Matrix32 F = random_matrix32(rng);
        cdev = std::max(cdev, std::abs(cenv(F, 2).value() - frob2(F).value()));
    }
    o.check(cdev <= 1e-8, fmt("convex |F|^2 fixed point: max |R2 - f| = %.3g on 10 matrices", cdev));

    const Matrix32 A = Matrix32::from_cols({Vec3{{1, 0, 0.2}}, Vec3{{0.1, 1, 0}}});
    // lamination normal off the angle grid, so the top-level refinement has to find it
    const Matrix32 B = A + outer(Vec3{{0.8, -0.4, 0.3}}, Vec2{{std::cos(0.3), std::sin(0.3)}});
    const MatrixDensity wells = two_well(A, B);
    const Matrix32 F = 0.5 * (A + B);
    const double r1 = RankOneEnvelope(wells, SearchSpec{})(F, 1).value();
    const double avg = 0.5 * (wells(A).value() + wells(B).value());
    o.check(r1 <= avg + 1e-8, fmt("two-well laminate midpoint, default search: R1 = %.3g <= well average %.3g + 1e-8 (f(F) = %.3g)", r1,
                                  avg, wells(F).value()));
}

void variable_kernel(Outcome& o) {
    const Rect omega{0, 1, 0, 1}, box{-0.5, 1.5, -0.5, 1.5};
    auto kernel = [](double sigma) {
        return SmoothingKernel(RegularizedDistance::of({{{{0.25, 0.5}}, {{0.75, 0.5}}}}), sigma);
    };
    const double h = 1e-5;
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> U(0.02, 0.98);
    int lp_ok = 0, xi_ok = 0, mono_ok = 0;
    double worst_split = 0, worst_lp = 0, worst_xi = -inf;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const GridField u = random_smooth_field(1000 + seed, box, 161, Interp::cubic);
        const double gmax = u.max_gradient();
        std::vector<double> diffs;
        bool lp = true;
        for (double sigma : {0.2, 0.1, 0.05}) {
            const auto K = kernel(sigma);
            for (double p : {1.0, 2.0}) {
                const double lhs = lp_norm_rect([&](const Vec2& x) { return convolve_variable(u, K, x).value; }, omega, p, 12);
                const double rhs = lp_norm_neighbourhood([&](const Vec2& x) { return u.value(x); }, omega, sigma, p, 12);
                worst_lp = std::max(worst_lp, lhs / rhs);
                lp = lp && lhs <= 2 * rhs;
            }
            diffs.push_back(lp_norm_rect([&](const Vec2& x) { return convolve_variable(u, K, x).value - u.value(x); },
                                         omega, 2.0, 12));
        }
        if (lp) ++lp_ok;
        if (diffs[1] < diffs[0] && diffs[2] < diffs[1]) ++mono_ok;
        const auto K = kernel(0.2);
        bool xi = true;
        for (int i = 0; i < 3; ++i) {
            Vec2 x{{U(rng), U(rng)}};
            while (std::abs(x[1] - 0.5) < 0.01) x = {{U(rng), U(rng)}};
            const GradientSplit s = convolution_gradient_split(u, K, x);
            Vec2 fd;
            for (std::size_t k = 0; k < 2; ++k) {
                Vec2 p = x, q = x;
                p[k] += h;
                q[k] -= h;
                fd[k] = (convolve_variable(u, K, p).value - convolve_variable(u, K, q).value) / (2 * h);
            }
            worst_split = std::max(worst_split, norm(fd - s.gradient(0.2)));
            worst_xi = std::max(worst_xi, norm(s.xi) - 2 * gmax);
            xi = xi && norm(s.xi) <= 2 * gmax + 1e-3;
        }
        if (xi) ++xi_ok;
    }
    o.check(lp_ok == 20, fmt("||u_sigma||_p <= 2||u||_p on %d/20 fields (max ratio %.3f)", lp_ok, worst_lp));
    o.check(xi_ok == 20, fmt("|xi^sigma| <= 2|grad u|_inf + 1e-3 on %d/20 fields (max excess %.3g)", xi_ok, worst_xi));
    o.check(worst_split <= 1e-6, fmt("gradient split against differences: max residual %.3g <= 1e-6", worst_split));
    o.check(mono_ok == 20, fmt("||u_sigma - u||_2 decreasing along sigma = 0.2, 0.1, 0.05 on %d/20 fields", mono_ok));
}

// ------------------------------------------------------------------- 8, 9

void sweep(Outcome& o, const BulkDensity& W, double target, double rel) {
    const auto M = standard_membrane();
    const SweepPartition sp;
    const auto part = partition_jump(M, sp.n, sp.eps, sp.theta);
    o.note(fmt("partition: n = %d, eps = %g, theta = %g; tilt disc r_U = %.4g, r_V = %.4g", sp.n, sp.eps, sp.theta,
               part.pieces[0].r_U, part.pieces[0].r_V));
    SweepOptions so;
    so.energy.grid = {{}, 64, 16, 2};
    const auto rep = convergence_sweep(M, W, surf_quad(aniso_q()), standard_rhos(), part, so);
    o.check(std::abs(rep.limit.total - target) <= 1e-6, fmt("limit G0w = %.8f, target %.8f", rep.limit.total, target));
    o.note("     rho      energy       gap     bulk      surface   quad_err  runtime");
    for (const auto& r : rep.rows) {
        if (!r.ok) {
            o.note(fmt("%8g  failed: %s", r.rho, r.error.c_str()));
            continue;
        }
        o.note(fmt("%8g  %.8f  %.6f  %.6f  %.6f  %.1e  %.1fs", r.rho, r.energy, r.gap, r.parts.bulk, r.parts.surface,
                   r.parts.quad_error, r.runtime));
    }
    const auto& b = rep.budget;
    o.note(fmt("eps-budget: discarded jump %.6f + tilt bulk %.6f (partition %.6f) + boundary strip %.6f = %.6f",
               b.discarded, b.tilt_bulk, b.partition(), b.strip, b.total()));
    o.check(rep.all_ok(), "every rho assembled with finite energy");
    o.check(rep.monotone.value_or(false), "gap nonincreasing along the rho list");
    const double allowed = rel * target + b.total();
    o.check(rep.final_gap() <= allowed, fmt("final gap %.6f <= %.0f%% of target (%.4f) + eps-budget (%.4f) = %.6f",
                                            rep.final_gap(), 100 * rel, rel * target, b.total(), allowed));
    o.note(fmt("final gap without the budget is %.1f%% of the target", 100 * rep.final_gap() / target));
    o.check(rep.lower_bound_ok, fmt("energy >= G0 estimate (%.6f) - eps-budget on every row", rep.limit.g0_estimate));
}

// ---------------------------------------------------------------------- 10

void validators(Outcome& o) {
    const std::size_t n = 10000;
    for (const auto& W : {orient_power(2), incomp_power(2)}) {
        const auto r = validate_bulk(W, n, 110);
        std::string failed;
        for (const auto& c : r.checks)
            if (!c.passed) failed += " " + c.name;
        o.check(r.passed(), W.name + fmt(": %zu checks at %zu samples", r.checks.size(), n) + (failed.empty() ? "" : ", failed:" + failed));
    }
    for (const auto& psi : {surf_quad(aniso_q()), surf_quad(Matrix33::identity()), griffith()}) {
        const auto r = validate_surface(psi, n, 111);
        std::string failed;
        for (const auto& c : r.checks)
            if (!c.passed) failed += " " + c.name;
        o.check(r.passed(), psi.name + fmt(": %zu checks at %zu samples", r.checks.size(), n) + (failed.empty() ? "" : ", failed:" + failed));
    }
    const auto r = validate_surface(barenblatt_counterexample(), n, 112);
    const auto& b3 = r.at("B3 C3 phi <= psi <= C4 phi");
    o.check(!b3.passed, fmt("BARENBLATT fails B3 as expected (%zu/%zu samples violate it)", b3.failures, b3.tested));
}

}  // namespace

int main() {
    criterion(1, "isometry and tilt bounds of the tilt map", 5, isometry_and_tilt);
    criterion(2, "pushed normal tilt sup|nu_3|/rho <= 2.2|zeta|", 10, normal_tilt);
    criterion(3, "det = 1 for corrected tilts and incompressible recovery", 60, incompressibility);
    criterion(4, "thick extension error is linear in |x3|", 30, error_law);
    criterion(5, "reduced density oracles and bounds", 30, reduced_oracles);
    criterion(6, "rank-one envelope chain properties", 120, envelope_properties);
    criterion(7, "variable-kernel convolution bounds", 60, variable_kernel);
    criterion(8, "limsup sweep, INCOMP_POWER, target 4.5", 300, [](Outcome& o) { sweep(o, incomp_power(2), 4.5, 0.02); });
    criterion(9, "limsup sweep, ORIENT_POWER, target W0 + 1.5", 300, [](Outcome& o) {
        sweep(o, orient_power(2), 2 + std::pow(2.0, -2.0 / 3) + std::cbrt(2.0) + 1.5, 0.03);
    });
    criterion(10, "density validators", 30, validators);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures;
}
