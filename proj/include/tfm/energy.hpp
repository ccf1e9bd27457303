#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tfm/densities.hpp"
#include "tfm/envelopes.hpp"
#include "tfm/parallel.hpp"
#include "tfm/quadrature.hpp"
#include "tfm/recovery.hpp"
#include "tfm/reduction.hpp"

namespace tfm {

inline constexpr double inf = std::numeric_limits<double>::infinity();

// -------------------------------------------------------------------- bulk

struct BulkResult {
    double value = 0;
    double identity = 0;  // x = g(y) outside every V
    double tilt = 0;      // x in some tilt neighbourhood
    double min_det = inf;
    double max_norm = 0;  // max |(∇_α u | ρ⁻¹∂₃u)|
    std::size_t points = 0;
    std::optional<Vec3> offending;  // first quadrature point with infinite integrand
    bool infinite() const { return offending.has_value(); }
};

/// ∫ W(∇_α u | ρ⁻¹∂₃u) over Σ × (−1/2, 1/2). In incompressible mode |det − 1|
/// ≤ det_tol is accepted; beyond it the integrand is +∞ and the loop stops at
/// the first such point (lowest index, so the report is thread-count stable).
inline BulkResult bulk_energy(const RecoveryDeformation& d, const BulkDensity& W, PrismGrid grid, int threads = 1,
                              double det_tol = 1e-6) {
    grid.domain = d.membrane().domain;
    grid.validate();
    const std::size_t N = grid.size();
    std::vector<double> vals(N, 0.0), in_tilt(N, 0.0), dets(N, inf), norms(N, 0.0);
    std::atomic<std::size_t> first_bad{N};
    parallel_for(N, threads, [&](std::size_t k) {
        if (k > first_bad.load(std::memory_order_relaxed)) return;
        const QuadPoint q = grid.point(k);
        const auto s = d.eval(q.x);
        const ExtReal v = W.tolerant(s.grad, det_tol);
        dets[k] = det3(s.grad);
        norms[k] = frob_pow(s.grad, 1);
        if (v.is_infinite()) {
            std::size_t cur = first_bad.load();
            while (k < cur && !first_bad.compare_exchange_weak(cur, k)) {
            }
            return;
        }
        vals[k] = q.w * v.value();
        if (s.tilt >= 0) in_tilt[k] = vals[k];
    });
    BulkResult r;
    r.points = N;
    if (first_bad.load() < N) {
        r.value = inf;
        r.identity = r.tilt = inf;
        r.offending = grid.point(first_bad.load()).x;
        return r;
    }
    r.value = pairwise_sum(vals);
    r.tilt = pairwise_sum(in_tilt);
    r.identity = r.value - r.tilt;
    for (std::size_t k = 0; k < N; ++k) {
        r.min_det = std::min(r.min_det, dets[k]);
        r.max_norm = std::max(r.max_norm, norms[k]);
    }
    return r;
}

// ----------------------------------------------------------------- surface

struct SurfaceResult {
    double value = 0;
    double tilted = 0;     // over the α'ᵢ carrying a tilt (or needing none)
    double discarded = 0;  // gaps and corner pieces
    double strip = 0;      // boundary-strip sub-segments
    double area = 0;       // H² of the pushed jump surface
};

namespace detail {

/// Breakpoints on jump j: ends, sub-segment ends, and crossings of every
/// tilt's U and V circles, so each Gauss panel sees a smooth integrand.
inline std::vector<double> surface_breaks(const RecoveryDeformation& d, std::size_t j) {
    const JumpSegment& J = d.membrane().jumps[j];
    const double L = J.length();
    std::vector<double> br{0.0, L};
    for (const auto& p : d.partition().pieces)
        if (p.jump == j) {
            br.push_back(p.s0);
            br.push_back(p.s1);
        }
    for (const auto& dd : d.partition().discarded)
        if (dd.jump == j) {
            br.push_back(dd.s0);
            br.push_back(dd.s1);
        }
    const Vec2 tau = J.tangent();
    for (const auto& t : d.tilts())
        for (double r : {t.map.cutoff.r_U, t.map.cutoff.r_V}) {
            const Vec2 w = J.p0 - t.map.x0;
            const double b = dot(tau, w), c = dot(w, w) - r * r, disc = b * b - c;
            if (disc <= 0) continue;
            for (double s : {-b - std::sqrt(disc), -b + std::sqrt(disc)})
                if (s > 0 && s < L) br.push_back(s);
        }
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }), br.end());
    return br;
}

}  // namespace detail

/// ∫ ψ_ρ([u], ν) dH² over f_ρ(J × (−1/2, 1/2)), parameterized by (s, t) ↦
/// f_ρ(point(s), t); area element |r_s ∧ r_t|, jump values pulled back to w_ρ.
inline SurfaceResult surface_energy(const RecoveryDeformation& d, const SurfaceDensity& psi, int order_s = 8,
                                    int order_t = 8) {
    SurfaceResult res;
    const auto& m = d.membrane();
    for (std::size_t j = 0; j < m.jumps.size(); ++j) {
        const JumpSegment& J = m.jumps[j];
        const Vec3 tau = embed(J.tangent()), nu0 = embed(J.normal);
        const auto br = detail::surface_breaks(d, j);
        for (std::size_t k = 0; k + 1 < br.size(); ++k) {
            const double a = br[k], b = br[k + 1], sm = 0.5 * (a + b);
            double* bucket = &res.discarded;
            for (const auto& p : d.partition().pieces)
                if (p.jump == j && sm > p.s0 && sm < p.s1) bucket = p.boundary_strip ? &res.strip : &res.tilted;
            double panel = 0, area = 0;
            for_each_gauss(a, b, order_s, [&](double s, double ws) {
                for_each_gauss(-0.5, 0.5, order_t, [&](double t, double wt) {
                    const MapEval e = d.forward(embed(J.point(s), t));
                    const Vec3 n = cross(e.jacobian * tau, e.jacobian.col(2));
                    const double dA = norm(n);
                    if (dA < 1e-10) {
                        std::ostringstream msg;
                        msg << "surface_energy: degenerate tangent pair on jump " << j << " at s = " << s << ", t = " << t;
                        throw RecoveryError(msg.str());
                    }
                    Vec3 nu = n / dA;
                    if (dot(nu, nu0) < 0) nu = -1.0 * nu;
                    panel += ws * wt * eval_psi_rho(psi, d.jump_of_w(j, s, t), nu, d.rho()) * dA;
                    area += ws * wt * dA;
                });
            });
            *bucket += panel;
            res.area += area;
        }
    }
    res.value = res.tilted + res.discarded + res.strip;
    return res;
}

// ------------------------------------------------------------------- limit

struct LimitOptions {
    int order = 8;  // Gauss points per jump for ∫ψ₀
    bool envelope = false;
    QCOptions qc;
};

struct LimitEnergy {
    double bulk = 0;     // Σ |cell| W₀(A)
    double surface = 0;  // ∫ ψ₀([u], ν) dH¹
    double total = 0;    // G₀ʷ(u)
    std::optional<double> qc_bulk;  // Σ |cell| · QC upper estimate of QW₀(A)
    double g0_estimate = 0;         // qc_bulk (or bulk) + surface: upper estimate of G₀(u)
};

inline double reduced_value(const BulkDensity& W, const Matrix32& A) {
    const ExtReal v = W.radial ? reduce_bulk_radial(W, A) : reduce_bulk(W, A).value;
    return v.value_or(inf);
}

inline LimitEnergy limit_energy(const CrackedMembrane& m, const BulkDensity& W, const SurfaceDensity& psi,
                                const LimitOptions& opts = {}) {
    LimitEnergy e;
    for (const auto& c : m.cells) e.bulk += c.area() * reduced_value(W, c.A);
    for (const auto& J : m.jumps)
        for_each_gauss(0.0, J.length(), opts.order,
                       [&](double s, double w) { e.surface += w * reduce_surface(psi, J.jump(s), J.normal).value; });
    e.total = e.bulk + e.surface;
    if (opts.envelope) {
        const MatrixDensity W0 = reduced_bulk(W);
        double q = 0;
        for (const auto& c : m.cells) {
            const auto est = quasiconvex_upper_estimate(W0, c.A, opts.qc);
            q += c.area() * std::min(est.value.value_or(inf), reduced_value(W, c.A));
        }
        e.qc_bulk = q;
    }
    e.g0_estimate = e.qc_bulk.value_or(e.bulk) + e.surface;
    return e;
}

// ------------------------------------------------------------------ budget

/// A priori ε-costs of the partition, in the ρ → 0 limit:
///  - discarded: ∫ over gaps and corner pieces of ψ(z, ν, 0) − ψ₀(z, ν), which
///    bounds any partial tilt there when ψ is convex in the third slot;
///  - tilt bulk: Σᵢ ∫_{Vⁱ} W(A | b + φζAκ) − W₀(A), the limit of the rescaled
///    gradient (A | (b + φζAκ)) inside a tilt neighbourhood;
///  - strip: the untilted boundary-strip sub-segments, same integrand as discarded.
struct EpsBudget {
    double discarded = 0;
    double tilt_bulk = 0;
    double strip = 0;

    double partition() const { return discarded + tilt_bulk; }
    double total() const { return partition() + strip; }
};

inline EpsBudget eps_budget(const RecoveryDeformation& d, const BulkDensity& W, const SurfaceDensity& psi, int order = 8,
                            int disc_nr = 24, int disc_nth = 64) {
    EpsBudget e;
    const auto& m = d.membrane();
    auto excess = [&](std::size_t j, double a, double b) {
        const JumpSegment& J = m.jumps[j];
        double s = 0;
        for_each_gauss(a, b, order, [&](double x, double w) {
            const Vec3 z = J.jump(x);
            s += w * (psi(z, embed(J.normal)) - reduce_surface(psi, z, J.normal).value);
        });
        return s;
    };
    for (const auto& g : d.partition().discarded) e.discarded += excess(g.jump, g.s0, g.s1);
    for (const auto& p : d.partition().pieces)
        if (p.boundary_strip) e.strip += excess(p.jump, p.s0, p.s1);
    for (const auto& t : d.tilts()) {
        const TiltMap& f = t.map;
        const Vec3 ak{{f.kappa[0], f.kappa[1], 0}};
        for (const auto& [r0, r1] : {std::pair{0.0, f.cutoff.r_U}, std::pair{f.cutoff.r_U, f.cutoff.r_V}}) {
            const PolarRule pr = polar_rule(r0, r1, 0, 2 * std::numbers::pi, disc_nr, disc_nth);
            for (std::size_t q = 0; q < pr.offsets.size(); ++q) {
                const Vec2 xa = f.x0 + pr.offsets[q];
                const std::size_t k = d.cell_of(xa);
                const Matrix32& A = m.cells[k].A;
                const Vec3 col = d.columns().b[k] + (f.phi(xa) * f.zeta) * (A * planar(ak));
                const ExtReal v = W.tolerant(append_column(A, col));
                e.tilt_bulk += pr.weights[q] * (v.value_or(inf) - d.columns().cert[k].w0);
            }
        }
    }
    return e;
}

// ------------------------------------------------------------------- sweep

struct EnergyOptions {
    PrismGrid grid{{}, 64, 16, 2};
    int surface_order = 8;
    int threads = 1;
    double det_tol = 1e-6;
    bool quad_error = true;  // re-run the bulk on an n/2 grid
};

struct EnergyBreakdown {
    double bulk = 0, surface = 0, total = 0;
    double bulk_identity = 0, bulk_tilt = 0;
    double surface_tilted = 0, surface_discarded = 0, surface_strip = 0;
    double surface_area = 0;
    double quad_error = 0;  // |bulk(n) − bulk(n/2)|
    double min_det = inf, max_norm = 0;
    std::optional<Vec3> offending;
};

inline EnergyBreakdown rescaled_energy(const RecoveryDeformation& d, const BulkDensity& W, const SurfaceDensity& psi,
                                       const EnergyOptions& opts = {}) {
    EnergyBreakdown e;
    const BulkResult b = bulk_energy(d, W, opts.grid, opts.threads, opts.det_tol);
    e.bulk = b.value;
    e.bulk_identity = b.identity;
    e.bulk_tilt = b.tilt;
    e.min_det = b.min_det;
    e.max_norm = b.max_norm;
    e.offending = b.offending;
    if (b.infinite()) {
        e.total = inf;
        return e;
    }
    if (opts.quad_error && opts.grid.n >= 4) {
        PrismGrid coarse = opts.grid;
        coarse.n /= 2;
        coarse.m = std::max(2, coarse.m / 2);
        e.quad_error = std::abs(bulk_energy(d, W, coarse, opts.threads, opts.det_tol).value - b.value);
    }
    const SurfaceResult s = surface_energy(d, psi, opts.surface_order, opts.surface_order);
    e.surface = s.value;
    e.surface_tilted = s.tilted;
    e.surface_discarded = s.discarded;
    e.surface_strip = s.strip;
    e.surface_area = s.area;
    e.total = e.bulk + e.surface;
    return e;
}

struct SweepRow {
    double rho = 0;
    bool ok = false;
    std::string error;
    double energy = inf;
    double target = 0;
    double gap = inf;
    EnergyBreakdown parts;
    double runtime = 0;  // seconds
};

struct SweepOptions {
    EnergyOptions energy;
    RecoveryOptions recovery;
    LimitOptions limit;
    double monotone_tol = 1e-6;
};

struct SweepReport {
    LimitEnergy limit;
    EpsBudget budget;
    std::vector<SweepRow> rows;
    std::optional<bool> monotone;  // gaps nonincreasing along the ρ list; unset for one row
    bool lower_bound_ok = true;    // energy ≥ G₀-estimate − ε-budget on every row
    bool all_ok() const {
        for (const auto& r : rows)
            if (!r.ok) return false;
        return !rows.empty();
    }
    double final_gap() const { return rows.empty() ? inf : rows.back().gap; }
};

inline SweepReport convergence_sweep(const CrackedMembrane& m, const BulkDensity& W, const SurfaceDensity& psi,
                                     const std::vector<double>& rhos, const JumpPartition& part,
                                     const SweepOptions& opts = {}) {
    for (std::size_t i = 1; i < rhos.size(); ++i)
        if (!(rhos[i] < rhos[i - 1])) throw std::invalid_argument("convergence_sweep: rho list must be decreasing");
    SweepReport rep;
    rep.limit = limit_energy(m, W, psi, opts.limit);
    bool have_budget = false;
    for (double rho : rhos) {
        SweepRow row;
        row.rho = rho;
        row.target = rep.limit.total;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const RecoveryDeformation d = assemble_recovery(m, W, psi, rho, part, W.mode, opts.recovery);
            if (!have_budget) {
                rep.budget = eps_budget(d, W, psi);
                have_budget = true;
            }
            row.parts = rescaled_energy(d, W, psi, opts.energy);
            row.energy = row.parts.total;
            row.gap = std::abs(row.energy - row.target);
            row.ok = std::isfinite(row.energy);
            if (!row.ok) {
                std::ostringstream msg;
                msg << "infinite bulk integrand at (" << (*row.parts.offending)[0] << ", " << (*row.parts.offending)[1]
                    << ", " << (*row.parts.offending)[2] << ")";
                row.error = msg.str();
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        row.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.rows.push_back(row);
    }
    for (const auto& r : rep.rows)
        if (r.ok && r.energy < rep.limit.g0_estimate - rep.budget.total()) rep.lower_bound_ok = false;
    if (rep.rows.size() > 1) {
        bool mono = true;
        for (std::size_t i = 1; i < rep.rows.size(); ++i)
            if (!(rep.rows[i].gap <= rep.rows[i - 1].gap + opts.monotone_tol)) mono = false;
        rep.monotone = mono;
    }
    return rep;
}

}  // namespace tfm
