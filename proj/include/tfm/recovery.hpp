#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/densities.hpp"
#include "tfm/extension.hpp"
#include "tfm/membrane.hpp"
#include "tfm/reduction.hpp"
#include "tfm/tilt.hpp"

namespace tfm {

struct RecoveryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------ third column

/// b = λA¹ + ΛA² + μ n/|n|², n = A¹∧A², so det(A|b) = μ.
struct ColumnCertificate {
    std::size_t cell = 0;
    Vec3 b;
    double w0 = 0;
    double det = 0;
    double lambda = 0, Lambda = 0, mu = 0;
};

inline ColumnCertificate decompose_column(const Matrix32& A, const Vec3& b) {
    ColumnCertificate c;
    c.b = b;
    const Vec3 n = cross_columns(A);
    c.mu = dot(b, n);
    c.det = det3(append_column(A, b));
    const Vec3 t = b - (c.mu / dot(n, n)) * n;
    const Vec3 a1 = A.col(0), a2 = A.col(1);
    const double g11 = dot(a1, a1), g12 = dot(a1, a2), g22 = dot(a2, a2);
    const double r1 = dot(a1, t), r2 = dot(a2, t), d = g11 * g22 - g12 * g12;
    c.lambda = (g22 * r1 - g12 * r2) / d;
    c.Lambda = (g11 * r2 - g12 * r1) / d;
    return c;
}

struct OptimalColumns {
    std::vector<Vec3> b;
    std::vector<ColumnCertificate> cert;
    double beta = 1;  // det(A|b) ≥ 1/β on every cell
};

/// Per cell, the minimizer ξ* of W(A|·), so that W(A|b) = W₀(A).
inline OptimalColumns optimal_third_column(const BulkDensity& W, const CrackedMembrane& m) {
    OptimalColumns out;
    double min_det = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.cells.size(); ++k) {
        const Matrix32& A = m.cells[k].A;
        const Vec3 n = cross_columns(A);
        const std::string id = "cell " + std::to_string(k);
        if (norm(n) < rank_threshold) throw RecoveryError(id + ": gradient has rank < 2");
        Vec3 b;
        ExtReal v;
        if (W.radial) {
            double mu = 0;
            v = reduce_bulk_radial(W, A, &mu);
            b = (mu / dot(n, n)) * n;
        } else {
            const auto r = reduce_bulk(W, A);
            v = r.value;
            b = r.xi;
        }
        if (v.is_infinite()) throw RecoveryError(id + ": reduced bulk density is infinite");
        ColumnCertificate c = decompose_column(A, b);
        c.cell = k;
        c.w0 = v.value();
        if (W.mode == ConstraintMode::incompressible && std::abs(c.det - 1) > 1e-10)
            throw RecoveryError(id + ": det(A|b) = " + std::to_string(c.det) + ", expected 1");
        if (W.mode == ConstraintMode::orientation_preserving && !(c.det > 0))
            throw RecoveryError(id + ": det(A|b) must be positive");
        min_det = std::min(min_det, c.det);
        out.b.push_back(b);
        out.cert.push_back(c);
    }
    out.beta = min_det > 0 ? std::max(1.0, 1 / min_det) : std::numeric_limits<double>::infinity();
    return out;
}

// ------------------------------------------------------------ optimal tilt

struct OptimalTilt {
    double zeta = 0;
    double value = 0;    // ψ(z, ν, ζ*) = ψ₀(z, ν)
    double bracket = 0;  // search half-width
    double K = 0;        // C₄(1+|z|)/C₃ ≥ bracket
};

inline OptimalTilt optimal_tilt(const SurfaceDensity& psi, const Vec3& z, const Vec2& nu) {
    if (norm(z) == 0.0) throw std::domain_error("optimal_tilt: jump must be nonzero");
    const auto r = reduce_surface(psi, z, nu);
    OptimalTilt t;
    t.zeta = r.zeta;
    t.value = r.value;
    t.bracket = r.bracket;
    t.K = psi.C4 * (1 + norm(z)) / psi.C3;
    // No tilt when ζ = 0 is already optimal to rounding; golden section only
    // lands within its tolerance of 0, which would build a useless map.
    const double at0 = psi(z, {{nu[0], nu[1], 0.0}});
    if (at0 <= t.value + 1e-13 * (1 + std::abs(t.value))) {
        t.zeta = 0;
        t.value = at0;
    }
    return t;
}

// --------------------------------------------------------------- partition

/// α'ᵢ on a jump segment with its disc neighbourhoods U ⋐ V around the midpoint.
struct SubSegment {
    std::size_t jump = 0;
    double s0 = 0, s1 = 0;
    Vec2 mid;
    double r_U = 0, r_V = 0;
    bool boundary_strip = false;  // V̄ not inside Σ: left untilted

    double length() const { return s1 - s0; }
};

struct JumpInterval {
    std::size_t jump = 0;
    double s0 = 0, s1 = 0;
    double length() const { return s1 - s0; }
};

struct JumpPartition {
    int n = 1;
    double eps = 0;
    double theta = 0.45;
    std::vector<SubSegment> pieces;
    std::vector<JumpInterval> discarded;  // gaps between the α'ᵢ and corner pieces

    double discarded_length() const {
        double s = 0;
        for (const auto& d : discarded) s += d.length();
        return s;
    }
    double strip_length() const {
        double s = 0;
        for (const auto& p : pieces)
            if (p.boundary_strip) s += p.length();
        return s;
    }
};

namespace detail {

/// Arms [a, b] of each jump after removing corner balls of radius ε.
struct Arm {
    std::size_t jump;
    double a, b;
};

inline std::vector<Arm> jump_arms(const CrackedMembrane& m, double eps, std::vector<JumpInterval>& discarded) {
    std::vector<Arm> arms;
    for (const auto& comp : jump_components(m)) {
        if (comp.size() == 1) {
            arms.push_back({comp[0], 0.0, m.jumps[comp[0]].length()});
            continue;
        }
        const JumpSegment& A = m.jumps[comp[0]];
        const JumpSegment& B = m.jumps[comp[1]];
        Vec2 corner{};
        for (const auto& p : {A.p0, A.p1})
            for (const auto& q : {B.p0, B.p1})
                if (norm(p - q) < 1e-12) corner = p;
        for (std::size_t idx : comp) {
            const JumpSegment& s = m.jumps[idx];
            const double L = s.length();
            if (L <= eps) throw RecoveryError("jump " + std::to_string(idx) + ": shorter than the corner ball");
            if (norm(s.p0 - corner) < 1e-12) {
                discarded.push_back({idx, 0.0, eps});
                arms.push_back({idx, eps, L});
            } else {
                discarded.push_back({idx, L - eps, L});
                arms.push_back({idx, 0.0, L - eps});
            }
        }
    }
    return arms;
}

inline std::vector<SubSegment> split_arms(const CrackedMembrane& m, const std::vector<Arm>& arms, int n, double eps,
                                          double theta, std::vector<JumpInterval>* discarded) {
    std::vector<SubSegment> pieces;
    for (const Arm& arm : arms) {
        const double L = arm.b - arm.a;
        if (!(L > eps)) throw RecoveryError("jump " + std::to_string(arm.jump) + ": length must exceed eps");
        const double step = L / n, gap = eps / n;
        const JumpSegment& j = m.jumps[arm.jump];
        for (int i = 0; i < n; ++i) {
            SubSegment p;
            p.jump = arm.jump;
            const double a = arm.a + i * step;
            p.s0 = a + gap / 2;
            p.s1 = a + step - gap / 2;
            p.mid = j.point(0.5 * (p.s0 + p.s1));
            p.r_U = 0.5 * p.length();
            p.r_V = p.r_U + theta * gap;
            p.boundary_strip = m.domain.boundary_distance(p.mid) <= p.r_V;
            pieces.push_back(p);
            if (discarded) {
                discarded->push_back({arm.jump, a, p.s0});
                discarded->push_back({arm.jump, p.s1, a + step});
            }
        }
    }
    return pieces;
}

/// Empty string when the tilted discs are pairwise disjoint and meet no other jump.
inline std::string separation_problem(const CrackedMembrane& m, const std::vector<SubSegment>& pieces) {
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto& p = pieces[i];
        if (p.boundary_strip) continue;
        for (std::size_t j = i + 1; j < pieces.size(); ++j) {
            const auto& q = pieces[j];
            if (q.boundary_strip) continue;
            if (norm(p.mid - q.mid) <= p.r_V + q.r_V)
                return "neighbourhoods of sub-segments " + std::to_string(i) + " and " + std::to_string(j) + " overlap";
        }
        for (std::size_t k = 0; k < m.jumps.size(); ++k) {
            if (k == p.jump) continue;
            if (point_segment_distance(p.mid, m.jumps[k].p0, m.jumps[k].p1) <= p.r_V)
                return "neighbourhood of sub-segment " + std::to_string(i) + " meets jump " + std::to_string(k);
        }
    }
    return {};
}

}  // namespace detail

/// n equal pieces αᵢ per straight arm, each shrunk by ε/n to α'ᵢ centred at its
/// midpoint; U = disc of radius |α'ᵢ|/2, V = U widened by θε/n.
inline JumpPartition partition_jump(const CrackedMembrane& m, int n, double eps, double theta = 0.45) {
    if (n < 1) throw std::invalid_argument("partition_jump: n must be >= 1");
    if (!(eps > 0)) throw std::invalid_argument("partition_jump: eps must be positive");
    if (!(theta > 0 && theta < 0.5)) throw std::invalid_argument("partition_jump: theta must lie in (0, 1/2)");
    JumpPartition P;
    P.n = n;
    P.eps = eps;
    P.theta = theta;
    const auto arms = detail::jump_arms(m, eps, P.discarded);
    P.pieces = detail::split_arms(m, arms, n, eps, theta, &P.discarded);
    const std::string why = detail::separation_problem(m, P.pieces);
    if (!why.empty()) {
        std::vector<int> ok;
        for (int k = 1; k <= 256; ++k) {
            try {
                if (detail::separation_problem(m, detail::split_arms(m, arms, k, eps, theta, nullptr)).empty())
                    ok.push_back(k);
            } catch (const RecoveryError&) {
            }
        }
        std::ostringstream msg;
        msg << "partition_jump: n = " << n << " infeasible (" << why << ")";
        if (ok.empty())
            msg << "; no feasible n in [1, 256]";
        else {
            int best = -1;
            for (int k : ok)
                if (k <= n) best = k;
            if (best > 0)
                msg << "; max feasible n <= " << n << " is " << best;
            else
                msg << "; smallest feasible n is " << ok.front();
        }
        throw RecoveryError(msg.str());
    }
    return P;
}

// ------------------------------------------------------------------ assembly

struct RecoveryOptions {
    double ode_tol = 1e-10;
    double newton_tol = 1e-13;
    int check_n = 16;  // planar samples per disc side for the precondition
};

struct PlacedTilt {
    std::size_t piece = 0;
    Vec3 z;
    OptimalTilt opt;
    TiltMap map;
};

/// u_ρ = w_ρ ∘ g_ρ on Σ × (−1/2, 1/2), g_ρ = f_ρ⁻¹, f_ρ the glued tilts.
class RecoveryDeformation {
public:
    struct Sample {
        Vec3 x;         // g_ρ(y)
        Vec3 value;     // u_ρ(y)
        Matrix33 grad;  // (∇_α u_ρ | ρ⁻¹∂₃u_ρ)
        std::size_t cell = 0;
        int tilt = -1;
    };

    RecoveryDeformation(CrackedMembrane m, OptimalColumns cols, JumpPartition part, std::vector<PlacedTilt> tilts,
                        double rho, ConstraintMode mode, const RecoveryOptions& opts)
        : m_(std::move(m)), cols_(std::move(cols)), part_(std::move(part)), tilts_(std::move(tilts)), rho_(rho),
          mode_(mode), opts_(opts) {
        if (mode_ == ConstraintMode::incompressible) {
            for (const auto& t : tilts_) corrected_.emplace_back(t.map, opts_.ode_tol);
            std::vector<ColumnField> fields;
            for (const Vec3& b : cols_.b) fields.push_back({b, Matrix32{}});
            // Thickness 4ρ leaves room for preimages with |x₃| a little above 1/2.
            ext_.emplace(incompressible_extend(m_, std::move(fields), 4 * rho_, GammaSolver::closed_form, opts_.ode_tol));
        }
        for (const auto& j : m_.jumps) {
            const Vec2 mid = 0.5 * (j.p0 + j.p1);
            const double h = 1e-7 * std::max(1.0, j.length());
            sides_.push_back({cell_of(mid + h * j.normal), cell_of(mid - h * j.normal)});
        }
    }

    const CrackedMembrane& membrane() const { return m_; }
    const OptimalColumns& columns() const { return cols_; }
    const JumpPartition& partition() const { return part_; }
    const std::vector<PlacedTilt>& tilts() const { return tilts_; }
    double rho() const { return rho_; }
    ConstraintMode mode() const { return mode_; }

    /// Tilt whose V contains x_α, −1 if none.
    int tilt_at(const Vec2& xa) const {
        for (std::size_t i = 0; i < tilts_.size(); ++i)
            if (!tilts_[i].map.outside(xa)) return int(i);
        return -1;
    }

    MapEval forward_with(int i, const Vec3& x) const {
        if (i < 0) return {x, Matrix33::identity()};
        if (mode_ == ConstraintMode::incompressible) return corrected_[i].eval(x);
        return tilts_[i].map.eval(x);
    }

    MapEval forward(const Vec3& x) const { return forward_with(tilt_at(planar(x)), x); }

    Vec3 inverse(const Vec3& y) const {
        const Vec2 ya = planar(y);
        for (std::size_t i = 0; i < tilts_.size(); ++i) {
            const TiltMap& t = tilts_[i].map;
            // f_i moves points by at most |O − I|·|x − x₀| ≤ ρ|ζ|(r_V + |x₃|).
            const double reach = rho_ * std::abs(t.zeta) * (t.cutoff.r_V + std::abs(y[2]) + 1);
            if (norm(ya - t.x0) >= t.cutoff.r_V + reach) continue;
            struct One {
                const RecoveryDeformation* d;
                int i;
                MapEval eval(const Vec3& x) const { return d->forward_with(i, x); }
            };
            try {
                const Vec3 x = newton_inverse(One{this, int(i)}, y, opts_.newton_tol);
                if (!t.outside(planar(x))) return x;
            } catch (const NewtonFailure&) {
                if (!t.outside(ya))
                    throw RecoveryError("Newton inverse of the tilt map failed; reduce rho");
            } catch (const MapPreconditionError& e) {
                throw RecoveryError(std::string(e.what()) + "; reduce rho");
            }
        }
        return y;
    }

    /// Cell whose affine data is used at x_α: the containing cell, else the
    /// nearest one (preimages can leave Σ by O(ρ)).
    std::size_t cell_of(const Vec2& xa) const {
        try {
            if (auto k = m_.locate(xa)) return *k;
        } catch (const BoundaryHit&) {
        }
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < m_.cells.size(); ++k) {
            const auto& poly = m_.cells[k].polygon;
            double d = point_in_polygon(xa, poly) ? 0.0 : std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < poly.size(); ++i)
                d = std::min(d, point_segment_distance(xa, poly[i], poly[(i + 1) % poly.size()]));
            if (d < bd) {
                bd = d;
                best = k;
            }
        }
        return best;
    }

    /// w_ρ in cell k and its rescaled gradient (∇_α w | ρ⁻¹∂₃w).
    MapEval w_in(const Vec3& x, std::size_t k) const {
        if (mode_ == ConstraintMode::incompressible) return ext_->eval_in({{x[0], x[1], rho_ * x[2]}}, k);
        const Cell& c = m_.cells[k];
        const Vec3& b = cols_.b[k];
        return {c.eval(planar(x)) + (rho_ * x[2]) * b, append_column(c.A, b)};
    }

    /// D⁻¹MD with D = diag(1, 1, 1/ρ).
    Matrix33 rescale(Matrix33 M) const {
        for (std::size_t i = 0; i < 2; ++i) {
            M(i, 2) /= rho_;
            M(2, i) *= rho_;
        }
        return M;
    }

    Sample eval(const Vec3& y) const {
        Sample s;
        s.x = inverse(y);
        s.tilt = tilt_at(planar(s.x));
        s.cell = cell_of(planar(s.x));
        const MapEval w = w_in(s.x, s.cell);
        s.value = w.value;
        if (s.tilt < 0)
            s.grad = w.jacobian;
        else
            s.grad = w.jacobian * rescale(inverse3(forward_with(s.tilt, s.x).jacobian));
        return s;
    }

    /// [w_ρ] at (point(s), t) on jump j, plus side minus minus side.
    Vec3 jump_of_w(std::size_t j, double s, double t) const {
        const Vec3 x = embed(m_.jumps[j].point(s), t);
        return w_in(x, sides_[j].first).value - w_in(x, sides_[j].second).value;
    }

private:
    CrackedMembrane m_;
    OptimalColumns cols_;
    JumpPartition part_;
    std::vector<PlacedTilt> tilts_;
    double rho_;
    ConstraintMode mode_;
    RecoveryOptions opts_;
    std::vector<CorrectedTilt> corrected_;
    std::optional<ThickExtension> ext_;
    std::vector<std::pair<std::size_t, std::size_t>> sides_;
};

/// Samples det∇f over each tilt cylinder; throws unless it stays in [1/2, 2]
/// (and, for corrected maps, unless every normal-fibre ODE stays regular).
inline void check_tilt_preconditions(const RecoveryDeformation& d, const RecoveryOptions& opts) {
    const int n = std::max(opts.check_n, 2);
    for (std::size_t i = 0; i < d.tilts().size(); ++i) {
        const TiltMap& t = d.tilts()[i].map;
        const double r = t.cutoff.r_V;
        // Preimages of Σ₁ reach |x₃| ≤ 1/2 + ρ|ζ|(r_V + 1).
        const double h = 0.5 + d.rho() * std::abs(t.zeta) * (r + 1);
        std::vector<double> x3s;
        for (int k = 0; k < 7; ++k) x3s.push_back(-h + 2 * h * k / 6);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                const Vec2 xa{{t.x0[0] - r + 2 * r * (a + 0.5) / n, t.x0[1] - r + 2 * r * (b + 0.5) / n}};
                if (t.outside(xa)) continue;
                for (double x3 : x3s) {
                    double J;
                    try {
                        J = det3(d.forward_with(int(i), embed(xa, x3)).jacobian);
                    } catch (const MapPreconditionError& e) {
                        std::ostringstream msg;
                        msg << "tilt " << i << ": " << e.what() << " at (" << e.where[0] << ", " << e.where[1] << ", "
                            << e.where[2] << "); reduce rho below " << d.rho();
                        throw RecoveryError(msg.str());
                    }
                    if (!(J >= 0.5 && J <= 2)) {
                        std::ostringstream msg;
                        msg << "tilt " << i << ": det grad f = " << J << " at (" << xa[0] << ", " << xa[1] << ", " << x3
                            << ") leaves [1/2, 2]; reduce rho below " << d.rho();
                        throw RecoveryError(msg.str());
                    }
                }
            }
    }
}

/// Direct mode: v̂ = u, ĥ = b = ξ* per cell. One tilt per sub-segment outside
/// the boundary strip, with κ = ν and ζ = ζ*(z(xᵢ), ν).
inline RecoveryDeformation assemble_recovery(const CrackedMembrane& m, const BulkDensity& W, const SurfaceDensity& psi,
                                             double rho, const JumpPartition& part, ConstraintMode mode,
                                             const RecoveryOptions& opts = {}) {
    if (!(rho > 0)) throw std::invalid_argument("assemble_recovery: rho must be positive");
    if (mode == ConstraintMode::unconstrained) mode = W.mode;
    if (mode != W.mode)
        throw std::invalid_argument(std::string("assemble_recovery: mode ") + to_string(mode) + " does not match density " +
                                    W.name + " (" + to_string(W.mode) + ")");
    validate_membrane(m, mode);
    OptimalColumns cols = optimal_third_column(W, m);
    std::vector<PlacedTilt> tilts;
    for (std::size_t i = 0; i < part.pieces.size(); ++i) {
        const SubSegment& p = part.pieces[i];
        if (p.boundary_strip) continue;
        const JumpSegment& j = m.jumps[p.jump];
        PlacedTilt t;
        t.piece = i;
        t.z = j.jump(0.5 * (p.s0 + p.s1));
        t.opt = optimal_tilt(psi, t.z, j.normal);
        if (t.opt.zeta == 0.0) continue;  // f = Id there
        t.map.x0 = p.mid;
        t.map.kappa = j.normal;
        t.map.zeta = t.opt.zeta;
        t.map.rho = rho;
        t.map.cutoff = {p.r_U, p.r_V};
        t.map.validate();
        tilts.push_back(t);
    }
    RecoveryDeformation d(m, std::move(cols), part, std::move(tilts), rho, mode, opts);
    check_tilt_preconditions(d, opts);
    return d;
}

/// Central-difference rescaled gradient of u_ρ at y; nullopt when the stencil
/// straddles the pushed jump (points use different cells).
inline std::optional<Matrix33> fd_rescaled_gradient(const RecoveryDeformation& d, const Vec3& y, double h = 1e-5) {
    Matrix33 G;
    for (std::size_t k = 0; k < 3; ++k) {
        Vec3 e{};
        e[k] = h;
        const auto p = d.eval(y + e), q = d.eval(y - e);
        if (p.cell != q.cell) return std::nullopt;
        const Vec3 col = (1 / (2 * h)) * (p.value - q.value);
        G.set_col(k, k == 2 ? (1 / d.rho()) * col : col);
    }
    return G;
}

struct RecoveryDetReport {
    double max_analytic = 0;  // max |det G − 1| from the chain rule
    double max_fd = 0;        // same with central differences
    double min_det = std::numeric_limits<double>::infinity();
    std::size_t points = 0, skipped = 0;
};

/// det of the rescaled gradient on an n×n×m grid of cell centres of Σ₁.
/// `target` is 1 in incompressible mode; otherwise the report's min_det is the
/// quantity of interest.
inline RecoveryDetReport recovery_det_check(const RecoveryDeformation& d, int n = 64, int m = 16, double h = 1e-5,
                                            int threads = 1, double target = 1) {
    const Rect& D = d.membrane().domain;
    const std::size_t N = std::size_t(n) * n * m;
    std::vector<double> ea(N, 0), ef(N, 0), dm(N, std::numeric_limits<double>::infinity());
    std::vector<char> skip(N, 0);
    parallel_for(N, threads, [&](std::size_t idx) {
        const int k = int(idx % m), j = int((idx / m) % n), i = int(idx / (std::size_t(m) * n));
        const Vec3 y{{D.x0 + (i + 0.5) * (D.x1 - D.x0) / n, D.y0 + (j + 0.5) * (D.y1 - D.y0) / n, -0.5 + (k + 0.5) / m}};
        const auto s = d.eval(y);
        const double da = det3(s.grad);
        ea[idx] = std::abs(da - target);
        dm[idx] = da;
        const auto G = fd_rescaled_gradient(d, y, h);
        if (G)
            ef[idx] = std::abs(det3(*G) - target);
        else
            skip[idx] = 1;
    });
    RecoveryDetReport r;
    r.points = N;
    for (std::size_t i = 0; i < N; ++i) {
        r.max_analytic = std::max(r.max_analytic, ea[i]);
        r.max_fd = std::max(r.max_fd, ef[i]);
        r.min_det = std::min(r.min_det, dm[i]);
        r.skipped += skip[i];
    }
    return r;
}

}  // namespace tfm
