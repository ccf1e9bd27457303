#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/densities.hpp"
#include "tfm/ext_real.hpp"
#include "tfm/linalg.hpp"
#include "tfm/optimize.hpp"
#include "tfm/parallel.hpp"

namespace tfm {

using MatrixDensity = std::function<ExtReal(const Matrix32&)>;

/// Grid over rank-one splits F ± b⊗a. `b_max` = 0 picks 2(1 + |F|).
struct SplitGrid {
    int angles = 64;
    int b_dirs = 13;
    int radii = 6;
    int lambdas = 7;
    double b_max = 0;
    bool refine = true;

    void validate() const {
        if (angles < 1 || b_dirs < 1 || radii < 1 || lambdas < 1)
            throw std::invalid_argument("SplitGrid: all counts must be positive");
        if (b_max < 0) throw std::invalid_argument("SplitGrid: b_max must be >= 0");
    }
    std::size_t size() const { return std::size_t(angles) * b_dirs * radii * lambdas; }
};

/// `top` is used at the matrix asked about, `inner` inside the recursion.
struct SearchSpec {
    SplitGrid top;
    SplitGrid inner{8, 7, 3, 3, 0, false};
    int threads = 1;
};

struct LaminationSplit {
    double lambda = 0;
    Vec2 a;
    Vec3 b;
    ExtReal plus, minus;  // f(F₊), f(F₋)
};

struct LaminationNode {
    Matrix32 F;
    int level = 0;
    ExtReal value;
    std::optional<LaminationSplit> split;  // set only when it beats f(F)
};

namespace detail {

/// Directions for b on a half sphere: the 13 cube axes/diagonals first, then
/// a Fibonacci lattice when more are asked for.
inline std::vector<Vec3> half_sphere_directions(int n) {
    static const std::array<Vec3, 13> cube = {{{{1, 0, 0}},
                                                {{0, 1, 0}},
                                                {{0, 0, 1}},
                                                {{1, 1, 0}},
                                                {{1, -1, 0}},
                                                {{1, 0, 1}},
                                                {{1, 0, -1}},
                                                {{0, 1, 1}},
                                                {{0, 1, -1}},
                                                {{1, 1, 1}},
                                                {{1, 1, -1}},
                                                {{1, -1, 1}},
                                                {{1, -1, -1}}}};
    std::vector<Vec3> out;
    if (n <= 13) {
        for (int i = 0; i < n; ++i) out.push_back(cube[i] / norm(cube[i]));
        return out;
    }
    const double golden = M_PI * (3 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = (i + 0.5) / n;  // upper half only
        const double r = std::sqrt(1 - z * z);
        out.push_back({{r * std::cos(golden * i), r * std::sin(golden * i), z}});
    }
    return out;
}

struct SplitCandidate {
    ExtReal value = ExtReal::infinity();
    LaminationSplit split;
};

/// (1−λ)g(F + λ b⊗a) + λ g(F − (1−λ) b⊗a); the two points average to F.
template <class G>
SplitCandidate evaluate_split(G& g, const Matrix32& F, double lambda, const Vec2& a, const Vec3& b) {
    const Matrix32 ba = outer(b, a);
    SplitCandidate c;
    c.split = {lambda, a, b, g(F + lambda * ba), g(F - (1 - lambda) * ba)};
    c.value = (1 - lambda) * c.split.plus + lambda * c.split.minus;
    return c;
}

/// Best split of g at F over the grid, optionally polished by Nelder–Mead in
/// (θ, b, logit λ). Grid cells are visited in a fixed order and ties keep the
/// first, so the result does not depend on the thread count.
template <class G>
SplitCandidate best_split(G& g, const Matrix32& F, const SplitGrid& grid, int threads) {
    grid.validate();
    const double B = grid.b_max > 0 ? grid.b_max : 2 * (1 + norm(F));
    const auto dirs = half_sphere_directions(grid.b_dirs);
    std::vector<SplitCandidate> per_angle(grid.angles);
    parallel_for(grid.angles, threads, [&](std::size_t ia) {
        const double th = 2 * M_PI * ia / grid.angles;
        const Vec2 a{{std::cos(th), std::sin(th)}};
        SplitCandidate best;
        for (const Vec3& d : dirs)
            for (int ir = 0; ir < grid.radii; ++ir) {
                const double r = B * std::pow(0.5, grid.radii - 1 - ir);
                for (int il = 1; il <= grid.lambdas; ++il) {
                    const double lambda = double(il) / (grid.lambdas + 1);
                    auto c = evaluate_split(g, F, lambda, a, r * d);
                    if (c.value < best.value) best = c;
                }
            }
        per_angle[ia] = best;
    });
    SplitCandidate best;
    for (const auto& c : per_angle)
        if (c.value < best.value) best = c;
    if (!grid.refine || best.value.is_infinite()) return best;

    const double big = 1e300;
    auto unpack = [](const std::array<double, 5>& x) {
        const double lambda = 1 / (1 + std::exp(-x[4]));
        return std::make_tuple(lambda, Vec2{{std::cos(x[0]), std::sin(x[0])}}, Vec3{{x[1], x[2], x[3]}});
    };
    auto obj = [&](const std::array<double, 5>& x) {
        const auto [lambda, a, b] = unpack(x);
        if (!(lambda > 0 && lambda < 1)) return big;
        return evaluate_split(g, F, lambda, a, b).value.value_or(big);
    };
    const auto& s = best.split;
    const double lam = std::clamp(s.lambda, 1e-12, 1 - 1e-12);
    const std::array<double, 5> x0 = {std::atan2(s.a[1], s.a[0]), s.b[0], s.b[1], s.b[2], std::log(lam / (1 - lam))};
    const double rb = std::max(norm(s.b), 1e-3);
    const std::array<double, 5> step = {M_PI / grid.angles, 0.25 * rb, 0.25 * rb, 0.25 * rb, 0.5};
    const auto nm = nelder_mead<5>(obj, x0, step, 1e-14, 1e-10, 600);
    if (nm.f < best.value.value_or(big)) {
        const auto [lambda, a, b] = unpack(nm.x);
        auto c = evaluate_split(g, F, lambda, a, b);
        if (c.value < best.value) best = c;
    }
    return best;
}

/// A split counts only when it beats `current` by more than rounding: with b
/// shrinking to zero the split value tends to f(F) and may undercut it by an ulp.
struct Improved {
    ExtReal value;
    std::optional<LaminationSplit> split;
};

inline Improved improve(ExtReal current, const SplitCandidate& c) {
    if (c.value.is_infinite()) return {current, std::nullopt};
    if (current.is_infinite() || c.value.value() < current.value() - 1e-14 * std::abs(current.value()))
        return {c.value, c.split};
    return {current, std::nullopt};
}

}  // namespace detail

/// One Kohn–Strang step at F: min of f(F) and the best barycentric split.
inline LaminationNode kohn_strang_step(const MatrixDensity& f, const Matrix32& F, const SplitGrid& grid = {},
                                       int threads = 1) {
    LaminationNode node;
    node.F = F;
    node.level = 1;
    auto g = [&](const Matrix32& G) { return f(G); };
    const auto r = detail::improve(f(F), detail::best_split(g, F, grid, threads));
    node.value = r.value;
    node.split = r.split;
    return node;
}

/// Iterated Kohn–Strang envelope R_k f. At the matrix asked about, every level
/// is evaluated exactly and R_k(F) = min(R_{k−1}(F), best split of R_{k−1}),
/// so R_k ≤ R_{k−1} holds to the last bit. Inner values are memoized on the
/// exact bit pattern of the matrix (a lattice key would return values taken
/// at a neighbouring matrix, off by lattice × Lipschitz constant).
class RankOneEnvelope {
public:
    static constexpr int max_depth = 4;

    RankOneEnvelope(MatrixDensity f, SearchSpec spec) : f_(std::move(f)), spec_(spec) {
        spec_.top.validate();
        spec_.inner.validate();
    }

    /// R_0 … R_k at F.
    std::vector<LaminationNode> chain(const Matrix32& F, int k) {
        check_depth(k);
        std::vector<LaminationNode> out;
        LaminationNode n0;
        n0.F = F;
        n0.value = f_(F);
        out.push_back(n0);
        for (int level = 1; level <= k; ++level) {
            LaminationNode n;
            n.F = F;
            n.level = level;
            auto g = [&](const Matrix32& G) { return inner(G, level - 1); };
            const auto r = detail::improve(out.back().value, detail::best_split(g, F, spec_.top, spec_.threads));
            n.value = r.value;
            n.split = r.split;
            out.push_back(n);
        }
        return out;
    }

    ExtReal operator()(const Matrix32& F, int k) { return chain(F, k).back().value; }

    std::size_t memo_size() const {
        std::shared_lock lock(mu_);
        return memo_.size();
    }

private:
    using Key = std::array<std::int64_t, 7>;

    void check_depth(int k) const {
        if (k < 0 || k > max_depth)
            throw std::invalid_argument("rank_one_envelope: depth must be in [0, " + std::to_string(max_depth) + "]");
    }

    ExtReal inner(const Matrix32& F, int k) {
        if (k == 0) return f_(F);
        Key key;
        key[0] = k;
        for (int i = 0; i < 6; ++i) key[i + 1] = std::bit_cast<std::int64_t>(F.a[i]);
        {
            std::shared_lock lock(mu_);
            if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        }
        ExtReal v = inner(F, k - 1);
        auto g = [&](const Matrix32& H) { return inner(H, k - 1); };
        v = detail::improve(v, detail::best_split(g, F, spec_.inner, 1)).value;
        std::unique_lock lock(mu_);
        memo_[key] = v;  // deterministic value, so a racing writer stores the same
        return v;
    }

    MatrixDensity f_;
    SearchSpec spec_;
    mutable std::shared_mutex mu_;
    std::map<Key, ExtReal> memo_;
};

inline ExtReal rank_one_envelope(const MatrixDensity& f, const Matrix32& F, int k, const SearchSpec& spec = {}) {
    RankOneEnvelope env(f, spec);
    return env(F, k);
}

/// min(|F − A|², |F − B|²): zero-valued wells.
inline MatrixDensity two_well(const Matrix32& A, const Matrix32& B) {
    return [A, B](const Matrix32& F) {
        const double da = norm(F - A), db = norm(F - B);
        return ExtReal(std::min(da * da, db * db));
    };
}

// Quasiconvex upper estimate: P1 test fields on a (possibly rotated) unit square.

struct QCOptions {
    int mesh = 8;               // n×n squares, two triangles each
    double angle = 0;           // rotation of the square; see adapt_to_laminate
    bool adapt_to_laminate = false;
    bool laminate_start = true;
    std::optional<LaminationSplit> laminate;  // else found by one Kohn–Strang step
    SplitGrid laminate_grid{32, 13, 6, 7, 0, true};
    int random_starts = 1;
    std::uint64_t seed = 1;
    int max_sweeps = 400;
    double step_tol = 1e-9;
    std::vector<std::vector<Vec3>> warm_starts;  // nodal fields, (n+1)² entries
};

struct QCEstimate {
    Matrix32 F;
    int mesh = 0;
    double angle = 0;
    ExtReal value;
    std::vector<double> history;  // best mean after each sweep of the winning start
    bool stalled = false;
    std::string start;  // which start won
    std::vector<Vec3> field;
};

namespace detail {

struct P1Square {
    int n;
    double angle;
    Matrix22 R;  // physical = R · reference

    P1Square(int n_, double angle_) : n(n_), angle(angle_) {
        R(0, 0) = std::cos(angle);
        R(0, 1) = -std::sin(angle);
        R(1, 0) = std::sin(angle);
        R(1, 1) = std::cos(angle);
    }
    int nodes() const { return (n + 1) * (n + 1); }
    int node(int i, int j) const { return j * (n + 1) + i; }
    bool boundary(int id) const {
        const int i = id % (n + 1), j = id / (n + 1);
        return i == 0 || j == 0 || i == n || j == n;
    }
    int triangles() const { return 2 * n * n; }
    std::array<int, 3> tri(int t) const {
        const int sq = t / 2, i = sq % n, j = sq / n;
        if (t % 2 == 0) return {node(i, j), node(i + 1, j), node(i + 1, j + 1)};
        return {node(i, j), node(i + 1, j + 1), node(i, j + 1)};
    }
    double area() const { return 0.5 / (double(n) * n); }

    /// ∇φ on triangle t in physical coordinates.
    Matrix32 gradient(const std::vector<Vec3>& phi, int t) const {
        const auto v = tri(t);
        const double h = 1.0 / n;
        Vec3 d1, d2;  // derivatives along reference x and y
        if (t % 2 == 0) {
            d1 = (phi[v[1]] - phi[v[0]]) / h;
            d2 = (phi[v[2]] - phi[v[1]]) / h;
        } else {
            d1 = (phi[v[1]] - phi[v[2]]) / h;
            d2 = (phi[v[2]] - phi[v[0]]) / h;
        }
        const Matrix32 Dref = Matrix32::from_cols({d1, d2});
        return Dref * transpose(R);
    }

    std::vector<std::vector<int>> incident() const {
        std::vector<std::vector<int>> inc(nodes());
        for (int t = 0; t < triangles(); ++t)
            for (int v : tri(t)) inc[v].push_back(t);
        return inc;
    }

    Vec2 reference_point(int id) const {
        return {{double(id % (n + 1)) / n, double(id / (n + 1)) / n}};
    }
};

inline ExtReal mean_of(const std::vector<ExtReal>& vals, double w) {
    std::vector<double> fin;
    fin.reserve(vals.size());
    for (const auto& v : vals) {
        if (v.is_infinite()) return ExtReal::infinity();
        fin.push_back(w * v.value());
    }
    return pairwise_sum(fin);
}

}  // namespace detail

/// Upper estimate of the quasiconvex envelope at F: the smallest mean of
/// f(F + ∇φ) found over P1 fields φ vanishing on the square's boundary.
/// Descent is coordinate-wise on nodal values with a shrinking step, from
/// the zero field, a laminate, any warm starts and seeded random starts.
inline QCEstimate quasiconvex_upper_estimate(const MatrixDensity& f, const Matrix32& F, QCOptions opts = {}) {
    if (opts.mesh < 2) throw std::invalid_argument("quasiconvex_upper_estimate: mesh must be >= 2");
    if (!(opts.step_tol > 0)) throw std::invalid_argument("quasiconvex_upper_estimate: step_tol must be positive");

    std::optional<LaminationSplit> lam = opts.laminate;
    if (!lam && opts.laminate_start) {
        const auto node = kohn_strang_step(f, F, opts.laminate_grid);
        if (node.split) lam = node.split;
    }
    double angle = opts.angle;
    if (opts.adapt_to_laminate && lam) angle = std::atan2(lam->a[1], lam->a[0]);

    const detail::P1Square sq(opts.mesh, angle);
    const auto inc = sq.incident();
    const double h = 1.0 / opts.mesh;
    const double w = sq.area();

    struct Start {
        std::string name;
        std::vector<Vec3> phi;
    };
    std::vector<Start> starts;
    starts.push_back({"zero", std::vector<Vec3>(sq.nodes())});
    if (lam) {
        // Sawtooth along the laminate normal: slope λb over a (1−λ) fraction
        // of each period, slope −(1−λ)b over the rest.
        const double l = lam->lambda;
        const int q = std::max(2, int(std::lround(1 / std::min(l, 1 - l))));
        const double P = q * h;
        const Vec2 a_ref = transpose(sq.R) * lam->a;
        std::vector<Vec3> phi(sq.nodes());
        for (int id = 0; id < sq.nodes(); ++id) {
            if (sq.boundary(id)) continue;
            const double t = dot(a_ref, sq.reference_point(id));
            double s = std::fmod(t, P);
            if (s < 0) s += P;
            const double up = (1 - l) * P;
            const double amp = s < up ? l * s : l * up - (1 - l) * (s - up);
            phi[id] = amp * lam->b;
        }
        starts.push_back({"laminate", phi});
    }
    for (std::size_t k = 0; k < opts.warm_starts.size(); ++k) {
        if (int(opts.warm_starts[k].size()) != sq.nodes())
            throw std::invalid_argument("quasiconvex_upper_estimate: warm start has the wrong node count");
        auto phi = opts.warm_starts[k];
        for (int id = 0; id < sq.nodes(); ++id)
            if (sq.boundary(id)) phi[id] = Vec3{};
        starts.push_back({"warm" + std::to_string(k), phi});
    }
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> N(0, 1);
    for (int k = 0; k < opts.random_starts; ++k) {
        std::vector<Vec3> phi(sq.nodes());
        for (int id = 0; id < sq.nodes(); ++id)
            for (int c = 0; c < 3; ++c) phi[id][c] = sq.boundary(id) ? 0.0 : 0.5 * h * (1 + norm(F)) * N(rng);
        starts.push_back({"random" + std::to_string(k), phi});
    }

    QCEstimate best;
    best.F = F;
    best.mesh = opts.mesh;
    best.angle = angle;
    best.value = ExtReal::infinity();
    for (auto& st : starts) {
        auto& phi = st.phi;
        std::vector<ExtReal> tv(sq.triangles());
        for (int t = 0; t < sq.triangles(); ++t) tv[t] = f(F + sq.gradient(phi, t));
        auto local = [&](int id) {
            ExtReal s = 0.0;
            for (int t : inc[id]) s = s + tv[t];
            return s;
        };
        std::vector<double> hist;
        double step = 0.5 * h * (1 + norm(F));
        bool stalled = true;
        for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
            bool moved = false;
            for (int id = 0; id < sq.nodes(); ++id) {
                if (sq.boundary(id)) continue;
                for (int c = 0; c < 3; ++c) {
                    const ExtReal before = local(id);
                    const double old = phi[id][c];
                    std::vector<ExtReal> saved;
                    for (int t : inc[id]) saved.push_back(tv[t]);
                    bool accepted = false;
                    for (double sgn : {1.0, -1.0}) {
                        phi[id][c] = old + sgn * step;
                        for (int t : inc[id]) tv[t] = f(F + sq.gradient(phi, t));
                        if (local(id) < before) {
                            accepted = true;
                            break;
                        }
                    }
                    if (accepted) {
                        moved = true;
                    } else {
                        phi[id][c] = old;
                        for (std::size_t k = 0; k < inc[id].size(); ++k) tv[inc[id][k]] = saved[k];
                    }
                }
            }
            hist.push_back(detail::mean_of(tv, w).value_or(std::numeric_limits<double>::infinity()));
            if (!moved) step *= 0.5;
            if (step < opts.step_tol) {
                stalled = false;
                break;
            }
        }
        const ExtReal v = detail::mean_of(tv, w);
        if (v < best.value) {
            best.value = v;
            best.history = hist;
            best.stalled = stalled;
            best.start = st.name;
            best.field = phi;
        }
    }
    if (best.value.is_infinite()) {
        best.start = "zero";
        best.field.assign(sq.nodes(), Vec3{});
    }
    return best;
}

// BV-ellipticity: piecewise-constant competitors on the unit square around a
// flat interface.

struct CompetitorFamily {
    bool identity = true;
    int wedges = 0;     // interface bent through one interior apex
    int triangles = 0;  // triangle of a third value sitting on the interface
    double margin = 0.02;
    std::uint64_t seed = 1;
};

struct CompetitorResult {
    std::string kind;
    std::vector<double> params;  // wedge: apex (s, r); triangle: s_a, s_b, apex (s, r), value slot
    double energy = 0;
    double ratio = 0;

    std::string describe() const {
        std::ostringstream os;
        os.precision(6);
        os << kind;
        for (std::size_t k = 0; k < params.size(); ++k) os << (k ? "," : " ") << params[k];
        return os.str();
    }
};

struct BVReport {
    double reference = 0;  // ψ₀(i − j, ν)
    double min_ratio = 0;
    std::string argmin;
    std::size_t tested = 0;
    std::size_t violations = 0;  // ratio < 1 − tol
    double tol = 0;
    std::vector<CompetitorResult> results;

    bool passed() const { return violations == 0; }
};

namespace detail {

/// Oriented interface piece p → q; the left side carries `left`, the right `right`.
struct Interface {
    Vec2 p, q;
    Vec3 left, right;
};

/// Σ ψ(u_left − u_right, rot90(q − p)); rot90 of the segment is its length
/// times the unit normal pointing left, and ψ is 1-homogeneous in ν.
inline double jump_integral(const SurfaceDensity& psi, const std::vector<Interface>& pieces) {
    double e = 0;
    for (const auto& s : pieces) {
        const Vec3 z = s.left - s.right;
        if (norm(z) == 0.0) continue;
        const Vec2 d = s.q - s.p;
        e += psi(z, {{-d[1], d[0], 0.0}});
    }
    return e;
}

}  // namespace detail

/// Compares the jump energy of each competitor against ψ₀(i − j, ν). Work is
/// in the frame (s, r) with x = sτ + rν, τ = (ν₂, −ν₁); the square is
/// |s|, |r| < 1/2 and the pure jump has u = i for r > 0, u = j for r < 0.
inline BVReport bv_ellipticity_test(const SurfaceDensity& psi0, const Vec3& i, const Vec3& j, const Vec2& nu,
                                    const CompetitorFamily& fam = {}, double tol = 1e-9) {
    if (std::abs(norm(nu) - 1) > 1e-12) throw std::invalid_argument("bv_ellipticity_test: nu must be a unit vector");
    if (norm(i - j) == 0.0) throw std::domain_error("bv_ellipticity_test: i == j gives no jump");
    const Vec2 tau{{nu[1], -nu[0]}};  // det(τ|ν) = 1
    auto X = [&](double s, double r) { return s * tau + r * nu; };

    BVReport rep;
    rep.tol = tol;
    rep.reference = psi0(i - j, embed(nu));
    rep.min_ratio = std::numeric_limits<double>::infinity();
    auto record = [&](std::string kind, std::vector<double> params, const std::vector<detail::Interface>& pieces) {
        CompetitorResult c{std::move(kind), std::move(params), detail::jump_integral(psi0, pieces), 0};
        c.ratio = c.energy / rep.reference;
        ++rep.tested;
        if (c.ratio < 1 - tol) ++rep.violations;
        if (c.ratio < rep.min_ratio) {
            rep.min_ratio = c.ratio;
            rep.argmin = c.describe();
        }
        rep.results.push_back(std::move(c));
    };

    // Traversing left to right along r = 0 keeps r > 0 on the left.
    if (fam.identity) record("identity", {}, {{X(-0.5, 0), X(0.5, 0), i, j}});

    std::mt19937_64 rng(fam.seed);
    const double lim = 0.5 - fam.margin;
    std::uniform_real_distribution<double> U(-lim, lim);
    for (int k = 0; k < fam.wedges; ++k) {
        const double sp = U(rng), rp = U(rng);
        record("wedge", {sp, rp}, {{X(-0.5, 0), X(sp, rp), i, j}, {X(sp, rp), X(0.5, 0), i, j}});
    }
    for (int k = 0; k < fam.triangles; ++k) {
        double sa = U(rng), sb = U(rng);
        if (sa > sb) std::swap(sa, sb);
        const double sp = U(rng), rp = U(rng);
        // third value: one of the traces, their average, or a random vector
        Vec3 w;
        switch (k % 4) {
        case 0: w = i; break;
        case 1: w = j; break;
        case 2: w = 0.5 * (i + j); break;
        default: {
            std::normal_distribution<double> N(0, 1);
            w = Vec3{{N(rng), N(rng), N(rng)}};
        }
        }
        const bool above = rp > 0;
        const Vec3 outside = above ? i : j, across = above ? j : i;
        const Vec2 A = X(sa, 0), B = X(sb, 0), P = X(sp, rp);
        std::vector<detail::Interface> pieces = {{X(-0.5, 0), A, i, j}, {B, X(0.5, 0), i, j}};
        // Counterclockwise in (s, r) puts the inside on the left.
        if (above) {
            pieces.push_back({A, B, w, across});
            pieces.push_back({B, P, w, outside});
            pieces.push_back({P, A, w, outside});
        } else {
            pieces.push_back({A, P, w, outside});
            pieces.push_back({P, B, w, outside});
            pieces.push_back({B, A, w, across});
        }
        record("triangle", {sa, sb, sp, rp, double(k % 4)}, pieces);
    }
    return rep;
}

}  // namespace tfm
