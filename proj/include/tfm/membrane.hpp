#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/linalg.hpp"
#include "tfm/quadrature.hpp"

namespace tfm {

/// Thrown when a lookup point lies on a cell edge; the gradient is only
/// defined a.e., so callers re-sample.
struct BoundaryHit : std::runtime_error {
    Vec2 where;
    explicit BoundaryHit(const Vec2& x)
        : std::runtime_error("point lies on a cell boundary"), where(x) {}
};

struct Cell {
    std::vector<Vec2> polygon;
    Matrix32 A;
    Vec3 c;

    Vec3 eval(const Vec2& x) const { return A * x + c; }

    double area() const {
        double s = 0;
        for (std::size_t i = 0; i < polygon.size(); ++i) {
            const auto& p = polygon[i];
            const auto& q = polygon[(i + 1) % polygon.size()];
            s += p[0] * q[1] - q[0] * p[1];
        }
        return 0.5 * std::abs(s);
    }
};

/// Trace c0 + s·c1 as a function of arclength s from the first endpoint.
struct AffineTrace {
    Vec3 c0;
    Vec3 c1;
    Vec3 operator()(double s) const { return c0 + s * c1; }
};

struct JumpSegment {
    Vec2 p0, p1;
    Vec2 normal;  // unit; the plus side is the one it points into
    AffineTrace trace_plus, trace_minus;

    double length() const { return norm(p1 - p0); }
    Vec2 tangent() const { return (p1 - p0) / length(); }
    Vec2 point(double s) const { return p0 + s * tangent(); }
    Vec3 jump(double s) const { return trace_plus(s) - trace_minus(s); }
};

enum class ConstraintMode { unconstrained, orientation_preserving, incompressible };

inline const char* to_string(ConstraintMode m) {
    switch (m) {
        case ConstraintMode::unconstrained: return "unconstrained";
        case ConstraintMode::orientation_preserving: return "orientation_preserving";
        case ConstraintMode::incompressible: return "incompressible";
    }
    return "?";
}

inline double point_segment_distance(const Vec2& x, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double L2 = dot(ab, ab);
    double t = L2 > 0 ? dot(x - a, ab) / L2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(x - (a + t * ab));
}

inline bool point_in_polygon(const Vec2& x, const std::vector<Vec2>& poly) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a[1] > x[1]) != (b[1] > x[1]) &&
            x[0] < (b[0] - a[0]) * (x[1] - a[1]) / (b[1] - a[1]) + a[0])
            inside = !inside;
    }
    return inside;
}

struct CrackedMembrane {
    Rect domain;
    std::vector<Cell> cells;
    std::vector<JumpSegment> jumps;

    static constexpr double edge_tol = 1e-12;

    /// Index of the cell containing x in its interior, nullopt if x lies in
    /// no cell. Throws BoundaryHit within edge_tol of a cell edge.
    std::optional<std::size_t> locate(const Vec2& x) const {
        for (std::size_t k = 0; k < cells.size(); ++k) {
            const auto& poly = cells[k].polygon;
            for (std::size_t i = 0; i < poly.size(); ++i)
                if (point_segment_distance(x, poly[i], poly[(i + 1) % poly.size()]) < edge_tol)
                    throw BoundaryHit(x);
            if (point_in_polygon(x, poly)) return k;
        }
        return std::nullopt;
    }

    const Cell& cell_at(const Vec2& x) const {
        auto k = locate(x);
        if (!k) throw std::out_of_range("point outside every cell");
        return cells[*k];
    }

    double area() const { return domain.area(); }
};

inline Matrix32 gradient_of(const CrackedMembrane& m, const Vec2& x) { return m.cell_at(x).A; }

/// Segment between p0 and p1 whose traces are read off the two adjacent cells.
inline JumpSegment make_jump(const CrackedMembrane& m, const Vec2& p0, const Vec2& p1, const Vec2& normal) {
    JumpSegment j;
    j.p0 = p0;
    j.p1 = p1;
    j.normal = normal / norm(normal);
    const Vec2 mid = 0.5 * (p0 + p1);
    const double h = 1e-7 * std::max(1.0, norm(p1 - p0));
    const Cell& plus = m.cell_at(mid + h * j.normal);
    const Cell& minus = m.cell_at(mid - h * j.normal);
    const Vec2 tau = j.tangent();
    j.trace_plus = {plus.eval(p0), plus.A * tau};
    j.trace_minus = {minus.eval(p0), minus.A * tau};
    return j;
}

/// Groups jump segments into connected components (shared endpoints).
inline std::vector<std::vector<std::size_t>> jump_components(const CrackedMembrane& m) {
    const std::size_t n = m.jumps.size();
    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    auto touch = [](const JumpSegment& a, const JumpSegment& b) {
        for (const auto& p : {a.p0, a.p1})
            for (const auto& q : {b.p0, b.p1})
                if (norm(p - q) < 1e-12) return true;
        return false;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (touch(m.jumps[i], m.jumps[j])) parent[find(i)] = find(j);
    std::vector<std::vector<std::size_t>> comps;
    std::vector<long> slot(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (slot[r] < 0) {
            slot[r] = long(comps.size());
            comps.emplace_back();
        }
        comps[slot[r]].push_back(i);
    }
    return comps;
}

struct MembraneError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Structural checks of the data model. `eta` is the lower bound on
/// |A¹∧A²| required in constrained modes.
inline void validate_membrane(const CrackedMembrane& m, ConstraintMode mode, double eta = 1e-12) {
    if (m.cells.empty()) throw MembraneError("membrane has no cells");
    double area = 0;
    for (std::size_t k = 0; k < m.cells.size(); ++k) {
        const auto& c = m.cells[k];
        if (c.polygon.size() < 3) throw MembraneError("cell " + std::to_string(k) + " has fewer than 3 vertices");
        for (double v : c.A.a)
            if (!std::isfinite(v)) throw MembraneError("cell " + std::to_string(k) + " has non-finite gradient");
        area += c.area();
        if (mode != ConstraintMode::unconstrained && norm(cross_columns(c.A)) < eta)
            throw MembraneError("cell " + std::to_string(k) + " violates |A1 x A2| >= eta");
    }
    if (std::abs(area - m.domain.area()) > 1e-9 * m.domain.area())
        throw MembraneError("cells do not cover the domain");

    for (std::size_t k = 0; k < m.jumps.size(); ++k) {
        const auto& j = m.jumps[k];
        const std::string id = "jump " + std::to_string(k);
        if (std::abs(norm(j.normal) - 1) > 1e-12) throw MembraneError(id + ": normal is not unit");
        if (j.length() <= 0) throw MembraneError(id + ": zero length");
        if (std::abs(dot(j.normal, j.tangent())) > 1e-12) throw MembraneError(id + ": normal not orthogonal");
        const double L = j.length();
        {
            // z(s) is affine; its closest approach to 0 on the open segment.
            const Vec3 z0 = j.trace_plus.c0 - j.trace_minus.c0, z1 = j.trace_plus.c1 - j.trace_minus.c1;
            const double zz = dot(z1, z1);
            const double s = zz > 0 ? std::clamp(-dot(z0, z1) / zz, 0.0, L) : 0.5 * L;
            if (norm(j.jump(s)) < 1e-14 && s > 0 && s < L) throw MembraneError(id + ": jump vanishes inside the segment");
            if (norm(j.jump(0.5 * L)) == 0.0) throw MembraneError(id + ": zero jump");
        }
        // Lies on a shared edge: the two sides belong to different cells whose
        // traces agree with the stored ones.
        const double h = 1e-7 * std::max(1.0, L);
        for (double frac : {0.25, 0.5, 0.75}) {
            const double s = frac * L;
            const Vec2 x = j.point(s);
            auto kp = m.locate(x + h * j.normal);
            auto km = m.locate(x - h * j.normal);
            if (!kp || !km || *kp == *km) throw MembraneError(id + ": not on a shared cell boundary");
            const double tp = norm(m.cells[*kp].eval(x) - j.trace_plus(s));
            const double tm = norm(m.cells[*km].eval(x) - j.trace_minus(s));
            if (tp > 1e-9 || tm > 1e-9) throw MembraneError(id + ": traces disagree with adjacent cells");
        }
    }
    for (const auto& comp : jump_components(m)) {
        if (comp.size() > 2) throw MembraneError("jump component with more than two segments");
        if (comp.size() == 2) {
            const auto& a = m.jumps[comp[0]];
            const auto& b = m.jumps[comp[1]];
            int shared = 0;
            for (const auto& p : {a.p0, a.p1})
                for (const auto& q : {b.p0, b.p1}) shared += norm(p - q) < 1e-12;
            if (shared != 1) throw MembraneError("two-segment jump component must share exactly one endpoint");
        }
    }
}

/// Unit square split at x₁ = 1/2; the right cell is the left one shifted by z,
/// so the jump along the full-height interface is constant and equal to z.
inline CrackedMembrane split_square(const Matrix32& A, const Vec3& z) {
    CrackedMembrane m;
    m.domain = {0, 1, 0, 1};
    m.cells.push_back({{{{0, 0}}, {{0.5, 0}}, {{0.5, 1}}, {{0, 1}}}, A, {}});
    m.cells.push_back({{{{0.5, 0}}, {{1, 0}}, {{1, 1}}, {{0.5, 1}}}, A, z});
    m.jumps.push_back(make_jump(m, {{0.5, 0}}, {{0.5, 1}}, {{1, 0}}));
    return m;
}

inline CrackedMembrane single_cell(const Rect& domain, const Matrix32& A, const Vec3& c = {}) {
    CrackedMembrane m;
    m.domain = domain;
    m.cells.push_back({{{{domain.x0, domain.y0}}, {{domain.x1, domain.y0}}, {{domain.x1, domain.y1}}, {{domain.x0, domain.y1}}},
                       A, c});
    return m;
}

}  // namespace tfm
