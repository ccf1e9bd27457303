#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "tfm/linalg.hpp"

namespace tfm {

struct GaussRule {
    std::vector<double> nodes;    // on (−1, 1), ascending
    std::vector<double> weights;  // sum to 2
};

/// Gauss–Legendre nodes by Newton on P_n, cached per order.
inline const GaussRule& gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard lock(mu);
    if (auto it = cache.find(n); it != cache.end()) return it->second;

    GaussRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1);
        const double w = 2 / ((1 - x * x) * dp * dp);
        r.nodes[n - 1 - i] = x;
        r.nodes[i] = -x;
        r.weights[i] = r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return cache.emplace(n, std::move(r)).first->second;
}

/// Gauss points mapped to [a, b]: calls f(x, w).
template <class F>
void for_each_gauss(double a, double b, int n, F&& f) {
    const auto& g = gauss_legendre(n);
    const double h = 0.5 * (b - a), m = 0.5 * (a + b);
    for (int i = 0; i < n; ++i) f(m + h * g.nodes[i], h * g.weights[i]);
}

struct Rect {
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    double area() const { return (x1 - x0) * (y1 - y0); }
    bool contains(const Vec2& p) const { return p[0] > x0 && p[0] < x1 && p[1] > y0 && p[1] < y1; }
    double boundary_distance(const Vec2& p) const {
        return std::min({p[0] - x0, x1 - p[0], p[1] - y0, y1 - p[1]});
    }
};

struct QuadPoint {
    Vec3 x;
    double w;
};

/// Tensor Gauss layout on Σ × (−1/2, 1/2): n×n planar cells, `order`² Gauss
/// points per cell, m Gauss points across the thickness.
struct PrismGrid {
    Rect domain;
    int n = 64;
    int m = 16;
    int order = 2;

    void validate() const {
        if (n < 2 || m < 2) throw std::invalid_argument("PrismGrid: n and m must be >= 2");
        if (order < 1) throw std::invalid_argument("PrismGrid: order must be >= 1");
    }

    std::size_t size() const { return std::size_t(n) * n * order * order * m; }

    /// Point k of the layout; k in [0, size()).
    QuadPoint point(std::size_t k) const {
        const auto& gp = gauss_legendre(order);
        const auto& gt = gauss_legendre(m);
        const std::size_t it = k % m;
        k /= m;
        const std::size_t qy = k % order;
        k /= order;
        const std::size_t qx = k % order;
        k /= order;
        const std::size_t cy = k % n, cx = k / n;
        const double hx = (domain.x1 - domain.x0) / n, hy = (domain.y1 - domain.y0) / n;
        QuadPoint q;
        q.x[0] = domain.x0 + hx * (cx + 0.5 * (1 + gp.nodes[qx]));
        q.x[1] = domain.y0 + hy * (cy + 0.5 * (1 + gp.nodes[qy]));
        q.x[2] = 0.5 * gt.nodes[it];
        q.w = 0.25 * hx * hy * gp.weights[qx] * gp.weights[qy] * 0.5 * gt.weights[it];
        return q;
    }

    std::vector<QuadPoint> points() const {
        validate();
        std::vector<QuadPoint> out(size());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = point(k);
        return out;
    }
};

/// Polar Gauss rule on a disc sector: radial Gauss on [r0, r1] (weight r dr),
/// angular Gauss on [θ0, θ1].
struct PolarRule {
    std::vector<Vec2> offsets;
    std::vector<double> weights;
};

inline PolarRule polar_rule(double r0, double r1, double th0, double th1, int nr, int nth) {
    PolarRule p;
    for_each_gauss(r0, r1, nr, [&](double r, double wr) {
        for_each_gauss(th0, th1, nth, [&](double t, double wt) {
            p.offsets.push_back({{r * std::cos(t), r * std::sin(t)}});
            p.weights.push_back(r * wr * wt);
        });
    });
    return p;
}

}  // namespace tfm
