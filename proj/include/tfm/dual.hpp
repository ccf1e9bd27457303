#pragma once

#include <array>
#include <cmath>

namespace tfm {

/// Forward-mode dual number with a gradient in two planar variables.
/// Nesting Dual<Dual<...>> gives higher derivatives; the maps module uses
/// three levels to reach third derivatives of the cutoff.
template <class T>
struct Dual {
    T v{};
    std::array<T, 2> d{};

    Dual() = default;
    Dual(double c) : v(c), d{T(0.0), T(0.0)} {}  // NOLINT: constants promote
    Dual(T val, T d0, T d1) : v(val), d{d0, d1} {}

    Dual& operator+=(const Dual& o) {
        v += o.v;
        d[0] += o.d[0];
        d[1] += o.d[1];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        d[0] -= o.d[0];
        d[1] -= o.d[1];
        return *this;
    }
    Dual& operator*=(const Dual& o) { return *this = *this * o; }

    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
    friend Dual operator-(const Dual& a) { return Dual(-a.v, -a.d[0], -a.d[1]); }
    friend Dual operator*(const Dual& a, const Dual& b) {
        return Dual(a.v * b.v, a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1]);
    }
    friend Dual operator/(const Dual& a, const Dual& b) {
        const T inv = T(1.0) / b.v;
        const T q = a.v * inv;
        return Dual(q, (a.d[0] - q * b.d[0]) * inv, (a.d[1] - q * b.d[1]) * inv);
    }
    friend Dual operator+(double c, Dual a) { a.v += c; return a; }
    friend Dual operator+(Dual a, double c) { a.v += c; return a; }
    friend Dual operator-(Dual a, double c) { a.v -= c; return a; }
    friend Dual operator-(double c, const Dual& a) { return Dual(c) - a; }
    friend Dual operator*(double c, const Dual& a) { return Dual(c * a.v, c * a.d[0], c * a.d[1]); }
    friend Dual operator*(const Dual& a, double c) { return c * a; }
    friend Dual operator/(const Dual& a, double c) { return (1.0 / c) * a; }
};

template <class T>
Dual<T> sqrt(const Dual<T>& a) {
    using std::sqrt;
    const T r = sqrt(a.v);
    const T h = T(0.5) / r;
    return Dual<T>(r, a.d[0] * h, a.d[1] * h);
}

/// Plain value of a possibly nested dual.
inline double primal(double x) { return x; }
template <class T>
double primal(const Dual<T>& x) { return primal(x.v); }

template <class T>
bool operator<(const Dual<T>& a, double c) { return primal(a) < c; }
template <class T>
bool operator>(const Dual<T>& a, double c) { return primal(a) > c; }
template <class T>
bool operator<=(const Dual<T>& a, double c) { return primal(a) <= c; }
template <class T>
bool operator>=(const Dual<T>& a, double c) { return primal(a) >= c; }

/// Seed coordinate x with derivative e_k at every nesting level.
template <class T>
struct Seeder;
template <>
struct Seeder<double> {
    static double seed(double x, int) { return x; }
    static double constant(double c) { return c; }
};
template <class T>
struct Seeder<Dual<T>> {
    static Dual<T> seed(double x, int k) {
        return Dual<T>(Seeder<T>::seed(x, k), Seeder<T>::constant(k == 0 ? 1.0 : 0.0),
                       Seeder<T>::constant(k == 1 ? 1.0 : 0.0));
    }
    static Dual<T> constant(double c) { return Dual<T>(c); }
};

using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;

}  // namespace tfm
