#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <ostream>

namespace tfm {

/// Fixed-size column vector. Generic in the scalar so the same code runs on
/// doubles and on forward-mode dual numbers.
template <class T, std::size_t N>
struct Vec {
    std::array<T, N> v{};

    constexpr T& operator[](std::size_t i) { return v[i]; }
    constexpr const T& operator[](std::size_t i) const { return v[i]; }
    static constexpr std::size_t size() { return N; }

    Vec& operator+=(const Vec& o) {
        for (std::size_t i = 0; i < N; ++i) v[i] += o.v[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        for (std::size_t i = 0; i < N; ++i) v[i] -= o.v[i];
        return *this;
    }
    template <class S>
    Vec& operator*=(const S& s) {
        for (auto& x : v) x *= s;
        return *this;
    }
};

template <class T, std::size_t N>
Vec<T, N> operator+(Vec<T, N> a, const Vec<T, N>& b) { return a += b; }
template <class T, std::size_t N>
Vec<T, N> operator-(Vec<T, N> a, const Vec<T, N>& b) { return a -= b; }
template <class T, std::size_t N>
Vec<T, N> operator-(Vec<T, N> a) {
    for (auto& x : a.v) x = -x;
    return a;
}
template <class T, std::size_t N, class S>
Vec<T, N> operator*(const S& s, Vec<T, N> a) {
    for (auto& x : a.v) x = s * x;
    return a;
}
template <class T, std::size_t N, class S>
Vec<T, N> operator*(Vec<T, N> a, const S& s) {
    for (auto& x : a.v) x = x * s;
    return a;
}
template <class T, std::size_t N, class S>
Vec<T, N> operator/(Vec<T, N> a, const S& s) {
    for (auto& x : a.v) x = x / s;
    return a;
}

template <class T, std::size_t N>
T dot(const Vec<T, N>& a, const Vec<T, N>& b) {
    T s = a[0] * b[0];
    for (std::size_t i = 1; i < N; ++i) s = s + a[i] * b[i];
    return s;
}

template <std::size_t N>
double norm(const Vec<double, N>& a) { return std::sqrt(dot(a, a)); }

template <class T>
Vec<T, 3> cross(const Vec<T, 3>& a, const Vec<T, 3>& b) {
    return {{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]}};
}

/// Row-major dense matrix.
template <class T, std::size_t R, std::size_t C>
struct Mat {
    std::array<T, R * C> a{};

    static constexpr std::size_t rows() { return R; }
    static constexpr std::size_t cols() { return C; }

    constexpr T& operator()(std::size_t i, std::size_t j) { return a[i * C + j]; }
    constexpr const T& operator()(std::size_t i, std::size_t j) const { return a[i * C + j]; }

    Vec<T, R> col(std::size_t j) const {
        Vec<T, R> c;
        for (std::size_t i = 0; i < R; ++i) c[i] = (*this)(i, j);
        return c;
    }
    void set_col(std::size_t j, const Vec<T, R>& c) {
        for (std::size_t i = 0; i < R; ++i) (*this)(i, j) = c[i];
    }

    static Mat identity() {
        Mat m;
        for (std::size_t i = 0; i < (R < C ? R : C); ++i) m(i, i) = T(1);
        return m;
    }
    static Mat from_cols(std::initializer_list<Vec<T, R>> cs) {
        Mat m;
        std::size_t j = 0;
        for (const auto& c : cs) m.set_col(j++, c);
        return m;
    }

    Mat& operator+=(const Mat& o) {
        for (std::size_t i = 0; i < R * C; ++i) a[i] += o.a[i];
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        for (std::size_t i = 0; i < R * C; ++i) a[i] -= o.a[i];
        return *this;
    }
};

template <class T, std::size_t R, std::size_t C>
Mat<T, R, C> operator+(Mat<T, R, C> a, const Mat<T, R, C>& b) { return a += b; }
template <class T, std::size_t R, std::size_t C>
Mat<T, R, C> operator-(Mat<T, R, C> a, const Mat<T, R, C>& b) { return a -= b; }
template <class T, std::size_t R, std::size_t C, class S>
Mat<T, R, C> operator*(const S& s, Mat<T, R, C> m) {
    for (auto& x : m.a) x = s * x;
    return m;
}

template <class T, std::size_t R, std::size_t K, std::size_t C>
Mat<T, R, C> operator*(const Mat<T, R, K>& x, const Mat<T, K, C>& y) {
    Mat<T, R, C> m;
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            T s = x(i, 0) * y(0, j);
            for (std::size_t k = 1; k < K; ++k) s = s + x(i, k) * y(k, j);
            m(i, j) = s;
        }
    return m;
}

template <class T, std::size_t R, std::size_t C>
Vec<T, R> operator*(const Mat<T, R, C>& m, const Vec<T, C>& x) {
    Vec<T, R> y;
    for (std::size_t i = 0; i < R; ++i) {
        T s = m(i, 0) * x[0];
        for (std::size_t k = 1; k < C; ++k) s = s + m(i, k) * x[k];
        y[i] = s;
    }
    return y;
}

template <class T, std::size_t R, std::size_t C>
Mat<T, C, R> transpose(const Mat<T, R, C>& m) {
    Mat<T, C, R> t;
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) t(j, i) = m(i, j);
    return t;
}

/// Frobenius norm.
template <std::size_t R, std::size_t C>
double norm(const Mat<double, R, C>& m) {
    double s = 0;
    for (double x : m.a) s += x * x;
    return std::sqrt(s);
}

template <std::size_t R, std::size_t C>
double max_abs(const Mat<double, R, C>& m) {
    double s = 0;
    for (double x : m.a) s = std::max(s, std::abs(x));
    return s;
}

template <class T, std::size_t R, std::size_t C>
Mat<T, R, C> outer(const Vec<T, R>& b, const Vec<T, C>& a) {
    Mat<T, R, C> m;
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) m(i, j) = b[i] * a[j];
    return m;
}

using Vec2 = Vec<double, 2>;
using Vec3 = Vec<double, 3>;
using Matrix32 = Mat<double, 3, 2>;
using Matrix33 = Mat<double, 3, 3>;
using Matrix22 = Mat<double, 2, 2>;

/// E¹ ∧ E².
template <class T>
Vec<T, 3> cross_columns(const Mat<T, 3, 2>& E) { return cross(E.col(0), E.col(1)); }

/// Cofactor expansion along the first row.
template <class T>
T det3(const Mat<T, 3, 3>& F) {
    return F(0, 0) * (F(1, 1) * F(2, 2) - F(1, 2) * F(2, 1)) -
           F(0, 1) * (F(1, 0) * F(2, 2) - F(1, 2) * F(2, 0)) +
           F(0, 2) * (F(1, 0) * F(2, 1) - F(1, 1) * F(2, 0));
}

template <class T>
T det3(const Vec<T, 3>& c0, const Vec<T, 3>& c1, const Vec<T, 3>& c2) {
    return dot(c0, cross(c1, c2));
}

/// (E | ξ).
template <class T>
Mat<T, 3, 3> append_column(const Mat<T, 3, 2>& E, const Vec<T, 3>& xi) {
    Mat<T, 3, 3> F;
    for (std::size_t i = 0; i < 3; ++i) {
        F(i, 0) = E(i, 0);
        F(i, 1) = E(i, 1);
        F(i, 2) = xi[i];
    }
    return F;
}

inline Matrix32 first_two_columns(const Matrix33& F) {
    Matrix32 E;
    for (std::size_t i = 0; i < 3; ++i) {
        E(i, 0) = F(i, 0);
        E(i, 1) = F(i, 1);
    }
    return E;
}

inline Matrix33 inverse3(const Matrix33& F) {
    const double d = det3(F);
    Matrix33 inv;
    inv(0, 0) = (F(1, 1) * F(2, 2) - F(1, 2) * F(2, 1)) / d;
    inv(0, 1) = (F(0, 2) * F(2, 1) - F(0, 1) * F(2, 2)) / d;
    inv(0, 2) = (F(0, 1) * F(1, 2) - F(0, 2) * F(1, 1)) / d;
    inv(1, 0) = (F(1, 2) * F(2, 0) - F(1, 0) * F(2, 2)) / d;
    inv(1, 1) = (F(0, 0) * F(2, 2) - F(0, 2) * F(2, 0)) / d;
    inv(1, 2) = (F(0, 2) * F(1, 0) - F(0, 0) * F(1, 2)) / d;
    inv(2, 0) = (F(1, 0) * F(2, 1) - F(1, 1) * F(2, 0)) / d;
    inv(2, 1) = (F(0, 1) * F(2, 0) - F(0, 0) * F(2, 1)) / d;
    inv(2, 2) = (F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0)) / d;
    return inv;
}

inline Vec3 embed(const Vec2& x, double x3 = 0.0) { return {{x[0], x[1], x3}}; }
inline Vec2 planar(const Vec3& x) { return {{x[0], x[1]}}; }

/// Eigenvalues of a symmetric 3×3 matrix by cyclic Jacobi rotations, ascending.
inline Vec3 symmetric_eigenvalues(Matrix33 A) {
    for (int sweep = 0; sweep < 60; ++sweep) {
        const double off = A(0, 1) * A(0, 1) + A(0, 2) * A(0, 2) + A(1, 2) * A(1, 2);
        if (off < 1e-300) break;
        for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t q = p + 1; q < 3; ++q) {
                if (A(p, q) == 0.0) continue;
                const double theta = (A(q, q) - A(p, p)) / (2 * A(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1), s = t * c;
                for (std::size_t k = 0; k < 3; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < 3; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
            }
    }
    Vec3 ev{{A(0, 0), A(1, 1), A(2, 2)}};
    std::sort(ev.v.begin(), ev.v.end());
    return ev;
}

template <std::size_t N>
std::ostream& operator<<(std::ostream& os, const Vec<double, N>& x) {
    os << '(';
    for (std::size_t i = 0; i < N; ++i) os << (i ? ", " : "") << x[i];
    return os << ')';
}

template <std::size_t R, std::size_t C>
std::ostream& operator<<(std::ostream& os, const Mat<double, R, C>& m) {
    os << '[';
    for (std::size_t i = 0; i < R; ++i) {
        os << (i ? "; " : "");
        for (std::size_t j = 0; j < C; ++j) os << (j ? " " : "") << m(i, j);
    }
    return os << ']';
}

}  // namespace tfm
