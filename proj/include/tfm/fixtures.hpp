#pragma once

#include "tfm/densities.hpp"
#include "tfm/membrane.hpp"

namespace tfm {

/// Q with ν = (1, 0): ζ* = −1 and ψ₀ = φ(1)·√(2 − 1) = 3/2 at |z| = 1.
inline Matrix33 aniso_q() {
    Matrix33 Q;
    Q(0, 0) = 2;
    Q(0, 2) = Q(2, 0) = 1;
    Q(1, 1) = 1;
    Q(2, 2) = 1;
    return Q;
}

/// Unit square, A = (e₁|e₂), full-height jump along x₁ = 1/2 with z = e₁.
inline CrackedMembrane standard_membrane() {
    const Matrix32 A = Matrix32::from_cols({Vec3{{1, 0, 0}}, Vec3{{0, 1, 0}}});
    return split_square(A, {{1, 0, 0}});
}

/// Partition used by the sweeps. One sub-segment with a wide annulus: the
/// corrected tilt needs |P| ≲ 1 along |x₃| ≤ 1/2, P ~ 2.2ρ|ζ|/(r_V − r_U),
/// so at ρ = 0.1 the annulus must be ≳ 0.25 wide (see the notes in README).
struct SweepPartition {
    int n = 1;
    double eps = 0.7;
    double theta = 0.45;
};

inline const std::vector<double>& standard_rhos() {
    static const std::vector<double> r{0.1, 0.05, 0.025, 0.0125};
    return r;
}

}  // namespace tfm
