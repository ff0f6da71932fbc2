#pragma once

#include "qlft/simulation.hpp"

/// Two-mode worked example: n = 2, one controlled mode, scalar fault.
namespace qlft::example {

inline QuantumPlant plant() {
    QuantumPlant p;
    p.A.resize(2, 2);
    p.A << -1, 0, 3, -1;
    p.B_w.resize(2, 2);
    p.B_w << 0, 0, 2, -1;
    p.B_u.resize(2, 2);
    p.B_u << 2, 1, 4, 3;
    p.B_f.resize(2, 1);
    p.B_f << 0, 1;
    p.C.resize(2, 2);
    p.C << -3, 1, 4, -2;
    p.D = Matrix::Identity(2, 2);
    return p;
}

/// Homodyne matrix used when none is given: both rows read the first output
/// quadrature, so GΘ_yGᵀ = 0 and rank G = 1.
inline Matrix default_G() {
    Matrix g(2, 2);
    g << 1, 0, 1, 0;
    return g;
}

/// Identity permutation; x̃_o is the second coordinate.
inline Matrix T() { return Matrix::Identity(2, 2); }
inline constexpr Eigen::Index n_o = 1;

inline TransformedPlant transformed() {
    const QuantumPlant p = plant();
    return apply_transformation(p, CommutationStructure::for_plant(p), T(), n_o);
}

/// 0.25 cos t on [0, 10), 0.5 + 0.4 sin(t − 10) on [10, 20].
inline FaultSignal fault() {
    FaultSignal f;
    FaultPiece a;
    a.t0 = 0.0;
    a.t1 = 10.0;
    a.kind = PieceKind::Cosine;
    a.a = Vector::Constant(1, 0.25);
    a.b = Vector::Zero(1);
    a.omega = 1.0;
    FaultPiece b;
    b.t0 = 10.0;
    b.t1 = 20.0;
    b.kind = PieceKind::Sine;
    b.a = Vector::Constant(1, 0.4);
    b.b = Vector::Constant(1, 0.5);
    b.omega = 1.0;
    f.pieces = {a, b};
    return f;
}

inline FaultBounds bounds() { return {0.9, 0.4}; }

inline constexpr double gamma = 0.001;

/// Gains reported for this plant at γ = 0.001.
inline Gains reported_gains() {
    Gains g;
    g.n_o = n_o;
    g.L.resize(2, 2);
    g.L << -4.07, 1.03, 9.22, -30.21;
    g.K.resize(2, 2);
    g.K << -0.15, -2.6643, 0.30, 2.6857;
    return g;
}

}  // namespace qlft::example
