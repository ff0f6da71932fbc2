#pragma once

// Test-side reference computations, written without the library's assembly code.

#include <random>

#include "qlft/qlft.hpp"

namespace oracle {

using qlft::Matrix;
using qlft::Vector;

inline Matrix randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
    }
    return m;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Random plant with even n, n_w, n_u, n_y.
inline qlft::QuantumPlant random_plant(std::mt19937_64& rng, int max_half = 3) {
    const int n = 2 * uniform_int(rng, 1, max_half);
    const int nw = 2 * uniform_int(rng, 1, 2);
    const int nu = 2 * uniform_int(rng, 1, 2);
    const int ny = 2 * uniform_int(rng, 1, 2);
    const int nf = uniform_int(rng, 1, 2);
    return {randn(rng, n, n), randn(rng, n, nw), randn(rng, n, nu), randn(rng, n, nf), randn(rng, ny, n),
            randn(rng, ny, nw)};
}

/// Θ built entry by entry: +1 at (2k, 2k+1), −1 at (2k+1, 2k).
inline Matrix theta(Eigen::Index n) {
    Matrix t = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k + 1 < n; k += 2) {
        t(k, k + 1) = 1.0;
        t(k + 1, k) = -1.0;
    }
    return t;
}

/// Triple-loop product so the oracle shares no code with the library.
inline Matrix mul(const Matrix& a, const Matrix& b) {
    Matrix c = Matrix::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
            for (Eigen::Index j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
        }
    }
    return c;
}

struct ClosedLoopParts {
    Matrix A, B_w, B_f, B_h;
};

/// Closed loop by substitution. Raw state s = (x̃, f, ξ̂) with
///   dx̃ = Ãx̃ + B̃_f f + B̃_u Kξ̂ + B̃_w w + B̃_u v
///   df = h
///   dξ̂ = Âξ̂ + B̂_u Kξ̂ + LG(C̃x̃ + D̃w − Ĉξ̂)
/// and z = (x̃, e), e = (x̃_o, f) − ξ̂.
inline ClosedLoopParts substitution_closed_loop(const qlft::TransformedPlant& tp, const Matrix& g,
                                                const qlft::Gains& k) {
    const auto n = tp.n();
    const auto no = tp.n_o;
    const auto nf = tp.n_f();
    const auto nh = no + nf;
    const auto nw = tp.n_w();
    const auto nu = tp.n_u();
    const auto ns = n + nf + nh;

    // Reduced-system matrices read straight off the transformed plant.
    Matrix ahat = Matrix::Zero(nh, nh);
    ahat.topLeftCorner(no, no) = tp.A.bottomRightCorner(no, no);
    ahat.topRightCorner(no, nf) = tp.B_f.bottomRows(no);
    Matrix bhu = Matrix::Zero(nh, nu);
    bhu.topRows(no) = tp.B_u.bottomRows(no);
    Matrix chat = Matrix::Zero(tp.n_y(), nh);
    chat.leftCols(no) = tp.C.rightCols(no);
    const Matrix lg = mul(k.L, g);

    Matrix m = Matrix::Zero(ns, ns);
    m.block(0, 0, n, n) = tp.A;
    m.block(0, n, n, nf) = tp.B_f;
    m.block(0, n + nf, n, nh) = mul(tp.B_u, k.K);
    m.block(n + nf, 0, nh, n) = mul(lg, tp.C);
    m.block(n + nf, n + nf, nh, nh) = ahat + mul(bhu, k.K) - mul(lg, chat);

    Matrix nw_raw = Matrix::Zero(ns, nw + nu);
    nw_raw.block(0, 0, n, nw) = tp.B_w;
    nw_raw.block(0, nw, n, nu) = tp.B_u;
    nw_raw.block(n + nf, 0, nh, nw) = mul(lg, tp.D);
    Matrix nh_raw = Matrix::Zero(ns, nf);
    nh_raw.block(n, 0, nf, nf).setIdentity();

    // z = R s.
    Matrix r = Matrix::Zero(n + nh, ns);
    r.block(0, 0, n, n).setIdentity();
    for (Eigen::Index i = 0; i < no; ++i) r(n + i, n - no + i) = 1.0;
    for (Eigen::Index i = 0; i < nf; ++i) r(n + no + i, n + i) = 1.0;
    r.block(n, n + nf, nh, nh) = -Matrix::Identity(nh, nh);

    // s = Q [z; f].
    Matrix q = Matrix::Zero(ns, n + nh + nf);
    q.block(0, 0, n, n).setIdentity();
    q.block(n, n + nh, nf, nf).setIdentity();
    for (Eigen::Index i = 0; i < no; ++i) q(n + nf + i, n - no + i) = 1.0;
    q.block(n + nf, n, nh, nh) = -Matrix::Identity(nh, nh);
    for (Eigen::Index i = 0; i < nf; ++i) q(n + nf + no + i, n + nh + i) = 1.0;

    const Matrix rmq = mul(mul(r, m), q);
    return {rmq.leftCols(n + nh), mul(r, nw_raw), rmq.rightCols(nf), mul(r, nh_raw)};
}

/// AX + XAᵀ + Q = 0 by row-major vectorization and Householder QR.
inline Matrix lyapunov(const Matrix& a, const Matrix& q) {
    const auto n = a.rows();
    Matrix big = Matrix::Zero(n * n, n * n);
    Vector rhs(n * n);
    auto idx = [n](Eigen::Index i, Eigen::Index j) { return i * n + j; };
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            rhs(idx(i, j)) = -q(i, j);
            for (Eigen::Index k = 0; k < n; ++k) {
                big(idx(i, j), idx(k, j)) += a(i, k);  // (AX)_ij
                big(idx(i, j), idx(i, k)) += a(j, k);  // (XAᵀ)_ij
            }
        }
    }
    const Vector x = big.householderQr().solve(rhs);
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = x(idx(i, j));
    }
    return 0.5 * (out + out.transpose());
}

/// Random stable-enough closed loop: Ā + 2I Hurwitz with margin.
inline qlft::ClosedLoop random_closed_loop(std::mt19937_64& rng, Eigen::Index n, Eigen::Index n_o, Eigen::Index n_f,
                                           Eigen::Index n_noise) {
    qlft::ClosedLoop cl;
    cl.n = n;
    cl.n_o = n_o;
    cl.n_f = n_f;
    const auto d = cl.dim();
    Matrix a = randn(rng, d, d);
    const double shift = qlft::spectral_abscissa(a) + 2.5 + std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    cl.A = a - shift * Matrix::Identity(d, d);
    cl.B_w = randn(rng, d, n_noise, 0.5);
    cl.B_f = randn(rng, d, n_f, 0.5);
    cl.B_h = Matrix::Zero(d, n_f);
    cl.B_h.bottomRows(n_f).setIdentity();
    return cl;
}

}  // namespace oracle
