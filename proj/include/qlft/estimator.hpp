#pragma once

#include <array>

#include "qlft/model.hpp"

namespace qlft {

/// State η = (x̃, f) driven by h = df/dt.
struct AugmentedSystem {
    Matrix A;    // (n+n_f)×(n+n_f)
    Matrix B_w;  // (n+n_f)×n_w
    Matrix B_u;  // (n+n_f)×n_u
    Matrix B_h;  // (n+n_f)×n_f
    Matrix C;    // n_y×(n+n_f)
};

/// Estimation target ξ = (x̃_o, f).
struct ReducedSystem {
    Eigen::Index n_o = 0;
    Eigen::Index n_f = 0;
    Matrix A;     // [[Ã22, B̃f2], [0, 0]]
    Matrix A_uo;  // [Ã21; 0]
    Matrix B_w;   // [B̃w2; 0]
    Matrix B_u;   // [B̃u2; 0]
    Matrix B_h;   // [0; I]
    Matrix C;     // [C̃2 0]

    [[nodiscard]] Eigen::Index n_hat() const { return n_o + n_f; }
};

struct Gains {
    Matrix L;  // n̂×n_ym
    Matrix K;  // n_u×n̂
    Eigen::Index n_o = 0;

    [[nodiscard]] Matrix K_x() const { return K.leftCols(n_o); }
    [[nodiscard]] Matrix K_f() const { return K.rightCols(K.cols() - n_o); }
};

struct ErrorSystem {
    Matrix A_e;  // Â − LGĈ
    Matrix B_e;  // [B̂_w − LGD̃, B̂_u]
    Matrix E;    // Â_uo − LGC̃1
};

/// Closed loop in z = (x̃, e), stored in the 2×2 block form.
struct ClosedLoop {
    Eigen::Index n = 0;
    Eigen::Index n_o = 0;
    Eigen::Index n_f = 0;
    Matrix A;    // (n+n̂)×(n+n̂)
    Matrix B_w;  // (n+n̂)×(n_w+n_u)
    Matrix B_f;  // (n+n̂)×n_f
    Matrix B_h;  // (n+n̂)×n_f

    [[nodiscard]] Eigen::Index n_hat() const { return n_o + n_f; }
    [[nodiscard]] Eigen::Index dim() const { return n + n_hat(); }

    /// Block (i, j) of Ā in the partition (x̃_uo, x̃_o, e), i, j ∈ {0, 1, 2}.
    [[nodiscard]] Matrix A_block(int i, int j) const {
        const std::array<Eigen::Index, 3> size{n - n_o, n_o, n_hat()};
        const std::array<Eigen::Index, 3> start{0, n - n_o, n};
        if (i < 0 || i > 2 || j < 0 || j > 2) throw DimensionError("block index out of range");
        return A.block(start[static_cast<size_t>(i)], start[static_cast<size_t>(j)], size[static_cast<size_t>(i)],
                       size[static_cast<size_t>(j)]);
    }
};

inline AugmentedSystem build_augmented(const TransformedPlant& tp) {
    const auto n = tp.n();
    const auto nf = tp.n_f();
    AugmentedSystem s;
    s.A = Matrix::Zero(n + nf, n + nf);
    s.A.topLeftCorner(n, n) = tp.A;
    s.A.topRightCorner(n, nf) = tp.B_f;
    s.B_w = Matrix::Zero(n + nf, tp.n_w());
    s.B_w.topRows(n) = tp.B_w;
    s.B_u = Matrix::Zero(n + nf, tp.n_u());
    s.B_u.topRows(n) = tp.B_u;
    s.B_h = Matrix::Zero(n + nf, nf);
    s.B_h.bottomRows(nf).setIdentity();
    s.C = Matrix::Zero(tp.n_y(), n + nf);
    s.C.leftCols(n) = tp.C;
    return s;
}

inline ReducedSystem build_reduced(const TransformedPlant& tp) {
    const auto no = tp.n_o;
    const auto nf = tp.n_f();
    const auto nh = no + nf;
    ReducedSystem r;
    r.n_o = no;
    r.n_f = nf;
    r.A = Matrix::Zero(nh, nh);
    r.A.topLeftCorner(no, no) = tp.A22();
    r.A.topRightCorner(no, nf) = tp.B_f2();
    r.A_uo = Matrix::Zero(nh, tp.n_uo());
    r.A_uo.topRows(no) = tp.A21();
    r.B_w = Matrix::Zero(nh, tp.n_w());
    r.B_w.topRows(no) = tp.B_w2();
    r.B_u = Matrix::Zero(nh, tp.n_u());
    r.B_u.topRows(no) = tp.B_u2();
    r.B_h = Matrix::Zero(nh, nf);
    r.B_h.bottomRows(nf).setIdentity();
    r.C = Matrix::Zero(tp.n_y(), nh);
    r.C.leftCols(no) = tp.C2();
    return r;
}

inline void check_gain_shapes(const TransformedPlant& tp, const ReducedSystem& rs, const Matrix& g, const Gains& k) {
    require_shape(g, g.rows(), tp.n_y(), "G");
    require_shape(k.L, rs.n_hat(), g.rows(), "L");
    require_shape(k.K, tp.n_u(), rs.n_hat(), "K");
    if (k.n_o != tp.n_o) throw DimensionError("Gains partition n_o does not match the transformed plant");
}

inline ErrorSystem build_error_system(const ReducedSystem& rs, const Gains& k, const Matrix& g,
                                      const TransformedPlant& tp) {
    check_gain_shapes(tp, rs, g, k);
    const Matrix lg = k.L * g;
    ErrorSystem e;
    e.A_e = rs.A - lg * rs.C;
    e.B_e = hstack(rs.B_w - lg * tp.D, rs.B_u);
    e.E = rs.A_uo - lg * tp.C1();
    return e;
}

inline ClosedLoop build_closed_loop(const TransformedPlant& tp, const ReducedSystem& rs, const ErrorSystem& es,
                                    const Gains& k) {
    const auto n = tp.n();
    const auto no = tp.n_o;
    const auto nh = rs.n_hat();
    const auto nf = tp.n_f();
    require_shape(es.A_e, nh, nh, "A_e");
    require_shape(es.E, nh, n - no, "E");
    require_shape(k.K, tp.n_u(), nh, "K");

    ClosedLoop cl;
    cl.n = n;
    cl.n_o = no;
    cl.n_f = nf;
    cl.A = Matrix::Zero(n + nh, n + nh);
    cl.A.topLeftCorner(n, n) = tp.A;
    cl.A.block(0, n - no, n, no) += tp.B_u * k.K_x();
    cl.A.topRightCorner(n, nh) = -tp.B_u * k.K;
    cl.A.block(n, 0, nh, n - no) = es.E;
    cl.A.bottomRightCorner(nh, nh) = es.A_e;

    const auto nw = tp.n_w();
    const auto nu = tp.n_u();
    cl.B_w = Matrix::Zero(n + nh, nw + nu);
    cl.B_w.topLeftCorner(n, nw) = tp.B_w;
    cl.B_w.topRightCorner(n, nu) = tp.B_u;
    cl.B_w.bottomRows(nh) = es.B_e;

    cl.B_f = Matrix::Zero(n + nh, nf);
    cl.B_f.topRows(n) = tp.B_f + tp.B_u * k.K_f();
    cl.B_h = Matrix::Zero(n + nh, nf);
    cl.B_h.bottomRows(nh) = rs.B_h;
    return cl;
}

/// Reduced system, error system and closed loop from a transformed plant.
inline ClosedLoop assemble_closed_loop(const TransformedPlant& tp, const Matrix& g, const Gains& k) {
    const ReducedSystem rs = build_reduced(tp);
    return build_closed_loop(tp, rs, build_error_system(rs, k, g, tp), k);
}

}  // namespace qlft
