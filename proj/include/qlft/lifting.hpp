#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "qlft/certification.hpp"
#include "qlft/projection.hpp"

namespace qlft {

enum class LiftCase { Case1, Case2 };

inline const char* to_string(LiftCase c) { return c == LiftCase::Case1 ? "case1" : "case2"; }

/// Row blocks of 𝐕. Every block is s×s with its value in the top-left corner,
/// where s = n (Case 1) or s = n̂ (Case 2). The masked duplicates of the
/// constraint list (Z_v6 = Z_v2 diag{I,0}, Z_v11 = Z_x4 diag{I,0}) act as the
/// identity on the stored values and share the blocks V2 and M2T. Z_v19 = N M2
/// and Z_v20 = Y1 X1 are read as the Gram slices Z[N, M2T] and Z[Y1, X1].
/// AUXF = B̃_u K_f and AUXW = L G D̃ carry the quadratic terms of Corollary 1.
enum LiftBlock : int {
    kI = 0,
    kX1,    // X1                       n×n
    kY1,    // Y1                       n×n
    kM1T,   // M1ᵀ                      n̂×n
    kM2T,   // M2ᵀ                      n×n̂
    kNT,    // Nᵀ                       n̂×n
    kLT,    // Lᵀ                       n_ym×n̂
    kKT,    // Kᵀ                       n̂×n_u
    kY2,    // Y2                       n̂×n̂
    kN,     // N                        n×n̂
    kV1,    // M1ᵀ B̃_u                  n̂×n_u
    kV2,    // M1ᵀ B̃_u K                n̂×n̂
    kV3,    // Ω2 = M1ᵀ(Ã + B̃_u K_x S_x) n̂×n
    kV4,    // M1ᵀ Y1                   n̂×n
    kV5,    // Ω2 Y1 M1                 n̂×n̂
    kV7,    // M1ᵀ N                    n̂×n̂
    kV8,    // M1ᵀ B̃_u K Nᵀ M1          n̂×n̂
    kV9,    // X1 B̃_u                   n×n_u
    kV10,   // X1 B̃_u K                 n×n̂
    kV12,   // M2ᵀ L                    n×n_ym
    kV13,   // Ω1                       n×n
    kV14,   // Ω1 Y1 M1                 n×n̂
    kV15,   // Φ = M2ᵀ A_e − X1 B̃_u K   n×n̂
    kV16,   // Φ Nᵀ M1                  n×n̂
    kV17,   // X1 N                     n×n̂
    kV18,   // M2ᵀ Y2                   n×n̂
    kV21,   // M1ᵀ Y1 M1                n̂×n̂
    kAUXF,  // B̃_u K_f                  n×n_f
    kAUXW,  // L G D̃                    n̂×n_w
    kLiftBlockCount
};

inline const std::array<const char*, kLiftBlockCount>& lift_block_names() {
    static const std::array<const char*, kLiftBlockCount> names{
        "I",   "x1",  "x2",  "x3",  "x4",  "x5",  "x6",  "x7",  "x8",  "x9",  "v1",  "v2",   "v3",   "v4",  "v5",
        "v7",  "v8",  "v9",  "v10", "v12", "v13", "v14", "v15", "v16", "v17", "v18", "v21", "aux_f", "aux_w"};
    return names;
}

/// Unlifted decision variables.
struct LiftBase {
    Matrix X1, Y1, M1, M2, N, Y2, L, K;
};

struct LiftedProblem {
    LiftCase lift_case = LiftCase::Case1;
    Eigen::Index s = 0;     // block side
    Eigen::Index m = 0;     // side of Z = 29 s
    Eigen::Index rank = 0;  // rank bound = s
    Eigen::Index n = 0, n_o = 0, n_f = 0, n_hat = 0, n_u = 0, n_w = 0, n_ym = 0;
    double gamma = 0.0;
    double eps = 0.0;  // margin on the transformed LMI and on P
    FaultBounds bounds;

    TransformedPlant tp;
    ReducedSystem rs;
    Matrix G;

    conic::Space space;
    int z_block = 0;
    int slack_lmi = 0;
    int slack_p = 0;
    int slack_cor = 0;
    int slack_trace = 0;
    conic::AffineSystem equalities{0};

    conic::Expr lmi;       // transformed synthesis inequality F(Z) ⪯ −eps I
    conic::Expr p_expr;    // P(Z) ⪰ eps I
    conic::Expr cor_expr;  // Corollary 1 expression ⪰ 0
    conic::Expr trace_y2;  // 1×1

    std::array<std::array<Eigen::Index, 2>, kLiftBlockCount> shape{};

    [[nodiscard]] Matrix Z(const Vector& x) const { return space.unpack(z_block, x); }
};

namespace lift_detail {

inline Matrix pad(const Matrix& v, Eigen::Index s) {
    if (v.rows() > s || v.cols() > s) {
        throw DimensionError("lifted block value " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                             " exceeds block side " + std::to_string(s));
    }
    Matrix out = Matrix::Zero(s, s);
    out.topLeftCorner(v.rows(), v.cols()) = v;
    return out;
}

/// S_x: n̂×n, maps x̃ ↦ [x̃_o; 0] so that K S_x = [0, K_x].
inline Matrix select_x(Eigen::Index n, Eigen::Index n_o, Eigen::Index n_hat) {
    Matrix s = Matrix::Zero(n_hat, n);
    s.block(0, n - n_o, n_o, n_o).setIdentity();
    return s;
}

/// S_u: (n−n_o)×n = [I 0].
inline Matrix select_uo(Eigen::Index n, Eigen::Index n_o) {
    Matrix s = Matrix::Zero(n - n_o, n);
    s.leftCols(n - n_o).setIdentity();
    return s;
}

/// n̂×n_f = [0; I], so K Sel_f = K_f.
inline Matrix select_f(Eigen::Index n_hat, Eigen::Index n_f) {
    Matrix s = Matrix::Zero(n_hat, n_f);
    s.bottomRows(n_f).setIdentity();
    return s;
}

}  // namespace lift_detail

// ============================================================================
// Assembly
// ============================================================================

/// Lifted constraint system for fixed (T, G, α, β, γ). `eps` is the margin
/// imposed on the transformed LMI and on P.
inline LiftedProblem assemble_lifted(const TransformedPlant& tp, const ReducedSystem& rs, const Matrix& g,
                                     const FaultBounds& bounds, double gamma, double eps) {
    using conic::Expr;
    using namespace lift_detail;
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (!(eps >= 0.0)) throw std::invalid_argument("eps must be nonnegative");
    require_shape(g, g.rows(), tp.n_y(), "G");

    LiftedProblem lp;
    lp.n = tp.n();
    lp.n_o = tp.n_o;
    lp.n_f = tp.n_f();
    lp.n_hat = rs.n_hat();
    lp.n_u = tp.n_u();
    lp.n_w = tp.n_w();
    lp.n_ym = g.rows();
    lp.lift_case = lp.n >= lp.n_hat ? LiftCase::Case1 : LiftCase::Case2;
    lp.s = lp.lift_case == LiftCase::Case1 ? lp.n : lp.n_hat;
    lp.m = kLiftBlockCount * lp.s;
    lp.rank = lp.s;
    lp.gamma = gamma;
    lp.eps = eps;
    lp.bounds = bounds;
    lp.tp = tp;
    lp.rs = rs;
    lp.G = g;

    const auto n = lp.n, nh = lp.n_hat, nu = lp.n_u, nw = lp.n_w, nym = lp.n_ym, nf = lp.n_f, no = lp.n_o;
    const auto s = lp.s;
    for (auto [what, d] : {std::pair{"n_u", nu}, std::pair{"n_w", nw}, std::pair{"n_ym", nym}}) {
        if (d > s) {
            throw DimensionError(std::string(what) + " = " + std::to_string(d) + " exceeds the lifted block side " +
                                 std::to_string(s));
        }
    }

    auto& sh = lp.shape;
    sh[kI] = {s, s};
    sh[kX1] = {n, n};
    sh[kY1] = {n, n};
    sh[kM1T] = {nh, n};
    sh[kM2T] = {n, nh};
    sh[kNT] = {nh, n};
    sh[kLT] = {nym, nh};
    sh[kKT] = {nh, nu};
    sh[kY2] = {nh, nh};
    sh[kN] = {n, nh};
    sh[kV1] = {nh, nu};
    sh[kV2] = {nh, nh};
    sh[kV3] = {nh, n};
    sh[kV4] = {nh, n};
    sh[kV5] = {nh, nh};
    sh[kV7] = {nh, nh};
    sh[kV8] = {nh, nh};
    sh[kV9] = {n, nu};
    sh[kV10] = {n, nh};
    sh[kV12] = {n, nym};
    sh[kV13] = {n, n};
    sh[kV14] = {n, nh};
    sh[kV15] = {n, nh};
    sh[kV16] = {n, nh};
    sh[kV17] = {n, nh};
    sh[kV18] = {n, nh};
    sh[kV21] = {nh, nh};
    sh[kAUXF] = {n, nf};
    sh[kAUXW] = {nh, nw};

    lp.z_block = lp.space.add_sym(lp.m, lp.rank, "Z");
    const Eigen::Index d_lmi = n + nh + 2 * nf + nw + nu;
    lp.slack_lmi = lp.space.add_sym(d_lmi, -1, "W_lmi");
    lp.slack_p = lp.space.add_sym(n + nh, -1, "W_P");
    lp.slack_cor = lp.space.add_sym(n + nh, -1, "W_cor");
    lp.slack_trace = lp.space.add_nonneg();
    lp.equalities = conic::AffineSystem(lp.space.dim());

    const Expr z = lp.space.sym_var(lp.z_block);
    auto zb = [&](int i, int j) { return z.block(i * s, j * s, s, s); };
    auto val = [&](int k) { return zb(k, 0).block(0, 0, sh[k][0], sh[k][1]); };
    auto gram = [&](int i, int j) { return zb(i, j).block(0, 0, sh[i][0], sh[j][0]); };

    const Matrix sel_x = select_x(n, no, nh);
    const Matrix sel_u = select_uo(n, no);
    const Matrix sel_f = select_f(nh, nf);
    const Matrix gd = g * tp.D;
    const Matrix gc1 = g * tp.C1();
    const Matrix gch = g * rs.C;
    const Matrix auo_su = rs.A_uo * sel_u;

    auto& eq = lp.equalities;
    using V = std::vector<std::string>;
    const bool c1 = lp.lift_case == LiftCase::Case1;
    // Named items of the Case 1 / Case 2 constraint lists realised by a group.
    auto cov = [&](V case1, V case2) { return c1 ? std::move(case1) : std::move(case2); };
    // Entries of block (k, 0) outside its value region.
    auto outside = [&](int k) {
        const Expr b = zb(k, 0);
        std::vector<const conic::LinearForm*> picked;
        for (Eigen::Index i = 0; i < s; ++i) {
            for (Eigen::Index j = 0; j < s; ++j) {
                if (i >= sh[k][0] || j >= sh[k][1]) picked.push_back(&b.at(i, j));
            }
        }
        Expr out(static_cast<Eigen::Index>(picked.size()), 1);
        for (size_t r = 0; r < picked.size(); ++r) out.at(static_cast<Eigen::Index>(r), 0) = *picked[r];
        return out;
    };

    eq.add_equality("Z00 = I", zb(kI, kI) - Expr::constant(Matrix::Identity(s, s)), true, V{"Z00"});

    // Product blocks.
    eq.add_equality("v1 = x3 B_u", val(kV1) - val(kM1T) * tp.B_u, false, V{"v1"});
    eq.add_equality("v2 = v1 x7^T", val(kV2) - gram(kV1, kKT), false, V{"v2"});
    eq.add_folded("v6 shares v2", cov(V{"v6"}, V{}));
    eq.add_equality("v3 = x3 A + v2 S_x", val(kV3) - val(kM1T) * tp.A - val(kV2) * sel_x, false,
                    cov(V{"v3"}, V{"v4"}));
    eq.add_equality("v4 = x3 x2^T", val(kV4) - gram(kM1T, kY1), false, cov(V{"v4"}, V{"v3"}));
    eq.add_equality("v5 = v3 v4^T", val(kV5) - gram(kV3, kV4), false, V{"v5"});
    eq.add_equality("v7 = x3 x5^T", val(kV7) - gram(kM1T, kNT), false, cov(V{"v7"}, V{"v6"}));
    eq.add_equality("v8 = v2 v7^T", val(kV8) - gram(kV2, kV7), false, cov(V{"v8"}, V{"v7"}));
    eq.add_equality("v9 = x1 B_u", val(kV9) - val(kX1) * tp.B_u, false, cov(V{"v9"}, V{"v8"}));
    eq.add_equality("v10 = v9 x7^T", val(kV10) - gram(kV9, kKT), false, cov(V{"v10"}, V{"v9"}));
    eq.add_folded("v11 shares x4", cov(V{"v11"}, V{}));
    eq.add_equality("v12 = x4 x6^T", val(kV12) - gram(kM2T, kLT), false, cov(V{"v12"}, V{"v10"}));
    eq.add_equality("v13 = x1 A + v10 S_x + x4 A_uo S_u - v12 G C1 S_u",
                    val(kV13) - val(kX1) * tp.A - val(kV10) * sel_x - val(kM2T) * auo_su + val(kV12) * (gc1 * sel_u),
                    false, cov(V{"v13"}, V{"v11"}));
    eq.add_equality("v14 = v13 v4^T", val(kV14) - gram(kV13, kV4), false, cov(V{"v14"}, V{"v12"}));
    eq.add_equality("v15 = x4 A_hat - v12 G C_hat - v10", val(kV15) - val(kM2T) * rs.A + val(kV12) * gch + val(kV10),
                    false, cov(V{"v15"}, V{"v13"}));
    eq.add_equality("v16 = v15 v7^T", val(kV16) - gram(kV15, kV7), false, cov(V{"v16"}, V{"v14"}));
    eq.add_equality("v17 = x1 x5^T", val(kV17) - gram(kX1, kNT), false, cov(V{"v17"}, V{"v15"}));
    eq.add_equality("v18 = x4 x8^T", val(kV18) - gram(kM2T, kY2), false, cov(V{"v18"}, V{"v16"}));
    eq.add_folded("v19 is the slice Z[x9, x4]", cov(V{"v19"}, V{"v17"}));
    eq.add_folded("v20 is the slice Z[x2, x1]", cov(V{"v20"}, V{"v18"}));
    eq.add_equality("v21 = x3 v4^T", val(kV21) - gram(kM1T, kV4), false, cov(V{"v21"}, V{"v19"}));
    eq.add_equality("aux_f = B_u x7^T S_f", val(kAUXF) - tp.B_u * val(kKT).transpose() * sel_f, false, V{});
    eq.add_equality("aux_w = x6^T G D", val(kAUXW) - val(kLT).transpose() * gd, false, V{});

    // P Π = [[I, Y1 M1], [0, Nᵀ M1]].
    eq.add_equality("Z[x9,x4] + Z[x2,x1] = I", gram(kN, kM2T) + gram(kY1, kX1) - Expr::constant(Matrix::Identity(n, n)),
                    false, cov(V{"v19+v20"}, V{"v17+v18"}));
    eq.add_equality("v17 + v18 = 0", val(kV17) + val(kV18), false, cov(V{"v17+v18"}, V{"v15+v16"}));

    eq.add_equality("x1 symmetric", val(kX1) - val(kX1).transpose(), true, V{"x1 sym"});
    eq.add_equality("x2 symmetric", val(kY1) - val(kY1).transpose(), true, V{"x2 sym"});
    eq.add_equality("x8 symmetric", val(kY2) - val(kY2).transpose(), true, V{"x8 sym"});
    eq.add_equality("x5 = x9^T", val(kNT) - val(kN).transpose(), false, V{"x5-x9T"});

    for (int k = 1; k < kLiftBlockCount; ++k) {
        V items;
        const std::string nm = lift_block_names()[static_cast<size_t>(k)];
        if (c1) {
            if (k == kM1T || k == kM2T || k == kN) items = {nm + " pad"};
            if (k == kLT || k == kKT || k == kY2) items = {nm + " pad 1", nm + " pad 2"};
        } else {
            if (k == kM1T || k == kM2T || k == kN || k == kLT || k == kKT) items = {nm + " pad"};
            if (k == kX1 || k == kY1) items = {nm + " pad 1", nm + " pad 2"};
        }
        eq.add_equality("pad " + nm, outside(k), false, std::move(items));
    }

    // Inequality blocks.
    const double r2 = std::sqrt(2.0);
    const Expr x1 = val(kX1);
    const Expr m1t = val(kM1T);
    const Expr m2t = val(kM2T);
    const Expr omega1 = val(kV13);
    const Expr omega2 = val(kV3);
    const Expr omega3 = val(kV5) - val(kV8);
    const Expr bold_a = val(kV14) + val(kV16);
    const Expr f11 = omega1 + omega1.transpose() + 4.0 * x1;
    const Expr f12 = bold_a + omega2.transpose() + 4.0 * m1t.transpose();
    const Expr f22 = omega3 + omega3.transpose() + 4.0 * val(kV21);
    const Expr omega4 = conic::hcat({r2 * bounds.alpha * (x1 * tp.B_f + val(kV10) * sel_f),
                                     r2 * bounds.beta * (m2t * rs.B_h),
                                     x1 * tp.B_w + m2t * rs.B_w - val(kV12) * gd, x1 * tp.B_u + m2t * rs.B_u});
    const Expr omega5 = conic::hcat({r2 * bounds.alpha * (m1t * tp.B_f + val(kV2) * sel_f), Expr::zeros(nh, nf),
                                     m1t * tp.B_w, val(kV1)});
    const Eigen::Index kk = 2 * nf + nw + nu;
    const Expr top = conic::block2x2(f11, f12, f12.transpose(), f22);
    const Expr side = conic::block2x2(omega4, Expr::zeros(n, 0), omega5, Expr::zeros(nh, 0));
    lp.lmi = conic::block2x2(top, side, side.transpose(), Expr::constant(-Matrix::Identity(kk, kk)));

    lp.p_expr = conic::block2x2(val(kY1), val(kN), val(kNT), val(kY2));

    const Expr af = val(kAUXF);
    const Expr aw = val(kAUXW);
    Expr bf = Expr::zeros(n + nh, n + nh);
    bf.set_block(0, 0, Expr::constant(tp.B_f * tp.B_f.transpose()) + tp.B_f * af.transpose() +
                           af * tp.B_f.transpose() + gram(kAUXF, kAUXF));
    Matrix bh = Matrix::Zero(n + nh, n + nh);
    bh.bottomRightCorner(nh, nh) = rs.B_h * rs.B_h.transpose();
    const Expr bw_tr = Expr::constant(tp.B_w * rs.B_w.transpose() + tp.B_u * rs.B_u.transpose()) -
                       tp.B_w * aw.transpose();
    const Expr bw_br = Expr::constant(rs.B_w * rs.B_w.transpose() + rs.B_u * rs.B_u.transpose()) -
                       rs.B_w * aw.transpose() - aw * rs.B_w.transpose() + gram(kAUXW, kAUXW);
    const Expr bw = conic::block2x2(Expr::constant(tp.B_w * tp.B_w.transpose() + tp.B_u * tp.B_u.transpose()), bw_tr,
                                    bw_tr.transpose(), bw_br);
    lp.cor_expr = 4.0 * lp.p_expr + (2.0 * bounds.alpha * bounds.alpha - 1.0) * bf +
                  Expr::constant((2.0 * bounds.beta * bounds.beta - 1.0) * bh) + bw;

    lp.trace_y2 = Expr(1, 1);
    {
        const Expr y2 = val(kY2);
        std::vector<std::pair<double, const conic::LinearForm*>> parts;
        for (Eigen::Index i = 0; i < nh; ++i) parts.emplace_back(1.0, &y2.at(i, i));
        lp.trace_y2.at(0, 0) = conic::detail::combine(parts);
    }

    // Slack links: F + W_lmi + eps I = 0, P − eps I − W_P = 0, Cor − W_cor = 0, Tr(Y2) + t = γ.
    const Eigen::Index d_p = n + nh;
    eq.add_equality("link: lmi", lp.lmi + lp.space.sym_var(lp.slack_lmi) + Expr::constant(eps * Matrix::Identity(d_lmi, d_lmi)), true);
    eq.add_equality("link: P", lp.p_expr - lp.space.sym_var(lp.slack_p) - Expr::constant(eps * Matrix::Identity(d_p, d_p)), true);
    eq.add_equality("link: corollary", lp.cor_expr - lp.space.sym_var(lp.slack_cor), true);
    eq.add_equality("link: trace", lp.trace_y2 + lp.space.scalar_var(lp.slack_trace) -
                                        Expr::constant(Matrix::Constant(1, 1, gamma)));
    return lp;
}

inline bool is_link_group(const conic::ConstraintGroup& g) { return g.label.rfind("link:", 0) == 0; }

// ============================================================================
// Embedding and extraction
// ============================================================================

/// Base variables from a certificate P and a free M1; [X1; M2] is the first
/// block column of P⁻¹ so that N M2 + Y1 X1 = I and Nᵀ X1 + Y2 M2 = 0.
inline LiftBase lift_base_from(const Matrix& p, Eigen::Index n, const Matrix& m1, const Gains& gains) {
    const Matrix s = inverse_spd(p);
    const auto nh = p.rows() - n;
    require_shape(m1, n, nh, "M1");
    LiftBase b;
    b.Y1 = p.topLeftCorner(n, n);
    b.N = p.topRightCorner(n, nh);
    b.Y2 = p.bottomRightCorner(nh, nh);
    b.X1 = symmetrize(s.topLeftCorner(n, n));
    b.M2 = s.bottomLeftCorner(nh, n);
    b.M1 = m1;
    b.L = gains.L;
    b.K = gains.K;
    return b;
}

/// 𝐕 (m×s) computed by direct matrix products, independent of the constraint expressions.
inline Matrix embed_v(const LiftedProblem& lp, const LiftBase& b) {
    using lift_detail::pad;
    const auto s = lp.s;
    const auto& tp = lp.tp;
    const auto& rs = lp.rs;
    const Matrix sel_x = lift_detail::select_x(lp.n, lp.n_o, lp.n_hat);
    const Matrix sel_u = lift_detail::select_uo(lp.n, lp.n_o);
    const Matrix k_x_pad = b.K * sel_x;  // [0, K_x]
    const Matrix e = rs.A_uo - b.L * lp.G * tp.C1();
    const Matrix a_e = rs.A - b.L * lp.G * rs.C;
    const Matrix omega1 = b.X1 * tp.A + b.X1 * tp.B_u * k_x_pad + b.M2.transpose() * e * sel_u;
    const Matrix omega2 = b.M1.transpose() * tp.A + b.M1.transpose() * tp.B_u * k_x_pad;
    const Matrix phi = b.M2.transpose() * a_e - b.X1 * tp.B_u * b.K;

    std::array<Matrix, kLiftBlockCount> v;
    v[kI] = Matrix::Identity(s, s);
    v[kX1] = b.X1;
    v[kY1] = b.Y1;
    v[kM1T] = b.M1.transpose();
    v[kM2T] = b.M2.transpose();
    v[kNT] = b.N.transpose();
    v[kLT] = b.L.transpose();
    v[kKT] = b.K.transpose();
    v[kY2] = b.Y2;
    v[kN] = b.N;
    v[kV1] = b.M1.transpose() * tp.B_u;
    v[kV2] = v[kV1] * b.K;
    v[kV3] = omega2;
    v[kV4] = b.M1.transpose() * b.Y1;
    v[kV5] = omega2 * b.Y1 * b.M1;
    v[kV7] = b.M1.transpose() * b.N;
    v[kV8] = v[kV2] * b.N.transpose() * b.M1;
    v[kV9] = b.X1 * tp.B_u;
    v[kV10] = v[kV9] * b.K;
    v[kV12] = b.M2.transpose() * b.L;
    v[kV13] = omega1;
    v[kV14] = omega1 * b.Y1 * b.M1;
    v[kV15] = phi;
    v[kV16] = phi * b.N.transpose() * b.M1;
    v[kV17] = b.X1 * b.N;
    v[kV18] = b.M2.transpose() * b.Y2;
    v[kV21] = b.M1.transpose() * b.Y1 * b.M1;
    v[kAUXF] = tp.B_u * b.K.rightCols(lp.n_f);
    v[kAUXW] = b.L * lp.G * tp.D;

    Matrix out(lp.m, s);
    for (int k = 0; k < kLiftBlockCount; ++k) {
        require_shape(v[static_cast<size_t>(k)], lp.shape[static_cast<size_t>(k)][0],
                      lp.shape[static_cast<size_t>(k)][1], lift_block_names()[static_cast<size_t>(k)]);
        out.block(k * s, 0, s, s) = pad(v[static_cast<size_t>(k)], s);
    }
    return out;
}

/// Coordinates for Z = 𝐕𝐕ᵀ with slacks set to the values implied by Z.
inline Vector embed(const LiftedProblem& lp, const LiftBase& b) {
    const Matrix v = embed_v(lp, b);
    Vector x = Vector::Zero(lp.space.dim());
    lp.space.pack(lp.z_block, v * v.transpose(), x);
    const Matrix f = lp.lmi.evaluate(x);
    const Matrix p = lp.p_expr.evaluate(x);
    lp.space.pack(lp.slack_lmi, symmetrize(-f - lp.eps * Matrix::Identity(f.rows(), f.cols())), x);
    lp.space.pack(lp.slack_p, symmetrize(p - lp.eps * Matrix::Identity(p.rows(), p.cols())), x);
    lp.space.pack(lp.slack_cor, symmetrize(lp.cor_expr.evaluate(x)), x);
    x(lp.space.scalar_offsets()[static_cast<size_t>(lp.slack_trace)]) = lp.gamma - lp.trace_y2.evaluate(x)(0, 0);
    return x;
}

struct LiftExtract {
    Gains gains;
    Matrix P;
    Matrix M1;
    Matrix X1;
    Matrix M2;
};

/// L = (Z[x6,0])ᵀ[:n̂, :n_ym], K = (Z[x7,0])ᵀ[:n_u, :n̂], and P from its slices.
inline LiftExtract extract(const LiftedProblem& lp, const Vector& x) {
    const Matrix z = lp.Z(x);
    const auto s = lp.s;
    auto val = [&](int k) {
        return Matrix(z.block(k * s, 0, s, s).topLeftCorner(lp.shape[static_cast<size_t>(k)][0],
                                                            lp.shape[static_cast<size_t>(k)][1]));
    };
    LiftExtract e;
    e.gains.n_o = lp.n_o;
    e.gains.L = val(kLT).transpose();
    e.gains.K = val(kKT).transpose();
    e.P = symmetrize(lp.p_expr.evaluate(x));
    e.M1 = val(kM1T).transpose();
    e.X1 = val(kX1);
    e.M2 = val(kM2T).transpose();
    return e;
}

// ============================================================================
// Self-audit
// ============================================================================

struct LiftAudit {
    double max_definition_residual = 0.0;  // over all non-link groups
    std::string worst_group;
    double lmi_mismatch = 0.0;  // ‖F(Z) − diag(Π,I)ᵀ block diag(Π,I)‖_max
    double p_mismatch = 0.0;
    double corollary_mismatch = 0.0;
    int rank = 0;
};

/// Embeds `b` through 𝐕 and checks every definitional equality and the
/// inequality expressions against direct evaluation on the closed loop.
inline LiftAudit self_audit(const LiftedProblem& lp, const LiftBase& b) {
    LiftAudit a;
    const Vector x = embed(lp, b);
    const Vector res = lp.equalities.relative_residuals(x);
    for (const auto& g : lp.equalities.groups()) {
        if (is_link_group(g)) continue;
        for (int k = g.first_row; k < g.first_row + g.rows; ++k) {
            if (res(k) > a.max_definition_residual) {
                a.max_definition_residual = res(k);
                a.worst_group = g.label;
            }
        }
    }
    a.rank = numerical_rank(lp.Z(x), 1e-10);

    Gains gains{b.L, b.K, lp.n_o};
    const ClosedLoop cl = assemble_closed_loop(lp.tp, lp.G, gains);
    Matrix p(lp.n + lp.n_hat, lp.n + lp.n_hat);
    p << b.Y1, b.N, b.N.transpose(), b.Y2;
    const Matrix bb = stacked_input(cl, lp.bounds);
    const Matrix ap = cl.A * p;
    const auto d = cl.dim();
    const auto k = bb.cols();
    Matrix block(d + k, d + k);
    block << ap + ap.transpose() + 4.0 * p, bb, bb.transpose(), -Matrix::Identity(k, k);
    Matrix pi = Matrix::Zero(d, d);
    pi << b.X1, b.M1, b.M2, Matrix::Zero(lp.n_hat, lp.n_hat);
    Matrix t = Matrix::Identity(d + k, d + k);
    t.topLeftCorner(d, d) = pi;
    a.lmi_mismatch = max_abs(lp.lmi.evaluate(x) - t.transpose() * block * t);
    a.p_mismatch = max_abs(lp.p_expr.evaluate(x) - p);
    const Corollary1Result c1 = check_corollary1(cl, p, lp.bounds);
    a.corollary_mismatch = max_abs(lp.cor_expr.evaluate(x) - c1.expression);
    return a;
}

/// Acceptance test of a candidate Z: symmetry, PSD, rank, equalities and the
/// inequality blocks with margin.
struct LiftedCheck {
    double symmetry = 0.0;
    double lambda_min_ratio = 0.0;  // λ_min / λ_max
    double sigma_ratio = 0.0;       // σ_{r+1} / σ_1
    double equality_residual = 0.0;
    double lmi_lambda_max = 0.0;
    double p_lambda_min = 0.0;
    double cor_lambda_min = 0.0;
    double trace_y2 = 0.0;
    bool passed = false;
};

inline LiftedCheck check_lifted(const LiftedProblem& lp, const Vector& x, const Matrix& z_raw) {
    LiftedCheck c;
    c.symmetry = max_abs(z_raw - z_raw.transpose());
    const Vector ev = sym_eigenvalues(z_raw);
    const double lmax = std::max(ev.maxCoeff(), 1e-300);
    c.lambda_min_ratio = ev.minCoeff() / lmax;
    Eigen::JacobiSVD<Matrix> svd(z_raw);
    const Vector& sv = svd.singularValues();
    c.sigma_ratio = lp.rank < sv.size() ? sv(lp.rank) / sv(0) : 0.0;
    Vector xe = x;
    lp.space.pack(lp.z_block, symmetrize(z_raw), xe);
    double eq = 0.0;
    const Vector res = lp.equalities.relative_residuals(xe);
    for (const auto& g : lp.equalities.groups()) {
        if (is_link_group(g)) continue;
        for (int k = g.first_row; k < g.first_row + g.rows; ++k) eq = std::max(eq, res(k));
    }
    c.equality_residual = eq;
    c.lmi_lambda_max = max_eigenvalue(lp.lmi.evaluate(xe));
    c.p_lambda_min = min_eigenvalue(lp.p_expr.evaluate(xe));
    c.cor_lambda_min = min_eigenvalue(lp.cor_expr.evaluate(xe));
    c.trace_y2 = lp.trace_y2.evaluate(xe)(0, 0);
    const Matrix cor = lp.cor_expr.evaluate(xe);
    c.passed = c.symmetry <= 1e-10 && c.lambda_min_ratio >= -1e-8 && c.sigma_ratio <= 1e-6 &&
               c.equality_residual <= 1e-6 && c.lmi_lambda_max <= -lp.eps && c.p_lambda_min >= lp.eps &&
               c.cor_lambda_min >= -eigen_tolerance(spectral_norm(cor)) && c.trace_y2 <= lp.gamma;
    return c;
}

}  // namespace qlft
