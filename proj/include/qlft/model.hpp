#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <string>
#include <vector>

#include "qlft/linalg.hpp"

namespace qlft {

// ============================================================================
// Plant data
// ============================================================================

/// Linear quantum stochastic plant with an additive classical fault channel:
///   dx = A x dt + B_w dw + B_u dy_u + B_f f dt
///   dy = C x dt + D dw
struct QuantumPlant {
    Matrix A;
    Matrix B_w;
    Matrix B_u;
    Matrix B_f;
    Matrix C;
    Matrix D;

    [[nodiscard]] Eigen::Index n() const { return A.rows(); }
    [[nodiscard]] Eigen::Index n_w() const { return B_w.cols(); }
    [[nodiscard]] Eigen::Index n_u() const { return B_u.cols(); }
    [[nodiscard]] Eigen::Index n_f() const { return B_f.cols(); }
    [[nodiscard]] Eigen::Index n_y() const { return C.rows(); }

    /// B = [B_w B_u], the coupling to the combined noise [w; v].
    [[nodiscard]] Matrix B() const { return hstack(B_w, B_u); }

    /// Throws DimensionError naming the first inconsistent matrix.
    void validate() const {
        require_square(A, "A");
        const auto n_ = n();
        if (n_ <= 0 || n_ % 2 != 0) throw DimensionError("n must be even and positive, got " + std::to_string(n_));
        if (B_w.rows() != n_) throw DimensionError("B_w must have n rows");
        if (B_u.rows() != n_) throw DimensionError("B_u must have n rows");
        if (B_f.rows() != n_) throw DimensionError("B_f must have n rows");
        if (C.cols() != n_) throw DimensionError("C must have n columns");
        require_shape(D, n_y(), n_w(), "D");
        if (n_w() <= 0 || n_w() % 2 != 0) throw DimensionError("n_w must be even and positive");
        if (n_u() <= 0 || n_u() % 2 != 0) throw DimensionError("n_u must be even and positive");
        if (n_y() <= 0 || n_y() % 2 != 0) throw DimensionError("n_y must be even and positive");
        if (n_f() <= 0) throw DimensionError("n_f must be positive");
    }
};

/// Θ, Θ_w, Θ_y generated from dimensions (block-diagonal copies of J).
/// Θ_w spans the combined noise [w; v] of width n_w + n_u.
struct CommutationStructure {
    Matrix theta;
    Matrix theta_w;
    Matrix theta_y;

    static CommutationStructure for_plant(const QuantumPlant& p) {
        return {commutation_matrix(p.n()), commutation_matrix(p.n_w() + p.n_u()), commutation_matrix(p.n_y())};
    }
};

/// Homodyne measurement y_m = G y.
struct MeasurementMatrix {
    Matrix G;
};

/// Bounds ||f|| <= alpha, ||df/dt|| <= beta.
struct FaultBounds {
    double alpha = 0.0;
    double beta = 0.0;
};

// ============================================================================
// Physical realizability
// ============================================================================

struct ConditionCheck {
    std::string name;
    Matrix residual;
    double max_abs_residual = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct RealizabilityReport {
    ConditionCheck condition_i;    // AΘ + ΘAᵀ + BΘ_wBᵀ
    ConditionCheck condition_ii;   // BΘ_w[D 0]ᵀ + ΘCᵀ
    ConditionCheck condition_iii;  // [D 0]Θ_w[D 0]ᵀ − Θ_y

    [[nodiscard]] bool all_passed() const {
        return condition_i.passed && condition_ii.passed && condition_iii.passed;
    }
    /// Condition (ii) can be waived explicitly (noise-padding convention).
    [[nodiscard]] bool passed(bool override_condition_ii) const {
        return condition_i.passed && condition_iii.passed && (override_condition_ii || condition_ii.passed);
    }
};

namespace detail {
inline ConditionCheck make_check(std::string name, Matrix residual, double tol) {
    ConditionCheck c;
    c.name = std::move(name);
    c.max_abs_residual = max_abs(residual);
    c.residual = std::move(residual);
    c.tolerance = tol;
    c.passed = c.max_abs_residual <= tol;
    return c;
}
}  // namespace detail

/// Evaluates the three realizability conditions with B = [B_w B_u] and D padded
/// to [D 0] over the combined noise channels. Never mutates the plant.
inline RealizabilityReport check_physical_realizability(const QuantumPlant& plant, const CommutationStructure& comm) {
    plant.validate();
    const auto n = plant.n();
    const auto n_noise = plant.n_w() + plant.n_u();
    require_shape(comm.theta, n, n, "Theta");
    require_shape(comm.theta_w, n_noise, n_noise, "Theta_w");
    require_shape(comm.theta_y, plant.n_y(), plant.n_y(), "Theta_y");

    const Matrix b = plant.B();
    Matrix d_pad = Matrix::Zero(plant.n_y(), n_noise);
    d_pad.leftCols(plant.n_w()) = plant.D;

    const double tol = structural_tolerance({&plant.A, &b, &plant.C, &plant.D, &comm.theta, &comm.theta_w});

    RealizabilityReport r;
    r.condition_i = detail::make_check(
        "(i) A*Theta + Theta*A^T + B*Theta_w*B^T = 0",
        plant.A * comm.theta + comm.theta * plant.A.transpose() + b * comm.theta_w * b.transpose(), tol);
    r.condition_ii = detail::make_check("(ii) B*Theta_w*[D 0]^T + Theta*C^T = 0",
                                        b * comm.theta_w * d_pad.transpose() + comm.theta * plant.C.transpose(), tol);
    r.condition_iii = detail::make_check("(iii) [D 0]*Theta_w*[D 0]^T - Theta_y = 0",
                                         d_pad * comm.theta_w * d_pad.transpose() - comm.theta_y, tol);
    return r;
}

// ============================================================================
// Measurement matrix
// ============================================================================

struct MeasurementReport {
    Matrix residual;  // G Θ_y Gᵀ
    double max_abs_residual = 0.0;
    int rank = 0;
    int max_rank = 0;  // n_y / 2
    bool annihilates = false;
    bool rank_ok = false;

    [[nodiscard]] bool passed() const { return annihilates && rank_ok; }
};

inline MeasurementReport check_measurement_matrix(const Matrix& g, const Matrix& theta_y) {
    require_square(theta_y, "Theta_y");
    if (g.cols() != theta_y.rows()) {
        throw DimensionError("G must have n_y = " + std::to_string(theta_y.rows()) + " columns, got " +
                             std::to_string(g.cols()));
    }
    MeasurementReport r;
    r.residual = g * theta_y * g.transpose();
    r.max_abs_residual = max_abs(r.residual);
    r.annihilates = r.max_abs_residual <= structural_tolerance({&g, &theta_y});
    r.rank = numerical_rank(g);
    r.max_rank = static_cast<int>(theta_y.rows() / 2);
    r.rank_ok = r.rank <= r.max_rank;
    return r;
}

// ============================================================================
// Permutation transform
// ============================================================================

/// Plant in coordinates x̃ = T x = [x̃_uo; x̃_o] with x̃_o the last n_o entries.
struct TransformedPlant {
    Matrix T;
    Eigen::Index n_o = 0;
    Matrix A;    // T A Tᵀ
    Matrix B_w;  // T B_w
    Matrix B_u;  // T B_u
    Matrix B_f;  // T B_f
    Matrix C;    // C Tᵀ
    Matrix D;

    [[nodiscard]] Eigen::Index n() const { return A.rows(); }
    [[nodiscard]] Eigen::Index n_uo() const { return n() - n_o; }
    [[nodiscard]] Eigen::Index n_w() const { return B_w.cols(); }
    [[nodiscard]] Eigen::Index n_u() const { return B_u.cols(); }
    [[nodiscard]] Eigen::Index n_f() const { return B_f.cols(); }
    [[nodiscard]] Eigen::Index n_y() const { return C.rows(); }
    [[nodiscard]] Eigen::Index n_hat() const { return n_o + n_f(); }

    [[nodiscard]] Matrix A11() const { return A.topLeftCorner(n_uo(), n_uo()); }
    [[nodiscard]] Matrix A12() const { return A.topRightCorner(n_uo(), n_o); }
    [[nodiscard]] Matrix A21() const { return A.bottomLeftCorner(n_o, n_uo()); }
    [[nodiscard]] Matrix A22() const { return A.bottomRightCorner(n_o, n_o); }
    [[nodiscard]] Matrix B_w1() const { return B_w.topRows(n_uo()); }
    [[nodiscard]] Matrix B_w2() const { return B_w.bottomRows(n_o); }
    [[nodiscard]] Matrix B_u1() const { return B_u.topRows(n_uo()); }
    [[nodiscard]] Matrix B_u2() const { return B_u.bottomRows(n_o); }
    [[nodiscard]] Matrix B_f1() const { return B_f.topRows(n_uo()); }
    [[nodiscard]] Matrix B_f2() const { return B_f.bottomRows(n_o); }
    [[nodiscard]] Matrix C1() const { return C.leftCols(n_uo()); }
    [[nodiscard]] Matrix C2() const { return C.rightCols(n_o); }
};

/// Applies the permutation T and selects the last n_o coordinates as the
/// simultaneously observable block. Rejects T that is not a permutation and
/// choices whose lower-right n_o×n_o block of TΘTᵀ is nonzero.
inline TransformedPlant apply_transformation(const QuantumPlant& plant, const CommutationStructure& comm,
                                             const Matrix& t, Eigen::Index n_o) {
    plant.validate();
    const auto n = plant.n();
    require_shape(t, n, n, "T");
    require_shape(comm.theta, n, n, "Theta");
    if (!is_permutation_matrix(t)) throw StructureError("T is not a permutation matrix");
    if (n_o < 1 || 2 * n_o > n) {
        throw StructureError("n_o must satisfy 1 <= n_o <= n/2, got " + std::to_string(n_o));
    }

    const Matrix theta_t = t * comm.theta * t.transpose();
    const Matrix corner = theta_t.bottomRightCorner(n_o, n_o);
    if (max_abs(corner) != 0.0) {
        std::string where;
        for (Eigen::Index i = 0; i < n_o; ++i) {
            for (Eigen::Index j = 0; j < n_o; ++j) {
                if (corner(i, j) != 0.0) {
                    where += " (" + std::to_string(n - n_o + i) + "," + std::to_string(n - n_o + j) + ")";
                }
            }
        }
        throw StructureError("selected observables do not commute: T*Theta*T^T nonzero at" + where);
    }

    TransformedPlant tp;
    tp.T = t;
    tp.n_o = n_o;
    tp.A = t * plant.A * t.transpose();
    tp.B_w = t * plant.B_w;
    tp.B_u = t * plant.B_u;
    tp.B_f = t * plant.B_f;
    tp.C = plant.C * t.transpose();
    tp.D = plant.D;
    return tp;
}

/// Undo the permutation (Tᵀ = T⁻¹); exact in floating point.
inline QuantumPlant recover_plant(const TransformedPlant& tp) {
    const Matrix ti = tp.T.transpose();
    return {ti * tp.A * tp.T, ti * tp.B_w, ti * tp.B_u, ti * tp.B_f, tp.C * tp.T, tp.D};
}

/// Permutation whose row k selects original coordinate order[k].
inline Matrix permutation_from_order(const std::vector<int>& order) {
    const auto n = static_cast<Eigen::Index>(order.size());
    Matrix t = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) t(k, order[static_cast<size_t>(k)]) = 1.0;
    return t;
}

struct TransformationChoice {
    Matrix T;
    Eigen::Index n_o = 0;
    std::vector<int> observed;  // original indices placed in x̃_o, ascending
};

/// All valid (T, n_o) for n <= 8, one canonical T per observed index set:
/// unobserved indices first, observed last, each group in ascending order.
inline std::vector<TransformationChoice> enumerate_transformations(const CommutationStructure& comm) {
    const auto n = comm.theta.rows();
    if (n > 8) throw DimensionError("enumerate_transformations supports n <= 8");
    std::vector<TransformationChoice> out;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<int> obs;
        std::vector<int> rest;
        for (int i = 0; i < n; ++i) ((mask >> i) & 1u ? obs : rest).push_back(i);
        const auto n_o = static_cast<Eigen::Index>(obs.size());
        if (2 * n_o > n) continue;
        bool commuting = true;
        for (int a : obs) {
            for (int b : obs) commuting = commuting && comm.theta(a, b) == 0.0;
        }
        if (!commuting) continue;
        std::vector<int> order = rest;
        order.insert(order.end(), obs.begin(), obs.end());
        out.push_back({permutation_from_order(order), n_o, obs});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.n_o < b.n_o; });
    return out;
}

}  // namespace qlft
