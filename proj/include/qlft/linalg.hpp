#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qlft {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when matrix shapes are inconsistent; `what()` names the offending matrix.
class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Thrown when a structural precondition (commutation, positivity, ...) fails.
class StructureError : public std::runtime_error {
public:
    explicit StructureError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(name + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                             ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

inline void require_square(const Matrix& m, const std::string& name) {
    if (m.rows() != m.cols()) {
        throw DimensionError(name + " must be square, got " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()));
    }
}

/// J = [[0, 1], [-1, 0]].
inline Matrix symplectic_block() {
    Matrix j(2, 2);
    j << 0.0, 1.0, -1.0, 0.0;
    return j;
}

/// diag(J, ..., J) of side `dim`; `dim` must be even.
inline Matrix commutation_matrix(Eigen::Index dim) {
    if (dim < 0 || dim % 2 != 0) {
        throw DimensionError("commutation matrix dimension must be even, got " + std::to_string(dim));
    }
    Matrix theta = Matrix::Zero(dim, dim);
    for (Eigen::Index k = 0; k < dim; k += 2) {
        theta(k, k + 1) = 1.0;
        theta(k + 1, k) = -1.0;
    }
    return theta;
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline Matrix hstack(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("hstack: row mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

inline Matrix vstack(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw DimensionError("vstack: column mismatch");
    Matrix out(a.rows() + b.rows(), a.cols());
    out << a, b;
    return out;
}

/// Matrix 2-norm (largest singular value).
inline double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

/// Rank with singular values below rel_tol * sigma_max treated as zero.
inline int numerical_rank(const Matrix& m, double rel_tol = 1e-10) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    if (s(0) == 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > rel_tol * s(0)) ++r;
    }
    return r;
}

inline Vector sym_eigenvalues(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double max_eigenvalue(const Matrix& sym) { return sym_eigenvalues(sym).maxCoeff(); }
inline double min_eigenvalue(const Matrix& sym) { return sym_eigenvalues(sym).minCoeff(); }

/// max Re(lambda) over the spectrum of a general square matrix.
inline double spectral_abscissa(const Matrix& a) {
    require_square(a, "spectral_abscissa argument");
    if (a.size() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().real().maxCoeff();
}

inline bool is_permutation_matrix(const Matrix& t) {
    if (t.rows() != t.cols()) return false;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        int row_ones = 0;
        int col_ones = 0;
        for (Eigen::Index j = 0; j < t.cols(); ++j) {
            const double r = t(i, j);
            const double c = t(j, i);
            if (r != 0.0 && r != 1.0) return false;
            row_ones += r == 1.0;
            col_ones += c == 1.0;
        }
        if (row_ones != 1 || col_ones != 1) return false;
    }
    return true;
}

/// Solves A X + X A^T + Q = 0 by the Kronecker (vec) formulation.
/// Throws StructureError when the solution is not unique (lambda_i + lambda_j = 0).
inline Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
    require_square(a, "A");
    require_shape(q, a.rows(), a.cols(), "Q");
    const Eigen::Index n = a.rows();
    const Matrix eye = Matrix::Identity(n, n);
    Matrix op = Matrix::Zero(n * n, n * n);
    // vec(A X) = (I ⊗ A) vec X, vec(X A^T) = (A ⊗ I) vec X
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            op.block(i * n, j * n, n, n) += eye(i, j) * a;
            op.block(i * n, j * n, n, n) += a(i, j) * eye;
        }
    }
    Eigen::FullPivLU<Matrix> lu(op);
    if (!lu.isInvertible()) {
        throw StructureError("Lyapunov equation has no unique solution");
    }
    const Vector rhs = -Eigen::Map<const Vector>(q.data(), n * n);
    Vector x = lu.solve(rhs);
    Matrix sol = Eigen::Map<Matrix>(x.data(), n, n);
    return symmetrize(sol);
}

/// Relative tolerance used by structural (equality) checks: 1e-9 * (1 + max |input|).
inline double structural_tolerance(std::initializer_list<const Matrix*> inputs) {
    double m = 0.0;
    for (const Matrix* p : inputs) m = std::max(m, max_abs(*p));
    return 1e-9 * (1.0 + m);
}

}  // namespace qlft
