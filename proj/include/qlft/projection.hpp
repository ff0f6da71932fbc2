#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "qlft/linalg.hpp"

namespace qlft::conic {

// ============================================================================
// Affine expressions over a coordinate vector x
// ============================================================================

struct Term {
    int index;
    double coef;
};

/// constant + Σ coef · x[index], terms sorted by index without duplicates.
struct LinearForm {
    double constant = 0.0;
    std::vector<Term> terms;

    [[nodiscard]] double evaluate(const Vector& x) const {
        double v = constant;
        for (const auto& t : terms) v += t.coef * x(t.index);
        return v;
    }
};

namespace detail {
/// Σ w_k · f_k with term merging.
inline LinearForm combine(const std::vector<std::pair<double, const LinearForm*>>& parts) {
    LinearForm out;
    size_t total = 0;
    for (const auto& [w, f] : parts) {
        if (w != 0.0) total += f->terms.size();
    }
    std::vector<Term> all;
    all.reserve(total);
    for (const auto& [w, f] : parts) {
        if (w == 0.0) continue;
        out.constant += w * f->constant;
        for (const auto& t : f->terms) all.push_back({t.index, w * t.coef});
    }
    std::sort(all.begin(), all.end(), [](const Term& a, const Term& b) { return a.index < b.index; });
    for (const auto& t : all) {
        if (!out.terms.empty() && out.terms.back().index == t.index) {
            out.terms.back().coef += t.coef;
        } else {
            out.terms.push_back(t);
        }
    }
    std::erase_if(out.terms, [](const Term& t) { return t.coef == 0.0; });
    return out;
}
}  // namespace detail

/// Matrix whose entries are affine functions of x (row-major storage).
class Expr {
public:
    Expr() = default;
    Expr(Eigen::Index rows, Eigen::Index cols)
        : rows_(rows), cols_(cols), e_(static_cast<size_t>(rows * cols)) {}

    static Expr constant(const Matrix& m) {
        Expr out(m.rows(), m.cols());
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) out.at(i, j).constant = m(i, j);
        }
        return out;
    }
    static Expr zeros(Eigen::Index rows, Eigen::Index cols) { return Expr(rows, cols); }

    [[nodiscard]] Eigen::Index rows() const { return rows_; }
    [[nodiscard]] Eigen::Index cols() const { return cols_; }

    LinearForm& at(Eigen::Index i, Eigen::Index j) { return e_[static_cast<size_t>(i * cols_ + j)]; }
    [[nodiscard]] const LinearForm& at(Eigen::Index i, Eigen::Index j) const {
        return e_[static_cast<size_t>(i * cols_ + j)];
    }

    [[nodiscard]] Expr block(Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc) const {
        if (r0 < 0 || c0 < 0 || r0 + nr > rows_ || c0 + nc > cols_) throw DimensionError("Expr::block out of range");
        Expr out(nr, nc);
        for (Eigen::Index i = 0; i < nr; ++i) {
            for (Eigen::Index j = 0; j < nc; ++j) out.at(i, j) = at(r0 + i, c0 + j);
        }
        return out;
    }

    void set_block(Eigen::Index r0, Eigen::Index c0, const Expr& b) {
        if (r0 < 0 || c0 < 0 || r0 + b.rows() > rows_ || c0 + b.cols() > cols_) {
            throw DimensionError("Expr::set_block out of range");
        }
        for (Eigen::Index i = 0; i < b.rows(); ++i) {
            for (Eigen::Index j = 0; j < b.cols(); ++j) at(r0 + i, c0 + j) = b.at(i, j);
        }
    }

    [[nodiscard]] Expr transpose() const {
        Expr out(cols_, rows_);
        for (Eigen::Index i = 0; i < rows_; ++i) {
            for (Eigen::Index j = 0; j < cols_; ++j) out.at(j, i) = at(i, j);
        }
        return out;
    }

    [[nodiscard]] Matrix evaluate(const Vector& x) const {
        Matrix m(rows_, cols_);
        for (Eigen::Index i = 0; i < rows_; ++i) {
            for (Eigen::Index j = 0; j < cols_; ++j) m(i, j) = at(i, j).evaluate(x);
        }
        return m;
    }

    [[nodiscard]] Matrix constant_part() const {
        Matrix m(rows_, cols_);
        for (Eigen::Index i = 0; i < rows_; ++i) {
            for (Eigen::Index j = 0; j < cols_; ++j) m(i, j) = at(i, j).constant;
        }
        return m;
    }

    friend Expr operator+(const Expr& a, const Expr& b) { return axpby(1.0, a, 1.0, b); }
    friend Expr operator-(const Expr& a, const Expr& b) { return axpby(1.0, a, -1.0, b); }
    friend Expr operator-(const Expr& a) { return a * -1.0; }
    friend Expr operator*(const Expr& a, double s) {
        Expr out(a.rows_, a.cols_);
        for (size_t k = 0; k < a.e_.size(); ++k) out.e_[k] = detail::combine({{s, &a.e_[k]}});
        return out;
    }
    friend Expr operator*(double s, const Expr& a) { return a * s; }

    friend Expr operator*(const Matrix& c, const Expr& a) {
        if (c.cols() != a.rows_) throw DimensionError("Matrix * Expr: inner dimension mismatch");
        Expr out(c.rows(), a.cols_);
        std::vector<std::pair<double, const LinearForm*>> parts;
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            for (Eigen::Index j = 0; j < a.cols_; ++j) {
                parts.clear();
                for (Eigen::Index k = 0; k < c.cols(); ++k) {
                    if (c(i, k) != 0.0) parts.emplace_back(c(i, k), &a.at(k, j));
                }
                out.at(i, j) = detail::combine(parts);
            }
        }
        return out;
    }

    friend Expr operator*(const Expr& a, const Matrix& c) {
        if (a.cols_ != c.rows()) throw DimensionError("Expr * Matrix: inner dimension mismatch");
        Expr out(a.rows_, c.cols());
        std::vector<std::pair<double, const LinearForm*>> parts;
        for (Eigen::Index i = 0; i < a.rows_; ++i) {
            for (Eigen::Index j = 0; j < c.cols(); ++j) {
                parts.clear();
                for (Eigen::Index k = 0; k < a.cols_; ++k) {
                    if (c(k, j) != 0.0) parts.emplace_back(c(k, j), &a.at(i, k));
                }
                out.at(i, j) = detail::combine(parts);
            }
        }
        return out;
    }

private:
    static Expr axpby(double wa, const Expr& a, double wb, const Expr& b) {
        if (a.rows_ != b.rows_ || a.cols_ != b.cols_) {
            throw DimensionError("Expr sum: shape " + std::to_string(a.rows_) + "x" + std::to_string(a.cols_) +
                                 " vs " + std::to_string(b.rows_) + "x" + std::to_string(b.cols_));
        }
        Expr out(a.rows_, a.cols_);
        for (size_t k = 0; k < a.e_.size(); ++k) out.e_[k] = detail::combine({{wa, &a.e_[k]}, {wb, &b.e_[k]}});
        return out;
    }

    Eigen::Index rows_ = 0;
    Eigen::Index cols_ = 0;
    std::vector<LinearForm> e_;
};

/// Assembles [[a, b], [c, d]].
inline Expr block2x2(const Expr& a, const Expr& b, const Expr& c, const Expr& d) {
    if (a.rows() != b.rows() || c.rows() != d.rows() || a.cols() != c.cols() || b.cols() != d.cols()) {
        throw DimensionError("block2x2: inconsistent block shapes");
    }
    Expr out(a.rows() + c.rows(), a.cols() + b.cols());
    out.set_block(0, 0, a);
    out.set_block(0, a.cols(), b);
    out.set_block(a.rows(), 0, c);
    out.set_block(a.rows(), a.cols(), d);
    return out;
}

inline Expr hcat(const std::vector<Expr>& parts) {
    Eigen::Index cols = 0;
    for (const auto& p : parts) cols += p.cols();
    Expr out(parts.empty() ? 0 : parts.front().rows(), cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.set_block(0, c, p);
        c += p.cols();
    }
    return out;
}

inline Expr symmetric_part(const Expr& e) { return 0.5 * (e + e.transpose()); }

// ============================================================================
// Variable space: scaled-svec symmetric blocks and nonnegative scalars
// ============================================================================

class Space {
public:
    struct SymBlock {
        Eigen::Index size;
        Eigen::Index rank;  // < 0 means unrestricted
        int offset;
        std::string name;
    };

    int add_sym(Eigen::Index size, Eigen::Index rank, std::string name) {
        sym_.push_back({size, rank, dim_, std::move(name)});
        dim_ += static_cast<int>(size * (size + 1) / 2);
        return static_cast<int>(sym_.size()) - 1;
    }
    int add_nonneg() {
        scalars_.push_back(dim_);
        dim_ += 1;
        return static_cast<int>(scalars_.size()) - 1;
    }

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] const std::vector<SymBlock>& sym_blocks() const { return sym_; }
    [[nodiscard]] const std::vector<int>& scalar_offsets() const { return scalars_; }

    /// Coordinate of entry (i, j), i <= j, inside a symmetric block.
    [[nodiscard]] int sym_index(int block, Eigen::Index i, Eigen::Index j) const {
        const auto& b = sym_[static_cast<size_t>(block)];
        if (i > j) std::swap(i, j);
        // row-major upper triangle
        const auto before = i * b.size - i * (i - 1) / 2;
        return b.offset + static_cast<int>(before + (j - i));
    }

    /// The matrix of a symmetric block as an expression (off-diagonals carry 1/√2).
    [[nodiscard]] Expr sym_var(int block) const {
        const auto& b = sym_[static_cast<size_t>(block)];
        Expr out(b.size, b.size);
        const double h = 1.0 / std::sqrt(2.0);
        for (Eigen::Index i = 0; i < b.size; ++i) {
            for (Eigen::Index j = 0; j < b.size; ++j) {
                out.at(i, j).terms.push_back({sym_index(block, i, j), i == j ? 1.0 : h});
            }
        }
        return out;
    }

    [[nodiscard]] Expr scalar_var(int id) const {
        Expr out(1, 1);
        out.at(0, 0).terms.push_back({scalars_[static_cast<size_t>(id)], 1.0});
        return out;
    }

    [[nodiscard]] Matrix unpack(int block, const Vector& x) const {
        const auto& b = sym_[static_cast<size_t>(block)];
        Matrix m(b.size, b.size);
        const double h = 1.0 / std::sqrt(2.0);
        for (Eigen::Index i = 0; i < b.size; ++i) {
            for (Eigen::Index j = i; j < b.size; ++j) {
                const double v = x(sym_index(block, i, j));
                m(i, j) = i == j ? v : v * h;
                m(j, i) = m(i, j);
            }
        }
        return m;
    }

    void pack(int block, const Matrix& m, Vector& x) const {
        const auto& b = sym_[static_cast<size_t>(block)];
        require_shape(m, b.size, b.size, b.name);
        const double r2 = std::sqrt(2.0);
        for (Eigen::Index i = 0; i < b.size; ++i) {
            for (Eigen::Index j = i; j < b.size; ++j) {
                x(sym_index(block, i, j)) = i == j ? m(i, j) : 0.5 * (m(i, j) + m(j, i)) * r2;
            }
        }
    }

private:
    std::vector<SymBlock> sym_;
    std::vector<int> scalars_;
    int dim_ = 0;
};

/// Nearest PSD matrix of rank <= r (r < 0: no rank bound) in Frobenius norm.
inline Matrix project_psd_rank(const Matrix& m, Eigen::Index r) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
    Vector ev = es.eigenvalues();  // ascending
    const Eigen::Index n = ev.size();
    for (Eigen::Index k = 0; k < n; ++k) {
        if (ev(k) < 0.0 || (r >= 0 && k < n - r)) ev(k) = 0.0;
    }
    return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

/// Projection onto the product of cones described by the space.
inline Vector project_cones(const Space& sp, const Vector& x) {
    Vector out = x;
    for (int b = 0; b < static_cast<int>(sp.sym_blocks().size()); ++b) {
        sp.pack(b, project_psd_rank(sp.unpack(b, x), sp.sym_blocks()[static_cast<size_t>(b)].rank), out);
    }
    for (int off : sp.scalar_offsets()) out(off) = std::max(0.0, x(off));
    return out;
}

// ============================================================================
// Affine constraint system
// ============================================================================

struct ConstraintGroup {
    std::string label;
    int first_row = 0;
    int rows = 0;
    std::vector<std::string> covers;  // named items of the lifted constraint list realised here
};

class AffineSystem {
public:
    explicit AffineSystem(int dim) : dim_(dim) {}

    /// Adds e == 0 entrywise; `upper_only` keeps i <= j for square symmetric expressions.
    void add_equality(const std::string& label, const Expr& e, bool upper_only = false,
                      std::vector<std::string> covers = {}) {
        ConstraintGroup g;
        g.label = label;
        g.first_row = static_cast<int>(rows_.size());
        g.covers = std::move(covers);
        for (Eigen::Index i = 0; i < e.rows(); ++i) {
            for (Eigen::Index j = upper_only ? i : 0; j < e.cols(); ++j) {
                const LinearForm& f = e.at(i, j);
                if (f.terms.empty()) {
                    if (std::abs(f.constant) > 0.0) {
                        throw StructureError("constraint '" + label + "' has a nonzero constant row with no variables");
                    }
                    continue;
                }
                rows_.push_back(f);
            }
        }
        g.rows = static_cast<int>(rows_.size()) - g.first_row;
        groups_.push_back(std::move(g));
    }

    /// Records a list item realised structurally (no rows needed).
    void add_folded(const std::string& label, std::vector<std::string> covers) {
        groups_.push_back({label, static_cast<int>(rows_.size()), 0, std::move(covers)});
    }

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] int rows() const { return static_cast<int>(rows_.size()); }
    [[nodiscard]] const std::vector<ConstraintGroup>& groups() const { return groups_; }
    [[nodiscard]] const std::vector<LinearForm>& forms() const { return rows_; }

    /// Per-row |a·x − b| / (1 + Σ|a_k x_k| + |b|).
    [[nodiscard]] Vector relative_residuals(const Vector& x) const {
        Vector r(rows());
        for (int k = 0; k < rows(); ++k) {
            const auto& f = rows_[static_cast<size_t>(k)];
            double scale = 1.0 + std::abs(f.constant);
            for (const auto& t : f.terms) scale += std::abs(t.coef * x(t.index));
            r(k) = std::abs(f.evaluate(x)) / scale;
        }
        return r;
    }

    [[nodiscard]] double max_relative_residual(const Vector& x) const {
        return rows() == 0 ? 0.0 : relative_residuals(x).maxCoeff();
    }

    [[nodiscard]] double group_residual(const ConstraintGroup& g, const Vector& x) const {
        double m = 0.0;
        const Vector r = relative_residuals(x);
        for (int k = g.first_row; k < g.first_row + g.rows; ++k) m = std::max(m, r(k));
        return m;
    }

private:
    int dim_;
    std::vector<LinearForm> rows_;
    std::vector<ConstraintGroup> groups_;
};

/// Euclidean projection x ↦ x − Aᵀ(AAᵀ)⁺(Ax − b), with the pseudo-inverse
/// precomputed from an eigendecomposition of AAᵀ.
class AffineProjector {
public:
    explicit AffineProjector(const AffineSystem& sys) : n_(sys.dim()) {
        const int m = sys.rows();
        std::vector<Eigen::Triplet<double>> trip;
        b_.resize(m);
        for (int k = 0; k < m; ++k) {
            const auto& f = sys.forms()[static_cast<size_t>(k)];
            for (const auto& t : f.terms) trip.emplace_back(k, t.index, t.coef);
            b_(k) = -f.constant;
        }
        a_.resize(m, n_);
        a_.setFromTriplets(trip.begin(), trip.end());
        a_.makeCompressed();
        if (m == 0) return;
        const Matrix aat = Matrix(a_ * a_.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> es(aat);
        const Vector& ev = es.eigenvalues();
        const double cut = 1e-12 * std::max(1.0, ev.maxCoeff());
        Vector inv = Vector::Zero(ev.size());
        for (Eigen::Index k = 0; k < ev.size(); ++k) {
            if (ev(k) > cut) {
                inv(k) = 1.0 / ev(k);
                ++rank_;
            }
        }
        pinv_ = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    }

    [[nodiscard]] Vector project(const Vector& x) const {
        if (a_.rows() == 0) return x;
        const Vector r = a_ * x - b_;
        return x - a_.transpose() * (pinv_ * r);
    }

    [[nodiscard]] int rank() const { return rank_; }
    [[nodiscard]] Eigen::Index rows() const { return a_.rows(); }

private:
    int n_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> a_;
    Vector b_;
    Matrix pinv_;
    int rank_ = 0;
};

// ============================================================================
// Alternating projections
// ============================================================================

struct ProjectionOptions {
    int max_iters = 5000;
    double step_tol = 1e-9;
    double eq_tol = 1e-6;
    int callback_every = 0;  // 0 disables the periodic callback
};

struct ProjectionRun {
    Vector x;  // last cone iterate
    int iterations = 0;
    bool converged = false;
    bool feasible = false;  // equality residual within eq_tol
    bool stopped_by_callback = false;
    double last_step = 0.0;
    double eq_residual = 0.0;
};

/// x_{k+1} = Π_cones(Π_affine(x_k)). The callback sees the cone iterate and may
/// stop the run by returning true.
inline ProjectionRun alternating_projections(const Space& sp, const AffineSystem& sys, const AffineProjector& proj,
                                             Vector x0, const ProjectionOptions& opts,
                                             const std::function<bool(const Vector&, int)>& callback = {}) {
    ProjectionRun run;
    Vector x = project_cones(sp, std::move(x0));
    for (int k = 1; k <= opts.max_iters; ++k) {
        Vector next = project_cones(sp, proj.project(x));
        if (!next.allFinite()) {
            throw std::runtime_error("alternating projections produced a non-finite iterate at iteration " +
                                     std::to_string(k) + "; last finite iterate norm " + std::to_string(x.norm()));
        }
        run.last_step = (next - x).norm();
        x = std::move(next);
        run.iterations = k;
        if (callback && opts.callback_every > 0 && k % opts.callback_every == 0 && callback(x, k)) {
            run.stopped_by_callback = true;
            break;
        }
        if (run.last_step <= opts.step_tol) {
            run.converged = true;
            break;
        }
    }
    run.eq_residual = sys.max_relative_residual(x);
    run.feasible = run.eq_residual <= opts.eq_tol;
    run.x = std::move(x);
    return run;
}

}  // namespace qlft::conic
