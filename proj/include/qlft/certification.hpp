#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "qlft/estimator.hpp"

namespace qlft {

/// Relative eigenvalue tolerance: 1e-8 * (1 + ||input||_2).
inline double eigen_tolerance(double input_norm) { return 1e-8 * (1.0 + input_norm); }

/// Margin required of strict semidefinite inequalities: 1e-6 * (1 + ||Ā||_2).
inline double strict_margin(const ClosedLoop& cl) { return 1e-6 * (1.0 + spectral_norm(cl.A)); }

/// B̄ = [√2 α B̄_f, √2 β B̄_h, B̄_w].
inline Matrix stacked_input(const ClosedLoop& cl, const FaultBounds& b) {
    const double r2 = std::sqrt(2.0);
    Matrix out(cl.dim(), cl.B_f.cols() + cl.B_h.cols() + cl.B_w.cols());
    out << r2 * b.alpha * cl.B_f, r2 * b.beta * cl.B_h, cl.B_w;
    return out;
}

/// S = P⁻¹ through a Cholesky solve; throws StructureError when P is not positive definite.
inline Matrix inverse_spd(const Matrix& p) {
    require_square(p, "P");
    Eigen::LLT<Matrix> llt(symmetrize(p));
    if (llt.info() != Eigen::Success) throw StructureError("P is not positive definite");
    return symmetrize(llt.solve(Matrix::Identity(p.rows(), p.cols())));
}

// ----------------------------------------------------------------------------

struct Theorem1Result {
    Matrix delta;
    double lambda_max = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Δ = ĀᵀS + SĀ + S B̄_h B̄_hᵀ S + S B̄_f B̄_fᵀ S ⪯ 0.
inline Theorem1Result check_theorem1(const ClosedLoop& cl, const Matrix& s) {
    require_shape(s, cl.dim(), cl.dim(), "S");
    if (max_abs(s - s.transpose()) > structural_tolerance({&s})) throw StructureError("S is not symmetric");
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) throw StructureError("S is not positive definite");

    const Matrix sa = s * cl.A;
    const Matrix sbh = s * cl.B_h;
    const Matrix sbf = s * cl.B_f;
    Matrix delta = sa.transpose() + sa + sbh * sbh.transpose() + sbf * sbf.transpose();
    if (max_abs(delta - delta.transpose()) > 1e-9 * (1.0 + max_abs(delta))) {
        throw StructureError("Delta lost symmetry");
    }
    Theorem1Result r;
    r.delta = symmetrize(delta);
    r.lambda_max = max_eigenvalue(r.delta);
    const double sn = spectral_norm(sbh);
    const double fn = spectral_norm(sbf);
    r.tolerance = eigen_tolerance(2.0 * spectral_norm(sa) + sn * sn + fn * fn);
    r.passed = r.lambda_max <= r.tolerance;
    return r;
}

// ----------------------------------------------------------------------------

struct Theorem2Result {
    double block_lambda_max = 0.0;  // of [[ĀP+PĀᵀ+4P, B̄], [B̄ᵀ, −I]]
    double schur_lambda_max = 0.0;  // of ĀP+PĀᵀ+4P+B̄B̄ᵀ
    double p_lambda_min = 0.0;
    double tolerance = 0.0;
    bool block_passed = false;
    bool schur_passed = false;
    bool p_positive = false;
    bool verdicts_agree = false;

    [[nodiscard]] bool passed() const { return block_passed && p_positive; }
};

inline Theorem2Result check_theorem2_lmi(const ClosedLoop& cl, const Matrix& p, const FaultBounds& b) {
    require_shape(p, cl.dim(), cl.dim(), "P");
    const Matrix bb = stacked_input(cl, b);
    const Matrix ap = cl.A * p;
    const Matrix m = ap + ap.transpose() + 4.0 * p;
    const auto d = cl.dim();
    const auto k = bb.cols();
    Matrix block(d + k, d + k);
    block << m, bb, bb.transpose(), -Matrix::Identity(k, k);

    Theorem2Result r;
    r.tolerance = eigen_tolerance(spectral_norm(block));
    r.block_lambda_max = max_eigenvalue(block);
    r.schur_lambda_max = max_eigenvalue(m + bb * bb.transpose());
    r.p_lambda_min = min_eigenvalue(p);
    r.block_passed = r.block_lambda_max <= r.tolerance;
    r.schur_passed = r.schur_lambda_max <= r.tolerance;
    r.p_positive = r.p_lambda_min > 0.0;
    r.verdicts_agree = r.block_passed == r.schur_passed;
    return r;
}

// ----------------------------------------------------------------------------

struct Corollary1Result {
    Matrix expression;
    double lambda_min = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// 4P + (2α²−1) B̄_f B̄_fᵀ + (2β²−1) B̄_h B̄_hᵀ + B̄_w B̄_wᵀ ⪰ 0.
inline Corollary1Result check_corollary1(const ClosedLoop& cl, const Matrix& p, const FaultBounds& b) {
    require_shape(p, cl.dim(), cl.dim(), "P");
    Corollary1Result r;
    r.expression = symmetrize(4.0 * p + (2.0 * b.alpha * b.alpha - 1.0) * cl.B_f * cl.B_f.transpose() +
                              (2.0 * b.beta * b.beta - 1.0) * cl.B_h * cl.B_h.transpose() +
                              cl.B_w * cl.B_w.transpose());
    r.lambda_min = min_eigenvalue(r.expression);
    r.tolerance = eigen_tolerance(spectral_norm(r.expression));
    r.passed = r.lambda_min >= -r.tolerance;
    return r;
}

// ----------------------------------------------------------------------------

struct ImplicationAudit {
    bool applicable = false;  // Theorem 2 and Corollary 1 both passed
    double theorem1_lambda_max = 0.0;
    double allowed = 0.0;
    bool holds = true;
};

/// Checks that Theorem 2 + Corollary 1 passing yields Theorem 1 with S = P⁻¹.
/// The allowance is 10x the Theorem 1 tolerance, widened by ||S||² times the
/// Theorem 2 tolerance since Δ = S W₁ S.
inline ImplicationAudit implication_audit(const ClosedLoop& cl, const Matrix& p, const FaultBounds& b) {
    ImplicationAudit a;
    const Theorem2Result t2 = check_theorem2_lmi(cl, p, b);
    const Corollary1Result c1 = check_corollary1(cl, p, b);
    a.applicable = t2.passed() && c1.passed;
    if (!a.applicable) return a;
    const Matrix s = inverse_spd(p);
    const Theorem1Result t1 = check_theorem1(cl, s);
    const double s_norm = max_eigenvalue(s);
    a.theorem1_lambda_max = t1.lambda_max;
    a.allowed = 10.0 * std::max(t1.tolerance, (t2.tolerance + c1.tolerance) * s_norm * s_norm);
    a.holds = t1.lambda_max <= a.allowed;
    return a;
}

// ----------------------------------------------------------------------------

struct Certificate {
    Matrix P;
    Matrix S;
    Eigen::Index n = 0;
    double c = 0.0;
    double tau = 0.0;
    double gamma = 0.0;  // Tr(Y₂)
    double lambda_max_delta = 0.0;
    double lambda_max_s = 0.0;
    double lambda_min_s = 0.0;
    FaultBounds bounds;

    [[nodiscard]] Matrix Y1() const { return P.topLeftCorner(n, n); }
    [[nodiscard]] Matrix N() const { return P.topRightCorner(n, P.cols() - n); }
    [[nodiscard]] Matrix Y2() const { return P.bottomRightCorner(P.rows() - n, P.cols() - n); }
    /// −λ_max(Δ)/λ_min(S); larger than c whenever S is not a multiple of I and
    /// not a valid decay rate for g(t) = ⟨zᵀSz⟩ in general.
    [[nodiscard]] double c_lambda_min_s() const { return -lambda_max_delta / lambda_min_s; }
};

/// Builds the decay pair from P. Since λ_max(Δ) < 0 and zᵀz ≥ zᵀSz / λ_max(S),
/// the rate is c = −λ_max(Δ)/λ_max(S). Throws when P is not PD or c <= 0.
inline Certificate make_certificate(const ClosedLoop& cl, const Matrix& p, const FaultBounds& b) {
    require_shape(p, cl.dim(), cl.dim(), "P");
    Certificate cert;
    cert.P = symmetrize(p);
    cert.S = inverse_spd(cert.P);
    cert.n = cl.n;
    cert.bounds = b;
    const Theorem1Result t1 = check_theorem1(cl, cert.S);
    const Vector ev = sym_eigenvalues(cert.S);
    cert.lambda_max_delta = t1.lambda_max;
    cert.lambda_min_s = ev.minCoeff();
    cert.lambda_max_s = ev.maxCoeff();
    cert.c = -cert.lambda_max_delta / cert.lambda_max_s;
    cert.tau = b.alpha * b.alpha + b.beta * b.beta + (cl.B_w.transpose() * cert.S * cl.B_w).trace();
    cert.gamma = cert.Y2().trace();
    if (!(cert.c > 0.0)) {
        throw StructureError("certificate has non-positive decay rate c = " + std::to_string(cert.c));
    }
    return cert;
}

/// t ↦ e^{−ct} g0 + τ/c.
struct DecayEnvelope {
    double c = 0.0;
    double tau = 0.0;
    double g0 = 0.0;

    [[nodiscard]] double operator()(double t) const {
        if (std::isinf(t)) return tau / c;
        return std::exp(-c * t) * g0 + tau / c;
    }
};

inline DecayEnvelope decay_envelope(const Certificate& cert, double g0) {
    if (!(cert.c > 0.0)) throw StructureError("decay envelope requires c > 0");
    if (cert.tau < 0.0) throw StructureError("decay envelope requires tau >= 0");
    return {cert.c, cert.tau, g0};
}

inline DecayEnvelope decay_envelope(double c, double tau, double g0) {
    if (!(c > 0.0)) throw StructureError("decay envelope requires c > 0");
    if (tau < 0.0) throw StructureError("decay envelope requires tau >= 0");
    return {c, tau, g0};
}

}  // namespace qlft
