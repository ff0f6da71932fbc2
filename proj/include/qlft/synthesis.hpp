#pragma once

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "qlft/certification.hpp"
#include "qlft/lifting.hpp"

namespace qlft {

// ============================================================================
// Options and results
// ============================================================================

struct SolverOptions {
    int max_iters = 5000;
    int restarts = 32;
    std::uint64_t seed = 1;
    double step_tol = 1e-9;
    double eq_tol = 1e-6;
    int polish_every = 250;  // 0 disables the fixed-gain polish
    int threads = 0;         // 0: QLFT_THREADS or hardware concurrency
    double eps_lifted = -1;  // < 0: 1e-6 (1 + ||Ã||)
    int descent_iters = 20000;  // gain-space warm start per restart; 0 disables
};

/// Thread count from QLFT_THREADS (when set and positive) capped by `requested` when nonzero.
inline int resolve_threads(int requested) {
    int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("QLFT_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) hw = v;
    }
    return requested > 0 ? std::min(requested, hw) : hw;
}

/// Independent stream seed for index k (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (k + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct CertificationSummary {
    double eps_strict = 0.0;
    Theorem2Result theorem2;
    Corollary1Result corollary1;
    Theorem1Result theorem1;
    double trace_y2 = 0.0;
    bool theorem2_margin_ok = false;  // block λ_max <= −ε_strict
    bool passed = false;
};

/// Every check required of an accepted (gains, P) pair.
inline CertificationSummary certify_pair(const ClosedLoop& cl, const Matrix& p, const FaultBounds& b, double gamma) {
    CertificationSummary s;
    s.eps_strict = strict_margin(cl);
    s.theorem2 = check_theorem2_lmi(cl, p, b);
    s.corollary1 = check_corollary1(cl, p, b);
    s.trace_y2 = p.bottomRightCorner(cl.n_hat(), cl.n_hat()).trace();
    s.theorem2_margin_ok = s.theorem2.block_lambda_max <= -s.eps_strict;
    if (s.theorem2.p_positive) s.theorem1 = check_theorem1(cl, inverse_spd(p));
    s.passed = s.theorem2.passed() && s.theorem2_margin_ok && s.corollary1.passed && s.theorem2.p_positive &&
               s.theorem1.passed && s.trace_y2 > 0.0 && s.trace_y2 <= gamma;
    return s;
}

struct SolverDiagnostics {
    int restarts_used = 0;
    int winning_restart = -1;
    long total_iterations = 0;
    int winning_iterations = 0;
    double best_eq_residual = std::numeric_limits<double>::infinity();
    bool polished = false;  // accepted Z came from the fixed-gain polish
    double descent_min_trace = std::numeric_limits<double>::infinity();  // least Tr(Y2) seen by the warm start
    LiftedCheck lifted;
    std::string message;
};

struct SynthesisResult {
    bool feasible = false;
    Gains gains;
    Matrix P;
    Matrix M1;
    double gamma_requested = 0.0;
    double gamma_achieved = std::numeric_limits<double>::infinity();  // Tr(Y2)
    CertificationSummary certification;
    SolverDiagnostics diagnostics;
    Vector z_coords;
    LiftCase lift_case = LiftCase::Case1;
};

// ============================================================================
// Fixed gains: convex feasibility in P
// ============================================================================

struct FixedGainReport {
    bool feasible = false;
    bool definitive = false;  // the verdict is exact, not a search failure
    std::string reason;
    double shifted_abscissa = 0.0;  // max Re λ(Ā + 2I)
    double min_trace_y2 = std::numeric_limits<double>::infinity();       // at margin ε_strict
    double infimum_trace_y2 = std::numeric_limits<double>::infinity();   // margin → 0
    Matrix P;
    Matrix G;
    CertificationSummary certification;
    int projection_iterations = 0;
};

namespace synth_detail {

/// Least P with (Ā+2I)P + P(Ā+2I)ᵀ + B̄B̄ᵀ/(1−ε) + εI = 0; any P satisfying the
/// block inequality with margin ε dominates it.
inline Matrix minimal_p(const ClosedLoop& cl, const Matrix& bb, double eps) {
    const Matrix m = cl.A + 2.0 * Matrix::Identity(cl.dim(), cl.dim());
    const Matrix q = bb * bb.transpose() / (1.0 - eps) + eps * Matrix::Identity(cl.dim(), cl.dim());
    return solve_lyapunov(m, q);
}

}  // namespace synth_detail

/// With gains fixed the block inequality is linear in P. The Lyapunov solution
/// P₀ at margin ε_strict is the least feasible P, so Tr(Y₂(P₀)) is the exact
/// minimum; Corollary 1 only grows easier with P, and when it fails at P₀ the
/// convex set {P ⪰ P₀, Corollary 1, Tr(Y₂) ≤ γ} is searched by alternating projections.
inline FixedGainReport certify_fixed_gains(const TransformedPlant& tp, const ReducedSystem& rs, const Matrix& g,
                                           const Gains& gains, const FaultBounds& b, double gamma,
                                           const SolverOptions& opts = {}) {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    const ClosedLoop cl = build_closed_loop(tp, rs, build_error_system(rs, gains, g, tp), gains);
    FixedGainReport r;
    r.G = g;
    const auto d = cl.dim();
    const Matrix shifted = cl.A + 2.0 * Matrix::Identity(d, d);
    r.shifted_abscissa = spectral_abscissa(shifted);
    if (r.shifted_abscissa >= 0.0) {
        r.definitive = true;
        r.reason = "A_bar + 2I is not Hurwitz (spectral abscissa " + std::to_string(r.shifted_abscissa) +
                   "); no P > 0 satisfies the block LMI";
        return r;
    }
    const double eps = std::min(strict_margin(cl), 0.25);
    const Matrix bb = stacked_input(cl, b);
    const auto nh = cl.n_hat();
    const Matrix p0 = synth_detail::minimal_p(cl, bb, eps);
    r.min_trace_y2 = p0.bottomRightCorner(nh, nh).trace();
    r.infimum_trace_y2 = synth_detail::minimal_p(cl, bb, 0.0).bottomRightCorner(nh, nh).trace();

    // Slightly inside the margin first, then P₀ itself.
    for (const Matrix& cand : {synth_detail::minimal_p(cl, bb, std::min(2.0 * eps, 0.5)), p0}) {
        const CertificationSummary s = certify_pair(cl, cand, b, gamma);
        if (s.passed) {
            r.feasible = true;
            r.definitive = true;
            r.P = cand;
            r.certification = s;
            r.reason = "certified";
            return r;
        }
    }
    if (r.min_trace_y2 > gamma) {
        r.definitive = true;
        r.P = p0;
        r.certification = certify_pair(cl, p0, b, gamma);
        r.reason = "minimal Tr(Y2) = " + std::to_string(r.min_trace_y2) + " exceeds gamma";
        return r;
    }

    // Convex search over P ⪰ P₀ with Corollary 1 and the trace bound.
    using conic::Expr;
    conic::Space sp;
    const int pb = sp.add_sym(d, -1, "P");
    const int w_lmi = sp.add_sym(d, -1, "W_lmi");
    const int w_cor = sp.add_sym(d, -1, "W_cor");
    const int t = sp.add_nonneg();
    conic::AffineSystem sys(sp.dim());
    const Expr p = sp.sym_var(pb);
    const Matrix eye = Matrix::Identity(d, d);
    const Expr mp = shifted * p;
    sys.add_equality("link: lmi", mp + mp.transpose() + Expr::constant(bb * bb.transpose() / (1.0 - eps) + eps * eye) +
                                      sp.sym_var(w_lmi),
                     true);
    const Matrix cor_const = (2.0 * b.alpha * b.alpha - 1.0) * cl.B_f * cl.B_f.transpose() +
                             (2.0 * b.beta * b.beta - 1.0) * cl.B_h * cl.B_h.transpose() +
                             cl.B_w * cl.B_w.transpose();
    sys.add_equality("link: corollary", 4.0 * p + Expr::constant(cor_const) - sp.sym_var(w_cor), true);
    Expr tr(1, 1);
    {
        std::vector<std::pair<double, const conic::LinearForm*>> parts;
        for (Eigen::Index i = d - nh; i < d; ++i) parts.emplace_back(1.0, &p.at(i, i));
        tr.at(0, 0) = conic::detail::combine(parts);
    }
    sys.add_equality("link: trace", tr + sp.scalar_var(t) - Expr::constant(Matrix::Constant(1, 1, gamma)));
    const conic::AffineProjector proj(sys);

    Vector x0 = Vector::Zero(sp.dim());
    sp.pack(pb, p0, x0);
    sp.pack(w_lmi, Matrix::Zero(d, d), x0);
    sp.pack(w_cor, symmetrize(4.0 * p0 + cor_const), x0);
    x0(sp.scalar_offsets()[0]) = gamma - r.min_trace_y2;

    conic::ProjectionOptions po;
    po.max_iters = opts.max_iters;
    po.step_tol = opts.step_tol;
    po.eq_tol = opts.eq_tol;
    po.callback_every = 25;
    Matrix found;
    auto accept = [&](const Vector& x, int) {
        const Matrix cand = sp.unpack(pb, x);
        if (min_eigenvalue(cand) <= 0.0) return false;
        if (certify_pair(cl, cand, b, gamma).passed) {
            found = cand;
            return true;
        }
        return false;
    };
    const conic::ProjectionRun run = conic::alternating_projections(sp, sys, proj, x0, po, accept);
    r.projection_iterations = run.iterations;
    if (found.size() == 0) accept(run.x, 0);
    if (found.size() != 0) {
        r.feasible = true;
        r.definitive = true;
        r.P = found;
        r.certification = certify_pair(cl, found, b, gamma);
        r.reason = "certified";
        return r;
    }
    r.P = p0;
    r.certification = certify_pair(cl, p0, b, gamma);
    r.reason = "no certificate found by projection search; every feasible P has Tr(Y2) >= " +
               std::to_string(r.min_trace_y2);
    return r;
}

// ============================================================================
// Rank-constrained lifted problem
// ============================================================================

namespace synth_detail {

inline Matrix random_normal(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale) {
    std::normal_distribution<double> nd(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
    }
    return m;
}

/// Score of a gain pair: the shifted spectral abscissa while Ā + 2I is not
/// Hurwitz, otherwise the least Tr(Y₂) over P at margin ε (shifted below zero
/// so every stabilizing pair ranks ahead of every non-stabilizing one).
inline double gain_score(const LiftedProblem& lp, const Gains& g) {
    if (!g.L.allFinite() || !g.K.allFinite()) return std::numeric_limits<double>::infinity();
    const ClosedLoop cl = assemble_closed_loop(lp.tp, lp.G, g);
    const auto d = cl.dim();
    const double a = spectral_abscissa(cl.A + 2.0 * Matrix::Identity(d, d));
    const double eps = std::min(strict_margin(cl), 0.25);
    if (a >= -eps) return 1.0 + a;
    const Matrix p0 = minimal_p(cl, stacked_input(cl, lp.bounds), 2.0 * eps);
    const double tr = p0.bottomRightCorner(cl.n_hat(), cl.n_hat()).trace();
    if (!std::isfinite(tr) || min_eigenvalue(p0) <= 0.0) return 1.0 + a;
    return -1.0 / (1.0 + tr);
}

/// Random local search on (L, K) with a slowly shrinking step (0.9 per 200
/// rejections); faster step control stalls where eigenvalues coalesce.
/// Stops once the least Tr(Y₂) is below 0.9γ.
inline Gains gain_descent(const LiftedProblem& lp, Gains g, std::mt19937_64& rng, int iters) {
    double best = gain_score(lp, g);
    const double target = -1.0 / (1.0 + 0.9 * lp.gamma);
    const double step0 = 0.5 * (1.0 + std::sqrt(g.L.squaredNorm() + g.K.squaredNorm()) /
                                          std::sqrt(static_cast<double>(g.L.size() + g.K.size())));
    double step = step0;
    for (int it = 0; it < iters && best > target && step > 1e-9; ++it) {
        Gains t = g;
        t.L += random_normal(rng, g.L.rows(), g.L.cols(), step);
        t.K += random_normal(rng, g.K.rows(), g.K.cols(), step);
        const double v = gain_score(lp, t);
        if (v < best) {
            if (best >= 0.0 && v < 0.0) step = step0;  // entered the stabilizing set
            best = v;
            g = std::move(t);
        } else {
            step *= 0.9995;
        }
    }
    return g;
}

/// Starting base for restart k: restart 0 starts from zero gains, the others
/// from random gains at scales cycling through 0.3, 1, 3, 10. The gains are then
/// moved by gain_descent and P is the least certificate when one exists.
inline LiftBase random_base(const LiftedProblem& lp, std::mt19937_64& rng, int restart, int descent_iters,
                            double* min_trace = nullptr) {
    const auto d = lp.n + lp.n_hat;
    const Matrix q = random_normal(rng, d, d, 1.0);
    Matrix p = q * q.transpose() / static_cast<double>(d) + Matrix::Identity(d, d);
    const Matrix m1 = random_normal(rng, lp.n, lp.n_hat, 1.0);
    static constexpr double kScales[] = {0.3, 1.0, 3.0, 10.0};
    const double sc = kScales[restart % 4];
    Gains g;
    g.n_o = lp.n_o;
    g.L = restart == 0 ? Matrix::Zero(lp.n_hat, lp.n_ym) : random_normal(rng, lp.n_hat, lp.n_ym, sc);
    g.K = restart == 0 ? Matrix::Zero(lp.n_u, lp.n_hat) : random_normal(rng, lp.n_u, lp.n_hat, sc);
    if (descent_iters > 0) {
        g = gain_descent(lp, g, rng, descent_iters);
        const double score = gain_score(lp, g);
        if (score < 0.0) {
            if (min_trace) *min_trace = -1.0 / score - 1.0;
            const ClosedLoop cl = assemble_closed_loop(lp.tp, lp.G, g);
            p = minimal_p(cl, stacked_input(cl, lp.bounds), std::min(2.0 * strict_margin(cl), 0.5));
        }
    }
    return lift_base_from(p, lp.n, m1, g);
}

struct RestartOutcome {
    bool success = false;
    bool polished = false;
    int iterations = 0;
    double eq_residual = std::numeric_limits<double>::infinity();
    double descent_trace = std::numeric_limits<double>::infinity();
    Vector x;
    LiftedCheck check;
    Gains gains;
    Matrix P;
    Matrix M1;
    CertificationSummary cert;
};

/// Certifies the current gains with the convex fixed-gain search and rebuilds a
/// rank-s point of the lifted set from (L, K, P, M1).
inline bool polish(const LiftedProblem& lp, const LiftExtract& ex, const SolverOptions& opts, RestartOutcome& out) {
    if (!ex.gains.L.allFinite() || !ex.gains.K.allFinite()) return false;
    SolverOptions inner = opts;
    inner.max_iters = std::min(opts.max_iters, 500);
    const FixedGainReport fr = certify_fixed_gains(lp.tp, lp.rs, lp.G, ex.gains, lp.bounds, lp.gamma, inner);
    if (!fr.feasible) return false;
    const ClosedLoop cl = assemble_closed_loop(lp.tp, lp.G, ex.gains);
    const Matrix bb = stacked_input(cl, lp.bounds);
    const auto nh = lp.n_hat;
    std::vector<Matrix> ps{fr.P};
    for (double e : {1e-3, 1e-2, 1e-1}) {
        const Matrix pe = minimal_p(cl, bb, e);
        if (pe.bottomRightCorner(nh, nh).trace() <= lp.gamma) ps.push_back(pe);
    }
    Matrix m1_default = Matrix::Zero(lp.n, nh);
    m1_default.topRows(std::min(lp.n, nh)).setIdentity();
    for (const Matrix& p : ps) {
        for (const Matrix& m1 : {ex.M1, m1_default, Matrix(10.0 * m1_default)}) {
            if (!m1.allFinite()) continue;
            const LiftBase base = lift_base_from(p, lp.n, m1, ex.gains);
            const Vector x = embed(lp, base);
            const LiftedCheck chk = check_lifted(lp, x, lp.Z(x));
            if (!chk.passed) continue;
            const CertificationSummary cs = certify_pair(cl, p, lp.bounds, lp.gamma);
            if (!cs.passed) continue;
            out.success = true;
            out.polished = true;
            out.x = x;
            out.check = chk;
            out.gains = ex.gains;
            out.P = p;
            out.M1 = m1;
            out.cert = cs;
            return true;
        }
    }
    return false;
}

inline RestartOutcome run_restart(const LiftedProblem& lp, const conic::AffineProjector& proj,
                                  const SolverOptions& opts, int k, const std::atomic<int>& best_success) {
    RestartOutcome out;
    std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(k)));
    const LiftBase base = random_base(lp, rng, k, opts.descent_iters, &out.descent_trace);
    const Vector x0 = embed(lp, base);

    conic::ProjectionOptions po;
    po.max_iters = opts.max_iters;
    po.step_tol = opts.step_tol;
    po.eq_tol = opts.eq_tol;
    po.callback_every = opts.polish_every > 0 ? opts.polish_every : 0;

    auto try_accept = [&](const Vector& x) {
        const LiftExtract ex = extract(lp, x);
        const LiftedCheck chk = check_lifted(lp, x, lp.Z(x));
        if (chk.passed && ex.gains.L.allFinite()) {
            const ClosedLoop cl = assemble_closed_loop(lp.tp, lp.G, ex.gains);
            if (min_eigenvalue(ex.P) > 0.0) {
                const CertificationSummary cs = certify_pair(cl, ex.P, lp.bounds, lp.gamma);
                if (cs.passed) {
                    out.success = true;
                    out.x = x;
                    out.check = chk;
                    out.gains = ex.gains;
                    out.P = ex.P;
                    out.M1 = ex.M1;
                    out.cert = cs;
                    return true;
                }
            }
        }
        return opts.polish_every > 0 && polish(lp, ex, opts, out);
    };

    // The starting point itself may already polish into a certificate.
    if (opts.polish_every > 0 && polish(lp, extract(lp, x0), opts, out)) return out;

    auto cb = [&](const Vector& x, int) {
        if (best_success.load() < k) return true;  // a lower restart already won
        return try_accept(x);
    };
    const conic::ProjectionRun run = conic::alternating_projections(lp.space, lp.equalities, proj, x0, po, cb);
    out.iterations = run.iterations;
    out.eq_residual = run.eq_residual;
    if (!out.success && best_success.load() > k) try_accept(run.x);
    if (!out.success) out.x = run.x;
    return out;
}

}  // namespace synth_detail

/// Alternating projections between the affine set and the PSD-rank-s cone
/// (times the slack cones), with restarts run in parallel. The winner is the
/// lowest successful restart index, independent of the thread count.
inline SynthesisResult solve_rank_constrained(const LiftedProblem& lp, const SolverOptions& opts = {}) {
    const conic::AffineProjector proj(lp.equalities);
    const int nr = std::max(1, opts.restarts);
    std::vector<synth_detail::RestartOutcome> outs(static_cast<size_t>(nr));
    std::atomic<int> best_success{nr};
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::string error;
    auto worker = [&]() {
        for (;;) {
            const int k = next.fetch_add(1);
            if (k >= nr || k > best_success.load()) return;
            try {
                outs[static_cast<size_t>(k)] = synth_detail::run_restart(lp, proj, opts, k, best_success);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (error.empty()) error = e.what();
                return;
            }
            if (outs[static_cast<size_t>(k)].success) {
                int cur = best_success.load();
                while (k < cur && !best_success.compare_exchange_weak(cur, k)) {
                }
            }
        }
    };
    const int nt = std::min(resolve_threads(opts.threads), nr);
    std::vector<std::thread> pool;
    for (int i = 1; i < nt; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (!error.empty()) throw std::runtime_error(error);

    SynthesisResult res;
    res.gamma_requested = lp.gamma;
    res.lift_case = lp.lift_case;
    auto& dg = res.diagnostics;
    const int winner = best_success.load();
    for (int k = 0; k < nr && k <= std::min(winner, nr - 1); ++k) {
        const auto& o = outs[static_cast<size_t>(k)];
        dg.total_iterations += o.iterations;
        dg.best_eq_residual = std::min(dg.best_eq_residual, o.eq_residual);
        dg.descent_min_trace = std::min(dg.descent_min_trace, o.descent_trace);
    }
    if (winner < nr) {
        const auto& o = outs[static_cast<size_t>(winner)];
        res.feasible = true;
        res.gains = o.gains;
        res.P = o.P;
        res.M1 = o.M1;
        res.gamma_achieved = o.cert.trace_y2;
        res.certification = o.cert;
        res.z_coords = o.x;
        dg.restarts_used = winner + 1;
        dg.winning_restart = winner;
        dg.winning_iterations = o.iterations;
        dg.polished = o.polished;
        dg.lifted = o.check;
        dg.message = "certified";
    } else {
        dg.restarts_used = nr;
        dg.message = "infeasible after " + std::to_string(nr) + " restarts";
    }
    return res;
}

inline double default_lifted_margin(const TransformedPlant& tp) { return 1e-6 * (1.0 + spectral_norm(tp.A)); }

/// Assembles the lifted problem for (T, G, α, β, γ) and solves it.
inline SynthesisResult synthesize(const TransformedPlant& tp, const Matrix& g, const FaultBounds& b, double gamma,
                                  const SolverOptions& opts = {}) {
    const ReducedSystem rs = build_reduced(tp);
    const double eps = opts.eps_lifted >= 0.0 ? opts.eps_lifted : default_lifted_margin(tp);
    const LiftedProblem lp = assemble_lifted(tp, rs, g, b, gamma, eps);
    return solve_rank_constrained(lp, opts);
}

/// A certified result stays certified for any larger γ (same P, same gains).
inline bool certifies_at(const SynthesisResult& r, const TransformedPlant& tp, const Matrix& g, const FaultBounds& b,
                         double gamma) {
    if (!r.feasible) return false;
    return certify_pair(assemble_closed_loop(tp, g, r.gains), r.P, b, gamma).passed;
}

struct GammaSearch {
    double best_gamma = std::numeric_limits<double>::infinity();  // smallest γ certified
    double largest_failed = 0.0;
    SynthesisResult best;
    std::vector<std::pair<double, bool>> trace;  // (γ, feasible) in evaluation order
};

/// Bisection on log γ over [lo, hi]: rerun the feasibility problem and keep
/// the smallest certified γ.
template <class Solve>
GammaSearch bisect_gamma(double lo, double hi, int steps, Solve&& solve) {
    if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("bisect_gamma needs 0 < lo < hi");
    GammaSearch gs;
    SynthesisResult r = solve(hi);
    gs.trace.emplace_back(hi, r.feasible);
    if (!r.feasible) {
        gs.largest_failed = hi;
        return gs;
    }
    gs.best_gamma = r.gamma_achieved;
    gs.best = r;
    double a = lo;
    double b = std::min(hi, r.gamma_achieved);
    for (int i = 0; i < steps; ++i) {
        const double mid = std::sqrt(a * b);
        SynthesisResult m = solve(mid);
        gs.trace.emplace_back(mid, m.feasible);
        if (m.feasible) {
            b = std::min(mid, m.gamma_achieved);
            gs.best_gamma = m.gamma_achieved;
            gs.best = m;
        } else {
            a = mid;
            gs.largest_failed = std::max(gs.largest_failed, mid);
        }
    }
    return gs;
}

}  // namespace qlft
