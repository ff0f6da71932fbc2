#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qlft/certification.hpp"
#include "qlft/synthesis.hpp"

namespace qlft {

// ============================================================================
// Fault signals
// ============================================================================

enum class PieceKind { Constant, Sine, Cosine };

inline std::string to_string(PieceKind k) {
    switch (k) {
        case PieceKind::Constant: return "const";
        case PieceKind::Sine: return "sin";
        case PieceKind::Cosine: return "cos";
    }
    return "?";
}

inline PieceKind piece_kind_from_string(const std::string& s) {
    if (s == "const" || s == "constant") return PieceKind::Constant;
    if (s == "sin" || s == "sine") return PieceKind::Sine;
    if (s == "cos" || s == "cosine") return PieceKind::Cosine;
    throw std::invalid_argument("unknown fault piece kind '" + s + "'");
}

/// On [t0, t1): a·sin(ω(t−t0)) + b, a·cos(ω(t−t0)) + b, or b.
struct FaultPiece {
    double t0 = 0.0;
    double t1 = 0.0;
    PieceKind kind = PieceKind::Constant;
    Vector a;
    Vector b;
    double omega = 1.0;

    [[nodiscard]] Vector value(double t) const {
        const double ph = omega * (t - t0);
        switch (kind) {
            case PieceKind::Constant: return b;
            case PieceKind::Sine: return a * std::sin(ph) + b;
            case PieceKind::Cosine: return a * std::cos(ph) + b;
        }
        return b;
    }

    [[nodiscard]] Vector rate(double t) const {
        const double ph = omega * (t - t0);
        switch (kind) {
            case PieceKind::Constant: return Vector::Zero(b.size());
            case PieceKind::Sine: return a * (omega * std::cos(ph));
            case PieceKind::Cosine: return a * (-omega * std::sin(ph));
        }
        return Vector::Zero(b.size());
    }
};

struct FaultSignal {
    std::vector<FaultPiece> pieces;

    [[nodiscard]] Eigen::Index dim() const { return pieces.empty() ? 0 : pieces.front().b.size(); }
    [[nodiscard]] double horizon() const { return pieces.empty() ? 0.0 : pieces.back().t1; }

    /// Checks contiguity from 0, positive lengths, finite parameters, consistent sizes.
    void validate() const {
        if (pieces.empty()) throw std::invalid_argument("fault signal has no pieces");
        const auto nf = pieces.front().b.size();
        if (nf == 0) throw std::invalid_argument("fault piece has empty offset b");
        double expect = 0.0;
        for (size_t i = 0; i < pieces.size(); ++i) {
            const auto& p = pieces[i];
            const std::string tag = "fault piece " + std::to_string(i);
            if (!std::isfinite(p.t0) || !std::isfinite(p.t1)) throw std::invalid_argument(tag + " is unbounded in time");
            if (p.t0 != expect) throw std::invalid_argument(tag + " does not start where the previous one ends");
            if (!(p.t1 > p.t0)) throw std::invalid_argument(tag + " has non-positive length");
            if (p.b.size() != nf) throw DimensionError(tag + " offset has the wrong size");
            if (!p.b.allFinite()) throw std::invalid_argument(tag + " has a non-finite offset");
            if (p.kind != PieceKind::Constant) {
                if (p.a.size() != nf) throw DimensionError(tag + " amplitude has the wrong size");
                if (!p.a.allFinite() || !std::isfinite(p.omega)) {
                    throw std::invalid_argument(tag + " has non-finite parameters");
                }
            }
            expect = p.t1;
        }
    }

    /// Index of the piece containing t; pieces are half open except the last.
    [[nodiscard]] size_t piece_at(double t) const {
        for (size_t i = 0; i < pieces.size(); ++i) {
            if (t < pieces[i].t1) return i;
        }
        return pieces.size() - 1;
    }

    [[nodiscard]] Vector value(double t) const { return pieces[piece_at(t)].value(t); }
    [[nodiscard]] Vector rate(double t) const { return pieces[piece_at(t)].rate(t); }

    static FaultSignal zero(Eigen::Index nf, double horizon) {
        FaultSignal f;
        FaultPiece p;
        p.t1 = horizon;
        p.b = Vector::Zero(nf);
        f.pieces.push_back(p);
        return f;
    }
};

struct FaultJump {
    double t = 0.0;
    Vector before;
    Vector after;
    [[nodiscard]] double size() const { return (after - before).norm(); }
};

struct FaultBoundsReport {
    FaultBounds bounds;
    std::vector<FaultJump> jumps;  // excluded from β
    bool alpha_zero = false;       // no fault declared
    bool beta_zero = false;
};

namespace sim_detail {

/// Range of sin over the phase interval [0, span].
inline std::pair<double, double> sin_range(double span) {
    constexpr double pi = std::numbers::pi;
    double lo = std::min(0.0, std::sin(span));
    double hi = std::max(0.0, std::sin(span));
    // Critical points π/2 + kπ inside (0, span).
    for (double c = pi / 2.0; c < span; c += pi) {
        lo = std::min(lo, std::sin(c));
        hi = std::max(hi, std::sin(c));
    }
    return {lo, hi};
}

inline std::pair<double, double> cos_range(double span) {
    constexpr double pi = std::numbers::pi;
    double lo = std::min(1.0, std::cos(span));
    double hi = std::max(1.0, std::cos(span));
    for (double c = pi; c < span; c += pi) {
        lo = std::min(lo, std::cos(c));
        hi = std::max(hi, std::cos(c));
    }
    return {lo, hi};
}

}  // namespace sim_detail

/// sup‖f‖ and sup‖ḟ‖ per piece, maximized. ‖a s + b‖ is convex in s, so its
/// maximum over the attained range of the trigonometric factor is at an end.
inline FaultBoundsReport fault_bounds(const FaultSignal& f) {
    f.validate();
    FaultBoundsReport r;
    double alpha = 0.0;
    double beta = 0.0;
    for (const auto& p : f.pieces) {
        if (p.kind == PieceKind::Constant) {
            alpha = std::max(alpha, p.b.norm());
            continue;
        }
        const double span = std::abs(p.omega) * (p.t1 - p.t0);
        const double sgn = p.omega < 0.0 ? -1.0 : 1.0;
        // Value factor s and rate factor (sign-agnostic magnitude).
        std::pair<double, double> sv;
        std::pair<double, double> rv;
        if (p.kind == PieceKind::Sine) {
            sv = sim_detail::sin_range(span);
            if (sgn < 0) sv = {-sv.second, -sv.first};
            rv = sim_detail::cos_range(span);
        } else {
            sv = sim_detail::cos_range(span);
            rv = sim_detail::sin_range(span);
        }
        alpha = std::max({alpha, (p.a * sv.first + p.b).norm(), (p.a * sv.second + p.b).norm()});
        const double rate_factor = std::max(std::abs(rv.first), std::abs(rv.second));
        beta = std::max(beta, p.a.norm() * std::abs(p.omega) * rate_factor);
    }
    for (size_t i = 1; i < f.pieces.size(); ++i) {
        const double t = f.pieces[i].t0;
        FaultJump j;
        j.t = t;
        j.before = f.pieces[i - 1].value(t);
        j.after = f.pieces[i].value(t);
        if (j.size() > 1e-12 * (1.0 + j.before.norm())) r.jumps.push_back(j);
    }
    r.bounds = {alpha, beta};
    r.alpha_zero = alpha == 0.0;
    r.beta_zero = beta == 0.0;
    return r;
}

// ============================================================================
// Moment propagation
// ============================================================================

struct MomentJump {
    size_t sample = 0;  // first sample after the jump
    double t = 0.0;
    Vector mean_before;
    Vector mean_after;
    Matrix cov;  // unchanged across the jump
};

struct MomentTrajectory {
    double dt = 0.0;
    std::vector<double> t;
    std::vector<Vector> mean;
    std::vector<Matrix> cov;
    std::vector<MomentJump> jumps;

    [[nodiscard]] size_t size() const { return t.size(); }

    /// ⟨zᵀSz⟩ = Tr(SQ) + z̄ᵀSz̄.
    [[nodiscard]] static double g_of(const Matrix& s, const Vector& m, const Matrix& q) {
        return (s * q).trace() + m.dot(s * m);
    }
    [[nodiscard]] double g(size_t k, const Matrix& s) const { return g_of(s, mean[k], cov[k]); }
};

struct MomentOptions {
    double horizon = 20.0;
    double dt = 1e-3;
};

class SimulationError : public std::runtime_error {
public:
    SimulationError(const std::string& what, double t, Vector mean, Matrix cov)
        : std::runtime_error(what), t_(t), mean_(std::move(mean)), cov_(std::move(cov)) {}
    [[nodiscard]] double time() const { return t_; }
    [[nodiscard]] const Vector& last_mean() const { return mean_; }
    [[nodiscard]] const Matrix& last_cov() const { return cov_; }

private:
    double t_;
    Vector mean_;
    Matrix cov_;
};

namespace sim_detail {

struct MomentRhs {
    const ClosedLoop& cl;
    const FaultPiece& piece;
    Matrix noise;  // B̄_w B̄_wᵀ

    void operator()(double t, const Vector& m, const Matrix& q, Vector& dm, Matrix& dq) const {
        dm = cl.A * m + cl.B_f * piece.value(t) + cl.B_h * piece.rate(t);
        const Matrix aq = cl.A * q;
        dq = aq + aq.transpose() + noise;
    }
};

inline void rk4_step(const MomentRhs& f, double t, double h, Vector& m, Matrix& q) {
    Vector k1m, k2m, k3m, k4m;
    Matrix k1q, k2q, k3q, k4q;
    f(t, m, q, k1m, k1q);
    f(t + h / 2, m + h / 2 * k1m, q + h / 2 * k1q, k2m, k2q);
    f(t + h / 2, m + h / 2 * k2m, q + h / 2 * k2q, k3m, k3q);
    f(t + h, m + h * k3m, q + h * k3q, k4m, k4q);
    m += h / 6 * (k1m + 2 * k2m + 2 * k3m + k4m);
    q += h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q);
    q = symmetrize(q);
}

}  // namespace sim_detail

/// RK4 on dz̄ = Āz̄ + B̄_f f + B̄_h ḟ and dQ = ĀQ + QĀᵀ + B̄_wB̄_wᵀ on the grid
/// t_k = k·dt. A step containing a piece boundary is split there and the mean
/// takes the impulse B̄_h(f⁺ − f⁻). Samples are right-continuous.
inline MomentTrajectory simulate_moments(const ClosedLoop& cl, const FaultSignal& fault, const MomentOptions& opt,
                                         const Vector& z0, const Matrix& q0) {
    fault.validate();
    const auto d = cl.dim();
    if (!(opt.dt > 0.0) || !(opt.horizon > 0.0)) throw std::invalid_argument("dt and horizon must be positive");
    if (fault.dim() != cl.n_f) throw DimensionError("fault dimension does not match n_f");
    if (z0.size() != d) throw DimensionError("z0 has the wrong size");
    require_shape(q0, d, d, "Q0");
    if (max_abs(q0 - q0.transpose()) > 1e-12 * (1.0 + max_abs(q0))) throw StructureError("Q0 is not symmetric");
    if (min_eigenvalue(q0) < -1e-10 * (1.0 + max_abs(q0))) throw StructureError("Q0 is not positive semidefinite");

    const auto steps = static_cast<size_t>(std::llround(opt.horizon / opt.dt));
    if (steps == 0) throw std::invalid_argument("horizon shorter than one step");
    const Matrix noise = cl.B_w * cl.B_w.transpose();

    MomentTrajectory tr;
    tr.dt = opt.dt;
    tr.t.reserve(steps + 1);
    tr.mean.reserve(steps + 1);
    tr.cov.reserve(steps + 1);

    Vector m = z0;
    Matrix q = symmetrize(q0);
    tr.t.push_back(0.0);
    tr.mean.push_back(m);
    tr.cov.push_back(q);

    size_t piece = 0;
    auto apply_boundary = [&](size_t sample) {
        const auto& prev = fault.pieces[piece];
        const auto& next = fault.pieces[piece + 1];
        const double tb = next.t0;
        const Vector jump = next.value(tb) - prev.value(tb);
        MomentJump j;
        j.sample = sample;
        j.t = tb;
        j.mean_before = m;
        m += cl.B_h * jump;
        j.mean_after = m;
        j.cov = q;
        if (jump.norm() > 0.0) tr.jumps.push_back(std::move(j));
        ++piece;
    };

    for (size_t k = 0; k < steps; ++k) {
        double t = static_cast<double>(k) * opt.dt;
        const double t_end = static_cast<double>(k + 1) * opt.dt;
        // Boundaries strictly inside (t, t_end]; a boundary at t_end is split exactly.
        while (piece + 1 < fault.pieces.size() && fault.pieces[piece + 1].t0 <= t_end + 1e-12 * opt.dt) {
            const double tb = fault.pieces[piece + 1].t0;
            if (tb > t) {
                sim_detail::rk4_step({cl, fault.pieces[piece], noise}, t, tb - t, m, q);
                t = tb;
            }
            apply_boundary(k + 1);
        }
        if (t_end - t > 1e-12 * opt.dt) {
            sim_detail::rk4_step({cl, fault.pieces[piece], noise}, t, t_end - t, m, q);
        }
        if (!m.allFinite() || !q.allFinite()) {
            throw SimulationError("moment simulation diverged at t = " + std::to_string(t_end), tr.t.back(),
                                  tr.mean.back(), tr.cov.back());
        }
        tr.t.push_back(t_end);
        tr.mean.push_back(m);
        tr.cov.push_back(q);
    }
    return tr;
}

// ============================================================================
// Monte Carlo oracle
// ============================================================================

struct MonteCarloOptions {
    double horizon = 20.0;
    double dt = 1e-3;
    int trials = 10000;
    std::uint64_t seed = 1;
    std::vector<double> checkpoints{5.0, 10.0, 15.0, 20.0};
    int threads = 0;
};

struct MonteCarloSnapshot {
    double t = 0.0;
    Vector mean;
    Matrix cov;       // unbiased sample covariance
    Vector mean_se;   // √(Q_ii / N)
    Matrix cov_se;    // √((Q_ii Q_jj + Q_ij²) / N), Gaussian fourth moments
};

struct MonteCarloResult {
    int trials = 0;
    std::vector<MonteCarloSnapshot> snapshots;
};

/// Euler–Maruyama on dz = (Āz + B̄_f f + B̄_h ḟ)dt + B̄_w dW with unit-intensity
/// Wiener noise, deterministic initial state z0, and the same jump impulse as
/// simulate_moments. Trial i draws from derive_seed(seed, i).
inline MonteCarloResult monte_carlo_oracle(const ClosedLoop& cl, const FaultSignal& fault, const MonteCarloOptions& opt,
                                           const Vector& z0) {
    fault.validate();
    if (opt.trials < 100) throw std::invalid_argument("monte_carlo_oracle needs at least 100 trials");
    if (!(opt.dt > 0.0) || !(opt.horizon > 0.0)) throw std::invalid_argument("dt and horizon must be positive");
    const auto d = cl.dim();
    if (z0.size() != d) throw DimensionError("z0 has the wrong size");
    const auto steps = static_cast<size_t>(std::llround(opt.horizon / opt.dt));
    std::vector<size_t> cp_steps;
    for (double c : opt.checkpoints) {
        if (c < 0.0 || c > opt.horizon + 1e-12) throw std::invalid_argument("checkpoint outside the horizon");
        cp_steps.push_back(static_cast<size_t>(std::llround(c / opt.dt)));
    }
    const auto ncp = cp_steps.size();
    const auto nw = cl.B_w.cols();
    const double sq = std::sqrt(opt.dt);

    // Drift forcing per step (left endpoint) and jump impulses per step index.
    std::vector<Vector> forcing(steps);
    std::vector<Vector> impulse(steps, Vector::Zero(d));
    {
        size_t piece = 0;
        for (size_t k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) * opt.dt;
            const double t_end = t + opt.dt;
            while (piece + 1 < fault.pieces.size() && fault.pieces[piece + 1].t0 <= t_end + 1e-12 * opt.dt) {
                const double tb = fault.pieces[piece + 1].t0;
                impulse[k] += cl.B_h * (fault.pieces[piece + 1].value(tb) - fault.pieces[piece].value(tb));
                ++piece;
            }
            const auto& p = fault.pieces[fault.piece_at(t)];
            forcing[k] = cl.B_f * p.value(t) + cl.B_h * p.rate(t);
        }
    }

    // Each trial's checkpoint samples are stored so the reduction order does
    // not depend on the thread count.
    const int nt = std::max(1, std::min(resolve_threads(opt.threads), opt.trials));
    std::vector<std::vector<Vector>> samples(ncp, std::vector<Vector>(static_cast<size_t>(opt.trials)));
    std::atomic<int> next{0};
    auto worker = [&]() {
        Vector z(d);
        Vector dw(nw);
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= opt.trials) return;
            std::mt19937_64 rng(derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
            std::normal_distribution<double> nd;
            z = z0;
            size_t c = 0;
            while (c < ncp && cp_steps[c] == 0) samples[c++][static_cast<size_t>(i)] = z;
            for (size_t k = 0; k < steps; ++k) {
                for (Eigen::Index j = 0; j < nw; ++j) dw(j) = nd(rng) * sq;
                z += (cl.A * z + forcing[k]) * opt.dt + cl.B_w * dw + impulse[k];
                while (c < ncp && cp_steps[c] == k + 1) samples[c++][static_cast<size_t>(i)] = z;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 1; i < nt; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    MonteCarloResult res;
    res.trials = opt.trials;
    const double n = static_cast<double>(opt.trials);
    for (size_t c = 0; c < ncp; ++c) {
        MonteCarloSnapshot s;
        s.t = static_cast<double>(cp_steps[c]) * opt.dt;
        s.mean = Vector::Zero(d);
        for (const auto& z : samples[c]) s.mean += z;
        s.mean /= n;
        s.cov = Matrix::Zero(d, d);
        for (const auto& z : samples[c]) {
            const Vector dz = z - s.mean;
            s.cov.noalias() += dz * dz.transpose();
        }
        s.cov /= (n - 1.0);
        s.mean_se = (s.cov.diagonal() / n).cwiseSqrt();
        s.cov_se.resize(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                s.cov_se(i, j) = std::sqrt((s.cov(i, i) * s.cov(j, j) + s.cov(i, j) * s.cov(i, j)) / n);
            }
        }
        res.snapshots.push_back(std::move(s));
    }
    return res;
}

struct OracleAgreement {
    bool passed = true;
    double worst_mean_z = 0.0;  // max |Δmean| / SE
    double worst_cov_z = 0.0;   // max |ΔQ| / SE
    int compared = 0;
};

/// Entrywise agreement of the Monte Carlo snapshots with the moment trajectory
/// within k standard errors. Entries whose SE is zero must match to 1e-9.
inline OracleAgreement compare_with_moments(const MonteCarloResult& mc, const MomentTrajectory& tr, double k = 3.0) {
    OracleAgreement a;
    for (const auto& s : mc.snapshots) {
        const auto idx = static_cast<size_t>(std::llround(s.t / tr.dt));
        if (idx >= tr.size()) throw std::invalid_argument("checkpoint beyond the moment trajectory");
        const Vector& m = tr.mean[idx];
        const Matrix& q = tr.cov[idx];
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double diff = std::abs(s.mean(i) - m(i));
            const double se = s.mean_se(i);
            ++a.compared;
            if (se == 0.0) {
                if (diff > 1e-9 * (1.0 + std::abs(m(i)))) a.passed = false;
                continue;
            }
            a.worst_mean_z = std::max(a.worst_mean_z, diff / se);
        }
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            for (Eigen::Index j = i; j < q.cols(); ++j) {
                const double diff = std::abs(s.cov(i, j) - q(i, j));
                const double se = s.cov_se(i, j);
                ++a.compared;
                if (se == 0.0) {
                    if (diff > 1e-9 * (1.0 + std::abs(q(i, j)))) a.passed = false;
                    continue;
                }
                a.worst_cov_z = std::max(a.worst_cov_z, diff / se);
            }
        }
    }
    if (a.worst_mean_z > k || a.worst_cov_z > k) a.passed = false;
    return a;
}

// ============================================================================
// Envelope
// ============================================================================

struct EnvelopeSample {
    double t = 0.0;
    double g = 0.0;
    double envelope = 0.0;
};

struct EnvelopeReport {
    bool passed = true;
    double tolerance = 1e-6;
    double max_ratio = 0.0;          // max g / envelope
    double max_violation = 0.0;      // max (g − envelope·(1+tol)), 0 if none
    double worst_t = 0.0;
    std::vector<EnvelopeSample> samples;
    std::vector<double> restarts;    // times the envelope restarted (fault jumps)
};

/// g(t) ≤ (e^{−c(t−t_j)} g(t_j) + τ/c)(1 + tol) on every smooth segment; the
/// segment origin t_j is 0 or the last fault jump. The pre-jump value is
/// checked against the expiring segment.
inline EnvelopeReport check_envelope(const MomentTrajectory& tr, const Certificate& cert, double tol = 1e-6) {
    if (tr.size() == 0) throw std::invalid_argument("empty trajectory");
    require_shape(cert.S, tr.mean.front().size(), tr.mean.front().size(), "S");
    EnvelopeReport r;
    r.tolerance = tol;
    r.samples.reserve(tr.size());

    auto judge = [&](double t, double g, double env) {
        const double ratio = env > 0.0 ? g / env : (g > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        if (ratio > r.max_ratio) {
            r.max_ratio = ratio;
            r.worst_t = t;
        }
        const double over = g - env * (1.0 + tol);
        if (over > 0.0) {
            r.passed = false;
            r.max_violation = std::max(r.max_violation, over);
        }
    };

    size_t jump = 0;
    double t0 = tr.t.front();
    DecayEnvelope env = decay_envelope(cert, tr.g(0, cert.S));
    for (size_t k = 0; k < tr.size(); ++k) {
        if (jump < tr.jumps.size() && tr.jumps[jump].sample == k) {
            const auto& j = tr.jumps[jump];
            judge(j.t, MomentTrajectory::g_of(cert.S, j.mean_before, j.cov), env(j.t - t0));
            t0 = j.t;
            env = decay_envelope(cert, MomentTrajectory::g_of(cert.S, j.mean_after, j.cov));
            r.restarts.push_back(j.t);
            ++jump;
        }
        const double g = tr.g(k, cert.S);
        const double e = env(tr.t[k] - t0);
        r.samples.push_back({tr.t[k], g, e});
        judge(tr.t[k], g, e);
    }
    return r;
}

// ============================================================================
// CSV
// ============================================================================

/// Columns: t, z_0..z_{d−1}, q_i_j for i ≤ j (vech), and g, envelope when a
/// report is supplied. Numbers use %.17g. Every `stride`-th sample is written,
/// plus the last.
inline void write_trajectory_csv(std::ostream& os, const MomentTrajectory& tr, const EnvelopeReport* env = nullptr,
                                 size_t stride = 1) {
    if (tr.size() == 0) return;
    if (stride == 0) stride = 1;
    const auto d = tr.mean.front().size();
    os << "t";
    for (Eigen::Index i = 0; i < d; ++i) os << ",z_" << i;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j) os << ",q_" << i << "_" << j;
    }
    if (env) os << ",g,envelope";
    os << "\n";
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (size_t k = 0; k < tr.size(); ++k) {
        if (k % stride != 0 && k + 1 != tr.size()) continue;
        num(tr.t[k]);
        for (Eigen::Index i = 0; i < d; ++i) {
            os << ',';
            num(tr.mean[k](i));
        }
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = i; j < d; ++j) {
                os << ',';
                num(tr.cov[k](i, j));
            }
        }
        if (env) {
            os << ',';
            num(env->samples[k].g);
            os << ',';
            num(env->samples[k].envelope);
        }
        os << "\n";
    }
}

}  // namespace qlft
