#include <gtest/gtest.h>

#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "oracles.hpp"
#include "qlft/io.hpp"

using namespace qlft;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace

// ============================================================================
// linalg

TEST(Linalg, CommutationMatrixMatchesEntrywiseOracle) {
    for (Eigen::Index n : {2, 4, 6, 8}) {
        EXPECT_EQ(commutation_matrix(n), oracle::theta(n));
        EXPECT_EQ(commutation_matrix(n).transpose(), -commutation_matrix(n));
    }
    EXPECT_THROW(commutation_matrix(3), DimensionError);
}

TEST(Linalg, LyapunovAgreesWithQrOracle) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 30; ++t) {
        const Eigen::Index n = oracle::uniform_int(rng, 1, 6);
        Matrix a = oracle::randn(rng, n, n);
        a -= (spectral_abscissa(a) + 0.5) * Matrix::Identity(n, n);
        const Matrix q0 = oracle::randn(rng, n, n);
        const Matrix q = q0 * q0.transpose();
        const Matrix x = solve_lyapunov(a, q);
        EXPECT_LE(max_abs(x - oracle::lyapunov(a, q)), 1e-9 * (1.0 + max_abs(x)));
        EXPECT_LE(max_abs(a * x + x * a.transpose() + q), 1e-9 * (1.0 + max_abs(q)));
    }
}

TEST(Linalg, LyapunovRejectsSingularOperator) {
    // λ_i + λ_j = 0 for λ = ±1.
    EXPECT_THROW(solve_lyapunov(mat({{1, 0}, {0, -1}}), Matrix::Identity(2, 2)), StructureError);
}

TEST(Linalg, PermutationAndRank) {
    EXPECT_TRUE(is_permutation_matrix(mat({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}})));
    EXPECT_FALSE(is_permutation_matrix(mat({{1, 1}, {0, 1}})));
    EXPECT_FALSE(is_permutation_matrix(mat({{0.5, 0.5}, {0.5, 0.5}})));
    EXPECT_EQ(numerical_rank(mat({{1, 0}, {1, 0}})), 1);
    EXPECT_EQ(numerical_rank(Matrix::Identity(3, 3)), 3);
    EXPECT_DOUBLE_EQ(spectral_abscissa(mat({{-1, 5}, {0, -3}})), -1.0);
}

// ============================================================================
// qlss_model

TEST(Realizability, ExampleResiduals) {
    const QuantumPlant p = example::plant();
    const RealizabilityReport r = check_physical_realizability(p, CommutationStructure::for_plant(p));
    EXPECT_LE(r.condition_i.max_abs_residual, 1e-12);
    EXPECT_TRUE(r.condition_i.passed);
    EXPECT_TRUE(r.condition_iii.passed);
    // Frozen from a numpy evaluation of B Θ_w [D 0]ᵀ + Θ Cᵀ.
    EXPECT_EQ(r.condition_ii.residual, mat({{1, -2}, {4, -2}}));
    EXPECT_FALSE(r.condition_ii.passed);
    EXPECT_FALSE(r.all_passed());
    EXPECT_TRUE(r.passed(true));
}

TEST(Realizability, RandomPlantsKeepAntisymmetryAndMatchLoopOracle) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 1000; ++t) {
        const QuantumPlant p = oracle::random_plant(rng);
        const auto comm = CommutationStructure::for_plant(p);
        const RealizabilityReport r = check_physical_realizability(p, comm);
        const Matrix& r1 = r.condition_i.residual;
        const Matrix& r3 = r.condition_iii.residual;
        ASSERT_LE(max_abs(r1 + r1.transpose()), 1e-12 * (1.0 + max_abs(r1)));
        ASSERT_LE(max_abs(r3 + r3.transpose()), 1e-12 * (1.0 + max_abs(r3)));

        const Matrix b = hstack(p.B_w, p.B_u);
        Matrix dpad = Matrix::Zero(p.n_y(), b.cols());
        dpad.leftCols(p.n_w()) = p.D;
        const Matrix th = oracle::theta(p.n());
        const Matrix thw = oracle::theta(b.cols());
        const Matrix o1 = oracle::mul(p.A, th) + oracle::mul(th, p.A.transpose()) +
                          oracle::mul(oracle::mul(b, thw), b.transpose());
        const Matrix o2 = oracle::mul(oracle::mul(b, thw), dpad.transpose()) + oracle::mul(th, p.C.transpose());
        ASSERT_LE(max_abs(o1 - r1), 1e-12 * (1.0 + max_abs(o1)));
        ASSERT_LE(max_abs(o2 - r.condition_ii.residual), 1e-12 * (1.0 + max_abs(o2)));
    }
}

TEST(Realizability, PassiveCavityPasses) {
    QuantumPlant p;
    p.A = -0.5 * Matrix::Identity(2, 2);
    p.B_w = Matrix::Identity(2, 2);
    p.B_u = Matrix::Zero(2, 2);
    p.B_f = Matrix::Zero(2, 1);
    p.C = -Matrix::Identity(2, 2);
    p.D = Matrix::Identity(2, 2);
    const RealizabilityReport r = check_physical_realizability(p, CommutationStructure::for_plant(p));
    EXPECT_TRUE(r.all_passed()) << r.condition_i.residual << "\n" << r.condition_ii.residual;
}

TEST(Model, RejectsOddDimensions) {
    QuantumPlant p = example::plant();
    p.A = Matrix::Zero(3, 3);
    p.B_w = Matrix::Zero(3, 2);
    p.B_u = Matrix::Zero(3, 2);
    p.B_f = Matrix::Zero(3, 1);
    p.C = Matrix::Zero(2, 3);
    EXPECT_THROW(p.validate(), DimensionError);
    QuantumPlant q = example::plant();
    q.C = Matrix::Zero(2, 3);
    EXPECT_THROW(q.validate(), DimensionError);
}

TEST(Measurement, DefaultGPassesIdentityFails) {
    const Matrix th = commutation_matrix(2);
    const MeasurementReport ok = check_measurement_matrix(example::default_G(), th);
    EXPECT_TRUE(ok.passed());
    EXPECT_EQ(ok.rank, 1);
    const MeasurementReport bad = check_measurement_matrix(Matrix::Identity(2, 2), th);
    EXPECT_FALSE(bad.annihilates);
    EXPECT_FALSE(bad.rank_ok);
    EXPECT_THROW(check_measurement_matrix(Matrix::Identity(3, 3), th), DimensionError);
}

TEST(Transform, RoundTripAndRejections) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 200; ++t) {
        const QuantumPlant p = oracle::random_plant(rng, 4);
        const auto comm = CommutationStructure::for_plant(p);
        const auto choices = enumerate_transformations(comm);
        ASSERT_FALSE(choices.empty());
        const auto& c = choices[static_cast<size_t>(oracle::uniform_int(rng, 0, static_cast<int>(choices.size()) - 1))];
        const TransformedPlant tp = apply_transformation(p, comm, c.T, c.n_o);
        const QuantumPlant back = recover_plant(tp);
        ASSERT_EQ(back.A, p.A);
        ASSERT_EQ(back.B_w, p.B_w);
        ASSERT_EQ(back.C, p.C);
        const Matrix th = c.T * comm.theta * c.T.transpose();
        ASSERT_EQ(max_abs(th.bottomRightCorner(c.n_o, c.n_o)), 0.0);
    }
    const QuantumPlant p = example::plant();
    const auto comm = CommutationStructure::for_plant(p);
    EXPECT_THROW(apply_transformation(p, comm, mat({{1, 1}, {0, 1}}), 1), StructureError);
    EXPECT_THROW(apply_transformation(p, comm, Matrix::Identity(2, 2), 2), StructureError);
    EXPECT_THROW(apply_transformation(p, comm, Matrix::Identity(2, 2), 0), StructureError);

    // n = 4, observing both quadratures of mode 0 does not commute.
    QuantumPlant q;
    q.A = Matrix::Zero(4, 4);
    q.B_w = Matrix::Zero(4, 2);
    q.B_u = Matrix::Zero(4, 2);
    q.B_f = Matrix::Zero(4, 1);
    q.C = Matrix::Zero(2, 4);
    q.D = Matrix::Zero(2, 2);
    const auto cq = CommutationStructure::for_plant(q);
    EXPECT_THROW(apply_transformation(q, cq, permutation_from_order({2, 3, 0, 1}), 2), StructureError);
    EXPECT_NO_THROW(apply_transformation(q, cq, permutation_from_order({1, 3, 0, 2}), 2));
    // 4 singletons and 4 commuting pairs.
    EXPECT_EQ(enumerate_transformations(cq).size(), 8u);
}

// ============================================================================
// estimator_synthesis

TEST(ClosedLoop, ExampleMatchesFrozenOracleValues) {
    const TransformedPlant tp = example::transformed();
    const ClosedLoop cl = assemble_closed_loop(tp, example::default_G(), example::reported_gains());
    // Frozen from the substitution construction evaluated in numpy.
    const Matrix a = mat({{-1, 0, 0, 2.6428999999999996},
                          {3, -0.7, -0.3, 2.600099999999999},
                          {-6.120000000000001, 0, 2.04, 1},
                          {-62.970000000000006, 0, 20.990000000000002, 0}});
    EXPECT_LE(max_abs(cl.A - a), 1e-12);
    EXPECT_LE(max_abs(cl.B_f - mat({{-2.6428999999999996}, {-1.600099999999999}, {0}, {0}})), 1e-12);
    EXPECT_EQ(cl.B_h, mat({{0}, {0}, {0}, {1}}));
    const Matrix bw = mat({{0, 0, 2, 1}, {2, -1, 4, 3}, {5.04, -1, 4, 3}, {20.990000000000002, 0, 0, 0}});
    EXPECT_LE(max_abs(cl.B_w - bw), 1e-12);
    EXPECT_NEAR(spectral_abscissa(cl.A + 2.0 * Matrix::Identity(4, 4)), 2.4467428694653304, 1e-10);
}

TEST(ClosedLoop, SubstitutionOracleOnRandomInstances) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 50; ++t) {
        const QuantumPlant p = oracle::random_plant(rng, 3);
        const auto comm = CommutationStructure::for_plant(p);
        const auto choices = enumerate_transformations(comm);
        const auto& c = choices[static_cast<size_t>(oracle::uniform_int(rng, 0, static_cast<int>(choices.size()) - 1))];
        const TransformedPlant tp = apply_transformation(p, comm, c.T, c.n_o);
        const Eigen::Index nym = oracle::uniform_int(rng, 1, static_cast<int>(p.n_y()));
        const Matrix g = oracle::randn(rng, nym, p.n_y());
        Gains k;
        k.n_o = tp.n_o;
        k.L = oracle::randn(rng, tp.n_hat(), nym);
        k.K = oracle::randn(rng, p.n_u(), tp.n_hat());
        const ClosedLoop cl = assemble_closed_loop(tp, g, k);
        const auto o = oracle::substitution_closed_loop(tp, g, k);
        const double scale = 1.0 + max_abs(o.A);
        ASSERT_LE(max_abs(cl.A - o.A), 1e-12 * scale);
        ASSERT_LE(max_abs(cl.B_w - o.B_w), 1e-12 * scale);
        ASSERT_LE(max_abs(cl.B_f - o.B_f), 1e-12 * scale);
        ASSERT_LE(max_abs(cl.B_h - o.B_h), 1e-12 * scale);
    }
}

TEST(ClosedLoop, GainShapeErrors) {
    const TransformedPlant tp = example::transformed();
    Gains k = example::reported_gains();
    k.L = Matrix::Zero(3, 2);
    EXPECT_THROW(assemble_closed_loop(tp, example::default_G(), k), DimensionError);
    k = example::reported_gains();
    k.n_o = 2;
    EXPECT_THROW(assemble_closed_loop(tp, example::default_G(), k), DimensionError);
}

TEST(ClosedLoop, AugmentedAndReducedBlocks) {
    const TransformedPlant tp = example::transformed();
    const AugmentedSystem aug = build_augmented(tp);
    EXPECT_EQ(aug.A, mat({{-1, 0, 0}, {3, -1, 1}, {0, 0, 0}}));
    EXPECT_EQ(aug.B_h, mat({{0}, {0}, {1}}));
    const ReducedSystem rs = build_reduced(tp);
    EXPECT_EQ(rs.A, mat({{-1, 1}, {0, 0}}));
    EXPECT_EQ(rs.A_uo, mat({{3}, {0}}));
    EXPECT_EQ(rs.C, mat({{1, 0}, {-2, 0}}));
}

// ============================================================================
// certification

TEST(Certification, SchurAndBlockVerdictsAgree) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
        const Matrix q = oracle::randn(rng, cl.dim(), cl.dim());
        const Matrix p = q * q.transpose() + 0.1 * Matrix::Identity(cl.dim(), cl.dim());
        const Theorem2Result r = check_theorem2_lmi(cl, p, {0.5, 0.5});
        ASSERT_TRUE(r.verdicts_agree) << r.block_lambda_max << " " << r.schur_lambda_max;
    }
}

TEST(Certification, TheoremOneRejectsBadS) {
    std::mt19937_64 rng(4);
    const ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    EXPECT_THROW(check_theorem1(cl, oracle::randn(rng, 4, 4)), StructureError);
    EXPECT_THROW(check_theorem1(cl, -Matrix::Identity(4, 4)), StructureError);
    EXPECT_THROW(check_theorem1(cl, Matrix::Identity(3, 3)), DimensionError);
}

TEST(Certification, CertificateFromLyapunovP) {
    std::mt19937_64 rng(8);
    const ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    const FaultBounds b{0.3, 0.2};
    const Matrix bb = stacked_input(cl, b);
    const Matrix shifted = cl.A + 2.0 * Matrix::Identity(4, 4);
    Matrix p = oracle::lyapunov(shifted, bb * bb.transpose() + 1e-3 * Matrix::Identity(4, 4));
    // Scaling P up keeps the LMI and eventually satisfies the corollary.
    while (!check_corollary1(cl, p, b).passed) p *= 2.0;
    ASSERT_TRUE(check_theorem2_lmi(cl, p, b).passed());
    ASSERT_TRUE(check_corollary1(cl, p, b).passed);
    const Certificate c = make_certificate(cl, p, b);
    EXPECT_GT(c.c, 0.0);
    EXPECT_NEAR(c.tau, 0.09 + 0.04 + (cl.B_w.transpose() * c.S * cl.B_w).trace(), 1e-12);
    EXPECT_DOUBLE_EQ(c.gamma, p.bottomRightCorner(2, 2).trace());
    EXPECT_GE(c.c_lambda_min_s(), c.c);
    EXPECT_TRUE(implication_audit(cl, p, b).holds);
}

// Decay rate −λ_max(Δ)/λ_max(S) holds; −λ_max(Δ)/λ_min(S) does not.
TEST(Certification, DecayRateUsesLargestEigenvalueOfS) {
    ClosedLoop cl;
    cl.n = 1;
    cl.n_o = 0;
    cl.n_f = 1;
    cl.A = mat({{-1, 0}, {0, -0.01}});
    cl.B_w = Matrix::Zero(2, 1);
    cl.B_f = Matrix::Zero(2, 1);
    cl.B_h = Matrix::Zero(2, 1);
    const Matrix s = mat({{1, 0}, {0, 100}});
    const Matrix p = s.inverse();
    const Certificate cert = make_certificate(cl, p, {0.0, 0.0});
    EXPECT_DOUBLE_EQ(cert.lambda_max_delta, -2.0);
    EXPECT_DOUBLE_EQ(cert.c, 0.02);
    EXPECT_DOUBLE_EQ(cert.c_lambda_min_s(), 2.0);

    MomentOptions mo;
    mo.horizon = 5.0;
    mo.dt = 1e-2;
    const Vector z0 = (Vector(2) << 0.0, 1.0).finished();
    const MomentTrajectory tr = simulate_moments(cl, FaultSignal::zero(1, 5.0), mo, z0, Matrix::Zero(2, 2));
    EXPECT_TRUE(check_envelope(tr, cert).passed);
    Certificate fast = cert;
    fast.c = cert.c_lambda_min_s();
    EXPECT_FALSE(check_envelope(tr, fast).passed);
}

TEST(Certification, MakeCertificateRejectsNonDecay) {
    ClosedLoop cl;
    cl.n = 1;
    cl.n_o = 0;
    cl.n_f = 1;
    cl.A = Matrix::Identity(2, 2);
    cl.B_w = Matrix::Zero(2, 1);
    cl.B_f = Matrix::Zero(2, 1);
    cl.B_h = Matrix::Zero(2, 1);
    EXPECT_THROW(make_certificate(cl, Matrix::Identity(2, 2), {0.1, 0.1}), StructureError);
    EXPECT_THROW(decay_envelope(0.0, 1.0, 1.0), StructureError);
    EXPECT_THROW(decay_envelope(1.0, -1.0, 1.0), StructureError);
}

// ============================================================================
// simulation

TEST(Fault, ExampleBoundsAndJump) {
    const FaultSignal f = example::fault();
    const FaultBoundsReport r = fault_bounds(f);
    EXPECT_DOUBLE_EQ(r.bounds.alpha, 0.9);
    EXPECT_DOUBLE_EQ(r.bounds.beta, 0.4);
    ASSERT_EQ(r.jumps.size(), 1u);
    EXPECT_DOUBLE_EQ(r.jumps[0].t, 10.0);
    EXPECT_NEAR(r.jumps[0].size(), 0.7097678822691131, 1e-15);
    EXPECT_DOUBLE_EQ(f.value(0.0)(0), 0.25);
    EXPECT_DOUBLE_EQ(f.value(10.0)(0), 0.5);
}

TEST(Fault, FlagsAndErrors) {
    EXPECT_TRUE(fault_bounds(FaultSignal::zero(1, 3.0)).alpha_zero);
    FaultSignal c = FaultSignal::zero(2, 1.0);
    c.pieces[0].b << 3.0, 4.0;
    const auto rc = fault_bounds(c);
    EXPECT_DOUBLE_EQ(rc.bounds.alpha, 5.0);
    EXPECT_TRUE(rc.beta_zero);

    FaultSignal gap = example::fault();
    gap.pieces[1].t0 = 11.0;
    EXPECT_THROW(fault_bounds(gap), std::invalid_argument);
    FaultSignal inf = example::fault();
    inf.pieces[1].t1 = std::numeric_limits<double>::infinity();
    EXPECT_THROW(fault_bounds(inf), std::invalid_argument);
    FaultSignal nan = example::fault();
    nan.pieces[0].a(0) = std::nan("");
    EXPECT_THROW(fault_bounds(nan), std::invalid_argument);
}

TEST(Fault, AnalyticBoundsDominateDenseSampling) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        FaultSignal f;
        FaultPiece p;
        p.t0 = 0.0;
        p.t1 = std::abs(u(rng)) * 3 + 0.01;
        p.kind = t % 2 ? PieceKind::Sine : PieceKind::Cosine;
        p.a = oracle::randn(rng, 2, 1);
        p.b = oracle::randn(rng, 2, 1);
        p.omega = u(rng);
        f.pieces = {p};
        const FaultBounds b = fault_bounds(f).bounds;
        double amax = 0.0;
        double bmax = 0.0;
        for (int k = 0; k <= 4000; ++k) {
            const double tt = p.t1 * k / 4000.0;
            amax = std::max(amax, p.value(tt).norm());
            bmax = std::max(bmax, p.rate(tt).norm());
        }
        ASSERT_GE(b.alpha, amax - 1e-12);
        ASSERT_LE(b.alpha, amax + 1e-5 * (1.0 + amax));
        ASSERT_GE(b.beta, bmax - 1e-12);
        ASSERT_LE(b.beta, bmax + 1e-5 * (1.0 + bmax));
    }
}

TEST(Moments, DeterministicSystemMatchesMatrixExponential) {
    std::mt19937_64 rng(12);
    ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    cl.B_w.setZero();
    const Vector z0 = oracle::randn(rng, 4, 1);
    MomentOptions mo;
    mo.horizon = 2.0;
    mo.dt = 1e-3;
    const MomentTrajectory tr = simulate_moments(cl, FaultSignal::zero(1, 2.0), mo, z0, Matrix::Zero(4, 4));
    const Vector expect = (cl.A * 2.0).exp() * z0;
    EXPECT_LE((tr.mean.back() - expect).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + expect.norm()));
    EXPECT_EQ(max_abs(tr.cov.back()), 0.0);
}

TEST(Moments, CovarianceStaysSymmetricPsdAndJumpShiftsMean) {
    const TransformedPlant tp = example::transformed();
    const ClosedLoop cl = assemble_closed_loop(tp, example::default_G(), example::reported_gains());
    MomentOptions mo;
    mo.dt = 1e-3;
    const MomentTrajectory tr = simulate_moments(cl, example::fault(), mo, Vector::Zero(4), Matrix::Zero(4, 4));
    ASSERT_EQ(tr.size(), 20001u);
    for (size_t k = 0; k < tr.size(); k += 100) {
        const Matrix& q = tr.cov[k];
        ASSERT_LE(max_abs(q - q.transpose()), 1e-12 * (1.0 + max_abs(q)));
        const Vector ev = sym_eigenvalues(q);
        ASSERT_GE(ev.minCoeff(), -1e-8 * std::max(ev.maxCoeff(), 0.0));
    }
    ASSERT_EQ(tr.jumps.size(), 1u);
    EXPECT_EQ(tr.jumps[0].sample, 10000u);
    const Vector d = tr.jumps[0].mean_after - tr.jumps[0].mean_before;
    EXPECT_NEAR(d(3), 0.7097678822691131, 1e-15);
    EXPECT_EQ(d.head(3), Vector::Zero(3));
}

TEST(Moments, LemmaInequalitiesAtSampledPoints) {
    const TransformedPlant tp = example::transformed();
    const ClosedLoop cl = assemble_closed_loop(tp, example::default_G(), example::reported_gains());
    const FaultSignal f = example::fault();
    MomentOptions mo;
    mo.dt = 1e-2;
    const MomentTrajectory tr = simulate_moments(cl, f, mo, Vector::Zero(4), Matrix::Zero(4, 4));
    const double alpha = fault_bounds(f).bounds.alpha;
    for (size_t k = 0; k < tr.size(); k += 37) {
        const Vector& z = tr.mean[k];
        const Vector fv = f.value(tr.t[k]);
        const Vector bf = cl.B_f * fv;
        const Matrix lhs = bf * z.transpose() + z * bf.transpose();
        const Matrix rhs = z * z.transpose() + bf * bf.transpose();
        ASSERT_GE(min_eigenvalue(rhs - lhs), -1e-9 * (1.0 + max_abs(rhs)));
        ASSERT_GE(min_eigenvalue(alpha * alpha * Matrix::Identity(1, 1) - fv * fv.transpose()), -1e-15);
    }
}

TEST(Moments, StationaryCovarianceMatchesLyapunov) {
    std::mt19937_64 rng(13);
    const ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    MomentOptions mo;
    mo.horizon = 20.0;
    mo.dt = 1e-2;
    const MomentTrajectory tr = simulate_moments(cl, FaultSignal::zero(1, 20.0), mo, Vector::Zero(4), Matrix::Zero(4, 4));
    const Matrix qinf = oracle::lyapunov(cl.A, cl.B_w * cl.B_w.transpose());
    EXPECT_LE(max_abs(tr.cov.back() - qinf), 1e-6 * max_abs(qinf));
}

TEST(Moments, RejectsBadInputs) {
    std::mt19937_64 rng(14);
    const ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    MomentOptions mo;
    mo.horizon = 1.0;
    EXPECT_THROW(simulate_moments(cl, FaultSignal::zero(1, 1.0), mo, Vector::Zero(3), Matrix::Zero(4, 4)),
                 DimensionError);
    EXPECT_THROW(simulate_moments(cl, FaultSignal::zero(1, 1.0), mo, Vector::Zero(4), -Matrix::Identity(4, 4)),
                 StructureError);
    EXPECT_THROW(simulate_moments(cl, FaultSignal::zero(2, 1.0), mo, Vector::Zero(4), Matrix::Zero(4, 4)),
                 DimensionError);
    mo.dt = 0.0;
    EXPECT_THROW(simulate_moments(cl, FaultSignal::zero(1, 1.0), mo, Vector::Zero(4), Matrix::Zero(4, 4)),
                 std::invalid_argument);
    ClosedLoop blow = cl;
    blow.A = 400.0 * Matrix::Identity(4, 4);
    mo.dt = 0.1;
    mo.horizon = 40.0;
    EXPECT_THROW(simulate_moments(blow, FaultSignal::zero(1, 40.0), mo, Vector::Ones(4), Matrix::Zero(4, 4)),
                 SimulationError);
}

TEST(MonteCarlo, OrnsteinUhlenbeckVarianceIsOneHalf) {
    ClosedLoop cl;
    cl.n = 1;
    cl.n_o = 0;
    cl.n_f = 1;
    cl.A = -Matrix::Identity(2, 2);
    cl.B_w = Matrix::Identity(2, 2);
    cl.B_f = Matrix::Zero(2, 1);
    cl.B_h = Matrix::Zero(2, 1);
    MonteCarloOptions mc;
    mc.horizon = 6.0;
    mc.dt = 2e-3;
    mc.trials = 4000;
    mc.checkpoints = {6.0};
    const MonteCarloResult r = monte_carlo_oracle(cl, FaultSignal::zero(1, 6.0), mc, Vector::Zero(2));
    const auto& s = r.snapshots[0];
    for (int i = 0; i < 2; ++i) {
        EXPECT_LE(std::abs(s.mean(i)), 3.0 * s.mean_se(i));
        EXPECT_LE(std::abs(s.cov(i, i) - 0.5), 3.0 * s.cov_se(i, i));
    }
    EXPECT_THROW(monte_carlo_oracle(cl, FaultSignal::zero(1, 6.0), {6.0, 2e-3, 10}, Vector::Zero(2)),
                 std::invalid_argument);
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResult) {
    std::mt19937_64 rng(15);
    const ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    MonteCarloOptions mc;
    mc.horizon = 1.0;
    mc.dt = 1e-2;
    mc.trials = 300;
    mc.checkpoints = {0.5, 1.0};
    mc.threads = 1;
    const auto a = monte_carlo_oracle(cl, example::fault(), mc, Vector::Zero(4));
    mc.threads = 3;
    const auto b = monte_carlo_oracle(cl, example::fault(), mc, Vector::Zero(4));
    for (size_t i = 0; i < a.snapshots.size(); ++i) {
        EXPECT_EQ(a.snapshots[i].mean, b.snapshots[i].mean);
        EXPECT_EQ(a.snapshots[i].cov, b.snapshots[i].cov);
    }
}

TEST(Envelope, ZeroStartStaysBelowTauOverC) {
    std::mt19937_64 rng(16);
    const ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    const FaultSignal f = example::fault();
    const FaultBounds b = fault_bounds(f).bounds;
    const Matrix bb = stacked_input(cl, b);
    const Matrix p = 2.0 * oracle::lyapunov(cl.A + 2.0 * Matrix::Identity(4, 4), bb * bb.transpose() + 1e-3 * Matrix::Identity(4, 4));
    ASSERT_TRUE(check_theorem1(cl, inverse_spd(p)).passed);
    const Certificate cert = make_certificate(cl, p, b);
    MomentOptions mo;
    mo.dt = 1e-2;
    const MomentTrajectory tr = simulate_moments(cl, f, mo, Vector::Zero(4), Matrix::Zero(4, 4));
    const EnvelopeReport r = check_envelope(tr, cert);
    EXPECT_TRUE(r.passed);
    EXPECT_EQ(r.restarts.size(), 1u);
    for (const auto& s : r.samples) ASSERT_LE(s.g, cert.tau / cert.c * (1 + 1e-6));
}

TEST(Envelope, PureDecayIsMonotone) {
    std::mt19937_64 rng(17);
    ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    cl.B_w.setZero();
    const Matrix q = cl.B_f * cl.B_f.transpose() + cl.B_h * cl.B_h.transpose() + 1e-3 * Matrix::Identity(4, 4);
    const Matrix p = oracle::lyapunov(cl.A + 2.0 * Matrix::Identity(4, 4), q);
    const Certificate cert = make_certificate(cl, p, {0.0, 0.0});
    MomentOptions mo;
    mo.horizon = 5.0;
    mo.dt = 1e-2;
    const MomentTrajectory tr = simulate_moments(cl, FaultSignal::zero(1, 5.0), mo, Vector::Ones(4), Matrix::Zero(4, 4));
    const EnvelopeReport r = check_envelope(tr, cert);
    EXPECT_TRUE(r.passed);
    for (size_t k = 1; k < r.samples.size(); ++k) ASSERT_LE(r.samples[k].g, r.samples[k - 1].g * (1 + 1e-12));
}

TEST(Csv, HeaderAndRoundTrip) {
    std::mt19937_64 rng(18);
    const ClosedLoop cl = oracle::random_closed_loop(rng, 2, 1, 1, 4);
    MomentOptions mo;
    mo.horizon = 0.05;
    mo.dt = 1e-2;
    const MomentTrajectory tr = simulate_moments(cl, FaultSignal::zero(1, 0.05), mo, Vector::Ones(4), Matrix::Zero(4, 4));
    std::ostringstream os;
    write_trajectory_csv(os, tr, nullptr, 2);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header.rfind("t,z_0,z_1,z_2,z_3,q_0_0,q_0_1", 0), 0u);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), 4 + 10);
    std::string line;
    int rows = 0;
    std::string last;
    while (std::getline(is, line)) {
        ++rows;
        last = line;
    }
    EXPECT_EQ(rows, 4);  // samples 0, 2, 4 and the last one (5)
    const double z0 = std::stod(last.substr(last.find(',') + 1));
    EXPECT_EQ(z0, tr.mean.back()(0));
}

// ============================================================================
// io

TEST(Io, PlantRoundTripAndErrors) {
    io::PlantConfig pc;
    pc.plant = example::plant();
    pc.G = example::default_G();
    pc.bounds = example::bounds();
    const io::PlantConfig back = io::plant_from_json(io::plant_to_json(pc));
    EXPECT_EQ(back.plant.A, pc.plant.A);
    EXPECT_EQ(*back.G, *pc.G);
    EXPECT_DOUBLE_EQ(back.bounds->alpha, 0.9);

    EXPECT_THROW(io::parse_text("", "x"), io::InputError);
    EXPECT_THROW(io::parse_text("{", "x"), io::InputError);
    io::json j = io::plant_to_json(pc);
    j["A"] = io::json::array({io::json::array({1, 2}), io::json::array({1})});
    EXPECT_THROW(io::plant_from_json(j), io::InputError);
    j = io::plant_to_json(pc);
    j.erase("C");
    EXPECT_THROW(io::plant_from_json(j), io::InputError);
    j = io::plant_to_json(pc);
    j["n"] = 4;
    EXPECT_THROW(io::plant_from_json(j), io::InputError);
}

TEST(Io, FaultAndGainsRoundTrip) {
    const FaultSignal f = io::fault_from_json(io::fault_to_json(example::fault()));
    EXPECT_EQ(f.pieces.size(), 2u);
    EXPECT_DOUBLE_EQ(fault_bounds(f).bounds.alpha, 0.9);
    const Gains g = io::gains_from_json(io::gains_to_json(example::reported_gains()));
    EXPECT_EQ(g.L, example::reported_gains().L);
    EXPECT_EQ(g.n_o, 1);
    EXPECT_THROW(io::fault_from_json(io::json::parse(R"({"pieces":[{"t0":0,"t1":1,"kind":"tan","b":[0]}]})")),
                 io::InputError);
}
