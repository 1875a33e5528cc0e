#include "ecl/linalg.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace ecl;
using ecl::testing::Rng;

namespace {

Mat m2(double a, double b, double c, double d) {
    Mat M(2, 2);
    M << a, b, c, d;
    return M;
}

std::vector<double> sorted_parts(const Mat& A) {
    auto v = eig_real_parts(A);
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

TEST(EigRealParts, Diagonal) {
    auto v = sorted_parts(m2(-2, 0, 0, 1));
    ASSERT_EQ(v.size(), 2u);
    EXPECT_NEAR(v[0], -2.0, 1e-14);
    EXPECT_NEAR(v[1], 1.0, 1e-14);
}

TEST(EigRealParts, Rotation) {
    for (double r : sorted_parts(m2(0, 1, -1, 0)))
        EXPECT_NEAR(r, 0.0, 1e-14);
}

TEST(EigRealParts, OutputFeedbackClosedLoop) {
    // λ² + 2λ − 7 = 0 → λ = −1 ± 2√2
    auto v = sorted_parts(m2(1, -2, -2, -3));
    EXPECT_NEAR(v[0], -1 - 2 * std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(v[1], -1 + 2 * std::sqrt(2.0), 1e-12);
    EXPECT_GT(v[1], 0.0);
}

TEST(EigRealParts, NonSquareThrows) { EXPECT_THROW(eig_real_parts(Mat::Zero(2, 3)), DimensionError); }

TEST(IsHurwitz, Examples) {
    EXPECT_TRUE(is_hurwitz(-Mat::Identity(2, 2), 0.0));
    EXPECT_FALSE(is_hurwitz(m2(0, 1, -1, 0), 0.0));
    EXPECT_FALSE(is_hurwitz(m2(-2, 0, 0, 1)));
    EXPECT_FALSE(is_hurwitz(-Mat::Identity(2, 2), 1.0));
    EXPECT_TRUE(is_hurwitz(-Mat::Identity(2, 2), 0.5));
    EXPECT_THROW(is_hurwitz(Mat::Zero(1, 2)), DimensionError);
}

TEST(Lyapunov, Scalar) {
    Mat X = solve_lyapunov_ct(Mat::Constant(1, 1, -1), Mat::Constant(1, 1, 1));
    EXPECT_NEAR(X(0, 0), 0.5, 1e-14);
}

TEST(Lyapunov, TwoStateClosedLoop) {
    // A + BK for A = diag(−2, 1), B = e₂, K = [1, −2]; W = 4I
    Mat X = solve_lyapunov_ct(m2(-2, 0, 1, -1), 4.0 * Mat::Identity(2, 2));
    Mat E = m2(3, 1, 1, 7) / 3.0;
    EXPECT_LE((X - E).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lyapunov, ZeroRightHandSide) {
    Mat X = solve_lyapunov_ct(m2(-1, 2, 0, -3), Mat::Zero(2, 2));
    EXPECT_LE(X.norm(), 1e-14);
}

TEST(Lyapunov, NotHurwitzThrows) {
    EXPECT_THROW(solve_lyapunov_ct(Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1)), NoUniqueSolution);
}

TEST(Lyapunov, RandomResidualSymmetryAndSign) {
    Rng r(11);
    for (int i = 0; i < 100; ++i) {
        const int n = 1 + i % 6;
        Mat A = r.hurwitz(n), Q = r.spd(n, 0.0);
        Mat X = solve_lyapunov_ct(A, Q);
        EXPECT_LE((A * X + X * A.transpose() + Q).norm(), 1e-10 * (1 + Q.norm()));
        EXPECT_LE((X - X.transpose()).norm(), 1e-14 * (1 + X.norm()));
        EXPECT_GE(min_eig(X), -1e-12 * (1 + X.norm()));
    }
}

TEST(GramianDuality, TraceFormulasAgree) {
    Rng r(12);
    for (int i = 0; i < 50; ++i) {
        const int n = 1 + i % 5;
        Mat A = r.hurwitz(n), B = r.gauss(n, 1 + i % 3), C = r.gauss(1 + i % 2, n);
        Mat Lc = solve_lyapunov_ct(A, B * B.transpose());
        Mat Lo = solve_lyapunov_ct(A.transpose(), C.transpose() * C);
        const double a = (B.transpose() * Lo * B).trace(), b = (C * Lc * C.transpose()).trace();
        EXPECT_NEAR(a, b, 1e-9 * std::abs(b));
    }
}

TEST(Riccati, Scalar) {
    const Mat one = Mat::Ones(1, 1);
    Mat P = solve_riccati_ct(one, one, one, one);
    EXPECT_NEAR(P(0, 0), 1 + std::sqrt(2.0), 1e-12);
}

TEST(Riccati, TwoStateExample) {
    Mat A = m2(-2, 0, 0, 1), B(2, 1), Q = Mat::Identity(2, 2), R = Mat::Ones(1, 1);
    B << 0, 1;
    Mat P = solve_riccati_ct(A, B, Q, R);
    // the first state is uncontrolled and stable: −4P₁₁ + 1 = 0
    Mat E = m2(0.25, 0, 0, 1 + std::sqrt(2.0));
    EXPECT_LE((P - E).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Riccati, ZeroWeightStableOpenLoop) {
    Mat P = solve_riccati_ct(m2(-1, 1, 0, -2), Mat::Identity(2, 2), Mat::Zero(2, 2), Mat::Identity(2, 2));
    EXPECT_LE(P.norm(), 1e-12);
}

TEST(Riccati, UnstabilizableFails) {
    Mat A = m2(1, 0, 0, -1), B(2, 1);
    B << 0, 1;
    EXPECT_THROW(solve_riccati_ct(A, B, Mat::Identity(2, 2), Mat::Ones(1, 1)), RiccatiFailure);
}

TEST(Riccati, RandomStabilizingAndSmallResidual) {
    Rng r(13);
    for (int i = 0; i < 100; ++i) {
        const int n = 1 + i % 6, m = 1 + i % 3;
        Mat A = r.gauss(n, n), B = r.gauss(n, m), Q = r.spd(n), R = r.spd(m);
        Mat P = solve_riccati_ct(A, B, Q, R);
        EXPECT_LE(riccati_residual(A, B, Q, R, P), 1e-9);
        EXPECT_TRUE(is_hurwitz(A - B * R.ldlt().solve(B.transpose() * P)));
        EXPECT_GE(min_eig(P), -1e-10);
    }
}

TEST(SchurPsdCheck, Classification) {
    EXPECT_EQ(schur_psd_check(Mat::Identity(2, 2)), Definiteness::PD);
    EXPECT_EQ(schur_psd_check(Mat::Ones(2, 2)), Definiteness::PSD);
    EXPECT_EQ(schur_psd_check(m2(1, 2, 2, 1)), Definiteness::INDEFINITE);
}

TEST(Helpers, SqrtmAndKron) {
    Rng r(14);
    Mat S = r.spd(4);
    Mat H = sqrtm_psd(S);
    EXPECT_LE((H * H - S).norm(), 1e-12 * S.norm());
    Mat K = kron(Mat::Identity(2, 2), m2(1, 2, 3, 4));
    EXPECT_EQ(K.rows(), 4);
    EXPECT_DOUBLE_EQ(K(3, 2), 3.0);
    EXPECT_DOUBLE_EQ(K(0, 2), 0.0);
}
