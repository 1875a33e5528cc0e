#include "ecl/qi.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace ecl;
using namespace ecl::testing;

namespace {

const Mat one = Mat::Ones(1, 1);
Mat c1(double v) { return Mat::Constant(1, 1, v); }

qi::StackedSystem ones_chain(int N) { return qi::time_invariant(N, one, one, one, one, one, one, one, one); }

qi::StackedSystem random_system(Rng& r, int N, int n, int m, int p) {
    return qi::time_invariant(N, 0.7 * r.gauss(n, n), r.gauss(n, m), r.gauss(p, n), r.spd(n), r.spd(n, 0.2),
                              r.spd(p, 0.2), r.spd(p), r.spd(m));
}

// u1 sees y0; u2 sees y0 and y1 (one-step delay)
qi::SparsityPattern delayed(int N) {
    auto S = qi::SparsityPattern::empty(N, 1, 1);
    for (int t = 1; t < N; ++t)
        for (int i = 0; i < t; ++i)
            S.mask(t, i) = true;
    return S;
}

qi::SparsityPattern diagonal(int N) {
    auto S = qi::SparsityPattern::empty(N, 1, 1);
    for (int t = 0; t < N; ++t)
        S.mask(t, t) = true;
    return S;
}

double open_loop(const qi::StackedSystem& s) { return (s.Mb * s.Sxi()).trace(); }

} // namespace

TEST(StackedSystem, CausalStructure) {
    auto s = ones_chain(2);
    Mat P11(3, 3), P12(3, 2);
    P11 << 1, 0, 0, 1, 1, 0, 1, 1, 1;
    P12 << 0, 0, 1, 0, 1, 1;
    EXPECT_EQ(s.P11, P11);
    EXPECT_EQ(s.P12, P12);
    Rng r(81);
    auto t = random_system(r, 3, 2, 1, 2);
    for (int i = 0; i <= 3; ++i)
        for (int j = i; j < 3; ++j)
            EXPECT_TRUE(t.P12.block(2 * i, j, 2, 1).isZero(0.0)) << i << "," << j;
}

TEST(StackedSystem, Validation) {
    auto bad = qi::StackedSystem{};
    bad.N = 1;
    EXPECT_THROW(qi::build_stacked(bad), DimensionError);
    EXPECT_THROW(qi::time_invariant(1, one, one, one, one, one, one, one, c1(0.0)), PreconditionError);
    EXPECT_THROW(qi::time_invariant(1, one, one, one, one, c1(-1.0), one, one, one), PreconditionError);
}

TEST(QiCheck, Examples) {
    auto s = ones_chain(3);
    const Mat G = s.G();
    auto tri = qi::SparsityPattern::centralized(3, 1, 1);
    EXPECT_TRUE(qi::qi_check(tri, G));
    EXPECT_TRUE(qi::qi_check_subspace(qi::pattern_basis_matrices(tri), G));
    EXPECT_TRUE(qi::qi_check(delayed(3), G));
    // diagonal pattern: u1 = k y1 and u0 = k' y0 compose through G(1,0) into an entry (1,0) outside the mask
    EXPECT_FALSE(qi::qi_check(diagonal(3), G));
    EXPECT_FALSE(qi::qi_check_subspace(qi::pattern_basis_matrices(diagonal(3)), G));
    EXPECT_THROW(qi::qi_check(tri, Mat::Zero(3, 3)), DimensionError);
}

TEST(QiCheck, ZeroCouplingAlwaysPasses) {
    Rng r(82);
    for (int i = 0; i < 20; ++i) {
        auto S = qi::SparsityPattern::empty(3, 1, 2);
        for (int t = 0; t < 3; ++t)
            for (int c = 0; c < 2 * (t + 1); ++c)
                S.mask(t, c) = r.uniform(0, 1) < 0.5;
        const Mat G = Mat::Zero(8, 3);
        EXPECT_TRUE(qi::qi_check(S, G));
        EXPECT_TRUE(qi::qi_check_subspace(qi::pattern_basis_matrices(S), G));
    }
}

TEST(QiCheck, BinaryTestAgreesWithPolarization) {
    // every causal pattern on the N=3 scalar chain
    auto s = ones_chain(3);
    const Mat G = s.G();
    std::vector<std::pair<int, int>> slots;
    for (int t = 0; t < 3; ++t)
        for (int i = 0; i <= t; ++i)
            slots.emplace_back(t, i);
    int qi_count = 0;
    for (int bits = 0; bits < (1 << slots.size()); ++bits) {
        auto S = qi::SparsityPattern::empty(3, 1, 1);
        for (size_t k = 0; k < slots.size(); ++k)
            if (bits >> k & 1)
                S.mask(slots[k].first, slots[k].second) = true;
        const bool a = qi::qi_check(S, G), b = qi::qi_check_subspace(qi::pattern_basis_matrices(S), G);
        EXPECT_EQ(a, b) << bits;
        qi_count += a;
    }
    EXPECT_GT(qi_count, 1);
    EXPECT_LT(qi_count, 1 << slots.size());
}

TEST(QiCheck, CausalityIsEnforced) {
    auto S = qi::SparsityPattern::empty(2, 1, 1);
    S.mask(0, 1) = true;
    EXPECT_THROW(S.validate_causal(), PreconditionError);
    Eigen::Matrix<bool, -1, -1> b(1, 1);
    b(0, 0) = true;
    EXPECT_THROW(qi::SparsityPattern::from_blocks(2, 1, 1, {{0, 1, b}}), PreconditionError);
    EXPECT_NO_THROW(qi::SparsityPattern::from_blocks(2, 1, 1, {{1, 0, b}}));
}

TEST(HMap, ZeroAndHandValue) {
    auto s = ones_chain(2);
    const Mat G = s.G();
    EXPECT_TRUE(qi::h_map(Mat::Zero(2, 3), G).isZero(0.0));
    EXPECT_TRUE(qi::h_inv(Mat::Zero(2, 3), G).isZero(0.0));
    // Q = [[a,0,0],[b,c,0]] gives QG = [[0,0],[c,0]] and K = [[a,0,0],[b−ca,c,0]]
    const double a = 0.7, b = -1.3, c = 2.1;
    Mat Q(2, 3), K(2, 3);
    Q << a, 0, 0, b, c, 0;
    K << a, 0, 0, b - c * a, c, 0;
    EXPECT_LE((qi::h_map(Q, G) - K).norm(), 1e-15);
    EXPECT_LE((qi::h_inv(K, G) - Q).norm(), 1e-15);
}

TEST(HMap, RoundTripAndPatternTransfer) {
    Rng r(83);
    auto s = random_system(r, 3, 2, 1, 1);
    const Mat G = s.G();
    auto tri = qi::SparsityPattern::centralized(3, 1, 1);
    auto del = delayed(3);
    ASSERT_TRUE(qi::qi_check(del, G));
    for (int i = 0; i < 200; ++i) {
        Mat Q = tri.project(r.gauss(3, 4));
        EXPECT_LE(rel_err(qi::h_inv(qi::h_map(Q, G), G), Q), 1e-10);
        Mat Qd = del.project(r.gauss(3, 4));
        EXPECT_TRUE(del.contains(qi::h_map(Qd, G), 1e-14));
        EXPECT_TRUE(del.contains(qi::h_inv(Qd, G), 1e-14));
    }
}

TEST(Cost, OpenLoopAndHandValues) {
    auto s1 = ones_chain(1);
    EXPECT_NEAR(qi::cost_k(s1, Mat::Zero(1, 2)), 5.0, 1e-14);
    // u0 = k y0: J(k) = 5 + 2k + 4k²
    for (double k : {-1.0, -0.25, 0.5}) {
        Mat K(1, 2);
        K << k, 0;
        EXPECT_NEAR(qi::cost_k(s1, K), 5 + 2 * k + 4 * k * k, 1e-13);
    }
    auto s2 = ones_chain(2);
    EXPECT_NEAR(qi::cost_k(s2, Mat::Zero(2, 3)), 9.0, 1e-14);
    EXPECT_NEAR(qi::cost_q(s2, Mat::Zero(2, 3)), open_loop(s2), 1e-14);
}

TEST(Cost, PolicyAndYoulaFormsAgree) {
    Rng r(84);
    for (int i = 0; i < 20; ++i) {
        const int N = 2 + i % 3, m = 1 + i % 2, p = 1 + (i / 2) % 2;
        auto s = random_system(r, N, 1 + i % 3, m, p);
        auto S = qi::SparsityPattern::centralized(N, m, p);
        Mat K = S.project(r.gauss(m * N, p * (N + 1)));
        const double a = qi::cost_k(s, K), b = qi::cost_q(s, qi::h_inv(K, s.G()));
        EXPECT_NEAR(a, b, 1e-10 * a);
    }
}

TEST(Cost, PatternViolationThrows) {
    auto s = ones_chain(2);
    Mat K = Mat::Zero(2, 3);
    K(0, 0) = 1;
    EXPECT_THROW(qi::cost_k(s, K, delayed(2)), PreconditionError);
    EXPECT_NO_THROW(qi::cost_k(s, K, diagonal(2)));
    EXPECT_THROW(qi::cost_k(s, Mat::Zero(3, 3)), DimensionError);
}

TEST(Cost, YoulaFormIsConvex) {
    Rng r(85);
    auto s = random_system(r, 3, 2, 1, 2);
    auto S = qi::SparsityPattern::centralized(3, 1, 2);
    for (int i = 0; i < 100; ++i) {
        Mat Q1 = S.project(r.gauss(3, 8)), Q2 = S.project(r.gauss(3, 8));
        const double mid = qi::cost_q(s, 0.5 * (Q1 + Q2));
        EXPECT_LE(mid, 0.5 * (qi::cost_q(s, Q1) + qi::cost_q(s, Q2)) + 1e-10);
    }
}

TEST(Cost, GradientsMatchFiniteDifferences) {
    Rng r(86);
    auto s = random_system(r, 2, 2, 1, 1);
    auto S = qi::SparsityPattern::centralized(2, 1, 1);
    Mat Q = S.project(r.gauss(2, 3, 0.3));
    Mat K = qi::h_map(Q, s.G());
    Mat fq = central_diff([&](const Mat& X) { return qi::cost_q(s, X); }, Q);
    Mat fk = central_diff([&](const Mat& X) { return qi::cost_k(s, X); }, K);
    EXPECT_LE((qi::cost_q_grad(s, Q) - fq).norm(), 1e-6 * fq.norm());
    EXPECT_LE((qi::cost_k_grad(s, K) - fk).norm(), 1e-6 * fk.norm());
}

TEST(SolveDistributed, ScalarHandOptimum) {
    auto s = ones_chain(1);
    auto sol = qi::solve_distributed(s, qi::SparsityPattern::centralized(1, 1, 1));
    EXPECT_NEAR(sol.J, 19.0 / 4.0, 1e-12);
    EXPECT_NEAR(sol.K(0, 0), -0.25, 1e-12);
    EXPECT_NEAR(qi::dp_lqg_cost(s), 19.0 / 4.0, 1e-12);
}

TEST(SolveDistributed, CentralizedMatchesDynamicProgramming) {
    Rng r(87);
    for (int i = 0; i < 10; ++i) {
        const int m = 1 + i % 2, p = 1 + (i / 2) % 2, N = 2 + i % 3;
        auto s = random_system(r, N, 1 + i % 3, m, p);
        auto sol = qi::solve_distributed(s, qi::SparsityPattern::centralized(N, m, p));
        const double dp = qi::dp_lqg_cost(s);
        EXPECT_NEAR(sol.J, dp, 1e-6 * dp);
        EXPECT_NEAR(qi::cost_k(s, sol.K), sol.J, 1e-10 * sol.J);
    }
}

TEST(SolveDistributed, EmptyPatternGivesOpenLoop) {
    Rng r(88);
    auto s = random_system(r, 3, 2, 1, 2);
    auto sol = qi::solve_distributed(s, qi::SparsityPattern::empty(3, 1, 2));
    EXPECT_TRUE(sol.Q.isZero(0.0));
    EXPECT_TRUE(sol.K.isZero(0.0));
    EXPECT_NEAR(sol.J, open_loop(s), 1e-12 * sol.J);
}

TEST(SolveDistributed, TriangularPatternMatchesGrid) {
    auto s = qi::time_invariant(2, c1(0.9), c1(0.8), c1(1.1), one, c1(0.5), c1(0.3), one, c1(0.4));
    auto sol = qi::solve_distributed(s, qi::SparsityPattern::centralized(2, 1, 1));
    EXPECT_LE(sol.J, open_loop(s));
    auto [x, fx] = zoom_grid_min(
        [&](const Vec& z) {
            Mat K = Mat::Zero(2, 3);
            K(0, 0) = z(0);
            K(1, 0) = z(1);
            K(1, 1) = z(2);
            return qi::cost_k(s, K);
        },
        Vec::Constant(3, -4.0), Vec::Constant(3, 4.0));
    EXPECT_NEAR(sol.J, fx, 1e-6 * std::max(1.0, fx));
    EXPECT_NEAR(sol.K(0, 0), x(0), 1e-4);
    EXPECT_NEAR(sol.K(1, 0), x(1), 1e-4);
    EXPECT_NEAR(sol.K(1, 1), x(2), 1e-4);
}

TEST(SolveDistributed, StationaryAndGloballyOptimal) {
    Rng r(89);
    for (int i = 0; i < 5; ++i) {
        auto s = random_system(r, 3, 1 + i % 2, 1, 1);
        auto S = delayed(3);
        ASSERT_TRUE(qi::qi_check(S, s.G()));
        auto sol = qi::solve_distributed(s, S);
        EXPECT_TRUE(S.contains(sol.K, 1e-14));
        EXPECT_LE(S.project(qi::cost_k_grad(s, sol.K)).norm(), 1e-8 * std::max(1.0, sol.J));
        for (int k = 0; k < 100; ++k) {
            Mat d = S.project(r.gauss(3, 4));
            EXPECT_GE(qi::cost_q(s, sol.Q + 1e-3 * d), sol.J - 1e-9);
        }
    }
}

TEST(SolveDistributed, Preconditions) {
    auto s = ones_chain(3);
    EXPECT_THROW(qi::solve_distributed(s, diagonal(3)), PreconditionError);
    EXPECT_THROW(qi::solve_distributed(s, qi::SparsityPattern::centralized(2, 1, 1)), DimensionError);
}

TEST(SolveDistributed, RankDeficientNormalEquations) {
    // y0 carries no randomness, so the gain on it has no curvature
    auto s = qi::time_invariant(1, one, one, one, c1(0.0), one, c1(0.0), one, one);
    auto sol = qi::solve_distributed(s, qi::SparsityPattern::centralized(1, 1, 1));
    EXPECT_FALSE(sol.note.empty());
    EXPECT_EQ(sol.Q(0, 0), 0.0);
    EXPECT_NEAR(sol.J, open_loop(s), 1e-14);
}
