#pragma once

#include "ecl/conic.hpp"
#include "ecl/ecl_state.hpp"
#include "ecl/linalg.hpp"
#include "ecl/norms.hpp"
#include "ecl/plant.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ecl {

// ---------------------------------------------------------------------------
// Shared change of variables (𝖪, P) ↔ (Λ, X, Y, Ξ).

struct PBlocks {
    Mat P11, P12, Pinv, X, Pinv21;
};

inline double default_p12_margin(const Mat& P) { return 1e-6 * norm2(P); }

inline PBlocks split_lyapunov(const Mat& P, Eigen::Index n, const char* who) {
    if (P.rows() != 2 * n || P.cols() != 2 * n)
        throw DimensionError(std::string(who) + ": P must be 2n x 2n");
    if (!(min_eig(P) > 0))
        throw PreconditionError(std::string(who) + ": P must be positive definite");
    PBlocks b;
    b.P11 = P.topLeftCorner(n, n);
    b.P12 = P.topRightCorner(n, n);
    if (!(sigma_min(b.P12) > 1e-14 * std::max(1.0, norm2(P))))
        throw Degenerate(std::string(who) + ": P12 is singular");
    b.Pinv = sym(P.ldlt().solve(Mat::Identity(2 * n, 2 * n)));
    b.X = b.Pinv.topLeftCorner(n, n);
    b.Pinv21 = b.Pinv.bottomLeftCorner(n, n);
    return b;
}

inline Mat phi_m(const OutputPlant& OP, const DynamicPolicy& K, const Mat& P) {
    auto b = split_lyapunov(P, OP.n(), "phi_m");
    return b.P12 * K.BK * OP.C2 * b.X + b.P11 * OP.B2 * K.CK * b.Pinv21 +
           b.P11 * (OP.A + OP.B2 * K.DK * OP.C2) * b.X + b.P12 * K.AK * b.Pinv21;
}

// Λ = [[DK, DK C2 X + CK (P⁻¹)21], [P11 B2 DK + P12 BK, Φ_M]].
inline Mat phi_lambda(const OutputPlant& OP, const DynamicPolicy& K, const Mat& P) {
    auto b = split_lyapunov(P, OP.n(), "phi_lambda");
    const auto n = OP.n(), m = OP.m(), p = OP.p();
    Mat L(m + n, p + n);
    L.topLeftCorner(m, p) = K.DK;
    L.topRightCorner(m, n) = K.DK * OP.C2 * b.X + K.CK * b.Pinv21;
    L.bottomLeftCorner(n, p) = b.P11 * OP.B2 * K.DK + b.P12 * K.BK;
    L.bottomRightCorner(n, n) = phi_m(OP, K, P);
    return L;
}

inline void require_xy_coupling(const Mat& X, const Mat& Y, const char* who) {
    const auto n = X.rows();
    Mat S(2 * n, 2 * n);
    S << X, Mat::Identity(n, n), Mat::Identity(n, n), Y;
    if (!(min_eig(S) > 0))
        throw PreconditionError(std::string(who) + ": [[X, I], [I, Y]] must be positive definite");
}

inline Mat psi_p(const Mat& X, const Mat& Y, const Mat& Xi) {
    require_xy_coupling(X, Y, "psi_p");
    const auto n = X.rows();
    if (!(sigma_min(Xi) > 0))
        throw Degenerate("psi_p: Xi is singular");
    Mat S = Y - X.ldlt().solve(Mat::Identity(n, n));
    Mat P(2 * n, 2 * n);
    P << Y, Xi, Xi.transpose(), Xi.transpose() * S.ldlt().solve(Xi);
    return sym(P);
}

inline DynamicPolicy psi_k(const OutputPlant& OP, const Mat& Lambda, const Mat& X, const Mat& Y, const Mat& Xi) {
    require_xy_coupling(X, Y, "psi_k");
    const auto n = OP.n(), m = OP.m(), p = OP.p();
    if (Lambda.rows() != m + n || Lambda.cols() != p + n)
        throw DimensionError("psi_k: Lambda must be (m+n) x (p+n)");
    if (!(sigma_min(Xi) > 0))
        throw Degenerate("psi_k: Xi is singular");
    Mat Xinv = X.ldlt().solve(Mat::Identity(n, n));
    Mat Lft = Mat::Identity(m + n, m + n);
    Lft.bottomLeftCorner(n, m) = Y * OP.B2;
    Lft.bottomRightCorner(n, n) = Xi;
    Mat Rgt = Mat::Identity(p + n, p + n);
    Rgt.topRightCorner(p, n) = OP.C2 * X;
    Rgt.bottomRightCorner(n, n) = -Xi.fullPivLu().solve((Y - Xinv) * X);
    Mat Mid = Lambda;
    Mid.bottomRightCorner(n, n) -= Y * OP.A * X;
    Mat K = Lft.fullPivLu().solve(Mid);
    K = Rgt.transpose().fullPivLu().solve(K.transpose()).transpose();
    return DynamicPolicy::unpack(K, n, m, p);
}

// T = [[(P⁻¹)11, I], [(P⁻¹)21, 0]], so that PT = [[I, P11], [0, P12ᵀ]].
inline Mat congruence_T(const Mat& P) {
    const auto n = P.rows() / 2;
    auto b = split_lyapunov(P, n, "congruence_T");
    Mat T = Mat::Zero(2 * n, 2 * n);
    T.topLeftCorner(n, n) = b.X;
    T.topRightCorner(n, n) = Mat::Identity(n, n);
    T.bottomLeftCorner(n, n) = b.Pinv21;
    return T;
}

inline Mat blkdiag(const std::vector<Mat>& blocks) {
    Eigen::Index r = 0, c = 0;
    for (const auto& b : blocks) {
        r += b.rows();
        c += b.cols();
    }
    Mat D = Mat::Zero(r, c);
    r = c = 0;
    for (const auto& b : blocks) {
        D.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return D;
}

// ---------------------------------------------------------------------------
// Affine operators 𝒜, ℬ (LQG) and ℳ (OF-H∞), usable both numerically and inside an SDP.

namespace detail {
using conic::Affine;

inline Affine lqg_A_expr(const OutputPlant& OP, const Affine& g, const Affine& F, const Affine& H, const Affine& M,
                         const Affine& X, const Affine& Y) {
    const int n = static_cast<int>(OP.n()), p = static_cast<int>(OP.p());
    Affine AXBF = OP.A * X + OP.B2 * F;
    Affine YAHC = Y * OP.A + H * OP.C2;
    return Affine::sym_blocks({{AXBF.herm(), M.transpose() + OP.A, Affine(OP.B1())},
                               {YAHC.herm(), Y * OP.B1() + H * OP.D21()},
                               {-conic::scalar_times_identity(g, n + p)}});
}

inline Affine lqg_B_expr(const OutputPlant& OP, const Affine& F, const Affine& X, const Affine& Y,
                         const Affine& Gm) {
    const int n = static_cast<int>(OP.n());
    return Affine::sym_blocks({{X, Affine(Mat(Mat::Identity(n, n))), (OP.C1() * X + OP.D12() * F).transpose()},
                               {Y, Affine(Mat(OP.C1().transpose()))},
                               {Gm}});
}

inline Affine hinf_of_M_expr(const OutputPlant& OP, const Affine& g, const Affine& G, const Affine& F,
                             const Affine& H, const Affine& M, const Affine& X, const Affine& Y) {
    const int n = static_cast<int>(OP.n()), p = static_cast<int>(OP.p()), m = static_cast<int>(OP.m());
    Affine AXBF = OP.A * X + OP.B2 * F;
    Affine YAHC = Y * OP.A + H * OP.C2;
    Affine DGD = OP.D12() * G * OP.D21();
    return Affine::sym_blocks({{AXBF.herm(), M.transpose() + OP.A + OP.B2 * G * OP.C2, OP.B2 * G * OP.D21() + OP.B1(),
                                (OP.C1() * X + OP.D12() * F).transpose()},
                               {YAHC.herm(), Y * OP.B1() + H * OP.D21(), (OP.D12() * G * OP.C2 + OP.C1()).transpose()},
                               {-conic::scalar_times_identity(g, n + p), DGD.transpose()},
                               {-conic::scalar_times_identity(g, n + m)}});
}

struct LambdaParts {
    Mat G, F, H, M;
};

inline LambdaParts split_lambda(const OutputPlant& OP, const Mat& L) {
    const auto n = OP.n(), m = OP.m(), p = OP.p();
    if (L.rows() != m + n || L.cols() != p + n)
        throw DimensionError("Lambda must be (m+n) x (p+n)");
    return {L.topLeftCorner(m, p), L.topRightCorner(m, n), L.bottomLeftCorner(n, p), L.bottomRightCorner(n, n)};
}

inline Affine cst(const Mat& M) { return Affine(M); }
} // namespace detail

inline Mat lqg_A_operator(const OutputPlant& OP, double gamma, const Mat& Lambda, const Mat& X, const Mat& Y) {
    using ecl::detail::cst;
    auto l = ecl::detail::split_lambda(OP, Lambda);
    return ecl::detail::lqg_A_expr(OP, cst(Mat::Constant(1, 1, gamma)), cst(l.F), cst(l.H), cst(l.M), cst(X), cst(Y))
        .constant_part();
}

inline Mat lqg_B_operator(const OutputPlant& OP, const Mat& Lambda, const Mat& X, const Mat& Y, const Mat& Gamma) {
    using ecl::detail::cst;
    auto l = ecl::detail::split_lambda(OP, Lambda);
    return ecl::detail::lqg_B_expr(OP, cst(l.F), cst(X), cst(Y), cst(Gamma)).constant_part();
}

inline Mat hinf_of_m_operator(const OutputPlant& OP, double gamma, const Mat& Lambda, const Mat& X, const Mat& Y) {
    using ecl::detail::cst;
    auto l = ecl::detail::split_lambda(OP, Lambda);
    return ecl::detail::hinf_of_M_expr(OP, cst(Mat::Constant(1, 1, gamma)), cst(l.G), cst(l.F), cst(l.H), cst(l.M),
                                  cst(X), cst(Y))
        .constant_part();
}

// ---------------------------------------------------------------------------
// LQG

struct LqgEval {
    double J = 0;
    Mat X, Y; // closed-loop controllability and observability Gramians
    ClosedLoop cl;
};

inline void require_strictly_proper(const DynamicPolicy& K, const char* who) {
    if (!K.strictly_proper())
        throw PreconditionError(std::string(who) + ": LQG policies must be strictly proper (DK = 0)");
}

inline LqgEval lqg_eval(const OutputPlant& OP, const DynamicPolicy& K) {
    require_strictly_proper(K, "lqg_cost");
    LqgEval e;
    e.cl = assemble_closed_loop(OP, K);
    if (!is_hurwitz(e.cl.Acl))
        throw NotStabilizing("lqg_cost: closed loop is not internally stable");
    e.X = solve_lyapunov_ct(e.cl.Acl, e.cl.Bcl * e.cl.Bcl.transpose());
    e.Y = solve_lyapunov_ct(e.cl.Acl.transpose(), e.cl.Ccl.transpose() * e.cl.Ccl);
    double a = (e.cl.Ccl * e.X * e.cl.Ccl.transpose()).trace();
    double b = (e.cl.Bcl.transpose() * e.Y * e.cl.Bcl).trace();
    if (std::abs(a - b) > 1e-6 * (1.0 + std::abs(a)))
        throw SolverFailure("lqg_cost: Gramian traces disagree");
    e.J = std::sqrt(std::max(a, 0.0));
    return e;
}

inline double lqg_cost(const OutputPlant& OP, const DynamicPolicy& K) { return lqg_eval(OP, K).J; }

struct LqgGrad {
    Mat dAK, dBK, dCK;
    double norm() const { return std::sqrt(dAK.squaredNorm() + dBK.squaredNorm() + dCK.squaredNorm()); }
};

inline LqgGrad lqg_grad(const OutputPlant& OP, const DynamicPolicy& K) {
    auto e = lqg_eval(OP, K);
    const auto n = OP.n();
    if (!(e.J > 0))
        throw Degenerate("lqg_grad: zero cost, gradient of the norm is undefined");
    Mat X11 = e.X.topLeftCorner(n, n), X12 = e.X.topRightCorner(n, n), X22 = e.X.bottomRightCorner(n, n);
    Mat Y11 = e.Y.topLeftCorner(n, n), Y12 = e.Y.topRightCorner(n, n), Y22 = e.Y.bottomRightCorner(n, n);
    const Mat& C = OP.C2;
    const Mat& B = OP.B2;
    LqgGrad g;
    g.dAK = (Y12.transpose() * X12 + Y22 * X22) / e.J;
    g.dBK = (Y22 * K.BK * OP.V + Y22 * X12.transpose() * C.transpose() + Y12.transpose() * X11 * C.transpose()) / e.J;
    g.dCK = (OP.R * K.CK * X22 + B.transpose() * Y11 * X12 + B.transpose() * Y12 * X22) / e.J;
    return g;
}

// Separation-principle controller from the control and filter Riccati equations.
inline DynamicPolicy lqg_riccati_policy(const OutputPlant& OP) {
    Mat Pc = solve_riccati_ct(OP.A, OP.B2, OP.Q, OP.R);
    Mat Pf = solve_riccati_ct(OP.A.transpose(), OP.C2.transpose(), OP.W, OP.V);
    Mat Kc = OP.R.ldlt().solve(OP.B2.transpose() * Pc);
    Mat L = OP.V.ldlt().solve(OP.C2 * Pf).transpose();
    DynamicPolicy K;
    K.DK = Mat::Zero(OP.m(), OP.p());
    K.CK = -Kc;
    K.BK = L;
    K.AK = OP.A - OP.B2 * Kc - L * OP.C2;
    return K;
}

inline double lqg_riccati_optimum(const OutputPlant& OP) {
    Mat Pc = solve_riccati_ct(OP.A, OP.B2, OP.Q, OP.R);
    Mat Pf = solve_riccati_ct(OP.A.transpose(), OP.C2.transpose(), OP.W, OP.V);
    Mat Kc = OP.R.ldlt().solve(OP.B2.transpose() * Pc);
    return std::sqrt((Pc * OP.W).trace() + (Pf * Kc.transpose() * OP.R * Kc).trace());
}

struct LqgLiftedPoint {
    DynamicPolicy K;
    double gamma = 0;
    Mat P, Gamma;
};

struct LqgConvexPoint {
    double gamma = 0;
    Mat Lambda, X, Y, Gamma;
};

// The two lifted LMIs: first ⪯ 0, second ⪰ 0.
inline std::pair<Mat, Mat> lqg_lifted_lmis(const OutputPlant& OP, const DynamicPolicy& K, double gamma, const Mat& P,
                                           const Mat& Gamma) {
    auto cl = assemble_closed_loop(OP, K);
    const auto n2 = cl.Acl.rows(), d = cl.Bcl.cols(), z = cl.Ccl.rows();
    Mat L1(n2 + d, n2 + d);
    L1 << cl.Acl.transpose() * P + P * cl.Acl, P * cl.Bcl, cl.Bcl.transpose() * P, -gamma * Mat::Identity(d, d);
    Mat L2(n2 + z, n2 + z);
    L2 << P, cl.Ccl.transpose(), cl.Ccl, Gamma;
    return {sym(L1), sym(L2)};
}

inline bool lqg_lifted_member(const OutputPlant& OP, const LqgLiftedPoint& pt, double tol = 1e-8) {
    if (!pt.K.strictly_proper() || !(min_eig(pt.P) > 0) || min_eig(pt.Gamma) < -tol)
        return false;
    const auto n = OP.n();
    if (!(sigma_min(pt.P.topRightCorner(n, n)) > 0))
        return false;
    auto [L1, L2] = lqg_lifted_lmis(OP, pt.K, pt.gamma, pt.P, pt.Gamma);
    return max_eig(L1) <= tol * std::max(1.0, L1.norm()) && min_eig(L2) >= -tol * std::max(1.0, L2.norm()) &&
           pt.Gamma.trace() <= pt.gamma + tol;
}

inline bool lqg_convex_member(const OutputPlant& OP, const LqgConvexPoint& cp, double tol = 1e-8) {
    auto l = ecl::detail::split_lambda(OP, cp.Lambda);
    if (!l.G.isZero(0.0))
        return false;
    const auto n = OP.n();
    Mat S(2 * n, 2 * n);
    S << cp.X, Mat::Identity(n, n), Mat::Identity(n, n), cp.Y;
    if (!(min_eig(S) > 0) || min_eig(cp.Gamma) < -tol)
        return false;
    Mat A = lqg_A_operator(OP, cp.gamma, cp.Lambda, cp.X, cp.Y);
    Mat B = lqg_B_operator(OP, cp.Lambda, cp.X, cp.Y, cp.Gamma);
    return max_eig(A) <= tol * std::max(1.0, A.norm()) && min_eig(B) >= -tol * std::max(1.0, B.norm()) &&
           cp.Gamma.trace() <= cp.gamma + tol;
}

inline std::pair<LqgConvexPoint, Mat> phi_lqg(const OutputPlant& OP, const LqgLiftedPoint& pt) {
    require_strictly_proper(pt.K, "phi_lqg");
    const auto n = OP.n();
    auto b = split_lyapunov(pt.P, n, "phi_lqg");
    if (sigma_min(b.P12) < default_p12_margin(pt.P))
        throw Degenerate("phi_lqg: P12 is below the invertibility margin");
    LqgConvexPoint cp{pt.gamma, phi_lambda(OP, pt.K, pt.P), b.X, b.P11, pt.Gamma};
    return {cp, b.P12};
}

inline LqgLiftedPoint psi_lqg(const OutputPlant& OP, const LqgConvexPoint& cp, const Mat& Xi) {
    auto l = ecl::detail::split_lambda(OP, cp.Lambda);
    if (!l.G.isZero(0.0))
        throw PreconditionError("psi_lqg: the DK block of Lambda must be zero");
    DynamicPolicy K = psi_k(OP, cp.Lambda, cp.X, cp.Y, Xi);
    K.DK.setZero();
    return {K, cp.gamma, psi_p(cp.X, cp.Y, Xi), cp.Gamma};
}

struct LiftCertificate {
    Mat P, Gamma;
    std::string route; // "gramian" or "sdp"
    double p12_sigma_min = 0;
};

// Non-degeneracy certificate at level γ. The closed-form candidate P = γX_𝖪⁻¹, Γ = C X_𝖪 Cᵀ/γ is
// tried first, then the non-strict LMI feasibility problem maximizing the smallest eigenvalue of P.
inline std::optional<LiftCertificate> lqg_lift_feasibility(const OutputPlant& OP, const DynamicPolicy& K,
                                                           double gamma,
                                                           std::optional<double> p12_margin = std::nullopt) {
    auto e = lqg_eval(OP, K);
    if (gamma < e.J * (1.0 - 1e-9))
        return std::nullopt;
    const auto n = OP.n();
    auto accept = [&](LiftCertificate c) -> std::optional<LiftCertificate> {
        double margin = p12_margin ? *p12_margin : default_p12_margin(c.P);
        c.p12_sigma_min = sigma_min(c.P.topRightCorner(n, n));
        if (!(min_eig(c.P) > 0) || c.p12_sigma_min < margin)
            return std::nullopt;
        return c;
    };
    if (min_eig(e.X) > 1e-10 * std::max(1.0, e.X.norm())) {
        Mat P = sym(gamma * e.X.ldlt().solve(Mat::Identity(2 * n, 2 * n)));
        Mat Gm = sym(e.cl.Ccl * e.X * e.cl.Ccl.transpose() / gamma);
        if (auto c = accept({P, Gm, "gramian", 0}))
            return c;
    }
    using namespace conic;
    const int n2 = static_cast<int>(2 * n), d = static_cast<int>(e.cl.Bcl.cols()), z = static_cast<int>(e.cl.Ccl.rows());
    Problem pr;
    Affine Pv = pr.add_symmetric("P", n2);
    Affine Gv = pr.add_symmetric("Gamma", z);
    Affine t = pr.add_scalar("t");
    const Mat& Acl = e.cl.Acl;
    Affine L1 = Affine::sym_blocks(
        {{Mat(Acl.transpose()) * Pv + Pv * Acl, Pv * e.cl.Bcl}, {ecl::detail::cst(-gamma * Mat::Identity(d, d))}});
    Affine L2 = Affine::sym_blocks({{Pv, ecl::detail::cst(e.cl.Ccl.transpose())}, {Gv}});
    pr.add_nsd(L1, "lqg-lyapunov");
    pr.add_psd(L2, "lqg-output");
    pr.add_psd(Affine::scalar(gamma) - Gv.trace(), "trace");
    pr.add_psd(Pv - scalar_times_identity(t, n2), "P-margin");
    pr.add_psd(Affine::scalar(1.0) - t, "margin-cap");
    pr.maximize(t);
    auto sol = solve(pr);
    if (sol.status == Status::INFEASIBLE)
        return std::nullopt;
    if (!sol.usable())
        throw SolverFailure(std::string("lqg_lift_feasibility: conic solver returned ") + to_string(sol.status));
    return accept({sol.extract("P"), sol.extract("Gamma"), "sdp", 0});
}

inline conic::Problem lqg_sdp(const OutputPlant& OP) {
    using namespace conic;
    OP.validate();
    if (!OP.standing_assumptions_hold())
        throw PreconditionError("lqg_sdp: standing assumptions fail (controllability/observability of the weighted plant)");
    const int n = static_cast<int>(OP.n()), m = static_cast<int>(OP.m()), p = static_cast<int>(OP.p());
    Problem pr;
    Affine g = pr.add_scalar("gamma");
    Affine F = pr.add_matrix("F", m, n);
    Affine H = pr.add_matrix("H", n, p);
    Affine M = pr.add_matrix("M", n, n);
    Affine X = pr.add_symmetric("X", n);
    Affine Y = pr.add_symmetric("Y", n);
    Affine Gm = pr.add_symmetric("Gamma", n + m);
    pr.add_nsd(ecl::detail::lqg_A_expr(OP, g, F, H, M, X, Y), "A-operator");
    pr.add_psd(ecl::detail::lqg_B_expr(OP, F, X, Y, Gm), "B-operator");
    pr.add_psd(g - Gm.trace(), "trace");
    pr.add_psd(Affine::sym_blocks({{X, ecl::detail::cst(Mat::Identity(n, n))}, {Y}}), "XY-coupling", true);
    pr.minimize(g);
    return pr;
}

struct DynamicSolve {
    conic::Solution sol;
    double gamma = std::numeric_limits<double>::quiet_NaN();
    Mat Lambda, X, Y, Gamma;
    std::optional<DynamicPolicy> K; // recovered with Ξ = I
};

inline Mat assemble_lambda(const Mat& G, const Mat& F, const Mat& H, const Mat& M) {
    Mat L(G.rows() + H.rows(), G.cols() + F.cols());
    L << G, F, H, M;
    return L;
}

inline DynamicSolve lqg_solve(const OutputPlant& OP, const conic::Options& opt = conic::precise_options()) {
    DynamicSolve r;
    r.sol = conic::solve(lqg_sdp(OP), opt);
    if (!r.sol.usable())
        return r;
    const auto n = OP.n();
    r.gamma = r.sol.extract_scalar("gamma");
    r.X = r.sol.extract("X");
    r.Y = r.sol.extract("Y");
    r.Gamma = r.sol.extract("Gamma");
    r.Lambda = assemble_lambda(Mat::Zero(OP.m(), OP.p()), r.sol.extract("F"), r.sol.extract("H"), r.sol.extract("M"));
    try {
        auto K = psi_k(OP, r.Lambda, r.X, r.Y, Mat::Identity(n, n));
        K.DK.setZero();
        r.K = K;
    } catch (const Error&) {
    }
    return r;
}

// ---------------------------------------------------------------------------
// Output-feedback H∞

struct HinfOfLiftedPoint {
    DynamicPolicy K;
    double gamma = 0;
    Mat P;
};

struct HinfOfConvexPoint {
    double gamma = 0;
    Mat Lambda, X, Y;
};

inline HinfResult hinf_of_cost_full(const OutputPlant& OP, const DynamicPolicy& K, const HinfOptions& o = {}) {
    auto cl = assemble_closed_loop(OP, K);
    if (!is_hurwitz(cl.Acl))
        throw NotStabilizing("hinf_of_cost: closed loop is not internally stable");
    return hinf_norm_full(cl.Acl, cl.Bcl, cl.Ccl, cl.Dcl, o);
}

inline double hinf_of_cost(const OutputPlant& OP, const DynamicPolicy& K) { return hinf_of_cost_full(OP, K).value; }

inline Mat hinf_of_lifted_lmi(const OutputPlant& OP, const DynamicPolicy& K, double gamma, const Mat& P) {
    auto cl = assemble_closed_loop(OP, K);
    const auto n2 = cl.Acl.rows(), d = cl.Bcl.cols(), z = cl.Ccl.rows();
    Mat L(n2 + d + z, n2 + d + z);
    L << cl.Acl.transpose() * P + P * cl.Acl, P * cl.Bcl, cl.Ccl.transpose(), cl.Bcl.transpose() * P,
        -gamma * Mat::Identity(d, d), cl.Dcl.transpose(), cl.Ccl, cl.Dcl, -gamma * Mat::Identity(z, z);
    return sym(L);
}

inline bool hinf_of_lifted_member(const OutputPlant& OP, const HinfOfLiftedPoint& pt, double tol = 1e-8) {
    const auto n = OP.n();
    if (!(min_eig(pt.P) > 0) || !(sigma_min(pt.P.topRightCorner(n, n)) > 0))
        return false;
    Mat L = hinf_of_lifted_lmi(OP, pt.K, pt.gamma, pt.P);
    return max_eig(L) <= tol * std::max(1.0, L.norm());
}

inline bool hinf_of_convex_member(const OutputPlant& OP, const HinfOfConvexPoint& cp, double tol = 1e-8) {
    const auto n = OP.n();
    Mat S(2 * n, 2 * n);
    S << cp.X, Mat::Identity(n, n), Mat::Identity(n, n), cp.Y;
    if (!(min_eig(S) > 0))
        return false;
    Mat M = hinf_of_m_operator(OP, cp.gamma, cp.Lambda, cp.X, cp.Y);
    return max_eig(M) <= tol * std::max(1.0, M.norm());
}

inline std::pair<HinfOfConvexPoint, Mat> phi_hinf_of(const OutputPlant& OP, const HinfOfLiftedPoint& pt) {
    const auto n = OP.n();
    auto b = split_lyapunov(pt.P, n, "phi_hinf_of");
    if (sigma_min(b.P12) < default_p12_margin(pt.P))
        throw Degenerate("phi_hinf_of: P12 is below the invertibility margin");
    return {HinfOfConvexPoint{pt.gamma, phi_lambda(OP, pt.K, pt.P), b.X, b.P11}, b.P12};
}

inline HinfOfLiftedPoint psi_hinf_of(const OutputPlant& OP, const HinfOfConvexPoint& cp, const Mat& Xi) {
    return {psi_k(OP, cp.Lambda, cp.X, cp.Y, Xi), cp.gamma, psi_p(cp.X, cp.Y, Xi)};
}

// Non-strict bounded real feasibility at γ, maximizing the smallest eigenvalue of P.
inline std::optional<LiftCertificate> hinf_of_lift_feasibility(const OutputPlant& OP, const DynamicPolicy& K,
                                                               double gamma,
                                                               std::optional<double> p12_margin = std::nullopt) {
    auto cl = assemble_closed_loop(OP, K);
    double J = hinf_of_cost(OP, K);
    if (gamma < J * (1.0 - 1e-9))
        return std::nullopt;
    using namespace conic;
    const auto n = OP.n();
    const int n2 = static_cast<int>(2 * n), d = static_cast<int>(cl.Bcl.cols()), z = static_cast<int>(cl.Ccl.rows());
    Problem pr;
    Affine Pv = pr.add_symmetric("P", n2);
    Affine t = pr.add_scalar("t");
    Affine L = Affine::sym_blocks({{Mat(cl.Acl.transpose()) * Pv + Pv * cl.Acl, Pv * cl.Bcl,
                                    ecl::detail::cst(cl.Ccl.transpose())},
                                   {ecl::detail::cst(-gamma * Mat::Identity(d, d)), ecl::detail::cst(cl.Dcl.transpose())},
                                   {ecl::detail::cst(-gamma * Mat::Identity(z, z))}});
    pr.add_nsd(L, "bounded-real");
    pr.add_psd(Pv - scalar_times_identity(t, n2), "P-margin");
    pr.add_psd(Affine::scalar(1.0) - t, "margin-cap");
    pr.maximize(t);
    auto sol = solve(pr);
    if (sol.status == Status::INFEASIBLE)
        return std::nullopt;
    if (!sol.usable())
        throw SolverFailure(std::string("hinf_of_lift_feasibility: conic solver returned ") + to_string(sol.status));
    LiftCertificate c{sol.extract("P"), Mat(), "sdp", 0};
    double margin = p12_margin ? *p12_margin : default_p12_margin(c.P);
    c.p12_sigma_min = sigma_min(c.P.topRightCorner(n, n));
    if (!(min_eig(c.P) > 0) || c.p12_sigma_min < margin)
        return std::nullopt;
    return c;
}

inline conic::Problem hinf_of_sdp(const OutputPlant& OP) {
    using namespace conic;
    OP.validate();
    const int n = static_cast<int>(OP.n()), m = static_cast<int>(OP.m()), p = static_cast<int>(OP.p());
    Problem pr;
    Affine g = pr.add_scalar("gamma");
    Affine G = pr.add_matrix("G", m, p);
    Affine F = pr.add_matrix("F", m, n);
    Affine H = pr.add_matrix("H", n, p);
    Affine M = pr.add_matrix("M", n, n);
    Affine X = pr.add_symmetric("X", n);
    Affine Y = pr.add_symmetric("Y", n);
    pr.add_nsd(ecl::detail::hinf_of_M_expr(OP, g, G, F, H, M, X, Y), "M-operator");
    pr.add_psd(Affine::sym_blocks({{X, ecl::detail::cst(Mat::Identity(n, n))}, {Y}}), "XY-coupling", true);
    pr.minimize(g);
    return pr;
}

inline DynamicSolve hinf_of_solve(const OutputPlant& OP, const conic::Options& opt = conic::precise_options()) {
    DynamicSolve r;
    r.sol = conic::solve(hinf_of_sdp(OP), opt);
    if (!r.sol.usable())
        return r;
    const auto n = OP.n();
    r.gamma = r.sol.extract_scalar("gamma");
    r.X = r.sol.extract("X");
    r.Y = r.sol.extract("Y");
    r.Lambda = assemble_lambda(r.sol.extract("G"), r.sol.extract("F"), r.sol.extract("H"), r.sol.extract("M"));
    try {
        r.K = psi_k(OP, r.Lambda, r.X, r.Y, Mat::Identity(n, n));
    } catch (const Error&) {
    }
    return r;
}

inline Mat hinf_of_subgradient(const OutputPlant& OP, const DynamicPolicy& K, const std::vector<PeakWeight>& peaks,
                               std::optional<double> J = std::nullopt) {
    ecl::detail::check_peak_weights(peaks);
    const auto n = OP.n(), m = OP.m(), p = OP.p();
    auto cl = assemble_closed_loop(OP, K);
    double Jv = J ? *J : hinf_of_cost(OP, K);
    CMat L0 = CMat::Zero(p + n, n + p);
    L0.topRightCorner(p, p) = OP.Vh().cast<cdouble>();
    CMat R0 = CMat::Zero(n + m, m + n);
    R0.bottomLeftCorner(m, m) = OP.Rh().cast<cdouble>();
    Mat Cx = blkdiag({OP.C2, Mat::Identity(n, n)});
    Mat Bx = blkdiag({OP.B2, Mat::Identity(n, n)});
    CMat Phi = CMat::Zero(p + n, m + n);
    for (const auto& pk : peaks) {
        CMat left = L0, right = R0, T = cl.Dcl.cast<cdouble>();
        if (!std::isinf(pk.omega)) {
            CMat Res = resolvent(cl.Acl, cdouble(0.0, pk.omega));
            left += Cx.cast<cdouble>() * Res * cl.Bcl.cast<cdouble>();
            right += cl.Ccl.cast<cdouble>() * Res * Bx.cast<cdouble>();
            T += cl.Ccl.cast<cdouble>() * Res * cl.Bcl.cast<cdouble>();
        }
        CMat Qs = top_singular_basis(T);
        if (pk.Y.rows() != Qs.cols())
            throw DimensionError("hinf_of_subgradient: Y does not match the dominant subspace dimension");
        Phi += left * T.adjoint() * Qs * pk.Y * Qs.adjoint() * right;
    }
    return Phi.real().transpose() / Jv;
}

inline std::vector<Mat> hinf_of_generators(const OutputPlant& OP, const DynamicPolicy& K) {
    auto res = hinf_of_cost_full(OP, K);
    auto cl = assemble_closed_loop(OP, K);
    std::vector<Mat> gens;
    for (const auto& pw : extreme_peak_weights(cl, res.peaks))
        gens.push_back(hinf_of_subgradient(OP, K, pw, res.value));
    return gens;
}

} // namespace ecl
