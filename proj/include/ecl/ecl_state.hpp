#pragma once

#include "ecl/conic.hpp"
#include "ecl/linalg.hpp"
#include "ecl/norms.hpp"
#include "ecl/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ecl {

// ---------------------------------------------------------------------------
// Clarke stationarity: distance from the origin to the convex hull of generators.

inline double clarke_stationarity_measure(const std::vector<Mat>& generators, Vec* weights = nullptr) {
    if (generators.empty())
        throw PreconditionError("clarke_stationarity_measure: empty generator list");
    const size_t k = generators.size();
    const Eigen::Index d = generators[0].size();
    Mat Gm(d, k);
    for (size_t i = 0; i < k; ++i) {
        if (generators[i].size() != d)
            throw DimensionError("clarke_stationarity_measure: generators differ in shape");
        Gm.col(i) = Eigen::Map<const Vec>(generators[i].data(), d);
    }
    Mat Gram = Gm.transpose() * Gm;
    const double scale = std::max(1e-300, Gram.diagonal().maxCoeff());

    // Wolfe's minimum-norm-point iteration.
    std::vector<int> S;
    Vec lam;
    {
        Eigen::Index j0;
        Gram.diagonal().minCoeff(&j0);
        S.push_back(static_cast<int>(j0));
        lam = Vec::Ones(1);
    }
    auto point = [&]() {
        Vec x = Vec::Zero(d);
        for (size_t a = 0; a < S.size(); ++a)
            x += lam(a) * Gm.col(S[a]);
        return x;
    };
    for (int major = 0; major < 1000; ++major) {
        Vec x = point();
        Vec gx = Gm.transpose() * x;
        Eigen::Index j;
        gx.minCoeff(&j);
        double xx = x.squaredNorm();
        if (gx(j) >= xx - 1e-14 * scale || std::find(S.begin(), S.end(), static_cast<int>(j)) != S.end())
            break;
        S.push_back(static_cast<int>(j));
        lam.conservativeResize(S.size());
        lam(S.size() - 1) = 0.0;
        for (int minor = 0; minor < 1000; ++minor) {
            const Eigen::Index s = static_cast<Eigen::Index>(S.size());
            Mat KKT = Mat::Zero(s + 1, s + 1);
            for (Eigen::Index a = 0; a < s; ++a)
                for (Eigen::Index b = 0; b < s; ++b)
                    KKT(a, b) = Gram(S[a], S[b]);
            KKT.block(0, s, s, 1).setOnes();
            KKT.block(s, 0, 1, s).setOnes();
            Vec rhs = Vec::Zero(s + 1);
            rhs(s) = 1.0;
            Vec mu = KKT.completeOrthogonalDecomposition().solve(rhs).head(s);
            if ((mu.array() > 1e-14).all()) {
                lam = mu;
                break;
            }
            double theta = 1.0;
            for (Eigen::Index a = 0; a < s; ++a)
                if (mu(a) <= 1e-14)
                    theta = std::min(theta, lam(a) / (lam(a) - mu(a)));
            lam = lam + theta * (mu - lam);
            std::vector<int> S2;
            std::vector<double> l2;
            for (Eigen::Index a = 0; a < s; ++a)
                if (lam(a) > 1e-14) {
                    S2.push_back(S[a]);
                    l2.push_back(lam(a));
                }
            S = S2;
            lam = Eigen::Map<Vec>(l2.data(), static_cast<Eigen::Index>(l2.size()));
            lam /= lam.sum();
        }
    }
    Vec x = point();
    if (weights) {
        *weights = Vec::Zero(k);
        for (size_t a = 0; a < S.size(); ++a)
            (*weights)(S[a]) = lam(a);
    }
    return x.norm();
}

inline bool is_stationary(double measure, double cost) { return measure <= 1e-6 * (1.0 + std::abs(cost)); }

// ---------------------------------------------------------------------------
// LQR

struct LqrLiftedPoint {
    StaticGain K;
    double gamma = 0;
    SymMat X;
};

struct LqrConvexPoint {
    double gamma = 0;
    Mat Y;
    SymMat X;
};

struct LqrEval {
    double J = 0;
    Mat X, P; // X_K (closed-loop state covariance) and P_K (cost-to-go)
};

inline LqrEval lqr_eval(const Plant& P, const StaticGain& K) {
    if (K.rows() != P.m() || K.cols() != P.n())
        throw DimensionError("lqr: K must be m x n");
    Mat Acl = P.A + P.B * K;
    if (!is_hurwitz(Acl))
        throw NotStabilizing("lqr: K is not stabilizing, the cost is infinite");
    Mat Qk = P.Q + K.transpose() * P.R * K;
    LqrEval e;
    e.X = solve_lyapunov_ct(Acl, P.W());
    e.P = solve_lyapunov_ct(Acl.transpose(), Qk);
    e.J = (Qk * e.X).trace();
    double J2 = (e.P * P.W()).trace();
    if (std::abs(e.J - J2) > 1e-9 * (1.0 + std::abs(e.J)))
        throw SolverFailure("lqr: trace formulas disagree (" + std::to_string(e.J) + " vs " + std::to_string(J2) + ")");
    return e;
}

inline double lqr_cost(const Plant& P, const StaticGain& K) { return lqr_eval(P, K).J; }

inline Mat lqr_grad(const Plant& P, const StaticGain& K) {
    auto e = lqr_eval(P, K);
    return 2.0 * (P.R * K + P.B.transpose() * e.P) * e.X;
}

// K* = −R⁻¹BᵀP* from the stabilizing Riccati solution.
inline StaticGain lqr_riccati_gain(const Plant& P) {
    Mat Ps = solve_riccati_ct(P.A, P.B, P.Q, P.R);
    return -P.R.ldlt().solve(P.B.transpose() * Ps);
}

inline double lqr_riccati_optimum(const Plant& P) {
    Mat Ps = solve_riccati_ct(P.A, P.B, P.Q, P.R);
    return (Ps * P.W()).trace();
}

inline LqrLiftedPoint lqr_lift(const Plant& P, const StaticGain& K, double gamma) {
    auto e = lqr_eval(P, K);
    if (gamma < e.J - 1e-8)
        throw NotInEpigraph("lqr_lift: gamma " + std::to_string(gamma) + " is below the cost " + std::to_string(e.J));
    return {K, gamma, e.X};
}

inline double lqr_lifted_residual(const Plant& P, const LqrLiftedPoint& pt) {
    Mat Acl = P.A + P.B * pt.K;
    return lyapunov_residual(Acl, pt.X, P.W());
}

inline bool lqr_lifted_member(const Plant& P, const LqrLiftedPoint& pt, double tol = 1e-8) {
    if (!(min_eig(pt.X) > 0))
        return false;
    double scale = 1.0 + P.W().norm();
    if (lqr_lifted_residual(P, pt) > tol * scale)
        return false;
    return pt.gamma >= ((P.Q + pt.K.transpose() * P.R * pt.K) * pt.X).trace() - tol;
}

inline bool lqr_convex_member(const Plant& P, const LqrConvexPoint& cp, double tol = 1e-8) {
    if (!(min_eig(cp.X) > 0))
        return false;
    Mat E = P.A * cp.X + P.B * cp.Y + cp.X * P.A.transpose() + cp.Y.transpose() * P.B.transpose() + P.W();
    if (E.norm() > tol * (1.0 + P.W().norm()))
        return false;
    double f = (P.Q * cp.X).trace() + (cp.X.ldlt().solve(cp.Y.transpose() * P.R * cp.Y)).trace();
    return cp.gamma >= f - tol * (1.0 + std::abs(f));
}

inline void require_nonsingular_lift(const Mat& X, const char* who) {
    if (!(min_eig(X) > 1e-12))
        throw Degenerate(std::string(who) + ": lifting variable is singular (min eigenvalue below 1e-12)");
}

inline LqrConvexPoint lqr_phi(const LqrLiftedPoint& pt) {
    require_nonsingular_lift(pt.X, "lqr_phi");
    return {pt.gamma, pt.K * pt.X, pt.X};
}

inline LqrLiftedPoint lqr_psi(const LqrConvexPoint& cp) {
    require_nonsingular_lift(cp.X, "lqr_psi");
    Mat K = cp.X.ldlt().solve(cp.Y.transpose()).transpose();
    return {K, cp.gamma, cp.X};
}

struct LqrSdp {
    conic::Problem problem;
};

// min γ over F_LQR with the matrix-fractional term as a Schur complement.
inline conic::Problem lqr_sdp(const Plant& P) {
    using namespace conic;
    P.validate();
    const int n = static_cast<int>(P.n()), m = static_cast<int>(P.m());
    const Mat W = P.W();
    if (!(min_eig(W) > 0))
        throw PreconditionError("lqr_sdp: W = Bw Bwᵀ must be positive definite");
    Problem pr;
    Affine g = pr.add_scalar("gamma");
    Affine Y = pr.add_matrix("Y", m, n);
    Affine X = pr.add_symmetric("X", n);
    Affine Z = pr.add_symmetric("Z", m);
    const Mat Rh = P.Rh();
    pr.add_equality(P.A * X + P.B * Y + (P.A * X + P.B * Y).transpose() + W, "lyapunov");
    pr.add_psd(X, "X", true);
    pr.add_psd(Affine::sym_blocks({{Z, Rh * Y}, {X}}), "schur");
    pr.add_psd(g - (P.Q * X).trace() - Z.trace(), "epigraph");
    pr.minimize(g);
    return pr;
}

struct StateSolve {
    conic::Solution sol;
    double gamma = std::numeric_limits<double>::quiet_NaN();
    std::optional<StaticGain> K;
    Mat Y, X;
};

inline StateSolve lqr_solve(const Plant& P, const conic::Options& opt = conic::precise_options()) {
    StateSolve r;
    r.sol = conic::solve(lqr_sdp(P), opt);
    if (!r.sol.usable())
        return r;
    r.gamma = r.sol.extract_scalar("gamma");
    r.Y = r.sol.extract("Y");
    r.X = r.sol.extract("X");
    if (min_eig(r.X) > 1e-12)
        r.K = r.X.ldlt().solve(r.Y.transpose()).transpose();
    return r;
}

// ---------------------------------------------------------------------------
// State-feedback H∞

struct HinfSfLiftedPoint {
    StaticGain K;
    double gamma = 0;
    SymMat P;
};

struct HinfSfConvexPoint {
    double gamma = 0;
    Mat Y;
    SymMat X;
};

inline ClosedLoop hinf_sf_loop(const Plant& P, const StaticGain& K) { return assemble_closed_loop(P, K); }

inline HinfResult hinf_sf_cost_full(const Plant& P, const StaticGain& K, const HinfOptions& o = {}) {
    auto cl = hinf_sf_loop(P, K);
    if (!is_hurwitz(cl.Acl))
        throw NotStabilizing("hinf_sf_cost: K is not stabilizing, the cost is infinite");
    return hinf_norm_full(cl.Acl, cl.Bcl, cl.Ccl, cl.Dcl, o);
}

inline double hinf_sf_cost(const Plant& P, const StaticGain& K) { return hinf_sf_cost_full(P, K).value; }

// Frequency ω (s = jω) with a weight Y on the top singular subspace at that frequency.
struct PeakWeight {
    double omega = 0;
    CMat Y;
};

// Orthonormal basis of the dominant left singular subspace of T.
inline CMat top_singular_basis(const CMat& T, double mult_tol = 1e-8) {
    Eigen::JacobiSVD<CMat> svd(T, Eigen::ComputeFullU);
    const auto& s = svd.singularValues();
    Eigen::Index r = 0;
    while (r < s.size() && s(r) >= s(0) * (1.0 - mult_tol))
        ++r;
    if (r == 0)
        r = 1;
    return svd.matrixU().leftCols(r);
}

namespace detail {
inline void check_peak_weights(const std::vector<PeakWeight>& peaks) {
    if (peaks.empty())
        throw PreconditionError("subgradient: empty peak list");
    double tr = 0;
    for (const auto& pk : peaks) {
        if ((pk.Y - pk.Y.adjoint()).norm() > 1e-10 * (1.0 + pk.Y.norm()))
            throw PreconditionError("subgradient: peak weight Y must be Hermitian");
        Eigen::SelfAdjointEigenSolver<CMat> es(pk.Y);
        if (es.eigenvalues().size() > 0 && es.eigenvalues()(0) < -1e-12)
            throw PreconditionError("subgradient: peak weight Y must be positive semidefinite");
        tr += pk.Y.trace().real();
    }
    if (std::abs(tr - 1.0) > 1e-10)
        throw PreconditionError("subgradient: peak weights must have total trace 1, got " + std::to_string(tr));
}
} // namespace detail

inline Mat hinf_sf_subgradient(const Plant& P, const StaticGain& K, const std::vector<PeakWeight>& peaks,
                               std::optional<double> J = std::nullopt) {
    detail::check_peak_weights(peaks);
    const auto n = P.n(), m = P.m();
    auto cl = hinf_sf_loop(P, K);
    double Jv = J ? *J : hinf_sf_cost(P, K);
    const Mat Rh = P.Rh();
    CMat Phi = CMat::Zero(n, m);
    for (const auto& pk : peaks) {
        if (std::isinf(pk.omega))
            continue; // strictly proper loop: every factor vanishes at s = ∞
        cdouble s(0.0, pk.omega);
        CMat Res = resolvent(cl.Acl, s);
        CMat T = cl.Ccl.cast<cdouble>() * Res * cl.Bcl.cast<cdouble>();
        CMat Qs = top_singular_basis(T);
        if (pk.Y.rows() != Qs.cols())
            throw DimensionError("hinf_sf_subgradient: Y is " + std::to_string(pk.Y.rows()) +
                                 "x, top singular subspace has dimension " + std::to_string(Qs.cols()));
        CMat right = cl.Ccl.cast<cdouble>() * Res * P.B.cast<cdouble>();
        right.bottomRows(m) += Rh.cast<cdouble>();
        Phi += Res * P.Bw.cast<cdouble>() * T.adjoint() * Qs * pk.Y * Qs.adjoint() * right;
    }
    return Phi.real().transpose() / Jv;
}

// Equal weights over every peak and its full dominant subspace.
inline std::vector<PeakWeight> default_peak_weights(const ClosedLoop& cl, const std::vector<double>& omegas) {
    std::vector<PeakWeight> out;
    std::vector<int> dims;
    int total = 0;
    for (double w : omegas) {
        CMat T = tzw_at(cl, std::isinf(w) ? cdouble(w, 0) : cdouble(0, w));
        int r = static_cast<int>(top_singular_basis(T).cols());
        dims.push_back(r);
        total += r;
    }
    for (size_t i = 0; i < omegas.size(); ++i)
        out.push_back({omegas[i], CMat::Identity(dims[i], dims[i]) / double(total)});
    return out;
}

// One generator per peak and per basis direction of its dominant subspace (Y = e_i e_iᴴ).
inline std::vector<std::vector<PeakWeight>> extreme_peak_weights(const ClosedLoop& cl,
                                                                 const std::vector<double>& omegas) {
    std::vector<std::vector<PeakWeight>> out;
    for (double w : omegas) {
        CMat T = tzw_at(cl, std::isinf(w) ? cdouble(w, 0) : cdouble(0, w));
        int r = static_cast<int>(top_singular_basis(T).cols());
        for (int i = 0; i < r; ++i) {
            CMat Y = CMat::Zero(r, r);
            Y(i, i) = 1.0;
            out.push_back({{w, Y}});
        }
    }
    return out;
}

inline std::vector<Mat> hinf_sf_generators(const Plant& P, const StaticGain& K) {
    auto res = hinf_sf_cost_full(P, K);
    auto cl = hinf_sf_loop(P, K);
    std::vector<Mat> gens;
    for (const auto& pw : extreme_peak_weights(cl, res.peaks))
        gens.push_back(hinf_sf_subgradient(P, K, pw, res.value));
    return gens;
}

inline Mat hinf_sf_lifted_lmi(const Plant& P, const StaticGain& K, double gamma, const Mat& Pm) {
    const auto n = P.n(), m = P.m(), nw = P.nw();
    const Mat Acl = P.A + P.B * K, Qh = P.Qh(), Rh = P.Rh();
    Mat M = Mat::Zero(2 * n + nw + m, 2 * n + nw + m);
    M.block(0, 0, n, n) = Acl.transpose() * Pm + Pm * Acl;
    M.block(0, n, n, nw) = Pm * P.Bw;
    M.block(0, n + nw, n, n) = Qh;
    M.block(0, 2 * n + nw, n, m) = K.transpose() * Rh;
    M.block(n, n, nw, nw) = -gamma * Mat::Identity(nw, nw);
    M.block(n + nw, n + nw, n, n) = -gamma * Mat::Identity(n, n);
    M.block(2 * n + nw, 2 * n + nw, m, m) = -gamma * Mat::Identity(m, m);
    return sym(M.triangularView<Eigen::Upper>().toDenseMatrix() +
               Mat(M.triangularView<Eigen::StrictlyUpper>().toDenseMatrix()).transpose());
}

inline Mat hinf_sf_convex_lmi(const Plant& P, double gamma, const Mat& Y, const Mat& X) {
    const auto n = P.n(), m = P.m(), nw = P.nw();
    const Mat Qh = P.Qh(), Rh = P.Rh();
    Mat M = Mat::Zero(2 * n + nw + m, 2 * n + nw + m);
    M.block(0, 0, n, n) = P.A * X + P.B * Y + X * P.A.transpose() + Y.transpose() * P.B.transpose();
    M.block(0, n, n, nw) = P.Bw;
    M.block(0, n + nw, n, n) = X * Qh;
    M.block(0, 2 * n + nw, n, m) = Y.transpose() * Rh;
    M.block(n, n, nw, nw) = -gamma * Mat::Identity(nw, nw);
    M.block(n + nw, n + nw, n, n) = -gamma * Mat::Identity(n, n);
    M.block(2 * n + nw, 2 * n + nw, m, m) = -gamma * Mat::Identity(m, m);
    return sym(M.triangularView<Eigen::Upper>().toDenseMatrix() +
               Mat(M.triangularView<Eigen::StrictlyUpper>().toDenseMatrix()).transpose());
}

inline bool hinf_sf_lifted_member(const Plant& P, const HinfSfLiftedPoint& pt, double tol = 1e-8) {
    if (!(min_eig(pt.P) > 0))
        return false;
    Mat L = hinf_sf_lifted_lmi(P, pt.K, pt.gamma, pt.P);
    return max_eig(L) <= tol * std::max(1.0, L.norm());
}

inline bool hinf_sf_convex_member(const Plant& P, const HinfSfConvexPoint& cp, double tol = 1e-8) {
    if (!(min_eig(cp.X) > 0))
        return false;
    Mat L = hinf_sf_convex_lmi(P, cp.gamma, cp.Y, cp.X);
    return max_eig(L) <= tol * std::max(1.0, L.norm());
}

inline HinfSfConvexPoint hinf_sf_phi(const HinfSfLiftedPoint& pt) {
    require_nonsingular_lift(pt.P, "hinf_sf_phi");
    Mat Pi = pt.P.ldlt().solve(Mat::Identity(pt.P.rows(), pt.P.cols()));
    return {pt.gamma, pt.K * Pi, sym(Pi)};
}

inline HinfSfLiftedPoint hinf_sf_psi(const HinfSfConvexPoint& cp) {
    require_nonsingular_lift(cp.X, "hinf_sf_psi");
    Mat K = cp.X.ldlt().solve(cp.Y.transpose()).transpose();
    Mat Xi = cp.X.ldlt().solve(Mat::Identity(cp.X.rows(), cp.X.cols()));
    return {K, cp.gamma, sym(Xi)};
}

// Feasibility SDP for the lifting variable, pinned by min tr(P).
inline HinfSfLiftedPoint hinf_sf_lift(const Plant& P, const StaticGain& K, double gamma) {
    using namespace conic;
    double J = hinf_sf_cost(P, K);
    if (gamma < J * (1.0 - 1e-9))
        throw NotInEpigraph("hinf_sf_lift: gamma " + std::to_string(gamma) + " is below J∞ " + std::to_string(J));
    const int n = static_cast<int>(P.n());
    const int nw = static_cast<int>(P.nw()), m = static_cast<int>(P.m());
    const Mat Acl = P.A + P.B * K, Qh = P.Qh(), Rh = P.Rh();
    Problem pr;
    Affine Pv = pr.add_symmetric("P", n);
    auto cst = [](const Mat& M) { return Affine(M); };
    Affine L = Affine::sym_blocks({{Mat(Acl.transpose()) * Pv + Pv * Acl, Pv * P.Bw, cst(Qh), cst(K.transpose() * Rh)},
                                   {cst(-gamma * Mat::Identity(nw, nw)), Affine(nw, n), Affine(nw, m)},
                                   {cst(-gamma * Mat::Identity(n, n)), Affine(n, m)},
                                   {cst(-gamma * Mat::Identity(m, m))}});
    pr.add_nsd(L, "bounded-real");
    pr.add_psd(Pv, "P", true);
    pr.minimize(Pv.trace());
    auto sol = solve(pr);
    if (sol.status == Status::INFEASIBLE)
        throw NotInEpigraph("hinf_sf_lift: lifted LMI infeasible at gamma " + std::to_string(gamma));
    if (!sol.usable())
        throw SolverFailure(std::string("hinf_sf_lift: conic solver returned ") + to_string(sol.status));
    return {K, gamma, sol.extract("P")};
}

inline conic::Problem hinf_sf_sdp(const Plant& P) {
    using namespace conic;
    P.validate();
    const int n = static_cast<int>(P.n()), m = static_cast<int>(P.m()), nw = static_cast<int>(P.nw());
    const Mat Qh = P.Qh(), Rh = P.Rh();
    Problem pr;
    Affine g = pr.add_scalar("gamma");
    Affine Y = pr.add_matrix("Y", m, n);
    Affine X = pr.add_symmetric("X", n);
    Affine AXBY = P.A * X + P.B * Y;
    Affine L = Affine::sym_blocks({{AXBY.herm(), Affine(P.Bw), X * Qh, Y.transpose() * Rh},
                                   {-scalar_times_identity(g, nw), Affine(nw, n), Affine(nw, m)},
                                   {-scalar_times_identity(g, n), Affine(n, m)},
                                   {-scalar_times_identity(g, m)}});
    pr.add_nsd(L, "bounded-real");
    pr.add_psd(X, "X", true);
    pr.minimize(g);
    return pr;
}

inline StateSolve hinf_sf_solve(const Plant& P, const conic::Options& opt = conic::precise_options()) {
    StateSolve r;
    r.sol = conic::solve(hinf_sf_sdp(P), opt);
    if (!r.sol.usable())
        return r;
    r.gamma = r.sol.extract_scalar("gamma");
    r.Y = r.sol.extract("Y");
    r.X = r.sol.extract("X");
    if (r.sol.status == conic::Status::OPTIMAL && min_eig(r.X) > 1e-12)
        r.K = r.X.ldlt().solve(r.Y.transpose()).transpose();
    return r;
}

// ---------------------------------------------------------------------------
// Nonsmooth descent on J∞ with the minimum-norm generator as search direction.

struct DescentTrace {
    StaticGain K;
    double J = 0;
    std::vector<double> measures;
    double min_measure = std::numeric_limits<double>::infinity();
    bool stationary = false;
    int iterations = 0;
};

inline DescentTrace hinf_sf_descent(const Plant& P, StaticGain K, int max_iter = 200) {
    DescentTrace tr;
    double J = hinf_sf_cost(P, K);
    for (int it = 0; it < max_iter; ++it) {
        auto gens = hinf_sf_generators(P, K);
        Vec w;
        double meas = clarke_stationarity_measure(gens, &w);
        tr.measures.push_back(meas);
        tr.min_measure = std::min(tr.min_measure, meas);
        tr.iterations = it + 1;
        if (is_stationary(meas, J)) {
            tr.stationary = true;
            break;
        }
        Mat d = Mat::Zero(K.rows(), K.cols());
        for (size_t i = 0; i < gens.size(); ++i)
            d -= w(static_cast<Eigen::Index>(i)) * gens[i];
        // Steps are capped relative to the current gain.
        double t = std::min(1.0, 0.5 * (1.0 + K.norm()) / std::max(d.norm(), 1e-300));
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            StaticGain Kn = K + t * d;
            if (!is_hurwitz(P.A + P.B * Kn))
                continue;
            double Jn = hinf_sf_cost(P, Kn);
            if (Jn <= J - 1e-4 * t * meas * meas) {
                K = Kn;
                J = Jn;
                moved = true;
                break;
            }
        }
        if (!moved)
            break;
    }
    tr.K = K;
    tr.J = J;
    return tr;
}

} // namespace ecl
