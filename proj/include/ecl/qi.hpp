#pragma once

#include "ecl/linalg.hpp"

#include <string>
#include <vector>

namespace ecl::qi {

// Finite-horizon plant x_{t+1} = A_t x_t + B_t u_t + w_t, y_t = C_t x_t + v_t stacked over t = 0..N.
struct StackedSystem {
    int N = 0, n = 0, m = 0, p = 0;
    std::vector<Mat> A, B, C;         // A_t, C_t for t = 0..N; B_t for t = 0..N-1
    std::vector<Mat> Sw;              // Σ_{δ0}, Σ_{w_0}, ..., Σ_{w_{N-1}}
    std::vector<Mat> Sv;              // Σ_{v_t}, t = 0..N
    std::vector<Mat> M, R;            // output weights t = 0..N, input weights t = 0..N-1
    Mat Z, Ab, Bb, Cb, P11, P12, Wb, Vb, Mb, Rb;

    Mat G() const { return Cb * P12; }
    // Covariance of the open-loop output ξ = C P11 w + v.
    Mat Sxi() const { return Cb * P11 * Wb * P11.transpose() * Cb.transpose() + Vb; }
};

inline Mat blkdg(const std::vector<Mat>& blocks, Eigen::Index rows_extra = 0) {
    Eigen::Index r = 0, c = 0;
    for (const auto& b : blocks) {
        r += b.rows();
        c += b.cols();
    }
    Mat D = Mat::Zero(r + rows_extra, c);
    r = c = 0;
    for (const auto& b : blocks) {
        D.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return D;
}

inline StackedSystem build_stacked(StackedSystem s) {
    const int N = s.N;
    if (N < 1)
        throw DimensionError("stacked system: horizon must be at least 1");
    if (static_cast<int>(s.A.size()) != N + 1 || static_cast<int>(s.C.size()) != N + 1 ||
        static_cast<int>(s.B.size()) != N || static_cast<int>(s.Sw.size()) != N + 1 ||
        static_cast<int>(s.Sv.size()) != N + 1 || static_cast<int>(s.M.size()) != N + 1 ||
        static_cast<int>(s.R.size()) != N)
        throw DimensionError("stacked system: per-time lists have the wrong length");
    s.n = static_cast<int>(s.A[0].rows());
    s.m = static_cast<int>(s.B[0].cols());
    s.p = static_cast<int>(s.C[0].rows());
    for (int t = 0; t <= N; ++t) {
        if (s.A[t].rows() != s.n || s.A[t].cols() != s.n || s.C[t].rows() != s.p || s.C[t].cols() != s.n)
            throw DimensionError("stacked system: A_t or C_t has the wrong shape at t=" + std::to_string(t));
        if (min_eig(s.M[t]) < -1e-12)
            throw PreconditionError("stacked system: M_t must be positive semidefinite");
        if (min_eig(s.Sv[t]) < -1e-12 || min_eig(s.Sw[t]) < -1e-12)
            throw PreconditionError("stacked system: noise covariances must be positive semidefinite");
    }
    for (int t = 0; t < N; ++t) {
        if (s.B[t].rows() != s.n || s.B[t].cols() != s.m)
            throw DimensionError("stacked system: B_t has the wrong shape at t=" + std::to_string(t));
        if (!(min_eig(s.R[t]) > 0))
            throw PreconditionError("stacked system: R_t must be positive definite");
    }
    const int nx = s.n * (N + 1);
    Mat shift = Mat::Zero(N + 1, N + 1);
    for (int t = 0; t < N; ++t)
        shift(t + 1, t) = 1.0;
    s.Z = kron(shift, Mat::Identity(s.n, s.n));
    s.Ab = blkdg(s.A);
    s.Bb = blkdg(s.B, s.n);
    s.Cb = blkdg(s.C);
    Mat IZA = Mat::Identity(nx, nx) - s.Z * s.Ab;
    s.P11 = IZA.triangularView<Eigen::Lower>().solve(Mat::Identity(nx, nx));
    s.P12 = s.P11 * s.Z * s.Bb;
    s.Wb = blkdg(s.Sw);
    s.Vb = blkdg(s.Sv);
    s.Mb = blkdg(s.M);
    s.Rb = blkdg(s.R);
    return s;
}

inline StackedSystem time_invariant(int N, const Mat& A, const Mat& B, const Mat& C, const Mat& S0, const Mat& Sw,
                                    const Mat& Sv, const Mat& M, const Mat& R) {
    StackedSystem s;
    s.N = N;
    for (int t = 0; t <= N; ++t) {
        s.A.push_back(A);
        s.C.push_back(C);
        s.Sw.push_back(t == 0 ? S0 : Sw);
        s.Sv.push_back(Sv);
        s.M.push_back(M);
    }
    for (int t = 0; t < N; ++t) {
        s.B.push_back(B);
        s.R.push_back(R);
    }
    return build_stacked(s);
}

// Binary mask over the mN x p(N+1) policy; entry (i, j) free iff mask(i, j).
struct SparsityPattern {
    int N = 0, m = 0, p = 0;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;

    Eigen::Index rows() const { return mask.rows(); }
    Eigen::Index cols() const { return mask.cols(); }

    std::vector<std::pair<int, int>> basis() const {
        std::vector<std::pair<int, int>> out;
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
            for (Eigen::Index i = 0; i < mask.rows(); ++i)
                if (mask(i, j))
                    out.emplace_back(static_cast<int>(i), static_cast<int>(j));
        return out;
    }

    bool contains(const Mat& K, double tol = 0.0) const {
        if (K.rows() != mask.rows() || K.cols() != mask.cols())
            return false;
        for (Eigen::Index i = 0; i < K.rows(); ++i)
            for (Eigen::Index j = 0; j < K.cols(); ++j)
                if (!mask(i, j) && std::abs(K(i, j)) > tol)
                    return false;
        return true;
    }

    Mat project(const Mat& K) const {
        Mat P = K;
        for (Eigen::Index i = 0; i < K.rows(); ++i)
            for (Eigen::Index j = 0; j < K.cols(); ++j)
                if (!mask(i, j))
                    P(i, j) = 0.0;
        return P;
    }

    // Block (t, i) allowed entries; throws if any future-output entry is set.
    void validate_causal() const {
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
            for (Eigen::Index c = 0; c < mask.cols(); ++c)
                if (mask(r, c) && c / p > r / m)
                    throw PreconditionError("sparsity pattern: entry (" + std::to_string(r) + "," +
                                            std::to_string(c) + ") uses a future output");
    }

    static SparsityPattern empty(int N, int m, int p) {
        SparsityPattern s{N, m, p, {}};
        s.mask.setConstant(m * N, p * (N + 1), false);
        return s;
    }

    static SparsityPattern centralized(int N, int m, int p) {
        auto s = empty(N, m, p);
        for (int t = 0; t < N; ++t)
            for (int i = 0; i <= t; ++i)
                s.mask.block(t * m, i * p, m, p).setConstant(true);
        return s;
    }

    // Causal blocks (t, i) with a per-block entry mask.
    static SparsityPattern from_blocks(int N, int m, int p,
                                       const std::vector<std::tuple<int, int, Eigen::Matrix<bool, -1, -1>>>& blocks) {
        auto s = empty(N, m, p);
        for (const auto& [t, i, b] : blocks) {
            if (t < 0 || t >= N || i < 0 || i > N || b.rows() != m || b.cols() != p)
                throw DimensionError("sparsity pattern: block index or shape out of range");
            s.mask.block(t * m, i * p, m, p) = b;
        }
        s.validate_causal();
        return s;
    }
};

// Quadratic invariance of a binary pattern: for masked (i,j), (k,l) with G(j,k) ≠ 0, (i,l) must be masked.
inline bool qi_check(const SparsityPattern& S, const Mat& G, double tol = 0.0) {
    if (G.rows() != S.cols() || G.cols() != S.rows())
        throw DimensionError("qi_check: G must be p(N+1) x mN");
    const auto bas = S.basis();
    for (const auto& [i, j] : bas)
        for (const auto& [k, l] : bas)
            if (std::abs(G(j, k)) > tol && !S.mask(i, l))
                return false;
    return true;
}

// General subspace version by polarization: E_a G E_b + E_b G E_a ∈ span{E} for every basis pair.
inline bool qi_check_subspace(const std::vector<Mat>& basis, const Mat& G, double tol = 1e-10) {
    if (basis.empty())
        return true;
    const auto r = basis[0].rows(), c = basis[0].cols();
    Mat Bm(r * c, static_cast<Eigen::Index>(basis.size()));
    for (size_t a = 0; a < basis.size(); ++a)
        Bm.col(static_cast<Eigen::Index>(a)) = Eigen::Map<const Vec>(basis[a].data(), r * c);
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(Bm);
    auto outside = [&](const Mat& X) {
        Vec v = Eigen::Map<const Vec>(X.data(), X.size());
        Vec res = v - Bm * cod.solve(v);
        return res.norm() > tol * std::max(1.0, v.norm());
    };
    for (size_t a = 0; a < basis.size(); ++a)
        for (size_t b = a; b < basis.size(); ++b)
            if (outside(basis[a] * G * basis[b] + basis[b] * G * basis[a]))
                return false;
    return true;
}

inline std::vector<Mat> pattern_basis_matrices(const SparsityPattern& S) {
    std::vector<Mat> out;
    for (const auto& [i, j] : S.basis()) {
        Mat E = Mat::Zero(S.rows(), S.cols());
        E(i, j) = 1.0;
        out.push_back(E);
    }
    return out;
}

// ℋ(Q) = (I + QG)⁻¹Q and ℋ⁻¹(K) = K(I − GK)⁻¹ with G = C P12.
inline Mat h_map(const Mat& Q, const Mat& G) {
    const auto k = Q.rows();
    Eigen::FullPivLU<Mat> lu(Mat::Identity(k, k) + Q * G);
    if (!lu.isInvertible())
        throw NoUniqueSolution("h_map: I + QG is singular");
    return lu.solve(Q);
}

inline Mat h_inv(const Mat& K, const Mat& G) {
    const auto k = G.rows();
    Eigen::FullPivLU<Mat> lu((Mat::Identity(k, k) - G * K).transpose());
    if (!lu.isInvertible())
        throw NoUniqueSolution("h_inv: I - GK is singular");
    return lu.solve(K.transpose()).transpose();
}

inline void require_shape(const StackedSystem& s, const Mat& K, const char* who) {
    if (K.rows() != s.m * s.N || K.cols() != s.p * (s.N + 1))
        throw DimensionError(std::string(who) + ": policy must be mN x p(N+1)");
}

// Closed loop y = (I − GK)⁻¹ξ, u = Ky; expected cost from second moments.
inline double cost_k(const StackedSystem& s, const Mat& K) {
    require_shape(s, K, "cost_k");
    const Mat G = s.G();
    const auto k = G.rows();
    Mat F = (Mat::Identity(k, k) - G * K).fullPivLu().solve(Mat::Identity(k, k));
    Mat Sy = F * s.Sxi() * F.transpose();
    return (s.Mb * Sy).trace() + (s.Rb * K * Sy * K.transpose()).trace();
}

inline double cost_k(const StackedSystem& s, const Mat& K, const SparsityPattern& S) {
    if (!S.contains(K))
        throw PreconditionError("cost_k: policy violates the sparsity pattern");
    return cost_k(s, K);
}

// u = Qξ, y = (I + GQ)ξ.
inline double cost_q(const StackedSystem& s, const Mat& Q) {
    require_shape(s, Q, "cost_q");
    const Mat G = s.G();
    Mat Y = Mat::Identity(G.rows(), G.rows()) + G * Q;
    Mat Sx = s.Sxi();
    return (Y.transpose() * s.Mb * Y * Sx).trace() + (Q.transpose() * s.Rb * Q * Sx).trace();
}

inline Mat cost_q_grad(const StackedSystem& s, const Mat& Q) {
    const Mat G = s.G();
    Mat Sx = s.Sxi();
    Mat L = G.transpose() * s.Mb * G + s.Rb;
    return 2.0 * (G.transpose() * s.Mb * Sx + L * Q * Sx);
}

// dQ = (I + QG) dK (I − GK)⁻¹, so ∇_K J = (I + QG)ᵀ ∇_Q g (I − GK)⁻ᵀ.
inline Mat cost_k_grad(const StackedSystem& s, const Mat& K) {
    const Mat G = s.G();
    const auto k = G.rows();
    Mat F = (Mat::Identity(k, k) - G * K).fullPivLu().solve(Mat::Identity(k, k));
    Mat Q = K * F;
    Mat left = Mat::Identity(Q.rows(), Q.rows()) + Q * G;
    return left.transpose() * cost_q_grad(s, Q) * F.transpose();
}

struct DistributedSolution {
    Mat Q, K;
    double J = 0;
    std::string note;
};

// min over Q ∈ S of the convex quadratic g(Q); normal equations on the mask coordinates.
inline DistributedSolution solve_distributed(const StackedSystem& s, const SparsityPattern& S) {
    const Mat G = s.G();
    if (S.rows() != s.m * s.N || S.cols() != s.p * (s.N + 1))
        throw DimensionError("solve_distributed: pattern shape does not match the stacked system");
    S.validate_causal();
    if (!qi_check(S, G))
        throw PreconditionError("solve_distributed: pattern is not quadratically invariant under C P12");
    const auto bas = S.basis();
    const auto q = static_cast<Eigen::Index>(bas.size());
    DistributedSolution out;
    out.Q = Mat::Zero(S.rows(), S.cols());
    if (q > 0) {
        Mat Sx = s.Sxi();
        Mat L = G.transpose() * s.Mb * G + s.Rb;
        Mat lin = G.transpose() * s.Mb * Sx;
        Mat H(q, q);
        Vec rhs(q);
        for (Eigen::Index a = 0; a < q; ++a) {
            rhs(a) = -lin(bas[a].first, bas[a].second);
            for (Eigen::Index b = 0; b < q; ++b)
                H(a, b) = L(bas[a].first, bas[b].first) * Sx(bas[b].second, bas[a].second);
        }
        H = sym(H);
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(H);
        cod.setThreshold(1e-12);
        if (cod.rank() < q)
            out.note = "normal equations are rank deficient; minimum-norm solution returned";
        Vec z = cod.solve(rhs);
        for (Eigen::Index a = 0; a < q; ++a)
            out.Q(bas[a].first, bas[a].second) = z(a);
    }
    out.K = h_map(out.Q, G);
    out.J = cost_q(s, out.Q);
    return out;
}

// Centralized finite-horizon LQG by backward Riccati and forward Kalman recursions.
inline double dp_lqg_cost(const StackedSystem& s) {
    const int N = s.N;
    std::vector<Mat> S(N + 1), L(N), Rs(N);
    S[N] = s.C[N].transpose() * s.M[N] * s.C[N];
    for (int t = N - 1; t >= 0; --t) {
        Rs[t] = s.R[t] + s.B[t].transpose() * S[t + 1] * s.B[t];
        L[t] = Rs[t].ldlt().solve(s.B[t].transpose() * S[t + 1] * s.A[t]);
        S[t] = s.C[t].transpose() * s.M[t] * s.C[t] + s.A[t].transpose() * S[t + 1] * s.A[t] -
               s.A[t].transpose() * S[t + 1] * s.B[t] * L[t];
    }
    double J = (S[0] * s.Sw[0]).trace();
    for (int t = 0; t < N; ++t)
        J += (S[t + 1] * s.Sw[t + 1]).trace();
    for (int t = 0; t <= N; ++t)
        J += (s.M[t] * s.Sv[t]).trace();
    Mat prior = s.Sw[0];
    for (int t = 0; t < N; ++t) {
        Mat Sc = s.C[t] * prior * s.C[t].transpose() + s.Sv[t];
        Mat post = prior - prior * s.C[t].transpose() * Sc.completeOrthogonalDecomposition().solve(s.C[t] * prior);
        J += (L[t].transpose() * Rs[t] * L[t] * post).trace();
        prior = s.A[t] * post * s.A[t].transpose() + s.Sw[t + 1];
    }
    return J;
}

} // namespace ecl::qi
