#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using cdouble = std::complex<double>;

// Symmetric matrices share the dense carrier; callers symmetrize on write.
using SymMat = Eigen::MatrixXd;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// Lyapunov/Riccati/closed-loop failures that mean "cost is infinite" or "no solution".
class NoUniqueSolution : public Error {
public:
    using Error::Error;
};

class RiccatiFailure : public Error {
public:
    using Error::Error;
};

class NotStabilizing : public Error {
public:
    using Error::Error;
};

class NotInEpigraph : public Error {
public:
    using Error::Error;
};

class Degenerate : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

inline constexpr double kEigTol = 1e-10;

inline void require_square(const Mat& A, const char* who) {
    if (A.rows() != A.cols())
        throw DimensionError(std::string(who) + ": matrix must be square, got " +
                             std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
}

inline Mat sym(const Mat& M) { return 0.5 * (M + M.transpose()); }

inline std::vector<double> eig_real_parts(const Mat& A) {
    require_square(A, "eig_real_parts");
    std::vector<double> out;
    if (A.rows() == 0)
        return out;
    Eigen::EigenSolver<Mat> es(A, false);
    out.reserve(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        out.push_back(es.eigenvalues()(i).real());
    return out;
}

inline double spectral_abscissa(const Mat& A) {
    auto re = eig_real_parts(A);
    double m = -std::numeric_limits<double>::infinity();
    for (double r : re)
        m = std::max(m, r);
    return m;
}

// Every eigenvalue real part < -margin, with a 1e-10 guard band so marginal spectra count as unstable.
inline bool is_hurwitz(const Mat& A, double margin = 0.0, double tol = kEigTol) {
    require_square(A, "is_hurwitz");
    if (A.rows() == 0)
        return true;
    return spectral_abscissa(A) < -margin - tol;
}

inline double min_eig(const Mat& M) {
    if (M.rows() == 0)
        return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline double max_eig(const Mat& M) {
    if (M.rows() == 0)
        return -std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(M), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(M.rows() - 1);
}

inline double norm2(const Mat& M) {
    if (M.size() == 0)
        return 0.0;
    Eigen::JacobiSVD<Mat> svd(M);
    return svd.singularValues()(0);
}

inline double sigma_min(const Mat& M) {
    if (M.size() == 0)
        return std::numeric_limits<double>::infinity();
    Eigen::JacobiSVD<Mat> svd(M);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

enum class Definiteness { PD, PSD, INDEFINITE };

inline const char* to_string(Definiteness d) {
    switch (d) {
    case Definiteness::PD: return "PD";
    case Definiteness::PSD: return "PSD";
    default: return "INDEFINITE";
    }
}

inline Definiteness schur_psd_check(const Mat& M, double tol = 1e-10) {
    require_square(M, "schur_psd_check");
    double l = min_eig(M);
    if (l > tol)
        return Definiteness::PD;
    if (l >= -tol)
        return Definiteness::PSD;
    return Definiteness::INDEFINITE;
}

// Symmetric PSD square root; eigenvalues below 1e-12 are clipped to zero.
inline Mat sqrtm_psd(const Mat& M) {
    require_square(M, "sqrtm_psd");
    if (M.rows() == 0)
        return M;
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(M));
    Vec d = es.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i)
        d(i) = d(i) < 1e-12 ? 0.0 : std::sqrt(d(i));
    return sym(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

inline Mat kron(const Mat& A, const Mat& B) {
    Mat K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

inline int numerical_rank(const Mat& M, double rtol = 1e-10) {
    if (M.size() == 0)
        return 0;
    Eigen::JacobiSVD<Mat> svd(M);
    const Vec& s = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > rtol * std::max(1.0, s(0)))
            ++r;
    return r;
}

inline bool is_controllable(const Mat& A, const Mat& B, double rtol = 1e-10) {
    const Eigen::Index n = A.rows();
    if (n == 0)
        return true;
    Mat C(n, n * B.cols());
    Mat blk = B;
    for (Eigen::Index k = 0; k < n; ++k) {
        C.block(0, k * B.cols(), n, B.cols()) = blk;
        blk = A * blk;
    }
    return numerical_rank(C, rtol) == n;
}

inline bool is_observable(const Mat& A, const Mat& C, double rtol = 1e-10) {
    return is_controllable(A.transpose(), C.transpose(), rtol);
}

// A X + X Aᵀ + Q = 0 via (I⊗A + A⊗I) vec(X) = -vec(Q).
inline SymMat solve_lyapunov_ct(const Mat& A, const Mat& Q) {
    require_square(A, "solve_lyapunov_ct");
    require_square(Q, "solve_lyapunov_ct");
    if (A.rows() != Q.rows())
        throw DimensionError("solve_lyapunov_ct: A and Q sizes differ");
    const Eigen::Index n = A.rows();
    if (n == 0)
        return Mat(0, 0);
    if (!is_hurwitz(A, 0.0))
        throw NoUniqueSolution("solve_lyapunov_ct: A is not Hurwitz, no unique solution");
    Mat I = Mat::Identity(n, n);
    Mat L = kron(I, A) + kron(A, I);
    Vec q = Eigen::Map<const Vec>(Q.data(), n * n);
    Vec x = L.partialPivLu().solve(-q);
    Mat X = Eigen::Map<Mat>(x.data(), n, n);
    return sym(X);
}

inline double lyapunov_residual(const Mat& A, const Mat& X, const Mat& Q) {
    return (A * X + X * A.transpose() + Q).norm();
}

namespace detail {
inline lapack_logical select_stable(const double* wr, const double*) { return *wr < 0.0 ? 1 : 0; }
} // namespace detail

inline double riccati_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P) {
    Mat G = B * R.ldlt().solve(B.transpose());
    Mat res = A.transpose() * P + P * A + Q - P * G * P;
    double scale = 1.0 + Q.norm() + 2.0 * (A.transpose() * P).norm() + (P * G * P).norm();
    return res.norm() / scale;
}

// Stabilizing solution of AᵀP + PA + Q − PBR⁻¹BᵀP = 0.
inline SymMat solve_riccati_ct(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
    require_square(A, "solve_riccati_ct");
    const Eigen::Index n = A.rows();
    if (B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() || R.cols() != B.cols())
        throw DimensionError("solve_riccati_ct: inconsistent dimensions");
    if (n == 0)
        return Mat(0, 0);
    Eigen::LDLT<Mat> Rf(sym(R));
    if (Rf.info() != Eigen::Success || min_eig(R) <= 0)
        throw RiccatiFailure("solve_riccati_ct: R must be positive definite");
    Mat G = B * Rf.solve(B.transpose());

    Mat H(2 * n, 2 * n);
    H << A, -G, -sym(Q), -A.transpose();
    lapack_int N = static_cast<lapack_int>(2 * n);
    lapack_int sdim = 0;
    Vec wr(2 * n), wi(2 * n);
    Mat U(2 * n, 2 * n);
    Mat T = H;
    lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'S', detail::select_stable, N, T.data(), N, &sdim,
                                    wr.data(), wi.data(), U.data(), N);
    Mat P;
    bool schur_ok = info == 0 && sdim == n;
    if (schur_ok) {
        Mat U11 = U.topLeftCorner(n, n);
        Mat U21 = U.bottomLeftCorner(n, n);
        Eigen::FullPivLU<Mat> lu(U11);
        if (lu.rank() < n) {
            schur_ok = false;
        } else {
            P = sym(U21 * lu.inverse());
        }
    }

    Mat K0;
    if (schur_ok) {
        K0 = Rf.solve(B.transpose() * P);
    } else if (is_hurwitz(A)) {
        K0 = Mat::Zero(B.cols(), n);
    } else {
        throw RiccatiFailure("solve_riccati_ct: stable invariant subspace not found (dgees info=" +
                             std::to_string(info) + ", sdim=" + std::to_string(sdim) + ", n=" +
                             std::to_string(n) + ")");
    }

    // Newton–Kleinman refinement; also the fallback path when ordering fails.
    int steps = schur_ok ? 3 : 60;
    Mat K = K0;
    for (int it = 0; it < steps; ++it) {
        Mat Acl = A - B * K;
        if (!is_hurwitz(Acl))
            break;
        Mat Pn = solve_lyapunov_ct(Acl.transpose(), sym(Q) + K.transpose() * R * K);
        if (P.size() > 0 && (Pn - P).norm() <= 1e-15 * (1.0 + P.norm())) {
            P = Pn;
            break;
        }
        P = Pn;
        K = Rf.solve(B.transpose() * P);
    }
    if (P.size() == 0)
        throw RiccatiFailure("solve_riccati_ct: Newton fallback did not produce a solution");
    if (!is_hurwitz(A - G * P))
        throw RiccatiFailure("solve_riccati_ct: solution is not stabilizing");
    double res = riccati_residual(A, B, Q, R, P);
    if (!(res <= 1e-9))
        throw RiccatiFailure("solve_riccati_ct: residual " + std::to_string(res) + " exceeds 1e-9");
    return P;
}

} // namespace ecl
