#pragma once

#include "ecl/linalg.hpp"

#include <cmath>
#include <complex>
#include <string>

namespace ecl {

// Static state feedback data: ẋ = Ax + Bu + Bw w, z = [Q^{1/2}x; R^{1/2}u].
struct Plant {
    Mat A, B, Bw, Q, R;

    Eigen::Index n() const { return A.rows(); }
    Eigen::Index m() const { return B.cols(); }
    Eigen::Index nw() const { return Bw.cols(); }
    Mat W() const { return Bw * Bw.transpose(); }
    Mat Qh() const { return sqrtm_psd(Q); }
    Mat Rh() const { return sqrtm_psd(R); }

    bool controllable() const { return is_controllable(A, B); }
    bool bw_full_row_rank() const { return numerical_rank(Bw) == n(); }

    void validate() const {
        const auto n_ = A.rows();
        if (A.cols() != n_)
            throw DimensionError("plant: A must be square");
        if (B.rows() != n_)
            throw DimensionError("plant: B must have n rows");
        if (Bw.rows() != n_)
            throw DimensionError("plant: Bw must have n rows");
        if (Q.rows() != n_ || Q.cols() != n_)
            throw DimensionError("plant: Q must be n x n");
        if (R.rows() != B.cols() || R.cols() != B.cols())
            throw DimensionError("plant: R must be m x m");
        if ((Q - Q.transpose()).norm() > 1e-12 * (1 + Q.norm()))
            throw PreconditionError("plant: Q must be symmetric");
        if ((R - R.transpose()).norm() > 1e-12 * (1 + R.norm()))
            throw PreconditionError("plant: R must be symmetric");
        if (min_eig(Q) < -1e-12)
            throw PreconditionError("plant: Q must be positive semidefinite");
        if (B.cols() > 0 && min_eig(R) <= 0)
            throw PreconditionError("plant: R must be positive definite");
    }
};

// Output feedback data; the derived matrices follow the unified LQG/H∞ layout.
struct OutputPlant {
    Mat A, B2, C2, W, V, Q, R;

    Eigen::Index n() const { return A.rows(); }
    Eigen::Index m() const { return B2.cols(); }
    Eigen::Index p() const { return C2.rows(); }

    Mat Wh() const { return sqrtm_psd(W); }
    Mat Vh() const { return sqrtm_psd(V); }
    Mat Qh() const { return sqrtm_psd(Q); }
    Mat Rh() const { return sqrtm_psd(R); }

    Mat B1() const {
        Mat M = Mat::Zero(n(), n() + p());
        M.leftCols(n()) = Wh();
        return M;
    }
    Mat C1() const {
        Mat M = Mat::Zero(n() + m(), n());
        M.topRows(n()) = Qh();
        return M;
    }
    Mat D12() const {
        Mat M = Mat::Zero(n() + m(), m());
        M.bottomRows(m()) = Rh();
        return M;
    }
    Mat D21() const {
        Mat M = Mat::Zero(p(), n() + p());
        M.rightCols(p()) = Vh();
        return M;
    }

    void validate() const {
        const auto n_ = A.rows();
        if (A.cols() != n_)
            throw DimensionError("output plant: A must be square");
        if (B2.rows() != n_)
            throw DimensionError("output plant: B2 must have n rows");
        if (C2.cols() != n_)
            throw DimensionError("output plant: C2 must have n columns");
        if (W.rows() != n_ || W.cols() != n_ || Q.rows() != n_ || Q.cols() != n_)
            throw DimensionError("output plant: W and Q must be n x n");
        if (V.rows() != C2.rows() || V.cols() != C2.rows())
            throw DimensionError("output plant: V must be p x p");
        if (R.rows() != B2.cols() || R.cols() != B2.cols())
            throw DimensionError("output plant: R must be m x m");
        if (min_eig(W) < -1e-12 || min_eig(Q) < -1e-12)
            throw PreconditionError("output plant: W and Q must be positive semidefinite");
        if (min_eig(V) <= 0)
            throw PreconditionError("output plant: V must be positive definite");
        if (min_eig(R) <= 0)
            throw PreconditionError("output plant: R must be positive definite");
    }

    // (A,W^{1/2}) and (A,B2) controllable, (Q^{1/2},A) and (C2,A) observable, plus W,V,R weights.
    bool standing_assumptions_hold() const {
        return min_eig(V) > 0 && min_eig(R) > 0 && is_controllable(A, Wh()) && is_observable(A, Qh()) &&
               is_controllable(A, B2) && is_observable(A, C2);
    }
};

using StaticGain = Mat;

struct DynamicPolicy {
    Mat DK, CK, BK, AK;

    Eigen::Index m() const { return CK.rows(); }
    Eigen::Index n() const { return AK.rows(); }
    Eigen::Index p() const { return BK.cols(); }
    bool strictly_proper() const { return DK.size() == 0 || DK.isZero(0.0); }

    static DynamicPolicy zeros(Eigen::Index n, Eigen::Index m, Eigen::Index p) {
        return {Mat::Zero(m, p), Mat::Zero(m, n), Mat::Zero(n, p), Mat::Zero(n, n)};
    }

    // 𝖪 = [[DK, CK], [BK, AK]].
    Mat packed() const {
        Mat K(m() + n(), p() + n());
        K << DK, CK, BK, AK;
        return K;
    }

    static DynamicPolicy unpack(const Mat& K, Eigen::Index n, Eigen::Index m, Eigen::Index p) {
        if (K.rows() != m + n || K.cols() != p + n)
            throw DimensionError("dynamic policy: packed matrix has wrong shape");
        return {K.topLeftCorner(m, p), K.topRightCorner(m, n), K.bottomLeftCorner(n, p),
                K.bottomRightCorner(n, n)};
    }

    DynamicPolicy similarity(const Mat& S) const {
        Eigen::FullPivLU<Mat> lu(S);
        Mat Si = lu.inverse();
        return {DK, CK * Si, S * BK, S * AK * Si};
    }
};

struct ClosedLoop {
    Mat Acl, Bcl, Ccl, Dcl;
};

inline ClosedLoop assemble_closed_loop(const OutputPlant& P, const DynamicPolicy& K) {
    const auto n = P.n(), m = P.m(), p = P.p();
    if (K.AK.rows() != n || K.AK.cols() != n || K.BK.rows() != n || K.BK.cols() != p || K.CK.rows() != m ||
        K.CK.cols() != n || K.DK.rows() != m || K.DK.cols() != p)
        throw DimensionError("assemble_closed_loop: policy dimensions do not match plant");
    const Mat Wh = P.Wh(), Vh = P.Vh(), Qh = P.Qh(), Rh = P.Rh();
    ClosedLoop cl;
    cl.Acl.resize(2 * n, 2 * n);
    cl.Acl << P.A + P.B2 * K.DK * P.C2, P.B2 * K.CK, K.BK * P.C2, K.AK;
    cl.Bcl.resize(2 * n, n + p);
    cl.Bcl << Wh, P.B2 * K.DK * Vh, Mat::Zero(n, n), K.BK * Vh;
    cl.Ccl.resize(n + m, 2 * n);
    cl.Ccl << Qh, Mat::Zero(n, n), Rh * K.DK * P.C2, Rh * K.CK;
    cl.Dcl = Mat::Zero(n + m, n + p);
    cl.Dcl.bottomRightCorner(m, p) = Rh * K.DK * Vh;
    return cl;
}

inline ClosedLoop assemble_closed_loop(const Plant& P, const StaticGain& K) {
    const auto n = P.n(), m = P.m();
    if (K.rows() != m || K.cols() != n)
        throw DimensionError("assemble_closed_loop: K must be m x n");
    ClosedLoop cl;
    cl.Acl = P.A + P.B * K;
    cl.Bcl = P.Bw;
    cl.Ccl.resize(n + m, n);
    cl.Ccl << P.Qh(), P.Rh() * K;
    cl.Dcl = Mat::Zero(n + m, P.nw());
    return cl;
}

inline bool is_infinite(cdouble s) { return std::isinf(s.real()) || std::isinf(s.imag()); }

inline CMat resolvent(const Mat& A, cdouble s) {
    const auto n = A.rows();
    CMat M = s * CMat::Identity(n, n) - A.cast<cdouble>();
    Eigen::PartialPivLU<CMat> lu(M);
    Eigen::JacobiSVD<CMat> svd(M);
    if (n > 0) {
        const auto& sv = svd.singularValues();
        if (!(sv(n - 1) > 1e-13 * std::max(1.0, sv(0))))
            throw NoUniqueSolution("tzw_at: sI - A is singular (pole on the evaluation point)");
    }
    return lu.inverse();
}

inline CMat tzw_at(const ClosedLoop& cl, cdouble s) {
    if (is_infinite(s))
        return cl.Dcl.cast<cdouble>();
    return cl.Ccl.cast<cdouble>() * resolvent(cl.Acl, s) * cl.Bcl.cast<cdouble>() + cl.Dcl.cast<cdouble>();
}

inline CMat tzw_at(const Plant& P, const StaticGain& K, cdouble s) {
    return tzw_at(assemble_closed_loop(P, K), s);
}

inline CMat tzw_at(const OutputPlant& P, const DynamicPolicy& K, cdouble s) {
    return tzw_at(assemble_closed_loop(P, K), s);
}

} // namespace ecl
