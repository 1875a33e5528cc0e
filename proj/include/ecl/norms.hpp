#pragma once

#include "ecl/conic.hpp"
#include "ecl/linalg.hpp"
#include "ecl/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace ecl {

class SolverFailure : public Error {
public:
    using Error::Error;
};

// ‖C(sI−A)⁻¹B‖²_H2 through the controllability Gramian.
inline double h2_norm_sq(const Mat& A, const Mat& B, const Mat& C) {
    if (!is_hurwitz(A))
        throw NotStabilizing("h2_norm_sq: A is not Hurwitz, the norm is infinite");
    Mat Lc = solve_lyapunov_ct(A, B * B.transpose());
    return std::max(0.0, (C * Lc * C.transpose()).trace());
}

// Same quantity through the observability Gramian, tr(Bᵀ L_o B).
inline double h2_norm_sq_dual(const Mat& A, const Mat& B, const Mat& C) {
    if (!is_hurwitz(A))
        throw NotStabilizing("h2_norm_sq_dual: A is not Hurwitz, the norm is infinite");
    Mat Lo = solve_lyapunov_ct(A.transpose(), C.transpose() * C);
    return std::max(0.0, (B.transpose() * Lo * B).trace());
}

inline double sigma_max_at(const Mat& A, const Mat& B, const Mat& C, const Mat& D, double w) {
    CMat G;
    if (std::isinf(w)) {
        G = D.cast<cdouble>();
    } else {
        const auto n = A.rows();
        CMat M = cdouble(0, w) * CMat::Identity(n, n) - A.cast<cdouble>();
        G = C.cast<cdouble>() * M.partialPivLu().solve(B.cast<cdouble>()) + D.cast<cdouble>();
    }
    if (G.size() == 0)
        return 0.0;
    Eigen::JacobiSVD<CMat> svd(G);
    return svd.singularValues()(0);
}

// Nonnegative frequencies where the level-γ Hamiltonian has imaginary-axis eigenvalues.
inline std::vector<double> hamiltonian_crossings(const Mat& A, const Mat& B, const Mat& C, const Mat& D,
                                                 double gamma) {
    const auto n = A.rows();
    const auto m = B.cols();
    Mat R = gamma * gamma * Mat::Identity(m, m) - D.transpose() * D;
    Eigen::LDLT<Mat> Rf(R);
    Mat Ae = A + B * Rf.solve(D.transpose() * C);
    Mat H(2 * n, 2 * n);
    Mat Dp = D.rows() > 0 ? Mat(Mat::Identity(D.rows(), D.rows()) + D * Rf.solve(D.transpose()))
                          : Mat(0, 0);
    H << Ae, B * Rf.solve(B.transpose()), -C.transpose() * Dp * C, -Ae.transpose();
    Eigen::EigenSolver<Mat> es(H, false);
    double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    std::vector<double> out;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        cdouble l = es.eigenvalues()(i);
        if (std::abs(l.real()) <= 1e-8 * scale * std::max(1.0, std::abs(l)) && l.imag() >= 0)
            out.push_back(l.imag());
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct HinfResult {
    double value = 0;   // attained at a frequency, so a lower bound on the norm
    double upper = 0;   // certified upper bound (no imaginary-axis crossing above it)
    std::vector<double> peaks; // ω ≥ 0 attaining the norm; +inf for the feedthrough limit
    bool lmi_certified = false;
};

struct HinfOptions {
    double rel_tol = 1e-8;
    double peak_tol = 1e-6; // relative level for a frequency to count as attaining the norm
    bool lmi_certify = false;
};

namespace detail {

// Golden-section maximization of σ_max on [a, b].
inline std::pair<double, double> refine_peak(const Mat& A, const Mat& B, const Mat& C, const Mat& D, double a,
                                             double b) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    auto f = [&](double w) { return sigma_max_at(A, B, C, D, w); };
    double x1 = b - r * (b - a), x2 = a + r * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 200 && (b - a) > 1e-14 * std::max(1.0, std::abs(b)); ++it) {
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    double best = f1 >= f2 ? x1 : x2, fb = std::max(f1, f2);
    double fa = f(a), fbb = f(b);
    if (fa > fb) {
        best = a;
        fb = fa;
    }
    if (fbb > fb) {
        best = b;
        fb = fbb;
    }
    return {best, fb};
}

} // namespace detail

inline std::optional<Mat> bounded_real_certificate(const Mat& A, const Mat& B, const Mat& C, const Mat& D,
                                                   double gamma, bool strict);

inline HinfResult hinf_norm_full(const Mat& A, const Mat& B, const Mat& C, const Mat& D,
                                 const HinfOptions& opt = {}) {
    if (A.rows() != A.cols() || B.rows() != A.rows() || C.cols() != A.rows() || D.rows() != C.rows() ||
        D.cols() != B.cols())
        throw DimensionError("hinf_norm: inconsistent dimensions");
    if (!is_hurwitz(A))
        throw NotStabilizing("hinf_norm: A is not Hurwitz, the norm is infinite");
    HinfResult res;
    const double inf = std::numeric_limits<double>::infinity();
    double dnorm = D.size() ? norm2(D) : 0.0;
    auto sig = [&](double w) { return sigma_max_at(A, B, C, D, w); };

    // Initial lower bound from ω = 0, ∞ and the pole frequencies.
    double lb = dnorm, wlb = inf;
    std::vector<double> cands{0.0};
    if (A.rows() > 0) {
        Eigen::EigenSolver<Mat> es(A, false);
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
            cands.push_back(std::abs(es.eigenvalues()(i)));
    }
    for (double w : cands) {
        double s = sig(w);
        if (s > lb) {
            lb = s;
            wlb = w;
        }
    }
    if (A.rows() == 0 || lb == 0.0 || (B.size() == 0 || C.size() == 0)) {
        res.value = res.upper = lb;
        if (lb > 0)
            res.peaks.push_back(wlb);
        return res;
    }

    double ub = inf;
    for (int it = 0; it < 200; ++it) {
        double g = lb * (1.0 + 2.0 * opt.rel_tol);
        if (g <= dnorm * (1.0 + 1e-14)) {
            ub = g;
            break;
        }
        auto ws = hamiltonian_crossings(A, B, C, D, g);
        if (ws.empty()) {
            ub = g;
            break;
        }
        // Level-set midpoints.
        std::vector<double> pts = ws;
        pts.insert(pts.begin(), 0.0);
        double newlb = lb, neww = wlb;
        for (size_t k = 0; k + 1 < pts.size(); ++k) {
            double mid = 0.5 * (pts[k] + pts[k + 1]);
            double s = sig(mid);
            if (s > newlb) {
                newlb = s;
                neww = mid;
            }
        }
        for (double w : ws) {
            double s = sig(w);
            if (s > newlb) {
                newlb = s;
                neww = w;
            }
        }
        if (newlb <= lb * (1.0 + 0.5 * opt.rel_tol)) {
            // Crossings are numerical ghosts near the peak; polish locally and stop.
            for (size_t k = 0; k + 1 < pts.size(); ++k) {
                auto [w, s] = detail::refine_peak(A, B, C, D, pts[k], pts[k + 1]);
                if (s > lb) {
                    lb = s;
                    wlb = w;
                }
            }
            ub = lb * (1.0 + 2.0 * opt.rel_tol);
            break;
        }
        lb = newlb;
        wlb = neww;
    }
    if (!std::isfinite(ub))
        throw SolverFailure("hinf_norm: gamma bracket did not close");
    res.value = lb;
    res.upper = ub;

    // Peak extraction at a level just below the norm.
    double level = lb * (1.0 - 10.0 * opt.rel_tol);
    std::vector<double> peaks;
    // Flat stretches of the response carry a continuum of peaks; sample them log-uniformly.
    // A sample counts only if it matches the norm to rounding, so a broad smooth maximum stays one peak.
    auto sample_flat = [&](double a, double b) {
        const int k = 8;
        double lo = std::max(a, 1e-6 * std::max(1.0, b)), hi = b;
        for (int i = 1; i < k; ++i) {
            double w = lo * std::pow(hi / lo, double(i) / k);
            if (sig(w) >= std::max(res.value, dnorm) * (1.0 - 1e-12))
                peaks.push_back(w);
        }
    };
    if (level > dnorm * (1.0 + 1e-14)) {
        auto ws = hamiltonian_crossings(A, B, C, D, level);
        std::vector<double> pts{0.0};
        for (double w : ws)
            if (w - pts.back() > 1e-8 * std::max(1.0, w))
                pts.push_back(w);
        for (size_t k = 0; k + 1 < pts.size(); ++k) {
            double mid = 0.5 * (pts[k] + pts[k + 1]);
            if (sig(mid) < level)
                continue;
            auto [w, s] = detail::refine_peak(A, B, C, D, pts[k], pts[k + 1]);
            if (s > res.value)
                res.value = s;
            peaks.push_back(w);
            const double a = pts[k], b = pts[k + 1];
            auto at_norm = [&](double t) { return sig(a + t * (b - a)) >= res.value * (1.0 - 1e-12); };
            if (b - a > 1e-3 * std::max(1.0, b) && at_norm(0.25) && at_norm(0.5) && at_norm(0.75))
                sample_flat(a, b);
        }
    } else {
        // Feedthrough attains the norm: the Hamiltonian test is unavailable at this level.
        double scale = 1.0;
        for (double r : eig_real_parts(A))
            scale = std::max(scale, std::abs(r));
        peaks.push_back(0.0);
        sample_flat(0.0, 1e4 * scale);
        peaks.push_back(inf);
    }
    // Each above-level interval contributes one peak; the bracket frequency is only a fallback.
    if (peaks.empty())
        peaks.push_back(std::isfinite(wlb) ? wlb : inf);
    std::sort(peaks.begin(), peaks.end());
    for (double w : peaks) {
        double s = std::isinf(w) ? dnorm : sig(w);
        if (s < res.value * (1.0 - opt.peak_tol))
            continue;
        if (!res.peaks.empty() && std::abs(w - res.peaks.back()) < 1e-6)
            continue;
        if (!res.peaks.empty() && std::isinf(w) && std::isinf(res.peaks.back()))
            continue;
        res.peaks.push_back(w);
    }
    if (res.upper < res.value)
        res.upper = res.value * (1.0 + 2.0 * opt.rel_tol);

    if (opt.lmi_certify) {
        double gc = res.value * (1.0 + std::max(opt.rel_tol, 1e-6));
        res.lmi_certified = bounded_real_certificate(A, B, C, D, gc, true).has_value();
    }
    return res;
}

inline double hinf_norm(const Mat& A, const Mat& B, const Mat& C, const Mat& D, double rel_tol = 1e-8) {
    HinfOptions o;
    o.rel_tol = rel_tol;
    return hinf_norm_full(A, B, C, D, o).value;
}

inline Mat h2_lmi_block1(const Mat& A, const Mat& B, const Mat& P, double gamma) {
    const auto n = A.rows(), m = B.cols();
    Mat M(n + m, n + m);
    M << A.transpose() * P + P * A, P * B, B.transpose() * P, -gamma * Mat::Identity(m, m);
    return M;
}

inline Mat h2_lmi_block2(const Mat& C, const Mat& P, const Mat& Gam) {
    const auto n = P.rows(), q = C.rows();
    Mat M(n + q, n + q);
    M << P, C.transpose(), C, Gam;
    return M;
}

inline Mat bounded_real_matrix(const Mat& A, const Mat& B, const Mat& C, const Mat& D, const Mat& P, double gamma) {
    const auto n = A.rows(), m = B.cols(), q = C.rows();
    Mat M(n + m + q, n + m + q);
    M << A.transpose() * P + P * A, P * B, C.transpose(), B.transpose() * P, -gamma * Mat::Identity(m, m),
        D.transpose(), C, D, -gamma * Mat::Identity(q, q);
    return M;
}

struct H2Certificate {
    Mat P, Gamma;
};

namespace detail {
inline double certificate_margin_tol(double scale) { return 1e-7 * std::max(1.0, scale); }
} // namespace detail

// H2 LMI certificate: γ bounds the H2 norm itself (not its square).
inline std::optional<H2Certificate> h2_lmi_certificate(const Mat& A, const Mat& B, const Mat& C, double gamma,
                                                       bool strict) {
    using namespace conic;
    const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols()), q = static_cast<int>(C.rows());
    if (gamma < 0)
        return std::nullopt;
    Problem pr;
    Affine P = pr.add_symmetric("P", n);
    Affine G = pr.add_symmetric("Gamma", q);
    Affine t = pr.add_scalar("t");
    Affine L1 = Affine::sym_blocks({{Mat(A.transpose()) * P + P * A, P * B},
                                    {Affine(Mat(-gamma * Mat::Identity(m, m)))}});
    Affine L2 = Affine::sym_blocks({{P, Affine(Mat(C.transpose()))}, {G}});
    // -L1 - tI ⪰ 0, L2 - tI ⪰ 0, γ - trΓ - t ≥ 0, 1 - t ≥ 0.
    auto eye_t = [&](int k) { return scalar_times_identity(t, k); };
    pr.add_psd(-L1 - eye_t(n + m), "h2-lyapunov");
    pr.add_psd(L2 - eye_t(n + q), "h2-gramian");
    pr.add_psd(Affine::scalar(gamma) - G.trace() - t, "h2-trace");
    pr.add_psd(Affine::scalar(1.0) - t, "margin-cap");
    pr.maximize(t);
    auto sol = solve(pr);
    if (sol.status == Status::INFEASIBLE)
        return std::nullopt;
    if (!sol.usable())
        throw SolverFailure(std::string("h2_lmi_certificate: conic solver returned ") + to_string(sol.status));
    double tv = sol.extract_scalar("t");
    double scale = 1.0 + A.norm() + B.norm() + C.norm() + gamma;
    double tol = ecl::detail::certificate_margin_tol(scale);
    if (strict ? !(tv > tol) : !(tv >= -tol))
        return std::nullopt;
    return H2Certificate{sol.extract("P"), sol.extract("Gamma")};
}

// Bounded real certificate; P is returned when the (non-)strict bounded real LMI is feasible at γ.
inline std::optional<Mat> bounded_real_certificate(const Mat& A, const Mat& B, const Mat& C, const Mat& D,
                                                   double gamma, bool strict) {
    using namespace conic;
    const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols()), q = static_cast<int>(C.rows());
    Problem pr;
    Affine P = pr.add_symmetric("P", n);
    Affine t = pr.add_scalar("t");
    auto eye_t = [&](int k) { return scalar_times_identity(t, k); };
    Affine L = Affine::sym_blocks({{Mat(A.transpose()) * P + P * A, P * B, Affine(Mat(C.transpose()))},
                                   {Affine(Mat(-gamma * Mat::Identity(m, m))), Affine(Mat(D.transpose()))},
                                   {Affine(Mat(-gamma * Mat::Identity(q, q)))}});
    pr.add_psd(-L - eye_t(n + m + q), "bounded-real");
    pr.add_psd(P - eye_t(n), "lyapunov-pd");
    pr.add_psd(Affine::scalar(1.0) - t, "margin-cap");
    pr.maximize(t);
    auto sol = solve(pr);
    if (sol.status == Status::INFEASIBLE)
        return std::nullopt;
    if (!sol.usable())
        throw SolverFailure(std::string("bounded_real_certificate: conic solver returned ") + to_string(sol.status));
    double tv = sol.extract_scalar("t");
    double scale = 1.0 + A.norm() + B.norm() + C.norm() + D.norm() + gamma;
    double tol = ecl::detail::certificate_margin_tol(scale);
    if (strict ? !(tv > tol) : !(tv >= -tol))
        return std::nullopt;
    return sol.extract("P");
}

} // namespace ecl
