#pragma once

#include "ecl/ecl_dynamic.hpp"
#include "ecl/ecl_state.hpp"

#include <functional>
#include <random>

namespace ecl::testing {

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(uint64_t seed) : gen(seed) {}

    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen); }
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }
    int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen); }

    Mat gauss(Eigen::Index r, Eigen::Index c, double s = 1.0) {
        Mat M(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j)
                M(i, j) = s * normal();
        return M;
    }
    Mat spd(Eigen::Index n, double floor = 0.5) {
        Mat G = gauss(n, n);
        return sym(G * G.transpose() / double(n) + floor * Mat::Identity(n, n));
    }
    // Hurwitz matrix with spectral abscissa in [-hi, -lo].
    Mat hurwitz(Eigen::Index n, double lo = 0.3, double hi = 1.0) {
        Mat A = gauss(n, n, 1.0 / std::sqrt(double(n)));
        return A - (spectral_abscissa(A) + uniform(lo, hi)) * Mat::Identity(n, n);
    }
};

inline Plant random_state_plant(Rng& r, int n, int m) {
    Plant P{r.gauss(n, n), r.gauss(n, m), r.gauss(n, n) + 0.5 * Mat::Identity(n, n), r.spd(n), r.spd(m)};
    return P;
}

// Stabilizing gain near the LQR optimum.
inline Mat random_stabilizing_gain(Rng& r, const Plant& P, double spread = 0.3) {
    Mat K0 = lqr_riccati_gain(P);
    for (;;) {
        Mat K = K0 + r.gauss(K0.rows(), K0.cols(), spread);
        if (is_hurwitz(P.A + P.B * K, 1e-3))
            return K;
        spread *= 0.5;
    }
}

inline OutputPlant random_output_plant(Rng& r, int n, int m, int p) {
    for (;;) {
        OutputPlant P{r.gauss(n, n), r.gauss(n, m), r.gauss(p, n), r.spd(n), r.spd(p), r.spd(n), r.spd(m)};
        if (!P.standing_assumptions_hold())
            continue;
        // nearly uncontrollable or unobservable draws give huge optimal gains and meaningless Gramians
        try {
            if (lqg_riccati_policy(P).packed().norm() <= 100.0)
                return P;
        } catch (const Error&) {
        }
    }
}

// Stabilizing dynamic policy near the two-Riccati controller; DK is set when proper is true.
inline DynamicPolicy random_dynamic_policy(Rng& r, const OutputPlant& P, bool proper, double spread = 0.2) {
    DynamicPolicy K0 = lqg_riccati_policy(P);
    const auto n = P.n(), m = P.m(), p = P.p();
    for (;;) {
        DynamicPolicy K{proper ? r.gauss(m, p, spread) : Mat::Zero(m, p), K0.CK + r.gauss(m, n, spread),
                        K0.BK + r.gauss(n, p, spread), K0.AK + r.gauss(n, n, spread)};
        if (is_hurwitz(assemble_closed_loop(P, K).Acl, 1e-3))
            return K;
        spread *= 0.5;
    }
}

inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

// Gramian lift: P = γX⁻¹, Γ = C X Cᵀ/γ is a member of the lifted LQG set for γ ≥ J.
inline LqgLiftedPoint gramian_lift(const OutputPlant& P, const DynamicPolicy& K, double gamma) {
    auto e = lqg_eval(P, K);
    const auto n2 = e.X.rows();
    return {K, gamma, sym(gamma * e.X.ldlt().solve(Mat::Identity(n2, n2))),
            sym(e.cl.Ccl * e.X * e.cl.Ccl.transpose() / gamma)};
}

// Random P ≻ 0 of size 2n with a well-conditioned off-diagonal block.
inline Mat random_lyapunov_P(Rng& r, int n) {
    for (;;) {
        Mat P = r.spd(2 * n, 0.3);
        P.topRightCorner(n, n) += 0.2 * Mat::Identity(n, n);
        P.bottomLeftCorner(n, n) += 0.2 * Mat::Identity(n, n);
        if (min_eig(P) > 0.05 && sigma_min(P.topRightCorner(n, n)) > 0.05)
            return P;
    }
}

template <class F>
Mat central_diff(F&& f, const Mat& X, double h = 1e-5) {
    Mat G(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            Mat Xp = X, Xm = X;
            Xp(i, j) += h;
            Xm(i, j) -= h;
            G(i, j) = (f(Xp) - f(Xm)) / (2 * h);
        }
    return G;
}

// Successively refined grid search over a box; used as a derivative-free oracle.
inline std::pair<Vec, double> zoom_grid_min(const std::function<double(const Vec&)>& f, Vec lo, Vec hi, int pts = 21,
                                            int levels = 30) {
    const auto d = lo.size();
    Vec best = 0.5 * (lo + hi);
    double fb = f(best);
    for (int lev = 0; lev < levels; ++lev) {
        std::vector<int> idx(static_cast<size_t>(d), 0);
        for (;;) {
            Vec x(d);
            for (Eigen::Index k = 0; k < d; ++k)
                x(k) = lo(k) + (hi(k) - lo(k)) * idx[static_cast<size_t>(k)] / (pts - 1);
            double v = f(x);
            if (v < fb) {
                fb = v;
                best = x;
            }
            Eigen::Index k = 0;
            while (k < d && ++idx[static_cast<size_t>(k)] == pts)
                idx[static_cast<size_t>(k++)] = 0;
            if (k == d)
                break;
        }
        Vec half = (hi - lo) / 4.0;
        lo = best - half;
        hi = best + half;
    }
    return {best, fb};
}

} // namespace ecl::testing
