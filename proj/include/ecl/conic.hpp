#pragma once

#include "ecl/linalg.hpp"

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ecl::conic {

class ModelingError : public Error {
public:
    using Error::Error;
};

enum class VarKind { Scalar, Rect, Sym };

struct VarInfo {
    std::string name;
    VarKind kind;
    int rows = 0, cols = 0;
    int offset = 0; // first index in the decision vector y
    int count = 0;
};

// Affine matrix-valued map y ↦ c0 + Σ_i y_i T_i, with sparse storage over i.
class Affine {
public:
    Affine() = default;
    Affine(int r, int c) : c0_(Mat::Zero(r, c)) {}
    explicit Affine(const Mat& c) : c0_(c) {}

    static Affine zero(int r, int c) { return Affine(r, c); }
    static Affine constant(const Mat& c) { return Affine(c); }
    static Affine scalar(double v) { return Affine(Mat::Constant(1, 1, v)); }

    int rows() const { return static_cast<int>(c0_.rows()); }
    int cols() const { return static_cast<int>(c0_.cols()); }
    const Mat& constant_part() const { return c0_; }
    const std::map<int, Mat>& terms() const { return terms_; }

    void add_term(int idx, const Mat& T) {
        auto it = terms_.find(idx);
        if (it == terms_.end())
            terms_.emplace(idx, T);
        else
            it->second += T;
    }

    Mat value(const Vec& y) const {
        Mat V = c0_;
        for (const auto& [i, T] : terms_)
            V += y(i) * T;
        return V;
    }

    Affine transpose() const {
        Affine r(c0_.transpose());
        for (const auto& [i, T] : terms_)
            r.terms_.emplace(i, T.transpose());
        return r;
    }

    // e + eᵀ
    Affine herm() const { return *this + transpose(); }

    Affine trace() const {
        if (rows() != cols())
            throw ModelingError("trace of a non-square expression");
        Affine r = scalar(c0_.trace());
        for (const auto& [i, T] : terms_)
            r.terms_.emplace(i, Mat::Constant(1, 1, T.trace()));
        return r;
    }

    Affine block(int i, int j, int r, int c) const {
        Affine out(c0_.block(i, j, r, c));
        for (const auto& [k, T] : terms_)
            out.terms_.emplace(k, T.block(i, j, r, c));
        return out;
    }

    Affine& operator+=(const Affine& o) {
        check_same(o, "+");
        c0_ += o.c0_;
        for (const auto& [i, T] : o.terms_)
            add_term(i, T);
        return *this;
    }
    Affine& operator-=(const Affine& o) { return *this += -o; }
    Affine operator+(const Affine& o) const {
        Affine r = *this;
        r += o;
        return r;
    }
    Affine operator-(const Affine& o) const {
        Affine r = *this;
        r -= o;
        return r;
    }
    Affine operator-() const { return (*this) * -1.0; }
    Affine operator+(const Mat& M) const { return *this + Affine(M); }
    Affine operator-(const Mat& M) const { return *this - Affine(M); }

    Affine operator*(double a) const {
        Affine r(c0_ * a);
        for (const auto& [i, T] : terms_)
            r.terms_.emplace(i, T * a);
        return r;
    }
    friend Affine operator*(double a, const Affine& e) { return e * a; }

    Affine operator*(const Mat& R) const {
        if (cols() != R.rows())
            throw ModelingError("dimension mismatch in right product");
        Affine r(c0_ * R);
        for (const auto& [i, T] : terms_)
            r.terms_.emplace(i, T * R);
        return r;
    }
    friend Affine operator*(const Mat& L, const Affine& e) {
        if (L.cols() != e.rows())
            throw ModelingError("dimension mismatch in left product");
        Affine r(L * e.c0_);
        for (const auto& [i, T] : e.terms_)
            r.terms_.emplace(i, L * T);
        return r;
    }

    // Block assembly; every row of blocks must agree on heights, every column on widths.
    static Affine blocks(const std::vector<std::vector<Affine>>& B) {
        if (B.empty())
            return Affine(0, 0);
        std::vector<int> h(B.size()), w(B[0].size());
        for (size_t i = 0; i < B.size(); ++i) {
            if (B[i].size() != w.size())
                throw ModelingError("ragged block layout");
            h[i] = B[i][0].rows();
        }
        for (size_t j = 0; j < w.size(); ++j)
            w[j] = B[0][j].cols();
        int H = 0, Wd = 0;
        for (int v : h)
            H += v;
        for (int v : w)
            Wd += v;
        Affine out(H, Wd);
        int r0 = 0;
        for (size_t i = 0; i < B.size(); ++i) {
            int c0 = 0;
            for (size_t j = 0; j < w.size(); ++j) {
                const Affine& e = B[i][j];
                if (e.rows() != h[i] || e.cols() != w[j])
                    throw ModelingError("block size mismatch at (" + std::to_string(i) + "," +
                                        std::to_string(j) + ")");
                out.c0_.block(r0, c0, h[i], w[j]) = e.c0_;
                for (const auto& [k, T] : e.terms_) {
                    auto it = out.terms_.find(k);
                    if (it == out.terms_.end())
                        it = out.terms_.emplace(k, Mat::Zero(H, Wd)).first;
                    it->second.block(r0, c0, h[i], w[j]) += T;
                }
                c0 += w[j];
            }
            r0 += h[i];
        }
        return out;
    }

    // Symmetric block matrix from its upper triangle: upper[i] lists blocks (i,i), (i,i+1), ...
    static Affine sym_blocks(const std::vector<std::vector<Affine>>& upper) {
        const size_t k = upper.size();
        std::vector<std::vector<Affine>> full(k, std::vector<Affine>(k));
        for (size_t i = 0; i < k; ++i) {
            if (upper[i].size() != k - i)
                throw ModelingError("sym_blocks expects an upper-triangular layout");
            for (size_t j = i; j < k; ++j) {
                full[i][j] = upper[i][j - i];
                if (j > i)
                    full[j][i] = upper[i][j - i].transpose();
            }
        }
        return blocks(full);
    }

private:
    void check_same(const Affine& o, const char* op) const {
        if (rows() != o.rows() || cols() != o.cols())
            throw ModelingError(std::string("dimension mismatch in ") + op + ": " + std::to_string(rows()) +
                                "x" + std::to_string(cols()) + " vs " + std::to_string(o.rows()) + "x" +
                                std::to_string(o.cols()));
    }

    Mat c0_;
    std::map<int, Mat> terms_;
};

// s·I_k for a scalar expression s.
inline Affine scalar_times_identity(const Affine& s, int k) {
    if (s.rows() != 1 || s.cols() != 1)
        throw ModelingError("scalar_times_identity expects a scalar expression");
    Affine e(Mat(s.constant_part()(0, 0) * Mat::Identity(k, k)));
    for (const auto& [idx, T] : s.terms())
        e.add_term(idx, T(0, 0) * Mat::Identity(k, k));
    return e;
}

struct Constraint {
    Affine expr; // required PSD
    std::string label;
    bool strict = false;
};

class Problem {
public:
    Affine add_scalar(const std::string& name) { return add_var(name, VarKind::Scalar, 1, 1); }
    Affine add_matrix(const std::string& name, int r, int c) { return add_var(name, VarKind::Rect, r, c); }
    Affine add_symmetric(const std::string& name, int n) { return add_var(name, VarKind::Sym, n, n); }

    // Linear objective (constant parts allowed), minimized.
    void minimize(const Affine& obj) {
        if (obj.rows() != 1 || obj.cols() != 1)
            throw ModelingError("objective must be scalar");
        objective_ = obj;
        sense_ = 1.0;
    }
    void maximize(const Affine& obj) {
        minimize(obj);
        sense_ = -1.0;
    }

    int add_psd(const Affine& M, const std::string& label = "", bool strict = false) {
        if (M.rows() != M.cols())
            throw ModelingError("constraint '" + label + "' is not square");
        double scale = 1.0 + M.constant_part().norm();
        if ((M.constant_part() - M.constant_part().transpose()).norm() > 1e-10 * scale)
            throw ModelingError("constraint '" + label + "' is not symmetric");
        for (const auto& [i, T] : M.terms())
            if ((T - T.transpose()).norm() > 1e-10 * (1.0 + T.norm()))
                throw ModelingError("constraint '" + label + "' is not symmetric in variable " + std::to_string(i));
        constraints_.push_back({sym_affine(M), label, strict});
        return static_cast<int>(constraints_.size()) - 1;
    }
    int add_nsd(const Affine& M, const std::string& label = "", bool strict = false) {
        return add_psd(-M, label, strict);
    }

    // Affine equality E(y) = 0 (entrywise; upper triangle suffices for symmetric maps).
    void add_equality(const Affine& E, const std::string& label = "") { equalities_.push_back({E, label, false}); }

    int num_vars() const { return n_; }
    const std::vector<VarInfo>& variables() const { return vars_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }
    const std::vector<Constraint>& equalities() const { return equalities_; }
    const Affine& objective() const { return objective_; }
    double sense() const { return sense_; }

    const VarInfo& var(const std::string& name) const {
        for (const auto& v : vars_)
            if (v.name == name)
                return v;
        throw ModelingError("unknown variable '" + name + "'");
    }

    // Variable value from a decision vector.
    Mat var_value(const VarInfo& v, const Vec& y) const {
        Mat M(v.rows, v.cols);
        int k = v.offset;
        if (v.kind == VarKind::Sym) {
            for (int j = 0; j < v.cols; ++j)
                for (int i = 0; i <= j; ++i) {
                    M(i, j) = y(k);
                    M(j, i) = y(k);
                    ++k;
                }
        } else {
            for (int j = 0; j < v.cols; ++j)
                for (int i = 0; i < v.rows; ++i)
                    M(i, j) = y(k++);
        }
        return M;
    }

private:
    static Affine sym_affine(const Affine& M) { return 0.5 * M.herm(); }

    Affine add_var(const std::string& name, VarKind kind, int r, int c) {
        for (const auto& v : vars_)
            if (v.name == name)
                throw ModelingError("duplicate variable '" + name + "'");
        VarInfo v{name, kind, r, c, n_, kind == VarKind::Sym ? r * (r + 1) / 2 : r * c};
        Affine e(r, c);
        int k = n_;
        if (kind == VarKind::Sym) {
            for (int j = 0; j < c; ++j)
                for (int i = 0; i <= j; ++i) {
                    Mat T = Mat::Zero(r, c);
                    T(i, j) = 1.0;
                    T(j, i) = 1.0;
                    e.add_term(k++, T);
                }
        } else {
            for (int j = 0; j < c; ++j)
                for (int i = 0; i < r; ++i) {
                    Mat T = Mat::Zero(r, c);
                    T(i, j) = 1.0;
                    e.add_term(k++, T);
                }
        }
        n_ = k;
        vars_.push_back(v);
        return e;
    }

    int n_ = 0;
    std::vector<VarInfo> vars_;
    std::vector<Constraint> constraints_;
    std::vector<Constraint> equalities_;
    Affine objective_ = Affine::scalar(0.0);
    double sense_ = 1.0;
};

enum class Status { OPTIMAL, INFEASIBLE, UNBOUNDED, NEAR_BOUNDARY, NUMERICAL_LIMIT };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::OPTIMAL: return "OPTIMAL";
    case Status::INFEASIBLE: return "INFEASIBLE";
    case Status::UNBOUNDED: return "UNBOUNDED";
    case Status::NEAR_BOUNDARY: return "NEAR_BOUNDARY";
    default: return "NUMERICAL_LIMIT";
    }
}

struct Options {
    double feas_tol = 1e-8;
    double gap_tol = 1e-8;
    int max_iter = 200;
    // A strict-hinted constraint whose minimum eigenvalue falls below this (relative) level at the
    // returned point flags NEAR_BOUNDARY.
    double boundary_tol = 1e-6;
    bool verbose = false;
};

// Tighter stopping rule for the synthesis problems, whose recovered policies are sensitive to the gap.
inline Options precise_options() {
    Options o;
    o.feas_tol = 1e-10;
    o.gap_tol = 1e-10;
    return o;
}

struct Solution {
    Status status = Status::NUMERICAL_LIMIT;
    Vec y;
    double objective = std::numeric_limits<double>::quiet_NaN();
    double dual_bound = std::numeric_limits<double>::quiet_NaN();
    double max_violation = std::numeric_limits<double>::infinity();
    double gap = std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::vector<double> constraint_min_eig;
    std::string note;
    std::vector<VarInfo> vars;

    Mat extract(const std::string& name) const {
        if (status != Status::OPTIMAL && status != Status::NEAR_BOUNDARY)
            throw Error("extract: solution status is " + std::string(to_string(status)));
        for (const auto& v : vars)
            if (v.name == name)
                return value_of(v);
        throw ModelingError("extract: unknown variable '" + name + "'");
    }
    double extract_scalar(const std::string& name) const { return extract(name)(0, 0); }
    Mat value(const Affine& e) const { return e.value(y); }
    bool usable() const { return status == Status::OPTIMAL || status == Status::NEAR_BOUNDARY; }

private:
    Mat value_of(const VarInfo& v) const {
        Mat M(v.rows, v.cols);
        int k = v.offset;
        if (v.kind == VarKind::Sym) {
            for (int j = 0; j < v.cols; ++j)
                for (int i = 0; i <= j; ++i) {
                    M(i, j) = y(k);
                    M(j, i) = y(k);
                    ++k;
                }
        } else {
            for (int j = 0; j < v.cols; ++j)
                for (int i = 0; i < v.rows; ++i)
                    M(i, j) = y(k++);
        }
        return M;
    }
};

namespace detail {

using Blocks = std::vector<Mat>;

inline double dot(const Blocks& a, const Blocks& b) {
    double s = 0;
    for (size_t j = 0; j < a.size(); ++j)
        s += (a[j].array() * b[j].array()).sum();
    return s;
}

inline double fro(const Blocks& a) { return std::sqrt(dot(a, a)); }

inline Blocks axpy(const Blocks& a, double t, const Blocks& b) {
    Blocks r = a;
    for (size_t j = 0; j < a.size(); ++j)
        r[j] += t * b[j];
    return r;
}

// LMI data after equality elimination: F(z) = F0 + Σ z_k F_k ⪰ 0, minimize cᵀz.
struct Reduced {
    Blocks F0;
    std::vector<Blocks> F;
    Vec c;
    Vec y0;
    Mat N; // y = y0 + N z
    double obj_const = 0;
    std::vector<int> keep;        // retained z columns
    Vec colscale;                 // z_k = zs_k / colscale_k
    bool inconsistent_eq = false; // equality system has no solution
    bool unbounded_free = false;  // objective along a direction absent from all constraints
};

inline Reduced reduce(const Problem& P) {
    Reduced R;
    const int n = P.num_vars();
    const Affine& obj = P.objective();
    Vec cy = Vec::Zero(n);
    for (const auto& [i, T] : obj.terms())
        cy(i) = P.sense() * T(0, 0);
    R.obj_const = P.sense() * obj.constant_part()(0, 0);

    // Equality rows.
    std::vector<Vec> rows;
    std::vector<double> rhs;
    for (const auto& e : P.equalities()) {
        const Affine& E = e.expr;
        bool symm = E.rows() == E.cols() && (E.constant_part() - E.constant_part().transpose()).norm() == 0.0;
        if (symm)
            for (const auto& [i, T] : E.terms())
                if ((T - T.transpose()).norm() != 0.0) {
                    symm = false;
                    break;
                }
        for (int c = 0; c < E.cols(); ++c)
            for (int r = 0; r < E.rows(); ++r) {
                if (symm && r > c)
                    continue;
                Vec a = Vec::Zero(n);
                for (const auto& [i, T] : E.terms())
                    a(i) = T(r, c);
                rows.push_back(a);
                rhs.push_back(-E.constant_part()(r, c));
            }
    }
    if (rows.empty()) {
        R.y0 = Vec::Zero(n);
        R.N = Mat::Identity(n, n);
    } else {
        Mat Eq(rows.size(), n);
        Vec e(rows.size());
        for (size_t k = 0; k < rows.size(); ++k) {
            Eq.row(k) = rows[k].transpose();
            e(k) = rhs[k];
        }
        Eigen::JacobiSVD<Mat> svd(Eq, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vec& s = svd.singularValues();
        int rank = 0;
        for (Eigen::Index k = 0; k < s.size(); ++k)
            if (s(k) > 1e-11 * std::max(1.0, s(0)))
                ++rank;
        Vec y0 = Vec::Zero(n);
        Vec Ute = svd.matrixU().transpose() * e;
        for (int k = 0; k < rank; ++k)
            y0 += svd.matrixV().col(k) * (Ute(k) / s(k));
        if ((Eq * y0 - e).norm() > 1e-9 * (1.0 + e.norm()))
            R.inconsistent_eq = true;
        R.y0 = y0;
        R.N = svd.matrixV().rightCols(n - rank);
    }
    const int nz = static_cast<int>(R.N.cols());

    // Constraint blocks in z.
    const auto& cons = P.constraints();
    R.F0.resize(cons.size());
    std::vector<Blocks> F(nz, Blocks(cons.size()));
    for (size_t j = 0; j < cons.size(); ++j) {
        const Affine& A = cons[j].expr;
        R.F0[j] = A.value(R.y0);
        for (int k = 0; k < nz; ++k)
            F[k][j] = Mat::Zero(A.rows(), A.cols());
        for (const auto& [i, T] : A.terms())
            for (int k = 0; k < nz; ++k) {
                double w = R.N(i, k);
                if (w != 0.0)
                    F[k][j] += w * T;
            }
    }
    Vec cz = R.N.transpose() * cy;
    R.obj_const += cy.dot(R.y0);

    // Drop directions that no constraint sees; scale the rest to unit norm.
    std::vector<double> sc;
    for (int k = 0; k < nz; ++k) {
        double nk = fro(F[k]);
        if (nk <= 1e-13) {
            if (std::abs(cz(k)) > 1e-12 * (1.0 + cz.norm()))
                R.unbounded_free = true;
            continue;
        }
        R.keep.push_back(k);
        sc.push_back(nk);
    }
    R.colscale.resize(R.keep.size());
    R.c.resize(R.keep.size());
    for (size_t t = 0; t < R.keep.size(); ++t) {
        int k = R.keep[t];
        R.colscale(t) = sc[t];
        Blocks Fk = F[k];
        for (auto& M : Fk)
            M /= sc[t];
        R.F.push_back(std::move(Fk));
        R.c(t) = cz(k) / sc[t];
    }
    return R;
}

inline Vec y_of(const Reduced& R, const Vec& zs) {
    Vec z = Vec::Zero(R.N.cols());
    for (size_t t = 0; t < R.keep.size(); ++t)
        z(R.keep[t]) = zs(t) / R.colscale(t);
    return R.y0 + R.N * z;
}

struct Nt {
    Blocks G, Ginv, W;
    std::vector<Vec> lambda;
};

inline bool nt_scaling(const Blocks& X, const Blocks& S, Nt& out) {
    const size_t nb = X.size();
    out.G.resize(nb);
    out.Ginv.resize(nb);
    out.W.resize(nb);
    out.lambda.resize(nb);
    for (size_t j = 0; j < nb; ++j) {
        Eigen::LLT<Mat> lx(X[j]), ls(S[j]);
        if (lx.info() != Eigen::Success || ls.info() != Eigen::Success)
            return false;
        Mat L = lx.matrixL();
        Mat Rm = ls.matrixL();
        Eigen::JacobiSVD<Mat> svd(Rm.transpose() * L, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Vec d = svd.singularValues();
        if (d.minCoeff() <= 0)
            return false;
        Vec dmh = d.array().rsqrt();
        Vec dph = d.array().sqrt();
        out.G[j] = L * svd.matrixV() * dmh.asDiagonal();
        Mat Linv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(L.rows(), L.cols()));
        out.Ginv[j] = dph.asDiagonal() * svd.matrixV().transpose() * Linv;
        out.W[j] = out.G[j] * out.G[j].transpose();
        out.lambda[j] = d;
    }
    return true;
}

// Largest α with M + α dM ⪰ 0 (capped by a large number).
inline double max_step(const Mat& M, const Mat& dM) {
    Eigen::LLT<Mat> l(M);
    if (l.info() != Eigen::Success)
        return 0.0;
    Mat L = l.matrixL();
    Mat T = L.triangularView<Eigen::Lower>().solve(dM);
    T = L.triangularView<Eigen::Lower>().solve(T.transpose()).transpose();
    double lmin = min_eig(T);
    return lmin >= 0 ? 1e30 : -1.0 / lmin;
}

} // namespace detail

inline Solution solve(const Problem& prob, const Options& opt = {}) {
    using namespace detail;
    Solution sol;
    sol.vars = prob.variables();
    const auto& cons = prob.constraints();
    Reduced R = reduce(prob);
    if (R.inconsistent_eq) {
        sol.status = Status::INFEASIBLE;
        sol.note = "equality constraints are inconsistent";
        sol.y = R.y0;
        return sol;
    }
    if (R.unbounded_free) {
        sol.status = Status::UNBOUNDED;
        sol.note = "objective improves along a direction no constraint restricts";
        sol.y = R.y0;
        return sol;
    }

    const size_t nb = cons.size();
    const int K = static_cast<int>(R.F.size());
    auto finish_point = [&](const Vec& y) {
        sol.y = y;
        sol.constraint_min_eig.assign(nb, 0.0);
        double viol = 0;
        for (size_t j = 0; j < nb; ++j) {
            double l = min_eig(cons[j].expr.value(y));
            sol.constraint_min_eig[j] = l;
            viol = std::max(viol, -l);
        }
        for (const auto& e : prob.equalities())
            viol = std::max(viol, e.expr.value(y).cwiseAbs().maxCoeff());
        sol.max_violation = std::max(0.0, viol);
        const Affine& obj = prob.objective();
        sol.objective = obj.value(y)(0, 0);
    };

    if (nb == 0) {
        if (K == 0 && R.c.size() == 0) {
            finish_point(R.y0);
            sol.status = Status::OPTIMAL;
            sol.gap = 0;
            sol.dual_bound = sol.objective;
            return sol;
        }
    }

    // Standard pair: C = F0, A_k = -F_k, b = -c.
    const Blocks& C = R.F0;
    const Vec b = -R.c;
    int nu = 0;
    for (const auto& M : C)
        nu += static_cast<int>(M.rows());
    auto Aop = [&](const Blocks& X) {
        Vec v(K);
        for (int k = 0; k < K; ++k)
            v(k) = -dot(R.F[k], X);
        return v;
    };
    auto Aadj = [&](const Vec& z) {
        Blocks out(nb);
        for (size_t j = 0; j < nb; ++j) {
            out[j] = Mat::Zero(C[j].rows(), C[j].cols());
            for (int k = 0; k < K; ++k)
                out[j] -= z(k) * R.F[k][j];
        }
        return out;
    };
    auto ident = [&]() {
        Blocks I(nb);
        for (size_t j = 0; j < nb; ++j)
            I[j] = Mat::Identity(C[j].rows(), C[j].cols());
        return I;
    };

    Blocks X = ident(), S = ident();
    Vec z = Vec::Zero(K);
    double tau = 1.0, kappa = 1.0;
    const double normb = b.norm(), normC = fro(C);

    std::vector<double> ynorm_hist, obj_hist;
    Vec best_y = R.y0;
    bool have_best = false;
    double best_pres = 1e300, best_dres = 1e300, best_gap = 1e300;
    Status st = Status::NUMERICAL_LIMIT;
    std::string note;

    int it = 0;
    for (; it <= opt.max_iter; ++it) {
        Vec rp = Aop(X) - b * tau;
        Blocks Rd = axpy(Aadj(z), 1.0, S);
        for (size_t j = 0; j < nb; ++j)
            Rd[j] -= tau * C[j];
        double ctx = dot(C, X), btz = b.dot(z);
        double rg = ctx - btz + kappa;
        double mu = (dot(X, S) + tau * kappa) / (nu + 1);

        double pobj = ctx / tau, dobj = btz / tau;
        double pres = rp.norm() / tau / (1.0 + normb);
        double dres = fro(Rd) / tau / (1.0 + normC);
        double grel = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        Vec ycur = y_of(R, z / tau);
        if (opt.verbose)
            std::fprintf(stderr, "it %3d pobj %+.9e dobj %+.9e pres %.2e dres %.2e gap %.2e tau %.2e kap %.2e mu %.2e\n",
                         it, -dobj + R.obj_const, -pobj + R.obj_const, pres, dres, grel, tau, kappa, mu);

        double merit = std::max({pres, dres, grel});
        if (!have_best || merit < std::max({best_pres, best_dres, best_gap})) {
            have_best = true;
            best_y = ycur;
            best_pres = pres;
            best_dres = dres;
            best_gap = grel;
            sol.gap = grel;
            sol.dual_bound = -pobj + R.obj_const;
        }

        if (pres <= opt.feas_tol && dres <= opt.feas_tol && grel <= opt.gap_tol) {
            st = Status::OPTIMAL;
            break;
        }
        // Farkas rays.
        if (kappa > tau) {
            if (ctx < 0 && Aop(X).norm() <= opt.feas_tol * (-ctx)) {
                st = Status::INFEASIBLE;
                note = "infeasibility certificate Z with <F0,Z> < 0";
                break;
            }
            Blocks dS = axpy(Aadj(z), 1.0, S);
            if (btz > 0 && fro(dS) <= opt.feas_tol * btz) {
                st = Status::UNBOUNDED;
                note = "improving direction with nonnegative constraint slope";
                break;
            }
        }

        // Divergence of the variables with a stalled objective.
        ynorm_hist.push_back(ycur.norm());
        obj_hist.push_back(-dobj);
        if (ynorm_hist.size() > 20) {
            size_t k0 = ynorm_hist.size() - 21;
            double growth = ynorm_hist.back() / std::max(1e-300, ynorm_hist[k0]);
            double prog = std::abs(obj_hist.back() - obj_hist[k0]);
            if (growth > 10.0 && ynorm_hist[k0] > 1.0 && prog < opt.gap_tol * (1.0 + std::abs(obj_hist.back()))) {
                st = Status::NEAR_BOUNDARY;
                note = "variables diverge while the objective stalls";
                break;
            }
        }
        if (it == opt.max_iter) {
            note = "iteration limit";
            break;
        }

        Nt nt;
        if (!nt_scaling(X, S, nt)) {
            note = "loss of positive definiteness";
            break;
        }
        // Schur complement M_kl = <A_k, W A_l W>.
        Mat M(K, K);
        std::vector<Blocks> WFW(K, Blocks(nb));
        for (int l = 0; l < K; ++l)
            for (size_t j = 0; j < nb; ++j)
                WFW[l][j] = nt.W[j] * R.F[l][j] * nt.W[j];
        for (int k = 0; k < K; ++k)
            for (int l = k; l < K; ++l) {
                double v = dot(R.F[k], WFW[l]);
                M(k, l) = v;
                M(l, k) = v;
            }
        Blocks WCW(nb);
        for (size_t j = 0; j < nb; ++j)
            WCW[j] = nt.W[j] * C[j] * nt.W[j];
        Vec g = Aop(WCW);
        double cwc = dot(C, WCW);

        Eigen::LLT<Mat> Mf(M);
        Mat Mreg;
        if (Mf.info() != Eigen::Success) {
            Mreg = M;
            Mreg.diagonal().array() += 1e-12 * (1.0 + M.diagonal().cwiseAbs().maxCoeff());
            Mf.compute(Mreg);
            if (Mf.info() != Eigen::Success) {
                note = "Schur complement factorization failed";
                break;
            }
        }
        Vec v = Mf.solve(b + g);

        // Solve the Newton system for a given complementarity right-hand side.
        struct Dir {
            Blocks dX, dS;
            Vec dz;
            double dtau, dkappa;
        };
        auto direction = [&](double eta, const std::vector<Mat>& Hs, double rk) {
            Dir d;
            Blocks GHG(nb);
            for (size_t j = 0; j < nb; ++j)
                GHG[j] = nt.G[j] * Hs[j] * nt.G[j].transpose();
            Blocks WRW(nb);
            for (size_t j = 0; j < nb; ++j)
                WRW[j] = nt.W[j] * Rd[j] * nt.W[j];
            Vec r1 = -eta * rp - Aop(GHG) - eta * Aop(WRW);
            double r2 = -eta * rg - dot(C, GHG) - eta * dot(C, WRW) - rk / tau;
            Vec u = Mf.solve(r1);
            double den = (g - b).dot(v) - cwc - kappa / tau;
            d.dtau = (r2 - (g - b).dot(u)) / den;
            d.dz = u + v * d.dtau;
            Blocks Az = Aadj(d.dz);
            d.dS.resize(nb);
            d.dX.resize(nb);
            for (size_t j = 0; j < nb; ++j) {
                d.dS[j] = -eta * Rd[j] - Az[j] + d.dtau * C[j];
                d.dX[j] = GHG[j] - nt.W[j] * d.dS[j] * nt.W[j];
                d.dX[j] = sym(d.dX[j]);
                d.dS[j] = sym(d.dS[j]);
            }
            d.dkappa = (rk - kappa * d.dtau) / tau;
            return d;
        };
        auto step_len = [&](const Dir& d) {
            double a = 1e30;
            for (size_t j = 0; j < nb; ++j) {
                a = std::min(a, max_step(X[j], d.dX[j]));
                a = std::min(a, max_step(S[j], d.dS[j]));
            }
            if (d.dtau < 0)
                a = std::min(a, -tau / d.dtau);
            if (d.dkappa < 0)
                a = std::min(a, -kappa / d.dkappa);
            return a;
        };

        // Predictor.
        std::vector<Mat> Hp(nb);
        for (size_t j = 0; j < nb; ++j) {
            const Vec& l = nt.lambda[j];
            Hp[j] = Mat::Zero(l.size(), l.size());
            for (Eigen::Index i = 0; i < l.size(); ++i)
                Hp[j](i, i) = -l(i);
        }
        Dir da = direction(1.0, Hp, -tau * kappa);
        double aa = std::min(1.0, step_len(da));
        double mu_aff = (dot(axpy(X, aa, da.dX), axpy(S, aa, da.dS)) +
                         (tau + aa * da.dtau) * (kappa + aa * da.dkappa)) /
                        (nu + 1);
        double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

        // Corrector with second-order term.
        std::vector<Mat> Hc(nb);
        for (size_t j = 0; j < nb; ++j) {
            const Vec& l = nt.lambda[j];
            Mat dXs = nt.Ginv[j] * da.dX[j] * nt.Ginv[j].transpose();
            Mat dSs = nt.G[j].transpose() * da.dS[j] * nt.G[j];
            Mat corr = dXs * dSs + dSs * dXs;
            Mat rhs = -corr;
            for (Eigen::Index i = 0; i < l.size(); ++i)
                rhs(i, i) += 2.0 * (sigma * mu - l(i) * l(i));
            Hc[j].resize(l.size(), l.size());
            for (Eigen::Index p = 0; p < l.size(); ++p)
                for (Eigen::Index q = 0; q < l.size(); ++q)
                    Hc[j](p, q) = rhs(p, q) / (l(p) + l(q));
        }
        double rk = sigma * mu - tau * kappa - da.dtau * da.dkappa;
        Dir dc = direction(1.0 - sigma, Hc, rk);
        double ac = std::min(1.0, 0.99 * step_len(dc));
        if (!(ac > 1e-14)) {
            note = "step length collapsed";
            break;
        }
        for (size_t j = 0; j < nb; ++j) {
            X[j] = sym(X[j] + ac * dc.dX[j]);
            S[j] = sym(S[j] + ac * dc.dS[j]);
        }
        z += ac * dc.dz;
        tau += ac * dc.dtau;
        kappa += ac * dc.dkappa;
        if (!(tau > 0) || !(kappa > 0) || !std::isfinite(tau)) {
            note = "embedding scalars left the positive orthant";
            break;
        }
    }
    sol.iterations = it;
    sol.note = note;

    if (st == Status::OPTIMAL) {
        finish_point(y_of(R, z / tau));
        sol.gap = std::abs(dot(C, X) - b.dot(z)) / tau / (1.0 + std::abs(dot(C, X) / tau) + std::abs(b.dot(z) / tau));
        sol.dual_bound = -dot(C, X) / tau + R.obj_const;
        if (prob.sense() < 0)
            sol.dual_bound = -sol.dual_bound;
    } else if (st == Status::INFEASIBLE || st == Status::UNBOUNDED) {
        finish_point(y_of(R, z / std::max(tau, 1e-300)));
    } else {
        finish_point(best_y);
        if (prob.sense() < 0)
            sol.dual_bound = -sol.dual_bound;
    }

    // Closure handling: an optimum on the boundary of a strictly-required constraint.
    bool strict_singular = false;
    for (size_t j = 0; j < nb; ++j) {
        if (!cons[j].strict)
            continue;
        double scale = std::max(1.0, cons[j].expr.value(sol.y).norm());
        if (sol.constraint_min_eig[j] <= opt.boundary_tol * scale) {
            strict_singular = true;
            if (!sol.note.empty())
                sol.note += "; ";
            sol.note += "strict constraint '" + cons[j].label + "' is singular at the optimum";
        }
    }
    if (st == Status::OPTIMAL && strict_singular)
        st = Status::NEAR_BOUNDARY;
    if (st == Status::NUMERICAL_LIMIT) {
        double loose = 1e-4;
        bool converged_loosely = best_pres <= loose && best_dres <= loose && best_gap <= loose;
        bool any_singular = strict_singular;
        for (size_t j = 0; j < nb && !any_singular; ++j) {
            double scale = std::max(1.0, cons[j].expr.value(sol.y).norm());
            any_singular = sol.constraint_min_eig[j] <= opt.boundary_tol * scale;
        }
        // No strictly feasible point: accuracy is limited but the iterate is on the boundary face.
        if (converged_loosely && any_singular && sol.max_violation <= std::sqrt(opt.feas_tol)) {
            st = Status::NEAR_BOUNDARY;
            if (!strict_singular)
                sol.note += "; feasible set has empty interior";
        }
    }
    sol.status = st;
    return sol;
}

// SDPA sparse format of the reduced LMI (after equality elimination):
//   line 1: m (number of reduced variables), line 2: nBLOCK, line 3: block sizes,
//   line 4: objective vector c, then "k b i j v" records (1-based, i ≤ j) for F_0 (k=0,
//   entered as -F0) and F_k. The comment header lists y = y0 + N z as a dense record.
inline std::string to_sdpa(const Problem& prob) {
    using namespace detail;
    Reduced R = reduce(prob);
    std::ostringstream os;
    os.precision(17);
    os << "\"ecl reduced LMI: y = y0 + N*(z./scale)\n";
    os << "* y0";
    for (Eigen::Index i = 0; i < R.y0.size(); ++i)
        os << ' ' << R.y0(i);
    os << "\n* objective constant " << R.obj_const << "\n";
    const auto& cons = prob.constraints();
    os << R.F.size() << "\n" << cons.size() << "\n";
    for (size_t j = 0; j < cons.size(); ++j)
        os << (j ? " " : "") << cons[j].expr.rows();
    os << "\n";
    for (Eigen::Index k = 0; k < R.c.size(); ++k)
        os << (k ? " " : "") << R.c(k);
    os << "\n";
    auto emit = [&](int mat, const Blocks& B, double sgn) {
        for (size_t j = 0; j < B.size(); ++j)
            for (Eigen::Index c = 0; c < B[j].cols(); ++c)
                for (Eigen::Index r = 0; r <= c; ++r)
                    if (B[j](r, c) != 0.0)
                        os << mat << ' ' << j + 1 << ' ' << r + 1 << ' ' << c + 1 << ' ' << sgn * B[j](r, c) << "\n";
    };
    emit(0, R.F0, -1.0);
    for (size_t k = 0; k < R.F.size(); ++k)
        emit(static_cast<int>(k) + 1, R.F[k], 1.0);
    return os.str();
}

} // namespace ecl::conic
