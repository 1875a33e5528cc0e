#pragma once

#include "ecl/ecl_dynamic.hpp"
#include "ecl/ecl_state.hpp"
#include "ecl/io.hpp"
#include "ecl/landscape.hpp"
#include "ecl/qi.hpp"

#include <chrono>
#include <functional>
#include <future>
#include <string>
#include <vector>

namespace ecl::harness {

using io::json;

enum class Cmp { Abs, Rel, AtMost, AtLeast };

struct Check {
    std::string quantity;
    double measured = 0, expected = 0, tol = 0;
    Cmp cmp = Cmp::Abs;
    std::string provenance;

    double residual() const {
        switch (cmp) {
        case Cmp::Abs: return std::abs(measured - expected);
        case Cmp::Rel: return std::abs(measured - expected) / std::max(std::abs(expected), 1e-300);
        case Cmp::AtMost: return std::max(0.0, measured - expected);
        default: return std::max(0.0, expected - measured);
        }
    }
    bool pass() const {
        if (!std::isfinite(measured) && measured != expected)
            return false;
        return cmp == Cmp::AtMost || cmp == Cmp::AtLeast ? residual() <= 0.0 : residual() <= tol;
    }
};

struct ExampleCase {
    std::string id, description;
    std::function<std::vector<Check>()> run;
};

struct CaseResult {
    std::string id;
    std::vector<Check> checks;
    std::string error;
    bool numerical_failure = false;
    double seconds = 0;

    bool pass() const {
        if (!error.empty())
            return false;
        for (const auto& c : checks)
            if (!c.pass())
                return false;
        return true;
    }
};

struct Report {
    std::vector<CaseResult> cases;

    bool pass() const {
        for (const auto& c : cases)
            if (!c.pass())
                return false;
        return true;
    }
    bool numerical_failure() const {
        for (const auto& c : cases)
            if (c.numerical_failure)
                return true;
        return false;
    }
};

inline Check abs_check(std::string q, double m, double e, double tol, std::string prov) {
    return {std::move(q), m, e, tol, Cmp::Abs, std::move(prov)};
}
inline Check rel_check(std::string q, double m, double e, double tol, std::string prov) {
    return {std::move(q), m, e, tol, Cmp::Rel, std::move(prov)};
}
inline Check at_most(std::string q, double m, double bound, std::string prov) {
    return {std::move(q), m, bound, 0.0, Cmp::AtMost, std::move(prov)};
}
inline Check at_least(std::string q, double m, double bound, std::string prov) {
    return {std::move(q), m, bound, 0.0, Cmp::AtLeast, std::move(prov)};
}

inline Plant scalar_state_plant(double A, double B, double Bw, double Q, double R) {
    return {Mat::Constant(1, 1, A), Mat::Constant(1, 1, B), Mat::Constant(1, 1, Bw), Mat::Constant(1, 1, Q),
            Mat::Constant(1, 1, R)};
}

inline std::vector<ExampleCase> registry() {
    std::vector<ExampleCase> r;
    const double s2 = std::sqrt(2.0), s3 = std::sqrt(3.0);

    r.push_back({"B1-lqr", "LQR on the two-state example: cost, gradient, Riccati and SDP optimum", [=] {
                     const Plant P = landscape::b1_plant();
                     Mat K(1, 2);
                     K << 1, -2;
                     auto e = lqr_eval(P, K);
                     Mat g = lqr_grad(P, K);
                     Mat Kr = lqr_riccati_gain(P);
                     auto s = lqr_solve(P);
                     std::vector<Check> c{
                         abs_check("J(K=[1,-2])", e.J, 37.0 / 3.0, 1e-9, "PAPER"),
                         abs_check("dJ/dk1", g(0, 0), 24.0 / 9.0, 1e-9, "PAPER"),
                         abs_check("dJ/dk2", g(0, 1), 28.0 / 9.0, 1e-9, "PAPER"),
                         abs_check("X_K(1,2)", e.X(0, 1), 1.0 / 3.0, 1e-9, "PAPER"),
                         abs_check("P_K(2,2)", e.P(1, 1), 30.0 / 12.0, 1e-9, "PAPER"),
                         rel_check("riccati gamma*", lqr_riccati_optimum(P), 5 + 4 * s2, 1e-6, "PAPER"),
                         abs_check("riccati k1*", Kr(0, 0), 0.0, 1e-8, "PAPER"),
                         abs_check("riccati k2*", Kr(0, 1), -1 - s2, 1e-8, "PAPER"),
                         rel_check("sdp gamma*", s.gamma, 5 + 4 * s2, 1e-6, "PAPER")};
                     c.push_back(abs_check("sdp k1*", s.K ? (*s.K)(0, 0) : NAN, 0.0, 1e-5, "PAPER"));
                     c.push_back(abs_check("sdp k2*", s.K ? (*s.K)(0, 1) : NAN, -1 - s2, 1e-5, "PAPER"));
                     return c;
                 }});

    r.push_back({"2.3-hinf-sf", "scalar state feedback Hinf: cost, subgradient and SDP recovery", [=] {
                     const Plant P = scalar_state_plant(-1, 1, 1, 0.1, 1);
                     const Mat k = Mat::Constant(1, 1, -0.1);
                     auto s = hinf_sf_solve(P);
                     const double kk = -0.5;
                     auto res = hinf_sf_cost_full(P, Mat::Constant(1, 1, kk));
                     auto gens = hinf_sf_generators(P, Mat::Constant(1, 1, kk));
                     std::vector<Check> c{
                         abs_check("J(-0.1)", hinf_sf_cost(P, k), std::sqrt(0.11) / 1.1, 1e-8, "PAPER"),
                         abs_check("subgradient(-0.5)", gens.empty() ? NAN : gens[0](0, 0),
                                   (0.1 + kk) / ((1 - kk) * (1 - kk) * std::sqrt(0.1 + kk * kk)), 1e-8, "PAPER"),
                         abs_check("sdp gamma*", s.gamma, 0.3015, 1e-4, "PAPER"),
                         abs_check("recovered k*", s.K ? (*s.K)(0, 0) : NAN, -0.1, 1e-4, "PAPER"),
                         abs_check("peak frequency(-0.5)", res.peaks.empty() ? NAN : res.peaks[0], 0.0, 1e-8, "DERIVED")};
                     return c;
                 }});

    r.push_back({"B3-hinf-sf-nonsmooth", "two-state Hinf with repeated peak singular value", [=] {
                     const Plant P = landscape::b3_plant();
                     const Mat I = Mat::Identity(2, 2);
                     auto gens = hinf_sf_generators(P, -2.0 * I);
                     double spread = gens.size() >= 2 ? (gens[0] - gens[1]).norm() : 0.0;
                     auto s = hinf_sf_solve(P);
                     return std::vector<Check>{
                         abs_check("J(-2I)", hinf_sf_cost(P, -2.0 * I), std::sqrt(5.0) / 3.0, 1e-9, "PAPER"),
                         at_least("subgradient spread at -2I", spread, 1e-3, "PAPER"),
                         at_most("clarke measure at -I", clarke_stationarity_measure(hinf_sf_generators(P, -I)), 1e-6,
                                 "PAPER"),
                         abs_check("sdp gamma*", s.gamma, s2 / 2, 1e-6, "PAPER")};
                 }});

    r.push_back({"C21-noncoercive", "state feedback Hinf whose infimum is not attained", [=] {
                     const Plant P = scalar_state_plant(1, -1, 1, 1, 1);
                     auto s = hinf_sf_solve(P);
                     return std::vector<Check>{
                         abs_check("J(1e3) closed form", hinf_sf_cost(P, Mat::Constant(1, 1, 1e3)),
                                   std::sqrt(1.0 + 1e6) / 999.0, 1e-9, "PAPER"),
                         abs_check("J(1e6) limit", hinf_sf_cost(P, Mat::Constant(1, 1, 1e6)), 1.0, 1e-3, "PAPER"),
                         abs_check("J(2) closed form", hinf_sf_cost(P, Mat::Constant(1, 1, 2.0)), std::sqrt(5.0), 1e-9,
                                   "PAPER"),
                         abs_check("sdp status is NEAR_BOUNDARY", s.sol.status == conic::Status::NEAR_BOUNDARY ? 1 : 0,
                                   1, 0, "PAPER"),
                         abs_check("sdp objective", s.sol.objective, 1.0, 1e-3, "PAPER")};
                 }});

    r.push_back({"A-offdiag-mask", "stabilizing set of A=0, B=I with unit negative diagonal", [=] {
                     auto slice = landscape::slices().at("lqr-offdiag");
                     auto rows = landscape::landscape_grid(slice, landscape::parse_grid("-5:5:101,-5:5:101"));
                     int mismatch = 0;
                     for (int i = 0; i < 101; ++i)
                         for (int k = 0; k < 101; ++k) {
                             bool expected = (i - 50) * (k - 50) < 100;
                             if (std::isfinite(rows[static_cast<size_t>(i * 101 + k)].cost) != expected)
                                 ++mismatch;
                         }
                     Mat K0 = landscape::offdiag_gain(0, 0);
                     return std::vector<Check>{abs_check("mask mismatches", mismatch, 0, 0, "PAPER"),
                                               abs_check("J at K*=-I2", lqr_cost(landscape::offdiag_plant(), K0), 2.0,
                                                         1e-12, "DERIVED")};
                 }});

    r.push_back({"A-lqr-b1-grid", "LQR landscape over (k1,k2) on the two-state example", [=] {
                     auto slice = landscape::slices().at("lqr-b1");
                     auto rows = landscape::landscape_grid(slice, landscape::parse_grid("-2:2:81,-5:-1.05:80"));
                     const auto& best = landscape::argmin(rows);
                     const double dx = 4.0 / 80, dy = (5 - 1.05) / 79;
                     auto closed = [](double k1, double k2) {
                         return (1 - 2 * k2 + 3 * k2 * k2 - 2 * k2 * k2 * k2 - 2 * k1 * k1 * k2) / (k2 * k2 - 1);
                     };
                     double worst = 0;
                     for (const auto& row : rows)
                         worst = std::max(worst, std::abs(row.cost - closed(row.c1, row.c2)) /
                                                     std::max(1.0, std::abs(closed(row.c1, row.c2))));
                     return std::vector<Check>{at_most("|argmin k1 - k1*| / cell", std::abs(best.c1) / dx, 1.0, "PAPER"),
                                               at_most("|argmin k2 - k2*| / cell", std::abs(best.c2 + 1 + s2) / dy, 1.0,
                                                       "PAPER"),
                                               at_most("closed-form cost deviation", worst, 1e-9, "PAPER")};
                 }});

    r.push_back({"A-hinf-of-static", "output feedback Hinf on the all-ones scalar plant", [=] {
                     const OutputPlant P = landscape::scalar_output_plant();
                     DynamicPolicy K{Mat::Constant(1, 1, -1 - s3), Mat::Zero(1, 1), Mat::Zero(1, 1),
                                     Mat::Constant(1, 1, -1.0)};
                     return std::vector<Check>{
                         abs_check("J(K)", hinf_of_cost(P, K), 1 + s3, 1e-8, "DERIVED"),
                         at_most("clarke measure", clarke_stationarity_measure(hinf_of_generators(P, K)), 1e-5,
                                 "DERIVED")};
                 }});

    r.push_back({"lqg-scalar", "LQG on the all-ones scalar plant: SDP against two Riccati equations", [=] {
                     const OutputPlant P = landscape::scalar_output_plant();
                     auto s = lqg_solve(P);
                     double gn = s.K ? lqg_grad(P, *s.K).norm() : NAN;
                     return std::vector<Check>{
                         rel_check("riccati J*", lqg_riccati_optimum(P), std::sqrt(8 + 6 * s2), 1e-10, "DERIVED"),
                         rel_check("sdp gamma*", s.gamma, std::sqrt(8 + 6 * s2), 1e-5, "DERIVED"),
                         at_most("gradient norm at recovered K", gn, 1e-4, "DERIVED")};
                 }});

    r.push_back({"qi-scalar-chain", "finite-horizon distributed control on a scalar chain", [=] {
                     const Mat one = Mat::Ones(1, 1);
                     auto s = qi::time_invariant(2, one, one, one, one, one, one, one, one);
                     auto cent = qi::solve_distributed(s, qi::SparsityPattern::centralized(2, 1, 1));
                     auto diag = qi::SparsityPattern::empty(2, 1, 1);
                     diag.mask(0, 0) = diag.mask(1, 1) = true;
                     return std::vector<Check>{
                         abs_check("open-loop cost", qi::cost_k(s, Mat::Zero(2, 3)), 9.0, 1e-12, "DERIVED"),
                         rel_check("centralized J* vs dynamic programming", cent.J, qi::dp_lqg_cost(s), 1e-10,
                                   "DERIVED"),
                         abs_check("diagonal pattern is QI", qi::qi_check(diag, s.G()) ? 1 : 0, 0, 0, "DERIVED"),
                         abs_check("causal pattern is QI", qi::qi_check(qi::SparsityPattern::centralized(2, 1, 1), s.G()) ? 1 : 0,
                                   1, 0, "TRIVIAL")};
                 }});
    return r;
}

inline CaseResult run_case(const ExampleCase& c) {
    CaseResult out;
    out.id = c.id;
    auto t0 = std::chrono::steady_clock::now();
    try {
        out.checks = c.run();
    } catch (const SolverFailure& e) {
        out.error = e.what();
        out.numerical_failure = true;
    } catch (const RiccatiFailure& e) {
        out.error = e.what();
        out.numerical_failure = true;
    } catch (const NoUniqueSolution& e) {
        out.error = e.what();
        out.numerical_failure = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline const ExampleCase* find_case(const std::vector<ExampleCase>& reg, const std::string& id) {
    for (const auto& c : reg)
        if (c.id == id)
            return &c;
    return nullptr;
}

// Cases run concurrently; results keep registry order.
inline Report run_cases(const std::vector<const ExampleCase*>& cases) {
    std::vector<std::future<CaseResult>> fut;
    for (const auto* c : cases)
        fut.push_back(std::async(std::launch::async, [c] { return run_case(*c); }));
    Report r;
    for (auto& f : fut)
        r.cases.push_back(f.get());
    return r;
}

inline const char* cmp_name(Cmp c) {
    switch (c) {
    case Cmp::Abs: return "abs";
    case Cmp::Rel: return "rel";
    case Cmp::AtMost: return "at_most";
    default: return "at_least";
    }
}

inline std::string emit_report(const Report& r, const std::string& format, bool timings = false) {
    if (format == "json") {
        json cases = json::array();
        int passed = 0;
        for (const auto& c : r.cases) {
            json checks = json::array();
            for (const auto& k : c.checks)
                checks.push_back(json{{"quantity", k.quantity},
                                      {"measured", io::fmt(k.measured)},
                                      {"expected", io::fmt(k.expected)},
                                      {"tolerance", io::fmt(k.tol)},
                                      {"comparison", cmp_name(k.cmp)},
                                      {"residual", io::fmt(k.residual())},
                                      {"provenance", k.provenance},
                                      {"pass", k.pass()}});
            json jc{{"id", c.id}, {"pass", c.pass()}, {"checks", checks}};
            if (!c.error.empty())
                jc["error"] = c.error;
            if (timings)
                jc["seconds"] = c.seconds;
            cases.push_back(jc);
            passed += c.pass() ? 1 : 0;
        }
        json out{{"cases", cases},
                 {"summary", json{{"total", r.cases.size()}, {"passed", passed}, {"pass", r.pass()}}}};
        return out.dump(2) + "\n";
    }
    if (format != "text")
        throw io::SchemaError("report: unknown format '" + format + "'");
    std::string s;
    int passed = 0;
    for (const auto& c : r.cases) {
        s += std::string(c.pass() ? "PASS " : "FAIL ") + c.id;
        if (timings)
            s += " (" + io::fmt(c.seconds) + " s)";
        s += "\n";
        if (!c.error.empty())
            s += "  error: " + c.error + "\n";
        for (const auto& k : c.checks)
            s += std::string("  ") + (k.pass() ? "ok   " : "FAIL ") + k.quantity + ": measured " + io::fmt(k.measured) +
                 ", expected " + io::fmt(k.expected) + " (" + cmp_name(k.cmp) + " " + io::fmt(k.tol) + ") [" +
                 k.provenance + "]\n";
        passed += c.pass() ? 1 : 0;
    }
    s += std::to_string(passed) + "/" + std::to_string(r.cases.size()) + " cases passed\n";
    return s;
}

} // namespace ecl::harness
