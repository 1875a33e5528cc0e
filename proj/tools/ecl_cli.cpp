#include "ecl/harness.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

using namespace ecl;
using io::json;

namespace {

constexpr int kPass = 0, kCheckFailure = 1, kUsage = 2, kNumerical = 3;

void write_output(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw io::SchemaError(path + ": cannot open for writing");
    out << text;
}

json solution_header(const conic::Solution& s) {
    return json{{"status", conic::to_string(s.status)},
                {"objective", io::fmt(s.objective)},
                {"gap", io::fmt(s.gap)},
                {"max_violation", io::fmt(s.max_violation)},
                {"note", s.note}};
}

json solve_problem(const std::string& problem, const io::AnyPlant& plant) {
    auto need_state = [&]() -> const Plant& {
        if (auto* p = std::get_if<Plant>(&plant))
            return *p;
        throw io::SchemaError("plant.kind: problem '" + problem + "' needs a state plant");
    };
    auto need_output = [&]() -> const OutputPlant& {
        if (auto* p = std::get_if<OutputPlant>(&plant))
            return *p;
        throw io::SchemaError("plant.kind: problem '" + problem + "' needs an output plant");
    };
    if (problem == "lqr" || problem == "hinf-sf") {
        const Plant& P = need_state();
        auto r = problem == "lqr" ? lqr_solve(P) : hinf_sf_solve(P);
        json out = solution_header(r.sol);
        out["gamma"] = io::fmt(r.gamma);
        if (r.K)
            out["K"] = io::to_json(*r.K);
        if (problem == "lqr")
            out["riccati_gamma"] = io::fmt(lqr_riccati_optimum(P));
        return out;
    }
    if (problem == "lqg" || problem == "hinf-of") {
        const OutputPlant& P = need_output();
        auto r = problem == "lqg" ? lqg_solve(P) : hinf_of_solve(P);
        json out = solution_header(r.sol);
        out["gamma"] = io::fmt(r.gamma);
        if (r.K)
            out["policy"] = io::to_json(*r.K);
        if (problem == "lqg")
            out["riccati_gamma"] = io::fmt(lqg_riccati_optimum(P));
        return out;
    }
    if (problem == "qi") {
        auto* sp = std::get_if<io::StackedProblem>(&plant);
        if (!sp)
            throw io::SchemaError("plant.kind: problem 'qi' needs a stacked plant");
        auto r = qi::solve_distributed(sp->sys, sp->pattern);
        return json{{"status", "OPTIMAL"}, {"J", io::fmt(r.J)}, {"K", io::to_json(r.K)}, {"Q", io::to_json(r.Q)},
                    {"note", r.note}};
    }
    throw io::SchemaError("problem: unknown problem '" + problem + "'");
}

// Stationarity, non-degeneracy and the gap to the convex optimum at a given policy.
json certify_policy(const std::string& problem, const io::AnyPlant& plant, const json& pol, bool& certified) {
    double J = 0, measure = 0, gamma_star = NAN;
    bool nondegenerate = false;
    std::string degeneracy_note;
    if (problem == "lqr" || problem == "hinf-sf") {
        auto* P = std::get_if<Plant>(&plant);
        if (!P)
            throw io::SchemaError("plant.kind: problem '" + problem + "' needs a state plant");
        Mat K = io::parse_static_policy(pol);
        if (problem == "lqr") {
            auto e = lqr_eval(*P, K);
            J = e.J;
            measure = lqr_grad(*P, K).norm();
            nondegenerate = min_eig(e.X) > 1e-12;
            gamma_star = lqr_solve(*P).gamma;
        } else {
            J = hinf_sf_cost(*P, K);
            measure = clarke_stationarity_measure(hinf_sf_generators(*P, K));
            try {
                auto lp = hinf_sf_lift(*P, K, J);
                nondegenerate = min_eig(lp.P) > 1e-12;
            } catch (const Error& e) {
                degeneracy_note = e.what();
            }
            gamma_star = hinf_sf_solve(*P).gamma;
        }
    } else if (problem == "lqg" || problem == "hinf-of") {
        auto* P = std::get_if<OutputPlant>(&plant);
        if (!P)
            throw io::SchemaError("plant.kind: problem '" + problem + "' needs an output plant");
        DynamicPolicy K = io::parse_dynamic_policy(pol);
        std::optional<LiftCertificate> cert;
        if (problem == "lqg") {
            J = lqg_cost(*P, K);
            measure = lqg_grad(*P, K).norm();
            cert = lqg_lift_feasibility(*P, K, J);
            gamma_star = lqg_solve(*P).gamma;
        } else {
            J = hinf_of_cost(*P, K);
            measure = clarke_stationarity_measure(hinf_of_generators(*P, K));
            cert = hinf_of_lift_feasibility(*P, K, J);
            gamma_star = hinf_of_solve(*P).gamma;
        }
        nondegenerate = cert.has_value();
        if (!cert)
            degeneracy_note = "no lifted certificate with a nonsingular off-diagonal block; possibly degenerate";
    } else if (problem == "qi") {
        auto* sp = std::get_if<io::StackedProblem>(&plant);
        if (!sp)
            throw io::SchemaError("plant.kind: problem 'qi' needs a stacked plant");
        Mat K = io::parse_static_policy(pol);
        if (!sp->pattern.contains(K))
            throw PreconditionError("policy.K: violates the sparsity pattern");
        J = qi::cost_k(sp->sys, K);
        measure = sp->pattern.project(qi::cost_k_grad(sp->sys, K)).norm();
        nondegenerate = qi::qi_check(sp->pattern, sp->sys.G());
        if (!nondegenerate)
            degeneracy_note = "pattern is not quadratically invariant";
        else
            gamma_star = qi::solve_distributed(sp->sys, sp->pattern).J;
    } else {
        throw io::SchemaError("problem: unknown problem '" + problem + "'");
    }
    const bool stationary = is_stationary(measure, J);
    certified = stationary && nondegenerate;
    json out{{"cost", io::fmt(J)},
             {"stationarity_measure", io::fmt(measure)},
             {"stationary", stationary},
             {"nondegenerate", nondegenerate},
             {"globally_optimal", certified},
             {"convex_optimum", io::fmt(gamma_star)},
             {"gap", io::fmt(J - gamma_star)}};
    if (!degeneracy_note.empty())
        out["degeneracy_note"] = degeneracy_note;
    return out;
}

template <class F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const io::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Policy optimization with extended convex lifting"};
    app.require_subcommand(1);

    auto* verify = app.add_subcommand("verify", "run registered example checks");
    std::string case_id, format = "text";
    bool all = false, timings = false, list = false;
    auto* case_opt = verify->add_option("--case", case_id, "case id");
    auto* all_opt = verify->add_flag("--all", all, "run every registered case");
    case_opt->excludes(all_opt);
    verify->add_flag("--list", list, "list registered case ids");
    verify->add_option("--format", format, "json or text")->check(CLI::IsMember({"json", "text"}));
    verify->add_flag("--timings", timings, "include wall-clock timings");

    auto* solve = app.add_subcommand("solve", "solve the convex reformulation");
    std::string problem, plant_file, out_file;
    solve->add_option("--problem", problem)->required()->check(CLI::IsMember({"lqr", "hinf-sf", "lqg", "hinf-of", "qi"}));
    solve->add_option("--plant", plant_file)->required();
    solve->add_option("--out", out_file);

    auto* land = app.add_subcommand("landscape", "evaluate a cost on a 2-D policy grid");
    std::string slice_name, grid;
    land->add_option("--problem", slice_name)->required();
    land->add_option("--grid", grid, "lo:hi:count,lo:hi:count")->required();
    land->add_option("--out", out_file);

    auto* cert = app.add_subcommand("certify", "stationarity, non-degeneracy and gap at a policy");
    std::string policy_file;
    cert->add_option("--problem", problem)->required()->check(CLI::IsMember({"lqr", "hinf-sf", "lqg", "hinf-of", "qi"}));
    cert->add_option("--plant", plant_file)->required();
    cert->add_option("--policy", policy_file)->required();
    cert->add_option("--out", out_file);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : kUsage;
    }

    if (*verify) {
        return guarded([&] {
            const auto reg = harness::registry();
            if (list) {
                for (const auto& c : reg)
                    std::cout << c.id << "  " << c.description << "\n";
                return kPass;
            }
            std::vector<const harness::ExampleCase*> sel;
            if (all) {
                for (const auto& c : reg)
                    sel.push_back(&c);
            } else if (!case_id.empty()) {
                const auto* c = harness::find_case(reg, case_id);
                if (!c) {
                    std::cerr << "error: unknown case id '" << case_id << "'\n";
                    return kUsage;
                }
                sel.push_back(c);
            } else {
                std::cerr << "error: verify needs --case ID or --all\n";
                return kUsage;
            }
            auto report = harness::run_cases(sel);
            std::cout << harness::emit_report(report, format, timings);
            if (report.numerical_failure())
                return kNumerical;
            return report.pass() ? kPass : kCheckFailure;
        });
    }
    if (*solve) {
        return guarded([&] {
            auto plant = io::parse_plant(io::load_json_file(plant_file));
            json out = solve_problem(problem, plant);
            write_output(out.dump(2) + "\n", out_file);
            const auto st = out["status"].get<std::string>();
            return st == "OPTIMAL" || st == "NEAR_BOUNDARY" ? kPass : kNumerical;
        });
    }
    if (*land) {
        return guarded([&] {
            auto sl = landscape::slices();
            auto it = sl.find(slice_name);
            if (it == sl.end()) {
                std::string names;
                for (const auto& [k, v] : sl)
                    names += " " + k;
                throw io::SchemaError("problem: unknown landscape '" + slice_name + "'; available:" + names);
            }
            auto rows = landscape::landscape_grid(it->second, landscape::parse_grid(grid));
            write_output(landscape::to_csv(rows), out_file);
            return kPass;
        });
    }
    if (*cert) {
        return guarded([&] {
            auto plant = io::parse_plant(io::load_json_file(plant_file));
            bool certified = false;
            json out = certify_policy(problem, plant, io::load_json_file(policy_file), certified);
            write_output(out.dump(2) + "\n", out_file);
            return certified ? kPass : kCheckFailure;
        });
    }
    return kUsage;
}
