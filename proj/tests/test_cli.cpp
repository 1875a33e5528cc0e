#include "ecl/harness.hpp"
#include "ecl/io.hpp"
#include "ecl/landscape.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>
#include <sys/wait.h>

using namespace ecl;
using io::json;

namespace {

std::string fixture(const std::string& name) { return std::string(ECL_SOURCE_DIR) + "/fixtures/" + name; }

const std::vector<std::string> plant_fixtures = {"b1_lqr.json",          "b3_hinf_sf.json",    "noncoercive_hinf_sf.json",
                                                 "qi_scalar_chain.json", "scalar_hinf_sf.json", "scalar_output.json"};

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const io::SchemaError& e) {
        return e.what();
    }
    return "";
}

struct Run {
    int code = -1;
    std::string out;
};

Run run_cli(const std::string& args) {
    Run r;
    const std::string cmd = std::string(ECL_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe)
        return r;
    std::array<char, 4096> buf{};
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0)
        r.out.append(buf.data(), n);
    const int st = pclose(pipe);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

} // namespace

// ---------------------------------------------------------------------------
// Serialization

TEST(Fixtures, ParseAndRoundTrip) {
    for (const auto& f : plant_fixtures) {
        const json j = io::load_json_file(fixture(f));
        io::AnyPlant p = io::parse_plant(j);
        const json back = io::to_json(p);
        EXPECT_EQ(back, j) << f;
        EXPECT_EQ(io::to_json(io::parse_plant(back.dump())), back) << f;
    }
}

TEST(Fixtures, MatchInCodePlants) {
    auto b1 = std::get<Plant>(io::parse_plant(io::load_json_file(fixture("b1_lqr.json"))));
    const Plant ref = landscape::b1_plant();
    EXPECT_EQ(b1.A, ref.A);
    EXPECT_EQ(b1.B, ref.B);
    EXPECT_EQ(b1.Bw, ref.Bw);
    EXPECT_EQ(b1.Q, ref.Q);
    EXPECT_EQ(b1.R, ref.R);
    auto so = std::get<OutputPlant>(io::parse_plant(io::load_json_file(fixture("scalar_output.json"))));
    EXPECT_EQ(io::to_json(so), io::to_json(landscape::scalar_output_plant()));
    auto b3 = std::get<Plant>(io::parse_plant(io::load_json_file(fixture("b3_hinf_sf.json"))));
    EXPECT_EQ(io::to_json(b3), io::to_json(landscape::b3_plant()));
}

TEST(Fixtures, PolicyFiles) {
    Mat K = io::parse_static_policy(io::load_json_file(fixture("b1_k_policy.json")));
    EXPECT_NEAR(lqr_cost(landscape::b1_plant(), K), 37.0 / 3.0, 1e-12);
    Mat Ks = io::parse_static_policy(io::load_json_file(fixture("b1_kstar_policy.json")));
    EXPECT_NEAR(lqr_cost(landscape::b1_plant(), Ks), 5 + 4 * std::sqrt(2.0), 1e-9);
    DynamicPolicy D = io::parse_dynamic_policy(io::load_json_file(fixture("hinf_of_static_policy.json")));
    EXPECT_NEAR(hinf_of_cost(landscape::scalar_output_plant(), D), 1 + std::sqrt(3.0), 1e-8);
    EXPECT_EQ(io::to_json(D), io::load_json_file(fixture("hinf_of_static_policy.json")));
}

TEST(Fixtures, StackedPlantAndMask) {
    auto sp = std::get<io::StackedProblem>(io::parse_plant(io::load_json_file(fixture("qi_scalar_chain.json"))));
    EXPECT_EQ(sp.sys.N, 2);
    EXPECT_TRUE(sp.pattern.mask(1, 0));
    EXPECT_FALSE(sp.pattern.mask(0, 1));
    EXPECT_NEAR(qi::cost_k(sp.sys, Mat::Zero(2, 3)), 9.0, 1e-14);
    auto sol = qi::solve_distributed(sp.sys, sp.pattern);
    EXPECT_NEAR(sol.J, qi::dp_lqg_cost(sp.sys), 1e-10);
}

TEST(Schema, InvariantViolationNamesTheInvariant) {
    const std::string msg = error_of([] { io::parse_plant(io::load_json_file(fixture("bad_r_not_pd.json"))); });
    EXPECT_NE(msg.find("R must be positive definite"), std::string::npos) << msg;
    EXPECT_EQ(msg.rfind("plant", 0), 0u) << msg;
}

TEST(Schema, StructuralErrorsCarryAPath) {
    json j = io::load_json_file(fixture("b1_lqr.json"));
    json miss = j;
    miss.erase("Bw");
    EXPECT_NE(error_of([&] { io::parse_plant(miss); }).find("plant.Bw"), std::string::npos);
    json ragged = j;
    ragged["A"][1] = json::array({0});
    EXPECT_NE(error_of([&] { io::parse_plant(ragged); }).find("plant.A[1]"), std::string::npos);
    json word = j;
    word["Q"][0][0] = "one";
    EXPECT_NE(error_of([&] { io::parse_plant(word); }).find("plant.Q[0][0]"), std::string::npos);
    json kind = j;
    kind["kind"] = "hybrid";
    EXPECT_NE(error_of([&] { io::parse_plant(kind); }).find("unknown kind"), std::string::npos);
    json dims = j;
    dims["B"] = json::array({json::array({1})});
    EXPECT_THROW(io::parse_plant(dims), io::SchemaError);
    EXPECT_NE(error_of([] { io::parse_plant(std::string("{\"kind\": ")); }).find("invalid JSON"), std::string::npos);
    EXPECT_THROW(io::load_json_file(fixture("does_not_exist.json")), io::SchemaError);
}

TEST(Schema, NonCausalMaskRejected) {
    json j = io::load_json_file(fixture("qi_scalar_chain.json"));
    j["mask"][0][1] = 1;
    EXPECT_NE(error_of([&] { io::parse_plant(j); }).find("future output"), std::string::npos);
    j["mask"][0][1] = 2;
    EXPECT_NE(error_of([&] { io::parse_plant(j); }).find("plant.mask[0][1]"), std::string::npos);
}

TEST(Format, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 5 + 4 * std::sqrt(2.0), 1e-300, -2.5, 0.0})
        EXPECT_EQ(std::strtod(io::fmt(v).c_str(), nullptr), v);
    EXPECT_EQ(io::fmt(0.1), "0.1");
    EXPECT_EQ(io::fmt(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(io::fmt(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_EQ(io::fmt(NAN), "nan");
}

// ---------------------------------------------------------------------------
// Landscape grids

TEST(Grid, Parsing) {
    auto g = landscape::parse_grid("-2:2:5,-5:-1:3");
    EXPECT_EQ(g.x.count, 5);
    EXPECT_DOUBLE_EQ(g.x.at(1), -1.0);
    EXPECT_DOUBLE_EQ(g.y.at(2), -1.0);
    for (const char* bad : {"1:2", "1:2:3", "a:2:3,1:2:3", "1:2:0,1:2:3", "2:1:3,1:2:3", "1:2:3,1:2:3:4", "1:2:3x,1:2:3"})
        EXPECT_THROW(landscape::parse_grid(bad), io::SchemaError) << bad;
    EXPECT_NO_THROW(landscape::parse_grid("3:3:1,1:1:1"));
}

TEST(Grid, SinglePointAtOptimum) {
    const double k2 = -1 - std::sqrt(2.0);
    auto rows = landscape::landscape_grid(landscape::slices().at("lqr-b1"),
                                          landscape::parse_grid("0:0:1," + io::fmt(k2) + ":0:1"));
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_NEAR(rows[0].cost, 5 + 4 * std::sqrt(2.0), 1e-9);
}

TEST(Grid, CsvLayoutAndInfinity) {
    auto rows = landscape::landscape_grid(landscape::slices().at("lqr-offdiag"), landscape::parse_grid("0:5:2,0:5:2"));
    const std::string csv = landscape::to_csv(rows);
    EXPECT_EQ(csv.rfind("coord1,coord2,cost\n", 0), 0u);
    // (0,0) is stabilizing; (5,5) has k1 k2 ≥ 1
    EXPECT_NE(csv.find("\n0,0,"), std::string::npos);
    EXPECT_NE(csv.find("\n5,5,inf\n"), std::string::npos);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_EQ(csv, landscape::to_csv(landscape::landscape_grid(landscape::slices().at("lqr-offdiag"),
                                                               landscape::parse_grid("0:5:2,0:5:2"))));
}

// ---------------------------------------------------------------------------
// Registry and reports

TEST(Registry, IdsUniqueAndProvenanceTagged) {
    const auto reg = harness::registry();
    std::set<std::string> ids;
    for (const auto& c : reg)
        EXPECT_TRUE(ids.insert(c.id).second) << c.id;
    for (const char* id : {"B1-lqr", "2.3-hinf-sf", "B3-hinf-sf-nonsmooth", "C21-noncoercive"})
        EXPECT_TRUE(ids.count(id)) << id;
    EXPECT_EQ(harness::find_case(reg, "no-such-case"), nullptr);
    auto rep = harness::run_cases({harness::find_case(reg, "B1-lqr"), harness::find_case(reg, "2.3-hinf-sf")});
    for (const auto& c : rep.cases)
        for (const auto& k : c.checks)
            EXPECT_TRUE(k.provenance == "PAPER" || k.provenance == "DERIVED" || k.provenance == "TRIVIAL")
                << c.id << " " << k.quantity;
    EXPECT_TRUE(rep.pass());
}

TEST(Report, FailureAndNumericalFailureSemantics) {
    harness::ExampleCase ok{"ok", "", [] { return std::vector<harness::Check>{harness::abs_check("x", 1, 1, 0, "TRIVIAL")}; }};
    harness::ExampleCase bad{"bad", "", [] {
                                 return std::vector<harness::Check>{harness::abs_check("x", 1.1, 1, 0.05, "TRIVIAL")};
                             }};
    harness::ExampleCase num{"num", "", []() -> std::vector<harness::Check> { throw SolverFailure("stalled"); }};
    harness::ExampleCase pre{"pre", "", []() -> std::vector<harness::Check> { throw PreconditionError("bad input"); }};
    EXPECT_TRUE(harness::run_cases({&ok}).pass());
    auto r1 = harness::run_cases({&ok, &bad});
    EXPECT_FALSE(r1.pass());
    EXPECT_FALSE(r1.numerical_failure());
    auto r2 = harness::run_cases({&ok, &num});
    EXPECT_FALSE(r2.pass());
    EXPECT_TRUE(r2.numerical_failure());
    auto r3 = harness::run_cases({&pre});
    EXPECT_FALSE(r3.pass());
    EXPECT_FALSE(r3.numerical_failure());
    EXPECT_NE(harness::emit_report(r2, "text").find("error: stalled"), std::string::npos);

    // non-finite measurements never pass a tolerance check
    EXPECT_FALSE(harness::abs_check("x", NAN, 1, 1e9, "TRIVIAL").pass());
    EXPECT_FALSE(harness::at_most("x", NAN, 1, "TRIVIAL").pass());
    EXPECT_TRUE(harness::at_most("x", 0.5, 1, "TRIVIAL").pass());
    EXPECT_FALSE(harness::at_least("x", 0.5, 1, "TRIVIAL").pass());
}

TEST(Report, ByteStableWithoutTimings) {
    const auto reg = harness::registry();
    std::vector<const harness::ExampleCase*> sel{harness::find_case(reg, "B1-lqr"), harness::find_case(reg, "qi-scalar-chain")};
    const std::string a = harness::emit_report(harness::run_cases(sel), "json");
    const std::string b = harness::emit_report(harness::run_cases(sel), "json");
    EXPECT_EQ(a, b);
    const json j = json::parse(a);
    EXPECT_EQ(j["summary"]["total"], 2);
    EXPECT_EQ(j["cases"][0]["id"], "B1-lqr");
    EXPECT_FALSE(j["cases"][0].contains("seconds"));
    EXPECT_EQ(harness::emit_report(harness::run_cases(sel), "text"), harness::emit_report(harness::run_cases(sel), "text"));
    EXPECT_THROW(harness::emit_report(harness::run_cases(sel), "xml"), io::SchemaError);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, VerifyExitCodes) {
    auto r = run_cli("verify --case B1-lqr --format json");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("\"pass\": true"), std::string::npos);
    EXPECT_EQ(run_cli("verify --case no-such-case").code, 2);
    EXPECT_EQ(run_cli("verify").code, 2);
    EXPECT_EQ(run_cli("verify --case B1-lqr --format yaml").code, 2);
    auto t = run_cli("verify --case B1-lqr --format text");
    EXPECT_EQ(t.code, 0);
    EXPECT_EQ(t.out.rfind("PASS B1-lqr\n", 0), 0u) << t.out;
    auto l = run_cli("verify --list");
    EXPECT_EQ(l.code, 0);
    EXPECT_NE(l.out.find("C21-noncoercive"), std::string::npos);
}

TEST(Cli, SolveAndSchemaErrors) {
    auto r = run_cli("solve --problem lqr --plant " + fixture("b1_lqr.json"));
    ASSERT_EQ(r.code, 0) << r.out;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["status"], "OPTIMAL");
    EXPECT_NEAR(std::stod(j["gamma"].get<std::string>()), 5 + 4 * std::sqrt(2.0), 1e-6);
    auto bad = run_cli("solve --problem lqr --plant " + fixture("bad_r_not_pd.json"));
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.out.find("R must be positive definite"), std::string::npos) << bad.out;
    EXPECT_EQ(run_cli("solve --problem lqg --plant " + fixture("b1_lqr.json")).code, 2);
    EXPECT_EQ(run_cli("solve --problem lqr --plant " + fixture("missing.json")).code, 2);
    EXPECT_EQ(run_cli("solve --problem nope --plant " + fixture("b1_lqr.json")).code, 2);
    auto q = run_cli("solve --problem qi --plant " + fixture("qi_scalar_chain.json"));
    EXPECT_EQ(q.code, 0) << q.out;
}

TEST(Cli, LandscapeAndCertify) {
    auto g = run_cli("landscape --problem lqr-offdiag --grid 0:5:2,0:5:2");
    ASSERT_EQ(g.code, 0) << g.out;
    EXPECT_EQ(g.out.rfind("coord1,coord2,cost\n", 0), 0u);
    EXPECT_EQ(run_cli("landscape --problem lqr-offdiag --grid 0:5").code, 2);
    EXPECT_EQ(run_cli("landscape --problem nothing --grid 0:5:2,0:5:2").code, 2);

    auto c = run_cli("certify --problem lqr --plant " + fixture("b1_lqr.json") + " --policy " + fixture("b1_kstar_policy.json"));
    EXPECT_EQ(c.code, 0) << c.out;
    EXPECT_EQ(json::parse(c.out)["globally_optimal"], true);
    auto n = run_cli("certify --problem lqr --plant " + fixture("b1_lqr.json") + " --policy " + fixture("b1_k_policy.json"));
    EXPECT_EQ(n.code, 1) << n.out;
    EXPECT_EQ(json::parse(n.out)["stationary"], false);
}
