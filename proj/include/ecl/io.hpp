#pragma once

#include "ecl/plant.hpp"
#include "ecl/qi.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <variant>

namespace ecl::io {

using json = nlohmann::ordered_json;

class SchemaError : public Error {
public:
    using Error::Error;
};

inline Mat parse_matrix(const json& j, const std::string& path) {
    if (j.is_number())
        return Mat::Constant(1, 1, j.get<double>());
    if (!j.is_array())
        throw SchemaError(path + ": expected a row-major nested array");
    const auto r = static_cast<Eigen::Index>(j.size());
    if (r == 0)
        throw SchemaError(path + ": matrix has no rows");
    if (!j[0].is_array())
        throw SchemaError(path + "[0]: expected an array of numbers");
    const auto c = static_cast<Eigen::Index>(j[0].size());
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto& row = j[static_cast<size_t>(i)];
        const std::string rp = path + "[" + std::to_string(i) + "]";
        if (!row.is_array())
            throw SchemaError(rp + ": expected an array of numbers");
        if (static_cast<Eigen::Index>(row.size()) != c)
            throw SchemaError(rp + ": row length " + std::to_string(row.size()) + " differs from " +
                              std::to_string(c));
        for (Eigen::Index k = 0; k < c; ++k) {
            const auto& v = row[static_cast<size_t>(k)];
            if (!v.is_number())
                throw SchemaError(rp + "[" + std::to_string(k) + "]: expected a number");
            M(i, k) = v.get<double>();
        }
    }
    return M;
}

inline json to_json(const Mat& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < M.cols(); ++k)
            row.push_back(M(i, k));
        rows.push_back(row);
    }
    return rows;
}

inline const json& field(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object())
        throw SchemaError(path + ": expected an object");
    auto it = j.find(key);
    if (it == j.end())
        throw SchemaError(path + "." + key + ": missing field");
    return *it;
}

inline Mat matrix_field(const json& j, const std::string& key, const std::string& path) {
    return parse_matrix(field(j, key, path), path + "." + key);
}

inline std::vector<Mat> matrix_list(const json& j, const std::string& key, const std::string& path) {
    const auto& a = field(j, key, path);
    if (!a.is_array())
        throw SchemaError(path + "." + key + ": expected a list of matrices");
    std::vector<Mat> out;
    for (size_t t = 0; t < a.size(); ++t)
        out.push_back(parse_matrix(a[t], path + "." + key + "[" + std::to_string(t) + "]"));
    return out;
}

template <class F>
void with_path(const std::string& path, F&& f) {
    try {
        f();
    } catch (const SchemaError&) {
        throw;
    } catch (const Error& e) {
        const std::string msg = e.what();
        throw SchemaError(msg.rfind(path + ":", 0) == 0 ? msg : path + ": " + msg);
    }
}

// Stacked system plus the information pattern it is solved over.
struct StackedProblem {
    qi::StackedSystem sys;
    qi::SparsityPattern pattern;
};

using AnyPlant = std::variant<Plant, OutputPlant, StackedProblem>;

inline Plant parse_state_plant(const json& j, const std::string& path = "plant") {
    Plant P{matrix_field(j, "A", path), matrix_field(j, "B", path), matrix_field(j, "Bw", path),
            matrix_field(j, "Q", path), matrix_field(j, "R", path)};
    with_path(path, [&] { P.validate(); });
    return P;
}

inline OutputPlant parse_output_plant(const json& j, const std::string& path = "plant") {
    OutputPlant P{matrix_field(j, "A", path), matrix_field(j, "B2", path), matrix_field(j, "C2", path),
                  matrix_field(j, "W", path),  matrix_field(j, "V", path),  matrix_field(j, "Q", path),
                  matrix_field(j, "R", path)};
    with_path(path, [&] { P.validate(); });
    return P;
}

inline qi::SparsityPattern parse_mask(const json& j, int N, int m, int p, const std::string& path) {
    auto S = qi::SparsityPattern::empty(N, m, p);
    if (!j.is_array() || static_cast<int>(j.size()) != m * N)
        throw SchemaError(path + ": expected " + std::to_string(m * N) + " rows");
    for (size_t i = 0; i < j.size(); ++i) {
        const std::string rp = path + "[" + std::to_string(i) + "]";
        if (!j[i].is_array() || static_cast<int>(j[i].size()) != p * (N + 1))
            throw SchemaError(rp + ": expected " + std::to_string(p * (N + 1)) + " entries");
        for (size_t k = 0; k < j[i].size(); ++k) {
            const auto& v = j[i][k];
            if (v.is_boolean())
                S.mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v.get<bool>();
            else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1))
                S.mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v.get<int>() == 1;
            else
                throw SchemaError(rp + "[" + std::to_string(k) + "]: expected 0/1 or a boolean");
        }
    }
    with_path(path, [&] { S.validate_causal(); });
    return S;
}

inline StackedProblem parse_stacked(const json& j, const std::string& path = "plant") {
    const auto& Nj = field(j, "N", path);
    if (!Nj.is_number_integer())
        throw SchemaError(path + ".N: expected an integer");
    qi::StackedSystem s;
    s.N = Nj.get<int>();
    s.A = matrix_list(j, "A", path);
    s.B = matrix_list(j, "B", path);
    s.C = matrix_list(j, "C", path);
    s.Sw = matrix_list(j, "Sigma_w", path);
    s.Sv = matrix_list(j, "Sigma_v", path);
    s.M = matrix_list(j, "M", path);
    s.R = matrix_list(j, "R", path);
    StackedProblem out;
    with_path(path, [&] { out.sys = qi::build_stacked(s); });
    if (j.contains("mask"))
        out.pattern = parse_mask(j["mask"], out.sys.N, out.sys.m, out.sys.p, path + ".mask");
    else
        out.pattern = qi::SparsityPattern::centralized(out.sys.N, out.sys.m, out.sys.p);
    return out;
}

inline AnyPlant parse_plant(const json& j) {
    const auto& kind = field(j, "kind", "plant");
    if (!kind.is_string())
        throw SchemaError("plant.kind: expected a string");
    const auto k = kind.get<std::string>();
    if (k == "state")
        return parse_state_plant(j);
    if (k == "output")
        return parse_output_plant(j);
    if (k == "stacked")
        return parse_stacked(j);
    throw SchemaError("plant.kind: unknown kind '" + k + "' (expected state, output or stacked)");
}

inline AnyPlant parse_plant(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("plant: invalid JSON: ") + e.what());
    }
    return parse_plant(j);
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw SchemaError(path + ": cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw SchemaError(path + ": invalid JSON: " + e.what());
    }
}

inline json to_json(const Plant& P) {
    return json{{"kind", "state"}, {"A", to_json(P.A)}, {"B", to_json(P.B)},
                {"Bw", to_json(P.Bw)}, {"Q", to_json(P.Q)}, {"R", to_json(P.R)}};
}

inline json to_json(const OutputPlant& P) {
    return json{{"kind", "output"}, {"A", to_json(P.A)}, {"B2", to_json(P.B2)}, {"C2", to_json(P.C2)},
                {"W", to_json(P.W)},   {"V", to_json(P.V)},   {"Q", to_json(P.Q)},   {"R", to_json(P.R)}};
}

inline json to_json(const std::vector<Mat>& Ms) {
    json a = json::array();
    for (const auto& M : Ms)
        a.push_back(to_json(M));
    return a;
}

inline json to_json(const StackedProblem& sp) {
    const auto& s = sp.sys;
    json mask = json::array();
    for (Eigen::Index i = 0; i < sp.pattern.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < sp.pattern.cols(); ++k)
            row.push_back(sp.pattern.mask(i, k) ? 1 : 0);
        mask.push_back(row);
    }
    return json{{"kind", "stacked"}, {"N", s.N},          {"A", to_json(s.A)},       {"B", to_json(s.B)},
                {"C", to_json(s.C)},  {"Sigma_w", to_json(s.Sw)}, {"Sigma_v", to_json(s.Sv)},
                {"M", to_json(s.M)},  {"R", to_json(s.R)},  {"mask", mask}};
}

inline json to_json(const AnyPlant& p) {
    return std::visit([](const auto& x) { return to_json(x); }, p);
}

// Policies: {"K": ...} for static gains, {"DK","CK","BK","AK"} for dynamic ones.
inline Mat parse_static_policy(const json& j, const std::string& path = "policy") {
    return matrix_field(j, "K", path);
}

inline DynamicPolicy parse_dynamic_policy(const json& j, const std::string& path = "policy") {
    return {matrix_field(j, "DK", path), matrix_field(j, "CK", path), matrix_field(j, "BK", path),
            matrix_field(j, "AK", path)};
}

inline json to_json(const DynamicPolicy& K) {
    return json{{"DK", to_json(K.DK)}, {"CK", to_json(K.CK)}, {"BK", to_json(K.BK)}, {"AK", to_json(K.AK)}};
}

// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    if (std::isnan(v))
        return "nan";
    char buf[32];
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v)
            break;
    }
    return buf;
}

} // namespace ecl::io
