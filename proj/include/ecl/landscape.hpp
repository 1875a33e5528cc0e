#pragma once

#include "ecl/ecl_dynamic.hpp"
#include "ecl/ecl_state.hpp"
#include "ecl/io.hpp"

#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace ecl::landscape {

struct Axis {
    double lo = 0, hi = 0;
    int count = 1;

    double at(int i) const { return count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (count - 1); }
};

struct GridSpec {
    Axis x, y;
};

// "lo:hi:count,lo:hi:count", endpoints inclusive.
inline GridSpec parse_grid(const std::string& spec) {
    auto axis = [&](const std::string& s, const char* name) {
        Axis a;
        std::stringstream ss(s);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, ':'))
            parts.push_back(part);
        if (parts.size() != 3)
            throw io::SchemaError(std::string("grid.") + name + ": expected lo:hi:count");
        try {
            size_t used = 0;
            a.lo = std::stod(parts[0], &used);
            if (used != parts[0].size())
                throw std::invalid_argument("lo");
            a.hi = std::stod(parts[1], &used);
            if (used != parts[1].size())
                throw std::invalid_argument("hi");
            a.count = std::stoi(parts[2], &used);
            if (used != parts[2].size())
                throw std::invalid_argument("count");
        } catch (const std::logic_error&) {
            throw io::SchemaError(std::string("grid.") + name + ": malformed number in '" + s + "'");
        }
        if (a.count < 1)
            throw io::SchemaError(std::string("grid.") + name + ": count must be positive");
        if (a.count > 1 && !(a.hi > a.lo))
            throw io::SchemaError(std::string("grid.") + name + ": hi must exceed lo");
        return a;
    };
    auto comma = spec.find(',');
    if (comma == std::string::npos)
        throw io::SchemaError("grid: expected two comma-separated axes");
    return {axis(spec.substr(0, comma), "x"), axis(spec.substr(comma + 1), "y")};
}

struct Row {
    double c1, c2, cost;
};

// A named 2-D slice through a policy space; the cost is +inf off the stabilizing set.
struct Slice {
    std::string name;
    std::string description;
    std::function<double(double, double)> cost;
};

inline double finite_or_inf(const std::function<double()>& f) {
    try {
        double v = f();
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
}

// A = 0, B = Bw = Q = R = I₂ with the diagonal of K fixed at −1.
inline Plant offdiag_plant() {
    const Mat I = Mat::Identity(2, 2);
    return {Mat::Zero(2, 2), I, I, I, I};
}

inline Mat offdiag_gain(double k1, double k2) {
    Mat K(2, 2);
    K << -1, k1, k2, -1;
    return K;
}

inline Plant b1_plant() {
    Mat A(2, 2), B(2, 1);
    A << -2, 0, 0, 1;
    B << 0, 1;
    return {A, B, 2.0 * Mat::Identity(2, 2), Mat::Identity(2, 2), Mat::Identity(1, 1)};
}

inline OutputPlant scalar_output_plant() {
    const Mat one = Mat::Ones(1, 1);
    return {one, one, one, one, one, one, one};
}

inline Plant b3_plant() {
    const Mat I = Mat::Identity(2, 2);
    return {-I, I, I, I, I};
}

inline std::map<std::string, Slice> slices() {
    std::map<std::string, Slice> s;
    s["lqr-offdiag"] = {"lqr-offdiag", "LQR cost on A=0, B=Bw=Q=R=I2 with K=[[-1,k1],[k2,-1]]",
                        [](double a, double b) {
                            const Plant P = offdiag_plant();
                            return finite_or_inf([&] { return lqr_cost(P, offdiag_gain(a, b)); });
                        }};
    s["lqr-b1"] = {"lqr-b1", "LQR cost on the two-state example with K=[k1,k2]", [](double a, double b) {
                       const Plant P = b1_plant();
                       Mat K(1, 2);
                       K << a, b;
                       return finite_or_inf([&] { return lqr_cost(P, K); });
                   }};
    s["hinf-sf-diag"] = {"hinf-sf-diag", "state feedback Hinf cost on A=-I2 with K=diag(k1,k2)",
                         [](double a, double b) {
                             const Plant P = b3_plant();
                             Mat K = Mat::Zero(2, 2);
                             K(0, 0) = a;
                             K(1, 1) = b;
                             return finite_or_inf([&] { return hinf_sf_cost(P, K); });
                         }};
    s["hinf-of-bc"] = {"hinf-of-bc", "output feedback Hinf cost on the all-ones scalar plant, AK=-1, DK=-1-sqrt(3), "
                                     "coordinates (BK, CK)",
                       [](double a, double b) {
                           const OutputPlant P = scalar_output_plant();
                           DynamicPolicy K{Mat::Constant(1, 1, -1.0 - std::sqrt(3.0)), Mat::Constant(1, 1, b),
                                           Mat::Constant(1, 1, a), Mat::Constant(1, 1, -1.0)};
                           return finite_or_inf([&] { return hinf_of_cost(P, K); });
                       }};
    return s;
}

inline std::vector<Row> landscape_grid(const Slice& slice, const GridSpec& g) {
    std::vector<Row> rows;
    rows.reserve(static_cast<size_t>(g.x.count) * static_cast<size_t>(g.y.count));
    for (int i = 0; i < g.x.count; ++i)
        for (int k = 0; k < g.y.count; ++k) {
            const double a = g.x.at(i), b = g.y.at(k);
            rows.push_back({a, b, slice.cost(a, b)});
        }
    return rows;
}

inline std::string to_csv(const std::vector<Row>& rows) {
    std::string out = "coord1,coord2,cost\n";
    for (const auto& r : rows)
        out += io::fmt(r.c1) + "," + io::fmt(r.c2) + "," + io::fmt(r.cost) + "\n";
    return out;
}

inline const Row& argmin(const std::vector<Row>& rows) {
    if (rows.empty())
        throw io::SchemaError("grid: empty");
    const Row* best = &rows.front();
    for (const auto& r : rows)
        if (r.cost < best->cost)
            best = &r;
    return *best;
}

} // namespace ecl::landscape
