#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "drills/core.hpp"

namespace drills {

/// Benchmark domains: OmegaA = [0,1]^d, OmegaB = [-1,1]^d.
enum class Domain { OmegaA, OmegaB };

inline std::string domain_name(Domain d) { return d == Domain::OmegaA ? "A" : "B"; }

inline Domain parse_domain(const std::string& s) {
    if (s == "A" || s == "OmegaA") return Domain::OmegaA;
    if (s == "B" || s == "OmegaB") return Domain::OmegaB;
    throw std::invalid_argument("unknown domain: " + s);
}

/// A target function with analytic value and gradient on a box domain.
struct TestFunction {
    std::string name;
    int d = 0;
    Vec lo;
    Vec hi;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
};

/// Registry of the benchmark suite: f1..f7, const, ridge.
/// f1, f2, f3 are two-dimensional; f7 needs d >= 2.
inline TestFunction make_test_function(const std::string& name, int d, Domain domain) {
    TestFunction f;
    f.name = name;
    f.d = d;
    double lo = (domain == Domain::OmegaA) ? 0.0 : -1.0;
    f.lo = Vec::Constant(d, lo);
    f.hi = Vec::Constant(d, 1.0);

    auto need_d2 = [&] {
        if (d != 2) throw std::invalid_argument(name + " is defined for d = 2 only");
    };

    if (name == "f1") {
        need_d2();
        f.value = [](const Vec& x) { return x[0] * x[0] + x[1] * x[1]; };
        f.gradient = [](const Vec& x) { return Vec(2.0 * x); };
    } else if (name == "f2") {
        need_d2();
        f.value = [](const Vec& x) {
            return 0.625 * x[0] * x[0] + 0.625 * x[1] * x[1] - 0.75 * x[0] * x[1];
        };
        f.gradient = [](const Vec& x) {
            Vec g(2);
            g[0] = 1.25 * x[0] - 0.75 * x[1];
            g[1] = 1.25 * x[1] - 0.75 * x[0];
            return g;
        };
    } else if (name == "f3") {
        need_d2();
        f.value = [](const Vec& x) { return x[0] * x[0] - x[1] * x[1]; };
        f.gradient = [](const Vec& x) {
            Vec g(2);
            g[0] = 2.0 * x[0];
            g[1] = -2.0 * x[1];
            return g;
        };
    } else if (name == "f4") {
        f.value = [](const Vec& x) { return x.squaredNorm(); };
        f.gradient = [](const Vec& x) { return Vec(2.0 * x); };
    } else if (name == "f5") {
        f.value = [](const Vec& x) { return std::sin(x.squaredNorm()); };
        f.gradient = [](const Vec& x) { return Vec(std::cos(x.squaredNorm()) * 2.0 * x); };
    } else if (name == "f6") {
        f.value = [](const Vec& x) {
            double p = 1.0;
            for (Eigen::Index i = 0; i < x.size(); ++i) p /= 1.0 + x[i] * x[i];
            return p;
        };
        f.gradient = [](const Vec& x) {
            double p = 1.0;
            for (Eigen::Index i = 0; i < x.size(); ++i) p /= 1.0 + x[i] * x[i];
            Vec g(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i)
                g[i] = p * (-2.0 * x[i] / (1.0 + x[i] * x[i]));
            return g;
        };
    } else if (name == "f7") {
        if (d < 2) throw std::invalid_argument("f7 needs d >= 2");
        f.value = [d](const Vec& x) {
            double s = 0.0;
            for (int i = 0; i + 1 < d; ++i) s += x[i] * x[i];
            return s - x[d - 1] * x[d - 1];
        };
        f.gradient = [d](const Vec& x) {
            Vec g = 2.0 * x;
            g[d - 1] = -2.0 * x[d - 1];
            return g;
        };
    } else if (name == "const") {
        f.value = [](const Vec&) { return 2.0; };
        f.gradient = [d](const Vec&) { return Vec(Vec::Zero(d)); };
    } else if (name == "ridge") {
        // (a^T x)^2 with a the normalized vector (1, 2, ..., d)
        Vec a(d);
        for (int i = 0; i < d; ++i) a[i] = i + 1;
        a /= a.norm();
        f.value = [a](const Vec& x) {
            double s = a.dot(x);
            return s * s;
        };
        f.gradient = [a](const Vec& x) { return Vec(2.0 * a.dot(x) * a); };
    } else {
        throw std::invalid_argument("unknown test function: " + name);
    }
    return f;
}

inline std::pair<double, Vec> eval_test_function(const TestFunction& f, const Vec& x) {
    if (x.size() != f.d) throw std::invalid_argument("eval_test_function: dimension mismatch");
    return {f.value(x), f.gradient(x)};
}

}  // namespace drills
