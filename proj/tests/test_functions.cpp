#include <catch2/catch.hpp>

#include "drills/functions.hpp"
#include "testutil.hpp"

using namespace drills;
using namespace drills::test;

TEST_CASE("benchmark function values at reference points") {
    SECTION("f4 at the origin is a critical point") {
        TestFunction f = make_test_function("f4", 6, Domain::OmegaB);
        auto [v, g] = eval_test_function(f, Vec::Zero(6));
        CHECK(v == 0.0);
        CHECK(g.isZero(0.0));
    }
    SECTION("f6 at the origin is the symmetric maximum") {
        TestFunction f = make_test_function("f6", 4, Domain::OmegaB);
        auto [v, g] = eval_test_function(f, Vec::Zero(4));
        CHECK(v == 1.0);
        CHECK(g.isZero(0.0));
    }
    SECTION("f7 in two dimensions equals f3") {
        TestFunction f7 = make_test_function("f7", 2, Domain::OmegaB);
        TestFunction f3 = make_test_function("f3", 2, Domain::OmegaB);
        Rng rng(1);
        for (int i = 0; i < 100; ++i) {
            Vec x = random_vec(rng, 2);
            // identical math; tolerance only for FMA contraction differences
            CHECK(f7.value(x) == Approx(f3.value(x)).margin(1e-15));
            CHECK((f7.gradient(x) - f3.gradient(x)).cwiseAbs().maxCoeff() < 1e-15);
        }
    }
    SECTION("const function") {
        TestFunction f = make_test_function("const", 3, Domain::OmegaA);
        CHECK(f.value(Vec::Ones(3)) == 2.0);
        CHECK(f.gradient(Vec::Ones(3)).isZero(0.0));
    }
}

TEST_CASE("analytic gradients match finite differences") {
    Rng rng(77);
    for (const char* name : {"f1", "f2", "f3", "f4", "f5", "f6", "f7", "const", "ridge"}) {
        int d = (std::string(name) == "f1" || std::string(name) == "f2" ||
                 std::string(name) == "f3")
                    ? 2
                    : 5;
        TestFunction f = make_test_function(name, d, Domain::OmegaB);
        for (int trial = 0; trial < 20; ++trial) {
            Vec x = random_vec(rng, d, -0.95, 0.95);
            Vec g = f.gradient(x);
            double h = 1e-6;
            for (int j = 0; j < d; ++j) {
                Vec xp = x, xm = x;
                xp[j] += h;
                xm[j] -= h;
                double fd = (f.value(xp) - f.value(xm)) / (2 * h);
                INFO(name << " component " << j);
                CHECK(g[j] == Approx(fd).margin(1e-6));
            }
        }
    }
}

TEST_CASE("registry rejects bad requests") {
    CHECK_THROWS_AS(make_test_function("f99", 3, Domain::OmegaA), std::invalid_argument);
    CHECK_THROWS_AS(make_test_function("f1", 3, Domain::OmegaA), std::invalid_argument);
    CHECK_THROWS_AS(make_test_function("f7", 1, Domain::OmegaB), std::invalid_argument);
    TestFunction f = make_test_function("f4", 3, Domain::OmegaA);
    CHECK_THROWS_AS(eval_test_function(f, Vec::Zero(4)), std::invalid_argument);
}

TEST_CASE("domains") {
    TestFunction a = make_test_function("f4", 3, Domain::OmegaA);
    CHECK(a.lo == Vec::Zero(3));
    CHECK(a.hi == Vec::Ones(3));
    TestFunction b = make_test_function("f4", 3, Domain::OmegaB);
    CHECK(b.lo == Vec::Constant(3, -1.0));
    CHECK(b.hi == Vec::Ones(3));
}
