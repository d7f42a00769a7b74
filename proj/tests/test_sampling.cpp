#include <catch2/catch.hpp>

#include <algorithm>

#include "drills/sampling.hpp"
#include "testutil.hpp"

using namespace drills;
using namespace drills::test;

TEST_CASE("lhs_sample stratification") {
    SECTION("N=4 on [0,1]: one sample per quarter") {
        Mat x = lhs_sample(4, 1, Vec::Zero(1), Vec::Ones(1), 7);
        std::vector<double> v(x.data(), x.data() + 4);
        std::sort(v.begin(), v.end());
        for (int i = 0; i < 4; ++i) {
            CHECK(v[i] >= 0.25 * i);
            CHECK(v[i] < 0.25 * (i + 1));
        }
    }
    SECTION("N=100, d=10: every stratum hit exactly once per dimension") {
        long n = 100;
        Vec lo = Vec::Constant(10, -1.0), hi = Vec::Constant(10, 1.0);
        Mat x = lhs_sample(n, 10, lo, hi, 12345);
        for (int j = 0; j < 10; ++j) {
            std::vector<int> count(n, 0);
            for (long i = 0; i < n; ++i) {
                double u = (x(i, j) - lo[j]) / (hi[j] - lo[j]);
                long k = std::min<long>(n - 1, static_cast<long>(u * n));
                count[k]++;
            }
            for (long k = 0; k < n; ++k) CHECK(count[k] == 1);
        }
    }
    SECTION("same seed reproduces samples bitwise") {
        Vec lo = Vec::Constant(3, 0.0), hi = Vec::Constant(3, 2.0);
        CHECK(lhs_sample(50, 3, lo, hi, 99) == lhs_sample(50, 3, lo, hi, 99));
        CHECK(lhs_sample(50, 3, lo, hi, 99) != lhs_sample(50, 3, lo, hi, 100));
    }
    SECTION("invalid bounds are an error") {
        CHECK_THROWS_AS(lhs_sample(4, 1, Vec::Ones(1), Vec::Zero(1), 1), std::invalid_argument);
        CHECK_THROWS_AS(lhs_sample(0, 1, Vec::Zero(1), Vec::Ones(1), 1), std::invalid_argument);
    }
}

TEST_CASE("uniform_sample stays inside the box") {
    Vec lo = Vec::Constant(4, -1.0), hi = Vec::Constant(4, 1.0);
    Mat x = uniform_sample(500, lo, hi, 3);
    CHECK(x.minCoeff() >= -1.0);
    CHECK(x.maxCoeff() < 1.0);
    CHECK(x == uniform_sample(500, lo, hi, 3));
}

TEST_CASE("build_dataset") {
    SECTION("stores exact values and gradients") {
        TestFunction f = make_test_function("f5", 3, Domain::OmegaB);
        Dataset data = build_dataset(f, 40, 11);
        REQUIRE(data.n() == 40);
        double h = 1e-6;
        for (long i = 0; i < data.n(); ++i) {
            Vec x = data.inputs.row(i).transpose();
            CHECK(data.values[i] == f.value(x));
            for (int j = 0; j < 3; ++j) {
                Vec xp = x, xm = x;
                xp[j] += h;
                xm[j] -= h;
                double fd = (f.value(xp) - f.value(xm)) / (2 * h);
                CHECK(data.gradients(i, j) == Approx(fd).margin(1e-6));
            }
        }
    }
    SECTION("inputs respect the domain") {
        TestFunction f = make_test_function("f4", 5, Domain::OmegaA);
        Dataset data = build_dataset(f, 100, 2);
        CHECK(data.inputs.minCoeff() >= 0.0);
        CHECK(data.inputs.maxCoeff() <= 1.0);
    }
}
