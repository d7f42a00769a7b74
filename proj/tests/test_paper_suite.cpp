#include <catch2/catch.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "drills/experiment.hpp"

using namespace drills;

#ifndef DRILLS_SOURCE_DIR
#define DRILLS_SOURCE_DIR "."
#endif

namespace {

using Cell = std::tuple<std::string, std::string, int, long, int>;  // fn, domain, d, N, k*

/// The benchmark-table registry: every shipped suite cell must be one of
/// these (function, domain, d, N, k*) combinations.
std::set<Cell> table_registry() {
    std::set<Cell> cells;
    cells.insert({"f3", "B", 2, 2500, 1});  // regression-method comparison
    for (std::string fn : {"f4", "f5", "f6"}) {
        for (int k : {1, 2}) {
            for (int d : {10, 20})
                for (long n : {500L, 2500L, 10000L}) cells.insert({fn, "A", d, n, k});
            for (int d : {8, 12})
                for (long n : {2500L, 10000L, 40000L}) cells.insert({fn, "B", d, n, k});
        }
    }
    for (int k : {1, 2})
        for (int d : {8, 12})
            for (long n : {2500L, 10000L, 40000L}) cells.insert({std::string("f7"), "B", d, n, k});
    return cells;
}

Cell cell_of(const ExperimentSpec& s) {
    return {s.function, domain_name(s.domain), s.d, s.n_train, s.k_star};
}

}  // namespace

TEST_CASE("every cell in the shipped benchmark matrix is a known table cell") {
    std::set<Cell> registry = table_registry();
    ExperimentSpec base = load_spec(std::string(DRILLS_SOURCE_DIR) + "/configs/bench_base.conf");

    std::ifstream is(std::string(DRILLS_SOURCE_DIR) + "/configs/paper_matrix.txt");
    REQUIRE(is.good());
    std::string line;
    int cells = 0;
    while (std::getline(is, line)) {
        std::string t = line;
        if (t.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        if (t[t.find_first_not_of(" \t")] == '#') continue;
        std::istringstream tokens(t);
        std::string tok, joined;
        while (tokens >> tok) joined += tok + "\n";
        std::istringstream cfg(joined);
        ExperimentSpec cell = base;
        parse_spec_into(cfg, cell);
        INFO(line);
        CHECK(registry.count(cell_of(cell)) == 1);
        ++cells;
    }
    CHECK(cells == 84);
}

TEST_CASE("the regression-comparison config names its table cell") {
    ExperimentSpec s = load_spec(std::string(DRILLS_SOURCE_DIR) + "/configs/table1_f3_B2.conf");
    CHECK(cell_of(s) == Cell{"f3", "B", 2, 2500, 1});
    CHECK(s.methods == std::vector<std::string>{"synthesized", "direct_local", "global", "nn"});
}

TEST_CASE("ablation configs cover the f1/f2 study cells") {
    for (std::string name : {"ablate_f1_A2", "ablate_f1_B2", "ablate_f2_A2", "ablate_f2_B2"}) {
        ExperimentSpec s =
            load_spec(std::string(DRILLS_SOURCE_DIR) + "/configs/" + name + ".conf");
        CHECK(s.d == 2);
        CHECK(s.n_train == 500);
        CHECK(s.k_star == 1);
        CHECK(s.lambda2 == 0.0);
        CHECK(s.revnet_blocks == 10);
        CHECK(s.revnet_hidden == 2);
        CHECK(s.revnet_step == 0.25);
    }
}
