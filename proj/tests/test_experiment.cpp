#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "drills/experiment.hpp"
#include "testutil.hpp"

using namespace drills;
using namespace drills::test;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

ExperimentSpec tiny_spec() {
    ExperimentSpec s;
    s.function = "f1";
    s.domain = Domain::OmegaA;
    s.d = 2;
    s.n_train = 48;
    s.m_test = 64;
    s.k_star = 1;
    s.train.adam_max_steps = 40;
    s.train.lbfgs_max_steps = 4;
    s.train.history_every = 10;
    s.methods = {"synthesized", "as"};
    s.seeds = {1, 2};
    s.jobs = 1;
    return s;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("experiment spec round-trips through the config format losslessly") {
    ExperimentSpec s = tiny_spec();
    s.lambda2 = 0.25;
    s.alpha = 12.5;
    s.transform = TransformKind::RevNet;
    s.revnet_hidden = 3;
    s.train.batch_size = 16;
    s.seeds = {7, 8, 9};
    std::string text = serialize_spec(s);
    std::istringstream is(text);
    ExperimentSpec t = parse_spec(is);
    CHECK(serialize_spec(t) == text);
    CHECK(t.function == s.function);
    CHECK(t.domain == s.domain);
    CHECK(t.seeds == s.seeds);
    CHECK(t.methods == s.methods);
    CHECK(t.lambda2 == s.lambda2);
    CHECK(t.train.batch_size == s.train.batch_size);
    CHECK(t.transform == s.transform);
}

TEST_CASE("config parser accepts comments and rejects junk") {
    std::istringstream ok("# comment\n\nfunction = f3\nd = 2\n");
    ExperimentSpec s = parse_spec(ok);
    CHECK(s.function == "f3");
    std::istringstream bad("function f3\n");
    CHECK_THROWS_AS(parse_spec(bad), std::invalid_argument);
    std::istringstream unknown("no_such_key = 1\n");
    CHECK_THROWS_AS(parse_spec(unknown), std::invalid_argument);
}

TEST_CASE("zero replicates produce an empty report and no artifacts") {
    TempDir dir("drills_exp_empty");
    ExperimentSpec s = tiny_spec();
    s.seeds.clear();
    PredictionReport r = run_experiment(s, dir.path.string());
    CHECK(r.replicates.empty());
    CHECK(r.means.empty());
    CHECK(!fs::exists(dir.path / "results.csv"));
}

TEST_CASE("run_experiment writes schema-stable artifacts and is deterministic") {
    TempDir d1("drills_exp_a"), d2("drills_exp_b");
    ExperimentSpec s = tiny_spec();
    PredictionReport r1 = run_experiment(s, d1.path.string());
    PredictionReport r2 = run_experiment(s, d2.path.string());

    REQUIRE(r1.replicates.size() == 2);
    CHECK(r1.replicates[0].ok);
    CHECK(r1.replicates[1].ok);
    REQUIRE(r1.means.size() == 2);

    std::string csv1 = slurp(d1.path / "results.csv");
    CHECK(csv1 == slurp(d2.path / "results.csv"));
    CHECK(slurp(d1.path / "history_1.csv") == slurp(d2.path / "history_1.csv"));
    CHECK(slurp(d1.path / "model_2.ckpt") == slurp(d2.path / "model_2.ckpt"));

    std::istringstream lines(csv1);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "method,function,domain,d,k_star,N,seed,NRMSE,RL1,mean");
    int rows = 0, means = 0;
    std::string line;
    while (std::getline(lines, line)) {
        ++rows;
        if (line.find(",true") != std::string::npos) ++means;
        CHECK(line.find("f1,A,2,1,48") != std::string::npos);
    }
    CHECK(rows == 6);   // 2 methods x 2 seeds + 2 mean rows
    CHECK(means == 2);
}

TEST_CASE("a failing replicate is recorded and the run continues") {
    TempDir dir("drills_exp_fail");
    ExperimentSpec s = tiny_spec();
    s.n_neighbors = 64;  // more neighbors than the 48 training points
    PredictionReport r = run_experiment(s, dir.path.string());
    CHECK(!r.replicates[0].ok);
    CHECK(!r.replicates[1].ok);
    CHECK(r.means.empty());
    CHECK(fs::exists(dir.path / "aborted_1.txt"));
    CHECK(fs::exists(dir.path / "results.csv"));
}

TEST_CASE("quiver data") {
    Rng rng(3);
    TestFunction fn = make_test_function("f1", 2, Domain::OmegaA);
    Dataset data = build_dataset(fn, 32, 5);
    TrainedModel m{Transform(make_identity_revnet(2)), data, make_hyperparams(2, 1), {}};
    auto rows = emit_quiver_data(m, fn, 15);
    CHECK(rows.size() == 225);
    for (const QuiverRow& r : rows) {
        CHECK(r.cos_angle <= 1.0);
        CHECK(r.cos_angle >= -1.0);
    }
    // identity transform: J2 = e2, so cos = df/dx2 / |grad|; at the origin the
    // gradient vanishes and the convention forces cos = 0
    CHECK(rows.front().x1 == 0.0);
    CHECK(rows.front().cos_angle == 0.0);
    std::string csv = quiver_csv(rows);
    CHECK(csv.rfind("x1,x2,dfdx1,dfdx2,J2_1,J2_2,cos_angle\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 226);
    TestFunction f4 = make_test_function("f4", 3, Domain::OmegaA);
    TrainedModel m3{Transform(make_identity_revnet(3)), build_dataset(f4, 16, 5),
                    make_hyperparams(3, 1), {}};
    CHECK_THROWS_AS(emit_quiver_data(m3, f4, 15), std::invalid_argument);
}

TEST_CASE("regression plot data") {
    TestFunction fn = make_test_function("const", 2, Domain::OmegaB);
    Dataset data = build_dataset(fn, 60, 8);
    TrainedModel m{Transform(make_identity_revnet(2)), data, make_hyperparams(2, 1), {}};
    auto rows = emit_regression_data(m, fn, RegressionConfig{}, 50, 4);
    REQUIRE(rows.size() == 50);
    for (const auto& r : rows) {
        CHECK(r.f_exact == 2.0);
        CHECK(r.f_pred == Approx(2.0).margin(1e-10));
        CHECK(r.z_a.size() == 1);
    }
    std::string csv = regression_plot_csv(rows);
    CHECK(csv.rfind("z1,f_exact,f_pred\n", 0) == 0);
}
