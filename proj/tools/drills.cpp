// drills: level-set learning benchmark driver.
//
// Subcommands: train, predict, bench, ablate, quiver, sensitivity.
// Every subcommand takes --config (flat key = value file), an optional
// --seed override, and --out for artifacts. Errors print one
// "error: ..." line on stderr; exit codes: 0 ok, 2 usage/config, 3 runtime.

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "drills/drills.hpp"

namespace fs = std::filesystem;
using namespace drills;

namespace {

struct CommonArgs {
    std::string config;
    std::string out = "out";
    std::string model;
    std::string matrix;
    std::int64_t seed = -1;
    int jobs = 0;
};

ExperimentSpec load_spec_with_overrides(const CommonArgs& args) {
    ExperimentSpec spec = load_spec(args.config);
    if (args.seed >= 0) spec.seeds = {static_cast<std::uint64_t>(args.seed)};
    if (args.jobs > 0) spec.jobs = args.jobs;
    return spec;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << content;
}

/// Rebuilds the model a checkpoint describes, re-deriving the training data
/// from the experiment spec and the checkpoint's stored seed (or the --seed
/// override). Predictions need the training samples for neighbor lookup.
TrainedModel model_from_checkpoint(const ExperimentSpec& spec, const std::string& path,
                                   std::int64_t seed_override) {
    Checkpoint c = load_checkpoint(path);
    if (c.d != spec.d)
        throw CheckpointShapeError("checkpoint dimension " + std::to_string(c.d) +
                                   " does not match config dimension " + std::to_string(spec.d));
    std::uint64_t seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : c.seed;
    TestFunction fn = make_test_function(spec.function, spec.d, spec.domain);
    Dataset data = build_dataset(fn, spec.n_train, derive_seed(seed, seed_tag::lhs));
    TrainedModel m{checkpoint_to_transform(c), std::move(data), checkpoint_hyperparams(c),
                   TrainMeta{c.final_loss, c.steps, seed, false}};
    return m;
}

int cmd_train(const CommonArgs& args) {
    ExperimentSpec spec = load_spec_with_overrides(args);
    if (spec.seeds.empty()) throw std::invalid_argument("train: no seeds in config");
    std::uint64_t seed = spec.seeds.front();
    fs::create_directories(args.out);
    TrainedModel model{Transform(Prnn{}), Dataset{}, HyperParams{}, TrainMeta{}};
    LossHistory history;
    ReplicateResult rep = run_replicate(spec, seed, &model, &history);
    if (!rep.ok) throw std::runtime_error("training aborted: " + rep.error);
    save_checkpoint(model, (fs::path(args.out) / "model.ckpt").string());
    std::ostringstream hs;
    history.write_csv(hs);
    write_file(fs::path(args.out) / "history.csv", hs.str());
    std::cout << "trained " << spec.function << "/" << domain_name(spec.domain) << spec.d
              << " seed " << seed << ": final loss " << fmt_double(model.meta.final_loss)
              << " after " << model.meta.steps << " steps";
    for (const MethodResult& mr : rep.methods)
        std::cout << "; " << mr.method << " NRMSE " << fmt_double(mr.nrmse);
    std::cout << "\n";
    return 0;
}

int cmd_predict(const CommonArgs& args) {
    ExperimentSpec spec = load_spec_with_overrides(args);
    if (args.model.empty()) throw std::invalid_argument("predict: --model is required");
    TrainedModel model = model_from_checkpoint(spec, args.model, args.seed);
    TestFunction fn = make_test_function(spec.function, spec.d, spec.domain);
    Dataset test = make_test_set(fn, spec.resolved_m_test(), model.meta.seed);
    fs::create_directories(args.out);

    PredictionReport report;
    ReplicateResult rep;
    rep.seed = model.meta.seed;
    rep.ok = true;
    RegressionConfig rcfg = spec.regression();
    for (const std::string& method : spec.methods) {
        Vec pred = predict_with_method(method, model, rcfg, test.inputs, model.meta.seed);
        Metrics m = compute_metrics(test.values, pred);
        rep.methods.push_back({method, m.nrmse, m.rl1});
        std::cout << method << ": NRMSE " << fmt_double(m.nrmse) << " RL1 " << fmt_double(m.rl1)
                  << "\n";
    }
    report.replicates.push_back(rep);
    for (const MethodResult& mr : rep.methods) report.means.push_back(mr);
    write_file(fs::path(args.out) / "results.csv", results_csv(spec, report));

    auto rows = emit_regression_data(model, fn, rcfg, spec.reg_plot_points, model.meta.seed);
    write_file(fs::path(args.out) / "predictions.csv", regression_plot_csv(rows));
    return 0;
}

std::string cell_dir_name(const ExperimentSpec& s) {
    std::string t = s.transform == TransformKind::Prnn ? "prnn" : "revnet";
    return s.function + "_" + domain_name(s.domain) + std::to_string(s.d) + "_N" +
           std::to_string(s.n_train) + "_k" + std::to_string(s.k_star) + "_" + t;
}

int cmd_bench(const CommonArgs& args) {
    ExperimentSpec base = load_spec_with_overrides(args);
    std::vector<ExperimentSpec> cells;
    if (args.matrix.empty()) {
        cells.push_back(base);
    } else {
        std::ifstream is(args.matrix);
        if (!is) throw std::invalid_argument("cannot open matrix file: " + args.matrix);
        std::string line;
        while (std::getline(is, line)) {
            std::string t = line;
            if (t.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            if (t[t.find_first_not_of(" \t")] == '#') continue;
            // each matrix line is a set of `key=value` tokens overriding the base
            std::istringstream tokens(t);
            std::string tok, joined;
            while (tokens >> tok) joined += tok + "\n";
            std::istringstream cfg(joined);
            ExperimentSpec cell = base;
            parse_spec_into(cfg, cell);
            cells.push_back(cell);
        }
    }
    for (const ExperimentSpec& cell : cells) {
        fs::path dir = cells.size() == 1 ? fs::path(args.out)
                                         : fs::path(args.out) / cell_dir_name(cell);
        PredictionReport report = run_experiment(cell, dir.string());
        for (const ReplicateResult& rep : report.replicates)
            if (!rep.ok)
                std::cerr << "warning: seed " << rep.seed << " aborted: " << rep.error << "\n";
        std::cout << cell_dir_name(cell) << ":";
        for (const MethodResult& mr : report.means)
            std::cout << " " << mr.method << " NRMSE " << fmt_double(mr.nrmse) << " RL1 "
                      << fmt_double(mr.rl1) << ";";
        std::cout << "\n";
    }
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    ExperimentSpec spec = load_spec_with_overrides(args);
    AblateReport report = run_ablation(spec, args.out);
    for (const AblateRow& r : report.rows)
        if (r.mean)
            std::cout << r.transform << ": mean |cos| " << fmt_double(r.mean_abs_cos)
                      << ", NRMSE " << fmt_double(r.nrmse) << ", RL1 " << fmt_double(r.rl1)
                      << "\n";
    return 0;
}

int cmd_quiver(const CommonArgs& args) {
    ExperimentSpec spec = load_spec_with_overrides(args);
    if (args.model.empty()) throw std::invalid_argument("quiver: --model is required");
    TrainedModel model = model_from_checkpoint(spec, args.model, args.seed);
    TestFunction fn = make_test_function(spec.function, spec.d, spec.domain);
    auto rows = emit_quiver_data(model, fn, spec.quiver_grid);
    fs::create_directories(args.out);
    write_file(fs::path(args.out) / "quiver.csv", quiver_csv(rows));
    std::cout << "mean |cos| " << fmt_double(mean_abs_cos(rows)) << " over "
              << rows.size() << " grid points\n";
    return 0;
}

int cmd_sensitivity(const CommonArgs& args) {
    ExperimentSpec spec = load_spec_with_overrides(args);
    TrainedModel model{Transform(Prnn{}), Dataset{}, HyperParams{}, TrainMeta{}};
    if (!args.model.empty()) {
        model = model_from_checkpoint(spec, args.model, args.seed);
    } else {
        if (spec.seeds.empty()) throw std::invalid_argument("sensitivity: no seeds in config");
        ReplicateResult rep = run_replicate(spec, spec.seeds.front(), &model, nullptr);
        if (!rep.ok) throw std::runtime_error("training aborted: " + rep.error);
    }
    TestFunction fn = make_test_function(spec.function, spec.d, spec.domain);
    Dataset test = make_test_set(fn, spec.resolved_m_test(), model.meta.seed);
    Vec rs = relative_sensitivity(model, test);
    fs::create_directories(args.out);
    std::ostringstream os;
    os << "index,rs\n";
    for (int i = 0; i < rs.size(); ++i) os << (i + 1) << ',' << fmt_double(rs[i]) << '\n';
    write_file(fs::path(args.out) / "rs.csv", os.str());
    std::cout << "RS_1 " << fmt_double(rs[0]) << ", sum " << fmt_double(rs.sum()) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DRiLLS: dimension reduction via learned level sets"};
    app.require_subcommand(1);
    CommonArgs args;

    auto add_common = [&](CLI::App* sub, bool needs_model = false, bool matrix = false) {
        sub->add_option("--config", args.config, "experiment config file")->required();
        sub->add_option("--seed", args.seed, "seed override (replaces the config seed list)");
        sub->add_option("--out", args.out, "output directory");
        if (needs_model) sub->add_option("--model", args.model, "checkpoint path");
        if (matrix) {
            sub->add_option("--matrix", args.matrix, "experiment-matrix file (cell overrides)");
            sub->add_option("--jobs", args.jobs, "replicate parallelism");
        }
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train one transform, save a checkpoint");
    add_common(train_cmd);
    CLI::App* predict_cmd = app.add_subcommand("predict", "predict from a saved checkpoint");
    add_common(predict_cmd, true);
    CLI::App* bench_cmd = app.add_subcommand("bench", "replicated benchmark cells");
    add_common(bench_cmd, false, true);
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "PRNN vs RevNet ablation on one cell");
    add_common(ablate_cmd);
    CLI::App* quiver_cmd = app.add_subcommand("quiver", "gradient/Jacobian quiver grid data");
    add_common(quiver_cmd, true);
    CLI::App* sens_cmd = app.add_subcommand("sensitivity", "relative sensitivities RS_i");
    add_common(sens_cmd, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(args);
        if (predict_cmd->parsed()) return cmd_predict(args);
        if (bench_cmd->parsed()) return cmd_bench(args);
        if (ablate_cmd->parsed()) return cmd_ablate(args);
        if (quiver_cmd->parsed()) return cmd_quiver(args);
        if (sens_cmd->parsed()) return cmd_sensitivity(args);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
