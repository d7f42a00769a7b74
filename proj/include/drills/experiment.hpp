#pragma once

#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "drills/checkpoint.hpp"
#include "drills/csv.hpp"
#include "drills/functions.hpp"
#include "drills/regression.hpp"
#include "drills/sampling.hpp"
#include "drills/training.hpp"

namespace drills {

/// One benchmark cell: function, domain, sizes, transform, training and
/// regression settings, and the replicate seeds. Round-trips losslessly
/// through the flat key-value config format.
struct ExperimentSpec {
    std::string function = "f4";
    Domain domain = Domain::OmegaA;
    int d = 10;
    long n_train = 500;
    long m_test = 0;  // 0 = auto: 1000 for d <= 3, 10000 otherwise
    int k_star = 1;
    TransformKind transform = TransformKind::Prnn;

    int hidden_layers = 0;  // 0 = auto (2 for d <= 2, else 4)
    int width = 0;          // 0 = auto (10 d)
    int revnet_blocks = 10;
    int revnet_hidden = 0;  // 0 = auto (max(2, d))
    double revnet_step = 0.25;

    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double alpha = 50.0;
    double sigma = 0.01;
    bool revnet_include_l3 = false;

    TrainConfig train;

    int n_neighbors = 30;
    int degree = 3;
    std::vector<std::string> methods = {"synthesized"};
    std::vector<std::uint64_t> seeds = {1, 2, 3};

    int quiver_grid = 15;
    long reg_plot_points = 400;
    int jobs = 0;  // replicate parallelism; 0 = hardware concurrency

    long resolved_m_test() const { return m_test > 0 ? m_test : (d <= 3 ? 1000 : 10000); }

    HyperParams hyperparams() const {
        HyperParams hp = make_hyperparams(d, k_star, lambda1, lambda2, alpha, sigma);
        hp.revnet_include_l3 = revnet_include_l3;
        return hp;
    }

    RegressionConfig regression() const { return {n_neighbors, degree, RegressionMethod::Synthesized}; }
};

// --- config file format (flat `key = value` lines, '#' comments) -------------

namespace detail {

inline std::string join_u64(const std::vector<std::uint64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

inline std::string join_str(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace detail

inline std::string serialize_spec(const ExperimentSpec& s) {
    std::ostringstream os;
    os << "function = " << s.function << "\n";
    os << "domain = " << domain_name(s.domain) << "\n";
    os << "d = " << s.d << "\n";
    os << "n_train = " << s.n_train << "\n";
    os << "m_test = " << s.m_test << "\n";
    os << "k_star = " << s.k_star << "\n";
    os << "transform = " << (s.transform == TransformKind::Prnn ? "prnn" : "revnet") << "\n";
    os << "hidden_layers = " << s.hidden_layers << "\n";
    os << "width = " << s.width << "\n";
    os << "revnet_blocks = " << s.revnet_blocks << "\n";
    os << "revnet_hidden = " << s.revnet_hidden << "\n";
    os << "revnet_step = " << fmt_double(s.revnet_step) << "\n";
    os << "lambda1 = " << fmt_double(s.lambda1) << "\n";
    os << "lambda2 = " << fmt_double(s.lambda2) << "\n";
    os << "alpha = " << fmt_double(s.alpha) << "\n";
    os << "sigma = " << fmt_double(s.sigma) << "\n";
    os << "revnet_include_l3 = " << (s.revnet_include_l3 ? 1 : 0) << "\n";
    os << "adam_lr0 = " << fmt_double(s.train.adam_lr0) << "\n";
    os << "adam_decay = " << fmt_double(s.train.adam_decay) << "\n";
    os << "adam_decay_every = " << s.train.adam_decay_every << "\n";
    os << "adam_max_steps = " << s.train.adam_max_steps << "\n";
    os << "lbfgs_max_steps = " << s.train.lbfgs_max_steps << "\n";
    os << "lbfgs_memory = " << s.train.lbfgs_memory << "\n";
    os << "stop_threshold = " << fmt_double(s.train.stop_threshold) << "\n";
    os << "batch_size = " << s.train.batch_size << "\n";
    os << "history_every = " << s.train.history_every << "\n";
    os << "stop_check_every = " << s.train.stop_check_every << "\n";
    os << "n_neighbors = " << s.n_neighbors << "\n";
    os << "degree = " << s.degree << "\n";
    os << "methods = " << detail::join_str(s.methods) << "\n";
    os << "seeds = " << detail::join_u64(s.seeds) << "\n";
    os << "quiver_grid = " << s.quiver_grid << "\n";
    os << "reg_plot_points = " << s.reg_plot_points << "\n";
    os << "jobs = " << s.jobs << "\n";
    return os.str();
}

/// Applies `key = value` lines on top of an existing spec (used both for
/// whole config files and for experiment-matrix cell overrides).
inline void parse_spec_into(std::istream& is, ExperimentSpec& s) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(t.substr(0, eq));
        std::string val = detail::trim(t.substr(eq + 1));
        auto as_d = [&] { return std::stod(val); };
        auto as_l = [&] { return std::stol(val); };
        if (key == "function") s.function = val;
        else if (key == "domain") s.domain = parse_domain(val);
        else if (key == "d") s.d = static_cast<int>(as_l());
        else if (key == "n_train") s.n_train = as_l();
        else if (key == "m_test") s.m_test = as_l();
        else if (key == "k_star") s.k_star = static_cast<int>(as_l());
        else if (key == "transform") {
            if (val == "prnn") s.transform = TransformKind::Prnn;
            else if (val == "revnet") s.transform = TransformKind::RevNet;
            else throw std::invalid_argument("unknown transform: " + val);
        }
        else if (key == "hidden_layers") s.hidden_layers = static_cast<int>(as_l());
        else if (key == "width") s.width = static_cast<int>(as_l());
        else if (key == "revnet_blocks") s.revnet_blocks = static_cast<int>(as_l());
        else if (key == "revnet_hidden") s.revnet_hidden = static_cast<int>(as_l());
        else if (key == "revnet_step") s.revnet_step = as_d();
        else if (key == "lambda1") s.lambda1 = as_d();
        else if (key == "lambda2") s.lambda2 = as_d();
        else if (key == "alpha") s.alpha = as_d();
        else if (key == "sigma") s.sigma = as_d();
        else if (key == "revnet_include_l3") s.revnet_include_l3 = as_l() != 0;
        else if (key == "adam_lr0") s.train.adam_lr0 = as_d();
        else if (key == "adam_decay") s.train.adam_decay = as_d();
        else if (key == "adam_decay_every") s.train.adam_decay_every = as_l();
        else if (key == "adam_max_steps") s.train.adam_max_steps = as_l();
        else if (key == "lbfgs_max_steps") s.train.lbfgs_max_steps = static_cast<int>(as_l());
        else if (key == "lbfgs_memory") s.train.lbfgs_memory = static_cast<int>(as_l());
        else if (key == "stop_threshold") s.train.stop_threshold = as_d();
        else if (key == "batch_size") s.train.batch_size = as_l();
        else if (key == "history_every") s.train.history_every = as_l();
        else if (key == "stop_check_every") s.train.stop_check_every = as_l();
        else if (key == "n_neighbors") s.n_neighbors = static_cast<int>(as_l());
        else if (key == "degree") s.degree = static_cast<int>(as_l());
        else if (key == "methods") s.methods = detail::split_csv(val);
        else if (key == "seeds") {
            s.seeds.clear();
            for (const std::string& x : detail::split_csv(val))
                s.seeds.push_back(std::stoull(x));
        }
        else if (key == "quiver_grid") s.quiver_grid = static_cast<int>(as_l());
        else if (key == "reg_plot_points") s.reg_plot_points = as_l();
        else if (key == "jobs") s.jobs = static_cast<int>(as_l());
        else throw std::invalid_argument("unknown config key: " + key);
    }
}

inline ExperimentSpec parse_spec(std::istream& is) {
    ExperimentSpec s;
    parse_spec_into(is, s);
    return s;
}

inline ExperimentSpec load_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config: " + path);
    return parse_spec(is);
}

// --- single replicate ---------------------------------------------------------

struct MethodResult {
    std::string method;
    double nrmse = 0.0;
    double rl1 = 0.0;
};

struct ReplicateResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::vector<MethodResult> methods;
    double final_loss = 0.0;
    long steps = 0;
};

/// Aggregate over replicates: per-query predictions are produced inside each
/// replicate; what survives into the report are the error metrics and their
/// replicate means.
struct PredictionReport {
    std::vector<ReplicateResult> replicates;
    std::vector<MethodResult> means;  // one entry per method, averaged over ok replicates
};

inline Transform make_transform(const ExperimentSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, seed_tag::init));
    if (spec.transform == TransformKind::Prnn)
        return Transform(make_prnn(spec.d, rng, spec.hidden_layers, spec.width));
    return Transform(make_revnet(spec.d, rng, spec.revnet_blocks, spec.revnet_hidden,
                                 spec.revnet_step));
}

/// Fresh uniform test set with exact values (and gradients, for sensitivity).
inline Dataset make_test_set(const TestFunction& fn, long m, std::uint64_t seed) {
    Dataset t;
    t.d = fn.d;
    t.domain_lo = fn.lo;
    t.domain_hi = fn.hi;
    t.inputs = uniform_sample(m, fn.lo, fn.hi, derive_seed(seed, seed_tag::test_set));
    t.values = Vec(m);
    t.gradients = Mat(m, fn.d);
    for (long i = 0; i < m; ++i) {
        Vec x = t.inputs.row(i).transpose();
        t.values[i] = fn.value(x);
        t.gradients.row(i) = fn.gradient(x).transpose();
    }
    return t;
}

inline Vec predict_with_method(const std::string& method, const TrainedModel& model,
                               const RegressionConfig& cfg, const Mat& queries,
                               std::uint64_t seed) {
    long m = queries.rows();
    Vec pred(m);
    if (method == "synthesized") {
        ProjectedTraining cache = project_training(model);
        for (long i = 0; i < m; ++i)
            pred[i] = predict_synthesized(model, cfg, queries.row(i).transpose(), &cache);
    } else if (method == "direct_local") {
        ProjectedTraining cache = project_training(model);
        for (long i = 0; i < m; ++i)
            pred[i] = predict_direct_local(model, cfg, queries.row(i).transpose(), &cache);
    } else if (method == "global") {
        ProjectedTraining cache = project_training(model);
        GlobalFit fit = fit_global(model, cfg, &cache);
        for (long i = 0; i < m; ++i)
            pred[i] = predict_global(fit, model, queries.row(i).transpose());
    } else if (method == "nn") {
        NnRegressor reg = fit_nn_regression(model, seed);
        for (long i = 0; i < m; ++i)
            pred[i] = predict_nn(reg, model, queries.row(i).transpose());
    } else if (method == "as") {
        ActiveSubspaceModel as = fit_active_subspace(model.data, model.hp.k_star);
        for (long i = 0; i < m; ++i)
            pred[i] = predict_as(as, model.data, cfg, queries.row(i).transpose());
    } else {
        throw std::invalid_argument("unknown method: " + method);
    }
    return pred;
}

/// Runs one replicate end to end: sample, train, predict, measure.
inline ReplicateResult run_replicate(const ExperimentSpec& spec, std::uint64_t seed,
                                     TrainedModel* model_out = nullptr,
                                     LossHistory* history_out = nullptr) {
    ReplicateResult rep;
    rep.seed = seed;
    try {
        TestFunction fn = make_test_function(spec.function, spec.d, spec.domain);
        Dataset data = build_dataset(fn, spec.n_train, derive_seed(seed, seed_tag::lhs));
        TrainConfig cfg = spec.train;
        cfg.seed = seed;
        auto [model, history] = train(make_transform(spec, seed), data, spec.hyperparams(), cfg);
        rep.final_loss = model.meta.final_loss;
        rep.steps = model.meta.steps;

        Dataset test = make_test_set(fn, spec.resolved_m_test(), seed);
        RegressionConfig rcfg = spec.regression();
        for (const std::string& method : spec.methods) {
            Vec pred = predict_with_method(method, model, rcfg, test.inputs, seed);
            Metrics m = compute_metrics(test.values, pred);
            rep.methods.push_back({method, m.nrmse, m.rl1});
        }
        rep.ok = true;
        if (model_out) *model_out = std::move(model);
        if (history_out) *history_out = std::move(history);
    } catch (const std::exception& e) {
        rep.ok = false;
        rep.error = e.what();
    }
    return rep;
}

// --- full experiment ------------------------------------------------------------

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << content;
}

}  // namespace detail

/// results.csv schema: method,function,domain,d,k_star,N,seed,NRMSE,RL1,mean —
/// one row per replicate per method plus a mean row per method.
inline std::string results_csv(const ExperimentSpec& spec, const PredictionReport& report) {
    std::ostringstream os;
    os << "method,function,domain,d,k_star,N,seed,NRMSE,RL1,mean\n";
    auto prefix = [&](const std::string& method) {
        os << method << ',' << spec.function << ',' << domain_name(spec.domain) << ',' << spec.d
           << ',' << spec.k_star << ',' << spec.n_train << ',';
    };
    for (const std::string& method : spec.methods) {
        for (const ReplicateResult& rep : report.replicates) {
            if (!rep.ok) continue;
            for (const MethodResult& mr : rep.methods) {
                if (mr.method != method) continue;
                prefix(method);
                os << rep.seed << ',' << fmt_double(mr.nrmse) << ',' << fmt_double(mr.rl1)
                   << ",false\n";
            }
        }
    }
    for (const MethodResult& mr : report.means) {
        prefix(mr.method);
        os << ',' << fmt_double(mr.nrmse) << ',' << fmt_double(mr.rl1) << ",true\n";
    }
    return os.str();
}

/// Replicates run concurrently (they are fully independent); outputs are
/// merged in seed order so the artifacts are byte-identical regardless of
/// the worker count.
inline PredictionReport run_experiment(const ExperimentSpec& spec, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (!spec.seeds.empty()) fs::create_directories(out_dir);
    PredictionReport report;
    report.replicates.resize(spec.seeds.size());
    std::vector<TrainedModel> models(spec.seeds.size());
    std::vector<LossHistory> histories(spec.seeds.size());

    unsigned jobs = spec.jobs > 0 ? static_cast<unsigned>(spec.jobs)
                                  : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, std::max<std::size_t>(spec.seeds.size(), 1));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < spec.seeds.size(); i = next.fetch_add(1))
            report.replicates[i] = run_replicate(spec, spec.seeds[i], &models[i], &histories[i]);
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // replicate means per method
    for (const std::string& method : spec.methods) {
        MethodResult mean{method, 0.0, 0.0};
        long count = 0;
        for (const ReplicateResult& rep : report.replicates) {
            if (!rep.ok) continue;
            for (const MethodResult& mr : rep.methods)
                if (mr.method == method) {
                    mean.nrmse += mr.nrmse;
                    mean.rl1 += mr.rl1;
                    ++count;
                }
        }
        if (count > 0) {
            mean.nrmse /= double(count);
            mean.rl1 /= double(count);
            report.means.push_back(mean);
        }
    }

    // artifacts, in seed order
    for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
        const ReplicateResult& rep = report.replicates[i];
        if (!rep.ok) {
            std::ostringstream os;
            os << "seed " << spec.seeds[i] << " aborted: " << rep.error << "\n";
            detail::write_file(fs::path(out_dir) / ("aborted_" + std::to_string(spec.seeds[i]) + ".txt"),
                               os.str());
            continue;
        }
        save_checkpoint(models[i],
                        (fs::path(out_dir) / ("model_" + std::to_string(spec.seeds[i]) + ".ckpt"))
                            .string());
        std::ostringstream hs;
        histories[i].write_csv(hs);
        detail::write_file(fs::path(out_dir) / ("history_" + std::to_string(spec.seeds[i]) + ".csv"),
                           hs.str());
    }
    if (!spec.seeds.empty())
        detail::write_file(fs::path(out_dir) / "results.csv", results_csv(spec, report));
    return report;
}

// --- plot-data emission -----------------------------------------------------------

struct QuiverRow {
    double x1, x2, df1, df2, j21, j22, cos_angle;
};

/// Gradient field and second Jacobian column on a uniform grid (d = 2 only).
/// cos_angle is 0 when either vector vanishes.
inline std::vector<QuiverRow> emit_quiver_data(const TrainedModel& m, const TestFunction& fn,
                                               int grid) {
    if (fn.d != 2 || dim_of(m.transform) != 2)
        throw std::invalid_argument("emit_quiver_data: requires d == 2");
    std::vector<QuiverRow> rows;
    rows.reserve(static_cast<std::size_t>(grid) * grid);
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            Vec x(2);
            x[0] = fn.lo[0] + (fn.hi[0] - fn.lo[0]) * (grid == 1 ? 0.5 : double(i) / (grid - 1));
            x[1] = fn.lo[1] + (fn.hi[1] - fn.lo[1]) * (grid == 1 ? 0.5 : double(j) / (grid - 1));
            Vec g = fn.gradient(x);
            Vec z = transform_forward(m.transform, x);
            Vec j2 = pseudo_inverse_jacobian(m.transform, z).col(1);
            double ng = g.norm(), nj = j2.norm();
            double c = (ng == 0.0 || nj == 0.0) ? 0.0 : g.dot(j2) / (ng * nj);
            rows.push_back({x[0], x[1], g[0], g[1], j2[0], j2[1], c});
        }
    return rows;
}

inline std::string quiver_csv(const std::vector<QuiverRow>& rows) {
    std::ostringstream os;
    os << "x1,x2,dfdx1,dfdx2,J2_1,J2_2,cos_angle\n";
    for (const QuiverRow& r : rows)
        os << fmt_double(r.x1) << ',' << fmt_double(r.x2) << ',' << fmt_double(r.df1) << ','
           << fmt_double(r.df2) << ',' << fmt_double(r.j21) << ',' << fmt_double(r.j22) << ','
           << fmt_double(r.cos_angle) << '\n';
    return os.str();
}

inline double mean_abs_cos(const std::vector<QuiverRow>& rows) {
    KahanSum s;
    for (const QuiverRow& r : rows) s.add(std::abs(r.cos_angle));
    return s.value() / double(rows.size());
}

struct RegressionPlotRow {
    Vec z_a;
    double f_exact;
    double f_pred;
};

/// Exact vs synthesized-predicted values over random domain points, keyed by
/// the active coordinates.
inline std::vector<RegressionPlotRow> emit_regression_data(const TrainedModel& m,
                                                           const TestFunction& fn,
                                                           const RegressionConfig& cfg,
                                                           long n_points, std::uint64_t seed) {
    Mat xs = uniform_sample(n_points, fn.lo, fn.hi, derive_seed(seed, seed_tag::test_set));
    ProjectedTraining cache = project_training(m);
    std::vector<RegressionPlotRow> rows;
    rows.reserve(n_points);
    for (long i = 0; i < n_points; ++i) {
        Vec x = xs.row(i).transpose();
        RegressionPlotRow r;
        r.z_a = project_active(m.transform, m.hp.k_star, x);
        r.f_exact = fn.value(x);
        r.f_pred = predict_synthesized(m, cfg, x, &cache);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::string regression_plot_csv(const std::vector<RegressionPlotRow>& rows) {
    std::ostringstream os;
    if (rows.empty()) return "f_exact,f_pred\n";
    int k = static_cast<int>(rows.front().z_a.size());
    for (int j = 1; j <= k; ++j) os << 'z' << j << ',';
    os << "f_exact,f_pred\n";
    for (const RegressionPlotRow& r : rows) {
        for (int j = 0; j < k; ++j) os << fmt_double(r.z_a[j]) << ',';
        os << fmt_double(r.f_exact) << ',' << fmt_double(r.f_pred) << '\n';
    }
    return os.str();
}

// --- ablation (PRNN vs RevNet on one cell) -----------------------------------------

struct AblateRow {
    std::string transform;
    std::uint64_t seed = 0;
    double mean_abs_cos = 0.0;
    double nrmse = 0.0;
    double rl1 = 0.0;
    bool mean = false;
};

struct AblateReport {
    std::vector<AblateRow> rows;  // per (transform, seed) plus per-transform means

    double mean_cos(const std::string& transform) const {
        for (const AblateRow& r : rows)
            if (r.mean && r.transform == transform) return r.mean_abs_cos;
        throw std::runtime_error("ablate: no mean row for " + transform);
    }
    double mean_nrmse(const std::string& transform) const {
        for (const AblateRow& r : rows)
            if (r.mean && r.transform == transform) return r.nrmse;
        throw std::runtime_error("ablate: no mean row for " + transform);
    }
};

/// Trains both transform kinds on the same cells and reports level-set
/// orthogonality (mean |cos|) plus synthesized-regression accuracy.
inline AblateReport run_ablation(const ExperimentSpec& base, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (base.d != 2) throw std::invalid_argument("run_ablation: requires d == 2");
    fs::create_directories(out_dir);
    AblateReport report;
    TestFunction fn = make_test_function(base.function, base.d, base.domain);

    for (TransformKind kind : {TransformKind::Prnn, TransformKind::RevNet}) {
        ExperimentSpec spec = base;
        spec.transform = kind;
        spec.methods = {"synthesized"};
        std::string tname = kind == TransformKind::Prnn ? "prnn" : "revnet";

        std::vector<TrainedModel> models(spec.seeds.size());
        std::vector<ReplicateResult> reps(spec.seeds.size());
        std::vector<LossHistory> hists(spec.seeds.size());
        unsigned jobs = spec.jobs > 0 ? static_cast<unsigned>(spec.jobs)
                                      : std::max(1u, std::thread::hardware_concurrency());
        jobs = std::min<unsigned>(jobs, spec.seeds.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next.fetch_add(1); i < spec.seeds.size(); i = next.fetch_add(1))
                reps[i] = run_replicate(spec, spec.seeds[i], &models[i], &hists[i]);
        };
        if (jobs <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }

        double cos_acc = 0.0, nrmse_acc = 0.0, rl1_acc = 0.0;
        long count = 0;
        for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
            if (!reps[i].ok) {
                detail::write_file(fs::path(out_dir) / ("aborted_" + tname + "_" +
                                                        std::to_string(spec.seeds[i]) + ".txt"),
                                   reps[i].error + "\n");
                continue;
            }
            auto quiver = emit_quiver_data(models[i], fn, spec.quiver_grid);
            double mcos = mean_abs_cos(quiver);
            detail::write_file(fs::path(out_dir) / ("quiver_" + tname + "_" +
                                                    std::to_string(spec.seeds[i]) + ".csv"),
                               quiver_csv(quiver));
            auto regplot = emit_regression_data(models[i], fn, spec.regression(),
                                                spec.reg_plot_points, spec.seeds[i]);
            detail::write_file(fs::path(out_dir) / ("regression_" + tname + "_" +
                                                    std::to_string(spec.seeds[i]) + ".csv"),
                               regression_plot_csv(regplot));
            const MethodResult& mr = reps[i].methods.at(0);
            report.rows.push_back({tname, spec.seeds[i], mcos, mr.nrmse, mr.rl1, false});
            cos_acc += mcos;
            nrmse_acc += mr.nrmse;
            rl1_acc += mr.rl1;
            ++count;
        }
        if (count == 0) throw std::runtime_error("run_ablation: all " + tname + " replicates aborted");
        report.rows.push_back({tname, 0, cos_acc / count, nrmse_acc / count, rl1_acc / count, true});
    }

    std::ostringstream os;
    os << "transform,seed,mean_abs_cos,NRMSE,RL1,mean\n";
    for (const AblateRow& r : report.rows) {
        os << r.transform << ',';
        if (!r.mean) os << r.seed;
        os << ',' << fmt_double(r.mean_abs_cos) << ',' << fmt_double(r.nrmse) << ','
           << fmt_double(r.rl1) << ',' << (r.mean ? "true" : "false") << '\n';
    }
    detail::write_file(fs::path(out_dir) / "ablate.csv", os.str());
    return report;
}

}  // namespace drills
