#pragma once

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <vector>

#include "drills/core.hpp"
#include "drills/training.hpp"
#include "drills/transforms.hpp"

namespace drills {

enum class RegressionMethod { Synthesized, DirectLocal, Global, NeuralNet };

struct RegressionConfig {
    int n_neighbors = 30;
    int degree = 3;
    RegressionMethod method = RegressionMethod::Synthesized;
};

/// Indices of the n_f training points closest to the query under Euclidean
/// distance, ties broken by ascending index.
inline std::vector<int> knn_select(const Vec& query, const Mat& points, int n_f) {
    if (n_f > points.rows()) throw std::invalid_argument("knn_select: more neighbors than points");
    if (query.size() != points.cols()) throw std::invalid_argument("knn_select: dimension mismatch");
    std::vector<std::pair<double, int>> dist(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        dist[i] = {(points.row(i).transpose() - query).squaredNorm(), static_cast<int>(i)};
    std::partial_sort(dist.begin(), dist.begin() + n_f, dist.end());
    std::vector<int> out(n_f);
    for (int i = 0; i < n_f; ++i) out[i] = dist[i].second;
    return out;
}

inline std::vector<int> knn_select(const Vec& query, const Dataset& data, int n_f) {
    return knn_select(query, data.inputs, n_f);
}

/// First k_star components of the transformed input.
inline Vec project_active(const Transform& t, int k_star, const Vec& x) {
    return transform_forward(t, x).head(k_star);
}

inline Mat project_active_batch(const Transform& t, int k_star, const Mat& xs) {
    return transform_forward_batch(t, xs).leftCols(k_star);
}

inline Vec project_active(const TrainedModel& m, const Vec& x) {
    return project_active(m.transform, m.hp.k_star, x);
}

// --- polynomial least squares ----------------------------------------------

/// Multivariate polynomial in graded order: exponent tuples sorted by total
/// degree, then descending lexicographically within a degree.
struct Poly {
    int k = 0;
    int degree = 0;
    std::vector<std::vector<int>> exponents;
    Vec coef;

    double eval(const Vec& z) const {
        if (z.size() != k) throw std::invalid_argument("Poly::eval: dimension mismatch");
        double s = 0.0;
        for (std::size_t t = 0; t < exponents.size(); ++t) {
            double m = coef[t];
            for (int j = 0; j < k; ++j)
                for (int e = 0; e < exponents[t][j]; ++e) m *= z[j];
            s += m;
        }
        return s;
    }
};

inline void enumerate_exponents(int k, int degree, std::vector<std::vector<int>>& out) {
    out.clear();
    for (int total = 0; total <= degree; ++total) {
        std::vector<int> e(k, 0);
        // descending lexicographic enumeration of compositions of `total`
        std::function<void(int, int)> rec = [&](int pos, int left) {
            if (pos == k - 1) {
                e[pos] = left;
                out.push_back(e);
                return;
            }
            for (int v = left; v >= 0; --v) {
                e[pos] = v;
                rec(pos + 1, left - v);
            }
        };
        rec(0, total);
    }
}

inline long monomial_count(int k, int degree) {
    // C(k + degree, degree)
    long n = 1;
    for (int i = 1; i <= degree; ++i) n = n * (k + i) / i;
    return n;
}

/// Least-squares fit over monomials of total degree <= degree. The degree is
/// reduced until the design matrix has at least as many rows as columns, and
/// rank deficiency falls back to the minimum-norm solution.
inline Poly polyfit_lsq(const Mat& zs, const Vec& vals, int degree) {
    if (zs.rows() != vals.size() || zs.rows() == 0)
        throw std::invalid_argument("polyfit_lsq: bad data");
    int k = static_cast<int>(zs.cols());
    while (degree > 0 && monomial_count(k, degree) > zs.rows()) --degree;

    Poly p;
    p.k = k;
    p.degree = degree;
    enumerate_exponents(k, degree, p.exponents);
    Mat a(zs.rows(), p.exponents.size());
    for (Eigen::Index i = 0; i < zs.rows(); ++i)
        for (std::size_t t = 0; t < p.exponents.size(); ++t) {
            double m = 1.0;
            for (int j = 0; j < k; ++j)
                for (int e = 0; e < p.exponents[t][j]; ++e) m *= zs(i, j);
            a(i, t) = m;
        }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    p.coef = cod.solve(vals);
    if (!all_finite(p.coef)) throw std::runtime_error("polyfit_lsq: non-finite coefficients");
    return p;
}

// --- prediction methods ------------------------------------------------------

/// Cached per-model projections of the training inputs; shared by the
/// direct-local and global baselines (and reused by the synthesized path so
/// neighbors are projected once).
struct ProjectedTraining {
    Mat z;  // N x k_star
};

inline ProjectedTraining project_training(const TrainedModel& m) {
    return {project_active_batch(m.transform, m.hp.k_star, m.data.inputs)};
}

namespace detail {

inline double fit_and_eval(const Mat& z_neighbors, const Vec& f_neighbors, int degree,
                           const Vec& z_query) {
    Poly p = polyfit_lsq(z_neighbors, f_neighbors, degree);
    return p.eval(z_query);
}

}  // namespace detail

/// Synthesized regression: neighbors by distance in the ORIGINAL input space,
/// local least-squares polynomial in the projected active variables.
inline double predict_synthesized(const TrainedModel& m, const RegressionConfig& cfg,
                                  const Vec& query, const ProjectedTraining* cache = nullptr) {
    std::vector<int> idx = knn_select(query, m.data.inputs, cfg.n_neighbors);
    Mat zn(cfg.n_neighbors, m.hp.k_star);
    Vec fn(cfg.n_neighbors);
    if (cache) {
        for (int i = 0; i < cfg.n_neighbors; ++i) {
            zn.row(i) = cache->z.row(idx[i]);
            fn[i] = m.data.values[idx[i]];
        }
    } else {
        Mat xn(cfg.n_neighbors, m.data.d);
        for (int i = 0; i < cfg.n_neighbors; ++i) {
            xn.row(i) = m.data.inputs.row(idx[i]);
            fn[i] = m.data.values[idx[i]];
        }
        zn = project_active_batch(m.transform, m.hp.k_star, xn);
    }
    Vec zq = project_active(m.transform, m.hp.k_star, query);
    return detail::fit_and_eval(zn, fn, cfg.degree, zq);
}

/// Direct local fitting: neighbors chosen by distance in the projected z_A
/// space instead of the input space. This is the branch-mixing failure mode
/// the synthesized method avoids.
inline double predict_direct_local(const TrainedModel& m, const RegressionConfig& cfg,
                                   const Vec& query, const ProjectedTraining* cache = nullptr) {
    ProjectedTraining local;
    if (!cache) {
        local = project_training(m);
        cache = &local;
    }
    Vec zq = project_active(m.transform, m.hp.k_star, query);
    std::vector<int> idx = knn_select(zq, cache->z, cfg.n_neighbors);
    Mat zn(cfg.n_neighbors, m.hp.k_star);
    Vec fn(cfg.n_neighbors);
    for (int i = 0; i < cfg.n_neighbors; ++i) {
        zn.row(i) = cache->z.row(idx[i]);
        fn[i] = m.data.values[idx[i]];
    }
    return detail::fit_and_eval(zn, fn, cfg.degree, zq);
}

/// One global polynomial over all N projected samples.
struct GlobalFit {
    Poly poly;
};

inline GlobalFit fit_global(const TrainedModel& m, const RegressionConfig& cfg,
                            const ProjectedTraining* cache = nullptr) {
    ProjectedTraining local;
    if (!cache) {
        local = project_training(m);
        cache = &local;
    }
    return {polyfit_lsq(cache->z, m.data.values, cfg.degree)};
}

inline double predict_global(const GlobalFit& fit, const TrainedModel& m, const Vec& query) {
    return fit.poly.eval(project_active(m.transform, m.hp.k_star, query));
}

inline double predict_global(const TrainedModel& m, const RegressionConfig& cfg, const Vec& query) {
    return predict_global(fit_global(m, cfg), m, query);
}

// --- neural-network regression baseline --------------------------------------

/// FCNN of 3 hidden layers with 20 neurons, trained on (z_A, f) pairs with
/// Adam under the usual step-decay schedule.
struct NnRegressor {
    Mlp net;
    int k_star = 0;
};

inline NnRegressor fit_nn_regression(const TrainedModel& m, std::uint64_t seed,
                                     const ProjectedTraining* cache = nullptr) {
    ProjectedTraining local;
    if (!cache) {
        local = project_training(m);
        cache = &local;
    }
    const Mat& z = cache->z;
    const long n = z.rows();
    const int k = m.hp.k_star;
    Rng rng(derive_seed(seed, seed_tag::nn_regression));
    Mlp net = make_mlp({k, 20, 20, 20, 1}, rng);

    const long batch = std::min<long>(n, 512);
    const long steps = 14000;
    Vec theta = mlp_flatten(net);
    AdamState adam;
    std::vector<int> order;
    long cursor = 0;
    Mat bz(batch, k);
    Mat bf(batch, 1);
    for (long s = 0; s < steps; ++s) {
        if (order.empty() || cursor + batch > static_cast<long>(order.size())) {
            order = rng.permutation(static_cast<int>(n));
            cursor = 0;
        }
        for (long i = 0; i < batch; ++i) {
            bz.row(i) = z.row(order[cursor + i]);
            bf(i, 0) = m.data.values[order[cursor + i]];
        }
        cursor += batch;
        Tape t;
        MlpNodes ids = tape_register_mlp(t, net);
        int zn = t.constant(bz);
        int y = tape_mlp_apply(t, net, ids, zn);
        int r = t.sub(y, t.constant(bf));
        int loss = t.scale(t.sum(t.mul(r, r)), 1.0 / double(batch));
        t.backward(loss);
        Vec grad = t.flat_param_grad();
        adam_step(theta, grad, adam, decayed_lr(1e-3, 0.7, 2000, s));
        mlp_unflatten(net, theta);
    }
    return {std::move(net), k};
}

inline double predict_nn(const NnRegressor& reg, const TrainedModel& m, const Vec& query) {
    Vec zq = project_active(m.transform, m.hp.k_star, query);
    return mlp_forward(reg.net, zq)[0];
}

inline double predict_nn(const TrainedModel& m, const RegressionConfig&, const Vec& query,
                         std::uint64_t seed = 0) {
    return predict_nn(fit_nn_regression(m, seed), m, query);
}

// --- Active Subspace ----------------------------------------------------------

/// Uncentered gradient covariance C = E[grad f (grad f)^T], its descending
/// eigenvalues, and the leading k_star eigenvectors (each sign-fixed so its
/// largest-magnitude entry is positive).
struct ActiveSubspaceModel {
    Mat c;
    Vec eigenvalues;
    Mat w_a;  // d x k_star
};

inline ActiveSubspaceModel fit_active_subspace(const Dataset& data, int k_star) {
    if (data.n() < 1) throw std::invalid_argument("fit_active_subspace: empty dataset");
    if (k_star < 1 || k_star > data.d) throw std::invalid_argument("fit_active_subspace: bad k_star");
    ActiveSubspaceModel m;
    Eigen::MatrixXd c = data.gradients.transpose() * data.gradients / double(data.n());
    c = 0.5 * (c + c.transpose());  // symmetrize numerically
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    if (eig.info() != Eigen::Success) throw std::runtime_error("fit_active_subspace: eigensolver failed");
    m.c = c;
    m.eigenvalues = eig.eigenvalues().reverse();
    m.w_a = Mat(data.d, k_star);
    for (int j = 0; j < k_star; ++j) {
        Vec w = eig.eigenvectors().col(data.d - 1 - j);
        int imax = 0;
        for (int i = 1; i < data.d; ++i)
            if (std::abs(w[i]) > std::abs(w[imax])) imax = i;
        if (w[imax] < 0) w = -w;
        m.w_a.col(j) = w;
    }
    return m;
}

/// Active-subspace prediction reuses the synthesized machinery on the linear
/// projection z_A = W_A^T x: neighbors in the input space, local polynomial
/// fit in z_A.
inline double predict_as(const ActiveSubspaceModel& as, const Dataset& data,
                         const RegressionConfig& cfg, const Vec& query) {
    std::vector<int> idx = knn_select(query, data.inputs, cfg.n_neighbors);
    Mat zn(cfg.n_neighbors, as.w_a.cols());
    Vec fn(cfg.n_neighbors);
    for (int i = 0; i < cfg.n_neighbors; ++i) {
        zn.row(i) = data.inputs.row(idx[i]) * as.w_a;
        fn[i] = data.values[idx[i]];
    }
    Vec zq = as.w_a.transpose() * query;
    return detail::fit_and_eval(zn, fn, cfg.degree, zq);
}

// --- metrics -------------------------------------------------------------------

struct Metrics {
    double nrmse = 0.0;
    double rl1 = 0.0;
};

/// NRMSE = (1/sqrt(M)) ||f - fhat||_2 / (max f - min f); RL1 = ||f - fhat||_1 / ||f||_1.
inline Metrics compute_metrics(const Vec& f_true, const Vec& f_pred) {
    if (f_true.size() != f_pred.size() || f_true.size() == 0)
        throw std::invalid_argument("compute_metrics: size mismatch");
    double range = f_true.maxCoeff() - f_true.minCoeff();
    if (range <= 0.0) throw std::invalid_argument("compute_metrics: degenerate value range");
    KahanSum sq, l1, l1t;
    for (Eigen::Index i = 0; i < f_true.size(); ++i) {
        double d = f_true[i] - f_pred[i];
        sq.add(d * d);
        l1.add(std::abs(d));
        l1t.add(std::abs(f_true[i]));
    }
    if (l1t.value() <= 0.0) throw std::invalid_argument("compute_metrics: zero l1 norm");
    Metrics m;
    m.nrmse = std::sqrt(sq.value() / double(f_true.size())) / range;
    m.rl1 = l1.value() / l1t.value();
    return m;
}

// --- relative sensitivity --------------------------------------------------------

/// Batched gradient of z -> <v, h(z)> for every row pair (z, v): one reverse
/// pass through the net per layer instead of d tangent propagations.
inline Mat mlp_vjp_batch(const Mlp& net, const Mat& z, const Mat& v) {
    std::vector<Mat> acts;  // hidden activations
    Mat a = z;
    for (int l = 0; l + 1 < net.num_layers(); ++l) {
        Mat s = a * net.weights[l].transpose();
        s.rowwise() += net.biases[l].transpose();
        a = s.array().tanh().matrix();
        acts.push_back(a);
    }
    Mat u = v;
    for (int l = net.num_layers() - 1; l >= 1; --l) {
        u = u * net.weights[l];
        u = (u.array() * (1.0 - acts[l - 1].array().square())).matrix();
    }
    return u * net.weights[0];
}

/// Per-sample inner products q(n, i) = <J_i(z_n), grad f(x_n)> for all i,
/// evaluated at z_n = forward(x_n).
inline Mat jacobian_gradient_products(const Transform& t, const Mat& xs, const Mat& grads) {
    if (const Prnn* p = std::get_if<Prnn>(&t)) {
        Mat z = mlp_forward_batch(p->g, xs);
        return mlp_vjp_batch(p->h, z, grads);
    }
    Mat q(xs.rows(), xs.cols());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        Vec z = transform_forward(t, xs.row(i).transpose());
        q.row(i) = grads.row(i) * pseudo_inverse_jacobian(t, z);
    }
    return q;
}

/// RS_i = |mean_n grad f . J_i| / sum_m |mean_n grad f . J_m| on a test set.
inline Vec relative_sensitivity(const TrainedModel& m, const Dataset& test) {
    if (test.n() == 0) throw std::invalid_argument("relative_sensitivity: empty test set");
    Mat q = jacobian_gradient_products(m.transform, test.inputs, test.gradients);
    int d = test.d;
    Vec mean(d);
    for (int j = 0; j < d; ++j) {
        KahanSum s;
        for (Eigen::Index i = 0; i < q.rows(); ++i) s.add(q(i, j));
        mean[j] = s.value() / double(q.rows());
    }
    double denom = mean.cwiseAbs().sum();
    if (denom <= 0.0) throw std::runtime_error("relative_sensitivity: zero denominator");
    return mean.cwiseAbs() / denom;
}

}  // namespace drills
