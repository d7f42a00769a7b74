#pragma once

#include <stdexcept>
#include <utility>

#include "drills/autodiff.hpp"
#include "drills/core.hpp"
#include "drills/transforms.hpp"

namespace drills {

/// Loss weights and the active/inactive coordinate split. omega follows the
/// pattern (0,...,0, 1,...,1) with exactly k_star leading zeros: the first
/// k_star transformed coordinates are the active ones.
struct HyperParams {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double alpha = 50.0;
    double sigma = 0.01;
    Vec omega;
    int k_star = 1;
    bool revnet_include_l3 = false;  // L3 is omitted from RevNet totals unless set

    void validate(int d) const {
        if (k_star < 1 || k_star > d) throw std::invalid_argument("HyperParams: k_star out of range");
        if (omega.size() != d) throw std::invalid_argument("HyperParams: omega length mismatch");
        for (int i = 0; i < d; ++i) {
            double want = (i < k_star) ? 0.0 : 1.0;
            if (omega[i] != want)
                throw std::invalid_argument("HyperParams: omega must have k_star leading zeros then ones");
        }
        if (sigma <= 0.0 || lambda1 < 0.0 || lambda2 < 0.0 || alpha < 0.0)
            throw std::invalid_argument("HyperParams: invalid weight");
    }
};

inline HyperParams make_hyperparams(int d, int k_star, double lambda1 = 1.0, double lambda2 = 1.0,
                                    double alpha = 50.0, double sigma = 0.01) {
    HyperParams hp;
    hp.lambda1 = lambda1;
    hp.lambda2 = lambda2;
    hp.alpha = alpha;
    hp.sigma = sigma;
    hp.k_star = k_star;
    hp.omega = Vec::Ones(d);
    hp.omega.head(k_star).setZero();
    hp.validate(d);
    return hp;
}

/// Training triples (x, f(x), grad f(x)) plus the domain box.
struct Dataset {
    int d = 0;
    Mat inputs;     // N x d
    Vec values;     // N
    Mat gradients;  // N x d
    Vec domain_lo;
    Vec domain_hi;

    long n() const { return inputs.rows(); }

    void validate() const {
        if (inputs.cols() != d || gradients.cols() != d)
            throw std::invalid_argument("Dataset: dimension mismatch");
        if (values.size() != inputs.rows() || gradients.rows() != inputs.rows())
            throw std::invalid_argument("Dataset: row count mismatch");
        if (domain_lo.size() != d || domain_hi.size() != d)
            throw std::invalid_argument("Dataset: bad domain bounds");
        constexpr double slack = 1e-12;
        for (long i = 0; i < inputs.rows(); ++i)
            for (int j = 0; j < d; ++j)
                if (inputs(i, j) < domain_lo[j] - slack || inputs(i, j) > domain_hi[j] + slack)
                    throw std::invalid_argument("Dataset: input outside domain");
    }
};

/// gamma = 1 + alpha * exp(-|grad f|); approaches 1 + alpha near critical
/// points so those samples keep contributing to the active-direction loss.
inline double scaling_factor(double grad_norm, double alpha) {
    if (grad_norm < 0.0) throw std::invalid_argument("scaling_factor: negative norm");
    return 1.0 + alpha * std::exp(-grad_norm);
}

struct LossParts {
    double l1 = 0.0;
    double l2 = 0.0;
    double l3 = 0.0;
};

inline double recombine(const LossParts& p, const HyperParams& hp) {
    return p.l1 + hp.lambda1 * p.l2 + hp.lambda2 * p.l3;
}

namespace detail {

struct LossGraph {
    int l1 = -1;
    int l2 = -1;
    int l3 = -1;
    int total = -1;
};

/// Shared loss assembly from the per-sample Jacobian/gradient inner products
/// q(n, i) = < J_i(z_n), grad f(x_n) >.
inline void finish_loss_graph(Tape& t, LossGraph& g, int q, const Mat& grads,
                              const HyperParams& hp, long n, bool include_l3) {
    Vec gamma(n);
    for (long i = 0; i < n; ++i)
        gamma[i] = scaling_factor(grads.row(i).norm(), hp.alpha);
    int qm = t.cmul_cols(q, hp.omega);
    int qw = t.cmul_rows(t.mul(qm, qm), gamma);
    g.l2 = t.scale(t.sum(qw), 1.0 / double(n));
    if (include_l3) {
        int qa = t.col_slice(q, 0, hp.k_star);
        int s = t.sqrt_(t.rowsumsq(qa));
        int sg = t.sigmoid_(t.scale(t.add_scalar(s, -1.0), 1.0 / hp.sigma));
        g.l3 = t.scale(t.sum(sg), 1.0 / double(n));
    } else {
        g.l3 = t.constant_scalar(0.0);
    }
    g.total = t.add(t.add(g.l1, t.scale(g.l2, hp.lambda1)), t.scale(g.l3, hp.lambda2));
}

inline LossGraph build_loss_graph(Tape& t, const Transform& tr, const Mat& x, const Mat& grads,
                                  const HyperParams& hp) {
    long n = x.rows();
    if (n == 0) throw std::invalid_argument("loss: empty dataset");
    int d = dim_of(tr);
    if (x.cols() != d || grads.cols() != d) throw std::invalid_argument("loss: dimension mismatch");
    hp.validate(d);

    LossGraph g;
    if (const Prnn* p = std::get_if<Prnn>(&tr)) {
        if (p->g.layer_sizes != p->h.layer_sizes)
            throw std::invalid_argument("Prnn: g and h must share one architecture");
        MlpNodes gids = tape_register_mlp(t, p->g);
        MlpNodes hids = tape_register_mlp(t, p->h);
        int xn = t.constant(x);
        int z = tape_mlp_apply(t, p->g, gids, xn);
        t.seed_identity(z, d);
        int xhat = tape_mlp_apply(t, p->h, hids, z);
        g.l1 = t.scale(t.sum(t.rowsumsq(t.sub(xhat, xn))), 1.0 / double(n));
        int q = t.jvp_dot(xhat, grads);
        finish_loss_graph(t, g, q, grads, hp, n, true);
    } else {
        const RevNet& r = std::get<RevNet>(tr);
        RevNetNodes ids = tape_register_revnet(t, r);
        RevNetState fw = tape_revnet_forward(t, r, ids, x);
        t.seed_identity(fw.u, d, 0);
        t.seed_identity(fw.v, d, r.u_dim);
        RevNetState inv = tape_revnet_inverse(t, r, ids, fw);
        Mat gu = grads.leftCols(r.u_dim);
        Mat gv = Mat::Zero(n, r.v_dim);
        gv.leftCols(r.v_dim - r.pad) = grads.rightCols(d - r.u_dim);
        int q = t.add(t.jvp_dot(inv.u, gu), t.jvp_dot(inv.v, gv));
        g.l1 = t.constant_scalar(0.0);  // exact reversibility by construction
        finish_loss_graph(t, g, q, grads, hp, n, hp.revnet_include_l3);
    }
    return g;
}

inline LossParts read_parts(const Tape& t, const LossGraph& g) {
    return LossParts{t.scalar(g.l1), t.scalar(g.l2), t.scalar(g.l3)};
}

}  // namespace detail

/// L1 of the PRNN: mean squared reconstruction error of h(g(x)).
inline double loss_reversibility(const Prnn& p, const Dataset& data) {
    if (data.n() == 0) throw std::invalid_argument("loss_reversibility: empty dataset");
    Mat r = transform_pseudo_inverse_batch(Transform(p), mlp_forward_batch(p.g, data.inputs)) -
            data.inputs;
    Vec per_row = r.array().square().rowwise().sum().matrix();
    return kahan_sum(per_row) / double(data.n());
}

/// L2: gamma-weighted squared inner products between the masked Jacobian
/// columns of the pseudo-inverse and the sampled gradients.
inline double loss_active_fit(const Transform& tr, const Dataset& data, const HyperParams& hp) {
    Tape t;
    auto g = detail::build_loss_graph(t, tr, data.inputs, data.gradients, hp);
    return t.scalar(g.l2);
}

/// L3: mean sigmoid((|s| - 1) / sigma) with s the k_star-vector of
/// directional derivatives along the active coordinates.
inline double loss_bounded_derivative(const Transform& tr, const Dataset& data,
                                      const HyperParams& hp) {
    HyperParams h2 = hp;
    h2.revnet_include_l3 = true;
    Tape t;
    auto g = detail::build_loss_graph(t, tr, data.inputs, data.gradients, h2);
    return t.scalar(g.l3);
}

/// Total loss L1 + lambda1 L2 + lambda2 L3 (L1 = 0 for RevNets, whose L3 is
/// also omitted unless hp.revnet_include_l3 is set).
inline std::pair<double, LossParts> loss_total(const Transform& tr, const Dataset& data,
                                               const HyperParams& hp) {
    Tape t;
    auto g = detail::build_loss_graph(t, tr, data.inputs, data.gradients, hp);
    LossParts parts = detail::read_parts(t, g);
    double total = t.scalar(g.total);
    if (!std::isfinite(total)) throw std::runtime_error("loss_total: non-finite loss");
    return {total, parts};
}

/// Exact gradient of the total loss for all trainable parameters, flattened
/// in the transform's canonical order. Also reports value and parts, so a
/// training step costs a single graph build.
inline double loss_value_and_gradient(const Transform& tr, const Mat& x, const Mat& grads,
                                      const HyperParams& hp, LossParts* parts, Vec* grad_out) {
    Tape t;
    auto g = detail::build_loss_graph(t, tr, x, grads, hp);
    t.backward(g.total);
    if (grad_out) {
        *grad_out = t.flat_param_grad();
        if (!all_finite(*grad_out)) throw std::runtime_error("loss_gradient: non-finite gradient");
    }
    if (parts) *parts = detail::read_parts(t, g);
    double total = t.scalar(g.total);
    if (!std::isfinite(total)) throw std::runtime_error("loss_gradient: non-finite loss");
    return total;
}

inline Vec loss_gradient(const Transform& tr, const Dataset& data, const HyperParams& hp) {
    Vec g;
    loss_value_and_gradient(tr, data.inputs, data.gradients, hp, nullptr, &g);
    return g;
}

}  // namespace drills
