#pragma once

#include <stdexcept>
#include <variant>
#include <vector>

#include "drills/autodiff.hpp"
#include "drills/core.hpp"
#include "drills/mlp.hpp"

namespace drills {

enum class TransformKind { Prnn, RevNet };

/// Pseudo-reversible pair: z = g(x), x_hat = h(z). Reversibility of h(g(x))
/// is only encouraged by the training loss, never enforced structurally.
/// g and h share the same architecture.
struct Prnn {
    Mlp g;
    Mlp h;

    int dim() const { return g.in_dim(); }
};

/// Hidden width 10d with 4 hidden layers by default; 2 hidden layers for d=2.
inline Prnn make_prnn(int d, Rng& rng, int hidden_layers = 0, int width = 0) {
    if (hidden_layers <= 0) hidden_layers = (d <= 2) ? 2 : 4;
    if (width <= 0) width = 10 * d;
    std::vector<int> sizes;
    sizes.push_back(d);
    for (int l = 0; l < hidden_layers; ++l) sizes.push_back(width);
    sizes.push_back(d);
    Prnn p;
    p.g = make_mlp(sizes, rng);
    p.h = make_mlp(sizes, rng);
    return p;
}

/// Reversible residual network of coupled half-state updates:
///   u <- u + step * tanh(v K1^T + b1^T) K2
///   v <- v + step * [tanh(u L1^T + b2^T) L2, 0]
/// The inverse solves the blocks in reverse order exactly. For odd d the
/// state is padded with one trailing zero coordinate in the v half; L2 has
/// no column for it, so the pad stays exactly zero through every block and
/// the map restricted to the first d coordinates is exactly invertible.
struct RevNet {
    int dim = 0;         // external dimension d
    int pad = 0;         // 0 or 1
    int u_dim = 0;       // first half size, (d + pad) / 2
    int v_dim = 0;       // second half size including the pad coordinate
    double step = 0.25;

    struct Block {
        Mat k1;  // h x v_dim
        Mat k2;  // h x u_dim
        Mat l1;  // h x u_dim
        Mat l2;  // h x (v_dim - pad)
        Vec b1;  // h
        Vec b2;  // h
    };
    std::vector<Block> blocks;

    long param_count() const {
        long n = 0;
        for (const Block& b : blocks)
            n += b.k1.size() + b.k2.size() + b.l1.size() + b.l2.size() + b.b1.size() + b.b2.size();
        return n;
    }
};

inline RevNet make_revnet(int d, Rng& rng, int num_blocks = 10, int hidden = 0,
                          double step = 0.25) {
    if (d < 2) throw std::invalid_argument("make_revnet: need d >= 2");
    if (hidden <= 0) hidden = std::max(2, d);
    RevNet r;
    r.dim = d;
    r.pad = d % 2;
    r.u_dim = (d + r.pad) / 2;
    r.v_dim = (d + r.pad) - r.u_dim;
    r.step = step;
    auto init = [&](Eigen::Index rows, Eigen::Index cols) {
        double s = std::sqrt(6.0 / double(rows + cols));
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-s, s);
        return m;
    };
    for (int i = 0; i < num_blocks; ++i) {
        RevNet::Block b;
        b.k1 = init(hidden, r.v_dim);
        b.k2 = init(hidden, r.u_dim);
        b.l1 = init(hidden, r.u_dim);
        b.l2 = init(hidden, r.v_dim - r.pad);
        b.b1 = Vec::Zero(hidden);
        b.b2 = Vec::Zero(hidden);
        r.blocks.push_back(std::move(b));
    }
    return r;
}

/// A RevNet with all parameters zero; every block is then the identity map.
inline RevNet make_identity_revnet(int d, int num_blocks = 1) {
    Rng rng(0);
    RevNet r = make_revnet(d, rng, num_blocks);
    for (RevNet::Block& b : r.blocks) {
        b.k1.setZero();
        b.k2.setZero();
        b.l1.setZero();
        b.l2.setZero();
    }
    return r;
}

using Transform = std::variant<Prnn, RevNet>;

inline TransformKind kind_of(const Transform& t) {
    return std::holds_alternative<Prnn>(t) ? TransformKind::Prnn : TransformKind::RevNet;
}

inline int dim_of(const Transform& t) {
    return std::visit([](const auto& x) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, Prnn>) return x.dim();
        else return x.dim;
    }, t);
}

// --- batched evaluation -------------------------------------------------

namespace detail {

inline void revnet_split(const RevNet& r, const Mat& x, Mat& u, Mat& v) {
    if (x.cols() != r.dim) throw std::invalid_argument("revnet: input dimension mismatch");
    u = x.leftCols(r.u_dim);
    v = Mat::Zero(x.rows(), r.v_dim);
    v.leftCols(r.v_dim - r.pad) = x.rightCols(r.dim - r.u_dim);
}

inline Mat revnet_join(const RevNet& r, const Mat& u, const Mat& v) {
    Mat x(u.rows(), r.dim);
    x.leftCols(r.u_dim) = u;
    x.rightCols(r.dim - r.u_dim) = v.leftCols(r.v_dim - r.pad);
    return x;
}

inline Mat tanh_affine(const Mat& x, const Mat& w, const Vec& b) {
    Mat s = x * w.transpose();
    s.rowwise() += b.transpose();
    return s.array().tanh().matrix();
}

}  // namespace detail

inline Mat revnet_forward_batch(const RevNet& r, const Mat& x) {
    Mat u, v;
    detail::revnet_split(r, x, u, v);
    for (const RevNet::Block& b : r.blocks) {
        u.noalias() += r.step * (detail::tanh_affine(v, b.k1, b.b1) * b.k2);
        v.leftCols(r.v_dim - r.pad).noalias() +=
            r.step * (detail::tanh_affine(u, b.l1, b.b2) * b.l2);
    }
    return detail::revnet_join(r, u, v);
}

inline Mat revnet_inverse_batch(const RevNet& r, const Mat& z) {
    Mat u, v;
    detail::revnet_split(r, z, u, v);
    for (auto it = r.blocks.rbegin(); it != r.blocks.rend(); ++it) {
        const RevNet::Block& b = *it;
        v.leftCols(r.v_dim - r.pad).noalias() -=
            r.step * (detail::tanh_affine(u, b.l1, b.b2) * b.l2);
        u.noalias() -= r.step * (detail::tanh_affine(v, b.k1, b.b1) * b.k2);
    }
    return detail::revnet_join(r, u, v);
}

inline Mat transform_forward_batch(const Transform& t, const Mat& x) {
    Mat z = std::visit([&](const auto& tr) {
        if constexpr (std::is_same_v<std::decay_t<decltype(tr)>, Prnn>)
            return mlp_forward_batch(tr.g, x);
        else
            return revnet_forward_batch(tr, x);
    }, t);
    if (!all_finite(z)) throw std::runtime_error("transform_forward: non-finite output");
    return z;
}

inline Mat transform_pseudo_inverse_batch(const Transform& t, const Mat& z) {
    Mat x = std::visit([&](const auto& tr) {
        if constexpr (std::is_same_v<std::decay_t<decltype(tr)>, Prnn>)
            return mlp_forward_batch(tr.h, z);
        else
            return revnet_inverse_batch(tr, z);
    }, t);
    if (!all_finite(x)) throw std::runtime_error("transform_pseudo_inverse: non-finite output");
    return x;
}

inline Vec transform_forward(const Transform& t, const Vec& x) {
    return transform_forward_batch(t, Mat(x.transpose())).row(0).transpose();
}

inline Vec transform_pseudo_inverse(const Transform& t, const Vec& z) {
    return transform_pseudo_inverse_batch(t, Mat(z.transpose())).row(0).transpose();
}

// --- tape graphs for losses and Jacobians --------------------------------

struct RevNetNodes {
    std::vector<int> k1, k2, l1, l2, b1, b2;
};

/// Registers block parameters in flatten order: all weights (k1, k2, l1, l2
/// per block), then all biases (b1, b2 per block).
inline RevNetNodes tape_register_revnet(Tape& t, const RevNet& r) {
    RevNetNodes ids;
    for (const RevNet::Block& b : r.blocks) {
        ids.k1.push_back(t.param(b.k1));
        ids.k2.push_back(t.param(b.k2));
        ids.l1.push_back(t.param(b.l1));
        ids.l2.push_back(t.param(b.l2));
    }
    for (const RevNet::Block& b : r.blocks) {
        ids.b1.push_back(t.param(b.b1));
        ids.b2.push_back(t.param(b.b2));
    }
    return ids;
}

struct RevNetState {
    int u = -1;
    int v = -1;
};

inline RevNetState tape_revnet_forward(Tape& t, const RevNet& r, const RevNetNodes& ids,
                                       const Mat& x) {
    Mat u0, v0;
    detail::revnet_split(r, x, u0, v0);
    RevNetState s{t.constant(u0), t.constant(v0)};
    for (std::size_t i = 0; i < r.blocks.size(); ++i) {
        int a = t.tanh_(t.affine(s.v, ids.k1[i], ids.b1[i]));
        s.u = t.add(s.u, t.scale(t.affine(a, ids.k2[i], -1, true), r.step));
        int b = t.tanh_(t.affine(s.u, ids.l1[i], ids.b2[i]));
        int dv = t.scale(t.affine(b, ids.l2[i], -1, true), r.step);
        if (r.pad) dv = t.pad_cols(dv, r.pad);
        s.v = t.add(s.v, dv);
    }
    return s;
}

inline RevNetState tape_revnet_inverse(Tape& t, const RevNet& r, const RevNetNodes& ids,
                                       RevNetState s) {
    for (std::size_t i = r.blocks.size(); i-- > 0;) {
        int b = t.tanh_(t.affine(s.u, ids.l1[i], ids.b2[i]));
        int dv = t.scale(t.affine(b, ids.l2[i], -1, true), r.step);
        if (r.pad) dv = t.pad_cols(dv, r.pad);
        s.v = t.sub(s.v, dv);
        int a = t.tanh_(t.affine(s.v, ids.k1[i], ids.b1[i]));
        s.u = t.sub(s.u, t.scale(t.affine(a, ids.k2[i], -1, true), r.step));
    }
    return s;
}

/// Jacobian of the pseudo-inverse at z: column i is d(x_hat)/d(z_i).
/// For the PRNN this is the input Jacobian of h; for the RevNet it is the
/// Jacobian of the exact block inverse (pad row/column dropped).
inline Mat pseudo_inverse_jacobian(const Transform& t, const Vec& z) {
    if (z.size() != dim_of(t)) throw std::invalid_argument("pseudo_inverse_jacobian: dimension mismatch");
    if (const Prnn* p = std::get_if<Prnn>(&t)) return mlp_input_jacobian(p->h, z);

    const RevNet& r = std::get<RevNet>(t);
    int d = r.dim;
    Tape tape;
    RevNetNodes ids = tape_register_revnet(tape, r);
    Mat u0, v0;
    detail::revnet_split(r, Mat(z.transpose()), u0, v0);
    RevNetState s{tape.input(u0), tape.input(v0)};
    tape.seed_identity(s.u, d, 0);
    tape.seed_identity(s.v, d, r.u_dim);
    s = tape_revnet_inverse(tape, r, ids, s);
    // rows ordered (u coords, v coords) = natural coordinate order; columns
    // are the z directions; the pad row is dropped.
    Mat j(d, d);
    j.topRows(r.u_dim) = tape.tan(s.u).transpose();
    j.bottomRows(d - r.u_dim) = tape.tan(s.v).leftCols(r.v_dim - r.pad).transpose();
    if (!all_finite(j)) throw std::runtime_error("pseudo_inverse_jacobian: non-finite result");
    return j;
}

// --- flat parameters ------------------------------------------------------

inline long transform_param_count(const Transform& t) {
    if (const Prnn* p = std::get_if<Prnn>(&t)) return p->g.param_count() + p->h.param_count();
    return std::get<RevNet>(t).param_count();
}

inline Vec transform_flatten(const Transform& t) {
    if (const Prnn* p = std::get_if<Prnn>(&t)) {
        Vec out(p->g.param_count() + p->h.param_count());
        out.head(p->g.param_count()) = mlp_flatten(p->g);
        out.tail(p->h.param_count()) = mlp_flatten(p->h);
        return out;
    }
    const RevNet& r = std::get<RevNet>(t);
    Vec out(r.param_count());
    Eigen::Index k = 0;
    auto put_mat = [&](const Mat& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) out[k++] = m.data()[i];
    };
    for (const RevNet::Block& b : r.blocks) {
        put_mat(b.k1);
        put_mat(b.k2);
        put_mat(b.l1);
        put_mat(b.l2);
    }
    for (const RevNet::Block& b : r.blocks) {
        for (Eigen::Index i = 0; i < b.b1.size(); ++i) out[k++] = b.b1[i];
        for (Eigen::Index i = 0; i < b.b2.size(); ++i) out[k++] = b.b2[i];
    }
    return out;
}

inline void transform_unflatten(Transform& t, const Vec& theta) {
    if (theta.size() != transform_param_count(t))
        throw std::invalid_argument("transform_unflatten: parameter count mismatch");
    if (Prnn* p = std::get_if<Prnn>(&t)) {
        Eigen::Index used = mlp_unflatten(p->g, theta, 0);
        mlp_unflatten(p->h, theta, used);
        return;
    }
    RevNet& r = std::get<RevNet>(t);
    Eigen::Index k = 0;
    auto take_mat = [&](Mat& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = theta[k++];
    };
    for (RevNet::Block& b : r.blocks) {
        take_mat(b.k1);
        take_mat(b.k2);
        take_mat(b.l1);
        take_mat(b.l2);
    }
    for (RevNet::Block& b : r.blocks) {
        for (Eigen::Index i = 0; i < b.b1.size(); ++i) b.b1[i] = theta[k++];
        for (Eigen::Index i = 0; i < b.b2.size(); ++i) b.b2[i] = theta[k++];
    }
}

}  // namespace drills
