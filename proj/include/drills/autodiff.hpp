#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "drills/core.hpp"
#include "drills/mlp.hpp"

namespace drills {

/// Two-mode differentiation tape over dense batched matrices.
///
/// Node values are (N x w) matrices whose rows are per-sample quantities.
/// A node may additionally carry forward-mode tangents for K directions per
/// sample, stored as an (N*K x w) matrix with sample-major rows (n*K + k).
/// The reverse sweep propagates adjoints of values AND tangents, so scalars
/// assembled from Jacobian entries (via jvp_dot) differentiate correctly with
/// respect to parameters; this is where tanh'' enters.
///
/// Supported primitives: affine, tanh, sigmoid, exp, sqrt, add, sub, mul,
/// scalar scale/shift, constant row/column rescaling, row sum-of-squares,
/// full sum, column slice/pad, and tangent-consuming inner products.
/// Reductions across samples (sum) drop tangents: no op may consume a
/// cross-sample tangent, which keeps the per-sample tangent layout sound.
class Tape {
    enum class Op {
        Constant,
        Input,
        Param,
        Affine,
        Tanh,
        Sigmoid,
        Exp,
        Sqrt,
        Add,
        Sub,
        Mul,
        Scale,
        AddScalar,
        CmulCols,
        CmulRows,
        RowSumSq,
        Sum,
        JvpDot,
        ColSlice,
        PadCols,
    };

    struct Node {
        Op op;
        int a = -1, b = -1, p = -1;  // operand ids; p = weight node for Affine
        int i0 = 0, i1 = 0;          // slice offset/width, pad count
        bool flag = false;           // Affine: apply x*W instead of x*W^T
        double c = 0.0;
        Mat cmat;   // captured constants (masks, jvp vectors)
        Mat v;      // value
        Mat t;      // tangent, (rows(v)*K) x cols(v); empty if none
        Mat va;     // adjoint of value (lazily allocated)
        Mat ta;     // adjoint of tangent
        bool track = false;
    };

public:
    int constant(Mat v) { return push(Op::Constant, std::move(v)); }

    int constant_scalar(double x) { return push(Op::Constant, Mat::Constant(1, 1, x)); }

    /// A constant whose adjoint is retained (for input-gradient queries).
    int input(Mat v, bool track_grad = false) {
        int id = push(Op::Input, std::move(v));
        nodes_[id].track = track_grad;
        return id;
    }

    /// Registers a trainable parameter; registration order defines the layout
    /// of flat_param_grad(). Vectors are stored as 1 x n rows.
    int param(const Mat& w) {
        int id = push(Op::Param, w);
        nodes_[id].track = true;
        param_order_.push_back(id);
        return id;
    }
    int param(const Vec& b) {
        int id = push(Op::Param, Mat(b.transpose()));
        nodes_[id].track = true;
        param_order_.push_back(id);
        return id;
    }

    /// y = x * W^T + 1 b^T  (or y = x * W when transposed). b may be -1.
    int affine(int x, int w, int b, bool transposed = false) {
        Mat y = transposed ? Mat(val(x) * val(w)) : Mat(val(x) * val(w).transpose());
        if (b >= 0) y.rowwise() += val(b).row(0);
        int id = push(Op::Affine, std::move(y), x);
        nodes_[id].p = w;
        nodes_[id].b = b;
        nodes_[id].flag = transposed;
        if (has_tan(x))
            nodes_[id].t = transposed ? Mat(tan(x) * val(w)) : Mat(tan(x) * val(w).transpose());
        return id;
    }

    int tanh_(int x) { return unary(Op::Tanh, x, Mat(val(x).array().tanh().matrix())); }
    int sigmoid_(int x) {
        return unary(Op::Sigmoid, x, Mat((1.0 / (1.0 + (-val(x).array()).exp())).matrix()));
    }
    int exp_(int x) { return unary(Op::Exp, x, Mat(val(x).array().exp().matrix())); }
    int sqrt_(int x) { return unary(Op::Sqrt, x, Mat(val(x).array().sqrt().matrix())); }

    int add(int a, int b) { return binary(Op::Add, a, b, Mat(val(a) + val(b))); }
    int sub(int a, int b) { return binary(Op::Sub, a, b, Mat(val(a) - val(b))); }
    int mul(int a, int b) {
        return binary(Op::Mul, a, b, Mat((val(a).array() * val(b).array()).matrix()));
    }

    int scale(int x, double c) {
        int id = push(Op::Scale, Mat(val(x) * c), x);
        nodes_[id].c = c;
        if (has_tan(x)) nodes_[id].t = tan(x) * c;
        return id;
    }

    int add_scalar(int x, double c) {
        int id = push(Op::AddScalar, Mat((val(x).array() + c).matrix()), x);
        nodes_[id].c = c;
        if (has_tan(x)) nodes_[id].t = tan(x);
        return id;
    }

    /// y(n, j) = x(n, j) * m(j)
    int cmul_cols(int x, const Vec& m) {
        if (m.size() != val(x).cols()) throw std::invalid_argument("cmul_cols: mask length mismatch");
        Mat y = (val(x).array().rowwise() * m.transpose().array()).matrix();
        int id = push(Op::CmulCols, std::move(y), x);
        nodes_[id].cmat = Mat(m.transpose());
        if (has_tan(x))
            nodes_[id].t = (tan(x).array().rowwise() * m.transpose().array()).matrix();
        return id;
    }

    /// y(n, j) = x(n, j) * c(n)
    int cmul_rows(int x, const Vec& c) {
        if (c.size() != val(x).rows()) throw std::invalid_argument("cmul_rows: weight length mismatch");
        Mat y = (val(x).array().colwise() * c.array()).matrix();
        int id = push(Op::CmulRows, std::move(y), x);
        nodes_[id].cmat = Mat(c);
        if (has_tan(x)) {
            int k = tan_dirs(x);
            Mat t = tan(x);
            for (Eigen::Index n = 0; n < val(x).rows(); ++n) t.middleRows(n * k, k) *= c[n];
            nodes_[id].t = std::move(t);
        }
        return id;
    }

    /// y(n) = sum_j x(n, j)^2, as an N x 1 node.
    int rowsumsq(int x) {
        Mat y = val(x).array().square().rowwise().sum().matrix();
        int id = push(Op::RowSumSq, std::move(y), x);
        if (has_tan(x)) {
            int k = tan_dirs(x);
            Eigen::Index n = val(x).rows();
            Mat t(n * k, 1);
            for (Eigen::Index i = 0; i < n; ++i)
                t.middleRows(i * k, k) = 2.0 * tan(x).middleRows(i * k, k) * val(x).row(i).transpose();
            nodes_[id].t = std::move(t);
        }
        return id;
    }

    /// Kahan sum of all entries, as a 1 x 1 node. Drops tangents.
    int sum(int x) { return push(Op::Sum, Mat::Constant(1, 1, kahan_sum(val(x))), x); }

    /// y(n, k) = < tangent_k of x at sample n , rows(n) >. Consumes tangents:
    /// the result is a plain value node of shape N x K.
    int jvp_dot(int x, const Mat& rows) {
        if (!has_tan(x)) throw std::invalid_argument("jvp_dot: operand has no tangent");
        if (rows.rows() != val(x).rows() || rows.cols() != val(x).cols())
            throw std::invalid_argument("jvp_dot: shape mismatch");
        int k = tan_dirs(x);
        Eigen::Index n = val(x).rows();
        Mat y(n, k);
        for (Eigen::Index i = 0; i < n; ++i)
            y.row(i) = (tan(x).middleRows(i * k, k) * rows.row(i).transpose()).transpose();
        int id = push(Op::JvpDot, std::move(y), x);
        nodes_[id].cmat = rows;
        return id;
    }

    int col_slice(int x, int j0, int width) {
        if (j0 < 0 || j0 + width > val(x).cols()) throw std::invalid_argument("col_slice: out of range");
        int id = push(Op::ColSlice, Mat(val(x).middleCols(j0, width)), x);
        nodes_[id].i0 = j0;
        nodes_[id].i1 = width;
        if (has_tan(x)) nodes_[id].t = tan(x).middleCols(j0, width);
        return id;
    }

    int pad_cols(int x, int extra) {
        Eigen::Index n = val(x).rows(), w = val(x).cols();
        Mat y = Mat::Zero(n, w + extra);
        y.leftCols(w) = val(x);
        int id = push(Op::PadCols, std::move(y), x);
        nodes_[id].i1 = extra;
        if (has_tan(x)) {
            Mat t = Mat::Zero(tan(x).rows(), w + extra);
            t.leftCols(w) = tan(x);
            nodes_[id].t = std::move(t);
        }
        return id;
    }

    /// Installs K fresh tangent directions at a node: direction k seeds unit
    /// column (k - col_offset) when that lands inside the node, zero rows
    /// otherwise. Call before building any dependent node.
    void seed_identity(int x, int k, int col_offset = 0) {
        Eigen::Index n = val(x).rows(), w = val(x).cols();
        Mat t = Mat::Zero(n * k, w);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int kk = 0; kk < k; ++kk) {
                int j = kk - col_offset;
                if (j >= 0 && j < w) t(i * k + kk, j) = 1.0;
            }
        nodes_[x].t = std::move(t);
    }

    const Mat& val(int id) const { return nodes_[id].v; }
    const Mat& tan(int id) const { return nodes_[id].t; }
    bool has_tan(int id) const { return nodes_[id].t.size() > 0; }
    double scalar(int id) const {
        if (nodes_[id].v.size() != 1) throw std::invalid_argument("scalar: node is not 1x1");
        return nodes_[id].v(0, 0);
    }

    int tan_dirs(int id) const {
        return static_cast<int>(nodes_[id].t.rows() / nodes_[id].v.rows());
    }

    /// Reverse sweep from a scalar root. Adjoints accumulate; call
    /// reset_adjoints() before differentiating a second root on one tape.
    void backward(int root) {
        if (nodes_[root].v.size() != 1) throw std::invalid_argument("backward: root must be scalar");
        ensure_va(root);
        nodes_[root].va(0, 0) += 1.0;
        for (int id = root; id >= 0; --id) pullback(id);
    }

    void reset_adjoints() {
        for (Node& n : nodes_) {
            n.va.resize(0, 0);
            n.ta.resize(0, 0);
        }
    }

    /// Adjoint of a param or tracked input (zero if it never received one).
    Mat grad(int id) const {
        const Node& n = nodes_[id];
        if (n.va.size() > 0) return n.va;
        return Mat::Zero(n.v.rows(), n.v.cols());
    }

    /// Row-major concatenation of parameter adjoints in registration order.
    Vec flat_param_grad() const {
        Vec out(num_param_entries());
        Eigen::Index k = 0;
        for (int id : param_order_) {
            Mat g = grad(id);
            for (Eigen::Index i = 0; i < g.size(); ++i) out[k++] = g.data()[i];
        }
        return out;
    }

    Eigen::Index num_param_entries() const {
        Eigen::Index total = 0;
        for (int id : param_order_) total += nodes_[id].v.size();
        return total;
    }

private:
    std::vector<Node> nodes_;
    std::vector<int> param_order_;

    int push(Op op, Mat v, int a = -1, int b = -1) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.v = std::move(v);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size() - 1);
    }

    int unary(Op op, int x, Mat y) {
        int id = push(op, std::move(y), x);
        if (has_tan(x)) nodes_[id].t = bc_mul(tan(x), dfdx(id), tan_dirs(x));
        return id;
    }

    int binary(Op op, int a, int b, Mat y) {
        if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
            throw std::invalid_argument("elementwise op: shape mismatch");
        int id = push(op, std::move(y), a, b);
        bool ta = has_tan(a), tb = has_tan(b);
        if (ta || tb) {
            int k = ta ? tan_dirs(a) : tan_dirs(b);
            Mat t = Mat::Zero(val(a).rows() * k, val(a).cols());
            if (op == Op::Add) {
                if (ta) t += tan(a);
                if (tb) t += tan(b);
            } else if (op == Op::Sub) {
                if (ta) t += tan(a);
                if (tb) t -= tan(b);
            } else {  // Mul
                if (ta) t += bc_mul(tan(a), val(b), k);
                if (tb) t += bc_mul(tan(b), val(a), k);
            }
            nodes_[id].t = std::move(t);
        }
        return id;
    }

    /// First derivative of a unary op, expressed through its output value.
    Mat dfdx(int id) const {
        const Mat& y = nodes_[id].v;
        switch (nodes_[id].op) {
            case Op::Tanh: return (1.0 - y.array().square()).matrix();
            case Op::Sigmoid: return (y.array() * (1.0 - y.array())).matrix();
            case Op::Exp: return y;
            case Op::Sqrt: return ((y.array() > 0.0).select(0.5 / y.array(), 0.0)).matrix();
            default: throw std::logic_error("dfdx: not a unary op");
        }
    }

    /// Second derivative of a unary op, through its output value.
    Mat d2fdx2(int id) const {
        const Mat& y = nodes_[id].v;
        switch (nodes_[id].op) {
            case Op::Tanh: return (-2.0 * y.array() * (1.0 - y.array().square())).matrix();
            case Op::Sigmoid:
                return (y.array() * (1.0 - y.array()) * (1.0 - 2.0 * y.array())).matrix();
            case Op::Exp: return y;
            case Op::Sqrt:
                return ((y.array() > 0.0).select(-0.25 / y.array().cube(), 0.0)).matrix();
            default: throw std::logic_error("d2fdx2: not a unary op");
        }
    }

    // tangent-block helpers; K tangent rows per sample
    static Mat bc_mul(const Mat& t, const Mat& f, int k) {
        Mat out(t.rows(), t.cols());
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            out.middleRows(i * k, k) =
                (t.middleRows(i * k, k).array().rowwise() * f.row(i).array()).matrix();
        return out;
    }

    /// out(n, j) = sum_k a[(n,k), j] * b[(n,k), j]
    static Mat contract(const Mat& a, const Mat& b, int k, Eigen::Index n) {
        Mat out(n, a.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            out.row(i) = (a.middleRows(i * k, k).array() * b.middleRows(i * k, k).array())
                             .colwise()
                             .sum()
                             .matrix();
        return out;
    }

    void ensure_va(int id) {
        if (nodes_[id].va.size() == 0)
            nodes_[id].va = Mat::Zero(nodes_[id].v.rows(), nodes_[id].v.cols());
    }
    void ensure_ta(int id) {
        if (nodes_[id].ta.size() == 0)
            nodes_[id].ta = Mat::Zero(nodes_[id].t.rows(), nodes_[id].t.cols());
    }

    void add_va(int id, const Mat& m) {
        ensure_va(id);
        nodes_[id].va += m;
    }
    void add_ta(int id, const Mat& m) {
        ensure_ta(id);
        nodes_[id].ta += m;
    }

    void pullback(int id) {
        Node& n = nodes_[id];
        bool hva = n.va.size() > 0, hta = n.ta.size() > 0;
        if (!hva && !hta) return;
        switch (n.op) {
            case Op::Constant:
            case Op::Input:
            case Op::Param:
                return;
            case Op::Affine: {
                const Mat& w = val(n.p);
                const Mat wt = n.flag ? Mat(w.transpose()) : w;  // y = x * wt^T + b
                if (hva) {
                    add_va(n.a, n.va * wt);
                    if (n.flag)
                        add_va(n.p, val(n.a).transpose() * n.va);
                    else
                        add_va(n.p, n.va.transpose() * val(n.a));
                    if (n.b >= 0) add_va(n.b, n.va.colwise().sum());
                }
                // Nodes whose tangent was installed by seed_identity have
                // tangent-free operands; the seed is a constant, so no
                // tangent adjoint flows past them.
                if (hta && has_tan(n.a)) {
                    add_ta(n.a, n.ta * wt);
                    if (n.flag)
                        add_va(n.p, tan(n.a).transpose() * n.ta);
                    else
                        add_va(n.p, n.ta.transpose() * tan(n.a));
                }
                return;
            }
            case Op::Tanh:
            case Op::Sigmoid:
            case Op::Exp:
            case Op::Sqrt: {
                Mat f1 = dfdx(id);
                if (hva) add_va(n.a, (n.va.array() * f1.array()).matrix());
                if (hta && has_tan(n.a)) {
                    int k = tan_dirs(n.a);
                    add_ta(n.a, bc_mul(n.ta, f1, k));
                    Mat mix = contract(n.ta, tan(n.a), k, val(n.a).rows());
                    add_va(n.a, (mix.array() * d2fdx2(id).array()).matrix());
                }
                return;
            }
            case Op::Add:
            case Op::Sub: {
                double sb = (n.op == Op::Sub) ? -1.0 : 1.0;
                if (hva) {
                    add_va(n.a, n.va);
                    add_va(n.b, sb * n.va);
                }
                if (hta) {
                    if (has_tan(n.a)) add_ta(n.a, n.ta);
                    if (has_tan(n.b)) add_ta(n.b, sb * n.ta);
                }
                return;
            }
            case Op::Mul: {
                if (hva) {
                    add_va(n.a, (n.va.array() * val(n.b).array()).matrix());
                    add_va(n.b, (n.va.array() * val(n.a).array()).matrix());
                }
                if (hta) {
                    int k = tan_dirs(id);
                    Eigen::Index rows = val(n.a).rows();
                    if (has_tan(n.a)) {
                        add_ta(n.a, bc_mul(n.ta, val(n.b), k));
                        add_va(n.b, contract(n.ta, tan(n.a), k, rows));
                    }
                    if (has_tan(n.b)) {
                        add_ta(n.b, bc_mul(n.ta, val(n.a), k));
                        add_va(n.a, contract(n.ta, tan(n.b), k, rows));
                    }
                }
                return;
            }
            case Op::Scale: {
                if (hva) add_va(n.a, n.va * n.c);
                if (hta && has_tan(n.a)) add_ta(n.a, n.ta * n.c);
                return;
            }
            case Op::AddScalar: {
                if (hva) add_va(n.a, n.va);
                if (hta && has_tan(n.a)) add_ta(n.a, n.ta);
                return;
            }
            case Op::CmulCols: {
                if (hva) add_va(n.a, (n.va.array().rowwise() * n.cmat.row(0).array()).matrix());
                if (hta && has_tan(n.a))
                    add_ta(n.a, (n.ta.array().rowwise() * n.cmat.row(0).array()).matrix());
                return;
            }
            case Op::CmulRows: {
                if (hva) add_va(n.a, (n.va.array().colwise() * n.cmat.col(0).array()).matrix());
                if (hta && has_tan(n.a)) {
                    int k = tan_dirs(n.a);
                    Mat t = n.ta;
                    for (Eigen::Index i = 0; i < val(n.a).rows(); ++i)
                        t.middleRows(i * k, k) *= n.cmat(i, 0);
                    add_ta(n.a, t);
                }
                return;
            }
            case Op::RowSumSq: {
                if (hva)
                    add_va(n.a, (2.0 * (val(n.a).array().colwise() * n.va.col(0).array())).matrix());
                if (hta && has_tan(n.a)) {
                    int k = tan_dirs(n.a);
                    Eigen::Index rows = val(n.a).rows();
                    Mat dva(rows, val(n.a).cols());
                    Mat dta(rows * k, val(n.a).cols());
                    for (Eigen::Index i = 0; i < rows; ++i) {
                        dva.row(i) = 2.0 *
                                     (n.ta.middleRows(i * k, k).transpose() *
                                      tan(n.a).middleRows(i * k, k))
                                         .row(0);
                        dta.middleRows(i * k, k) = 2.0 * n.ta.middleRows(i * k, k) * val(n.a).row(i);
                    }
                    add_va(n.a, dva);
                    add_ta(n.a, dta);
                }
                return;
            }
            case Op::Sum: {
                if (hva)
                    add_va(n.a, Mat::Constant(val(n.a).rows(), val(n.a).cols(), n.va(0, 0)));
                return;
            }
            case Op::JvpDot: {
                if (hva) {
                    int k = static_cast<int>(n.v.cols());
                    Eigen::Index rows = n.v.rows();
                    Mat dta(rows * k, n.cmat.cols());
                    for (Eigen::Index i = 0; i < rows; ++i)
                        dta.middleRows(i * k, k) = n.va.row(i).transpose() * n.cmat.row(i);
                    add_ta(n.a, dta);
                }
                return;
            }
            case Op::ColSlice: {
                if (hva) {
                    ensure_va(n.a);
                    nodes_[n.a].va.middleCols(n.i0, n.i1) += n.va;
                }
                if (hta && has_tan(n.a)) {
                    ensure_ta(n.a);
                    nodes_[n.a].ta.middleCols(n.i0, n.i1) += n.ta;
                }
                return;
            }
            case Op::PadCols: {
                Eigen::Index w = val(n.a).cols();
                if (hva) add_va(n.a, n.va.leftCols(w));
                if (hta && has_tan(n.a)) add_ta(n.a, n.ta.leftCols(w));
                return;
            }
        }
    }
};

// --- MLP graph helpers -------------------------------------------------

struct MlpNodes {
    std::vector<int> w;
    std::vector<int> b;
};

/// Registers every parameter of a net on the tape, in flatten order
/// (all weights, then all biases).
inline MlpNodes tape_register_mlp(Tape& t, const Mlp& net) {
    MlpNodes ids;
    for (const Mat& w : net.weights) ids.w.push_back(t.param(w));
    for (const Vec& b : net.biases) ids.b.push_back(t.param(b));
    return ids;
}

/// Builds the affine/tanh chain of a net applied to node x (rows = samples).
inline int tape_mlp_apply(Tape& t, const Mlp& net, const MlpNodes& ids, int x) {
    int a = x;
    for (int l = 0; l < net.num_layers(); ++l) {
        a = t.affine(a, ids.w[l], ids.b[l]);
        if (l + 1 < net.num_layers()) a = t.tanh_(a);
    }
    return a;
}

/// Gradient of a tape-built scalar with respect to every registered
/// parameter, flattened in registration order. The builder registers
/// parameters and returns the scalar root node.
template <typename Builder>
Vec grad_scalar_wrt_params(Builder&& build) {
    Tape t;
    int root = build(t);
    t.backward(root);
    Vec g = t.flat_param_grad();
    if (!all_finite(g)) throw std::runtime_error("grad_scalar_wrt_params: non-finite gradient");
    return g;
}

}  // namespace drills
