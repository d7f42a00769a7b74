#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "drills/core.hpp"

namespace drills {

/// Fully connected network: affine + tanh on hidden layers, affine output.
///
/// Parameter vector order (used by flatten/unflatten, the autodiff tape and
/// checkpoints alike): all weight matrices in layer order, each row-major,
/// followed by all bias vectors in layer order.
struct Mlp {
    std::vector<int> layer_sizes;  // [d_in, h_1, ..., h_L, d_out]
    std::vector<Mat> weights;      // weights[l] is (layer_sizes[l+1] x layer_sizes[l])
    std::vector<Vec> biases;

    Mlp() = default;

    explicit Mlp(std::vector<int> sizes) : layer_sizes(std::move(sizes)) {
        if (layer_sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output layer");
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
            weights.push_back(Mat::Zero(layer_sizes[l + 1], layer_sizes[l]));
            biases.push_back(Vec::Zero(layer_sizes[l + 1]));
        }
    }

    int in_dim() const { return layer_sizes.front(); }
    int out_dim() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(weights.size()); }

    long param_count() const {
        long n = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            n += static_cast<long>(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
        return n;
    }

    void check_shapes() const {
        if (weights.size() != biases.size() || weights.size() + 1 != layer_sizes.size())
            throw std::invalid_argument("Mlp: layer count mismatch");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l])
                throw std::invalid_argument("Mlp: weight shape mismatch");
            if (biases[l].size() != layer_sizes[l + 1])
                throw std::invalid_argument("Mlp: bias shape mismatch");
        }
    }
};

/// Glorot-style uniform init: W in U(-r, r) with r = sqrt(6/(fan_in+fan_out)),
/// biases zero. Entries are drawn in row-major order so a seed pins the net.
inline Mlp make_mlp(std::vector<int> sizes, Rng& rng) {
    Mlp net(std::move(sizes));
    for (int l = 0; l < net.num_layers(); ++l) {
        double r = std::sqrt(6.0 / (net.layer_sizes[l] + net.layer_sizes[l + 1]));
        Mat& w = net.weights[l];
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-r, r);
    }
    return net;
}

inline Vec mlp_forward(const Mlp& net, const Vec& x) {
    if (x.size() != net.in_dim()) throw std::invalid_argument("mlp_forward: input dimension mismatch");
    Vec a = x;
    for (int l = 0; l < net.num_layers(); ++l) {
        Vec s = net.weights[l] * a + net.biases[l];
        a = (l + 1 < net.num_layers()) ? s.array().tanh().matrix() : s;
    }
    if (!all_finite(a)) throw std::runtime_error("mlp_forward: non-finite output");
    return a;
}

/// Batched forward: rows of X are inputs, rows of the result are outputs.
inline Mat mlp_forward_batch(const Mlp& net, const Mat& x) {
    if (x.cols() != net.in_dim()) throw std::invalid_argument("mlp_forward_batch: input dimension mismatch");
    Mat a = x;
    for (int l = 0; l < net.num_layers(); ++l) {
        Mat s = a * net.weights[l].transpose();
        s.rowwise() += net.biases[l].transpose();
        a = (l + 1 < net.num_layers()) ? s.array().tanh().matrix() : s;
    }
    return a;
}

/// Jacobian d(output)/d(input), entry (i, j) = d out_i / d x_j, by the
/// layer-wise chain rule with diag(1 - tanh^2) factors at hidden layers.
inline Mat mlp_input_jacobian(const Mlp& net, const Vec& x) {
    if (x.size() != net.in_dim()) throw std::invalid_argument("mlp_input_jacobian: input dimension mismatch");
    Mat j = net.weights[0];
    Vec a = x;
    for (int l = 0; l + 1 < net.num_layers(); ++l) {
        Vec t = (net.weights[l] * a + net.biases[l]).array().tanh().matrix();
        j = (1.0 - t.array().square()).matrix().asDiagonal() * j;
        j = net.weights[l + 1] * j;
        a = t;
    }
    if (!all_finite(j)) throw std::runtime_error("mlp_input_jacobian: non-finite result");
    return j;
}

// --- flat parameter vector (weights in layer order, then biases) ---

inline void mlp_for_each_param(const Mlp& net, const std::function<void(const Mat&)>& on_mat,
                               const std::function<void(const Vec&)>& on_vec) {
    for (const Mat& w : net.weights) on_mat(w);
    for (const Vec& b : net.biases) on_vec(b);
}

inline Vec mlp_flatten(const Mlp& net) {
    Vec out(net.param_count());
    Eigen::Index k = 0;
    for (const Mat& w : net.weights) {
        for (Eigen::Index i = 0; i < w.size(); ++i) out[k++] = w.data()[i];
    }
    for (const Vec& b : net.biases) {
        for (Eigen::Index i = 0; i < b.size(); ++i) out[k++] = b[i];
    }
    return out;
}

/// Inverse of mlp_flatten; returns the number of entries consumed.
inline Eigen::Index mlp_unflatten(Mlp& net, const Vec& theta, Eigen::Index offset = 0) {
    if (theta.size() - offset < net.param_count()) throw std::invalid_argument("mlp_unflatten: vector too short");
    Eigen::Index k = offset;
    for (Mat& w : net.weights) {
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = theta[k++];
    }
    for (Vec& b : net.biases) {
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = theta[k++];
    }
    return k - offset;
}

}  // namespace drills
