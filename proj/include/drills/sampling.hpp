#pragma once

#include <stdexcept>

#include "drills/core.hpp"
#include "drills/functions.hpp"
#include "drills/losses.hpp"

namespace drills {

/// Latin hypercube sample: in every dimension exactly one point lands in each
/// of the N equal-width strata, with uniform placement inside the stratum and
/// an independent random stratum permutation per dimension.
inline Mat lhs_sample(long n, int d, const Vec& lo, const Vec& hi, std::uint64_t seed) {
    if (n < 1 || d < 1) throw std::invalid_argument("lhs_sample: need n >= 1, d >= 1");
    if (lo.size() != d || hi.size() != d) throw std::invalid_argument("lhs_sample: bounds size mismatch");
    for (int j = 0; j < d; ++j)
        if (!(lo[j] < hi[j])) throw std::invalid_argument("lhs_sample: invalid bounds");
    Rng rng(seed);
    Mat x(n, d);
    for (int j = 0; j < d; ++j) {
        std::vector<int> perm = rng.permutation(static_cast<int>(n));
        for (long i = 0; i < n; ++i) {
            double u = rng.uniform01();
            x(i, j) = lo[j] + (hi[j] - lo[j]) * ((perm[i] + u) / double(n));
        }
    }
    return x;
}

/// Plain i.i.d. uniform sample on the box (test sets).
inline Mat uniform_sample(long m, const Vec& lo, const Vec& hi, std::uint64_t seed) {
    Rng rng(seed);
    Mat x(m, lo.size());
    for (long i = 0; i < m; ++i)
        for (int j = 0; j < lo.size(); ++j) x(i, j) = rng.uniform(lo[j], hi[j]);
    return x;
}

/// LHS inputs plus exact values and gradients of the target function.
inline Dataset build_dataset(const TestFunction& fn, long n, std::uint64_t seed) {
    Dataset data;
    data.d = fn.d;
    data.domain_lo = fn.lo;
    data.domain_hi = fn.hi;
    data.inputs = lhs_sample(n, fn.d, fn.lo, fn.hi, seed);
    data.values = Vec(n);
    data.gradients = Mat(n, fn.d);
    for (long i = 0; i < n; ++i) {
        Vec x = data.inputs.row(i).transpose();
        data.values[i] = fn.value(x);
        data.gradients.row(i) = fn.gradient(x).transpose();
    }
    if (!all_finite(data.gradients) || !all_finite(data.values))
        throw std::runtime_error("build_dataset: non-finite sample");
    data.validate();
    return data;
}

}  // namespace drills
