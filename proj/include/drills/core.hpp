#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace drills {

// Dense double-precision storage, row-major so that flattened parameter
// ordering and on-disk layout coincide with iteration order.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }
inline bool all_finite(const Vec& v) { return v.allFinite(); }

/// Compensated (Kahan) summation; the result is insensitive to input order
/// at the 1e-12 relative level required of full-batch loss values.
class KahanSum {
public:
    void add(double x) {
        double y = x - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

inline double kahan_sum(const Mat& m) {
    KahanSum acc;
    const double* p = m.data();  // row-major traversal
    for (Eigen::Index i = 0; i < m.size(); ++i) acc.add(p[i]);
    return acc.value();
}

inline double kahan_sum(const Vec& v) {
    KahanSum acc;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc.add(v[i]);
    return acc.value();
}

/// Deterministic random stream. Wraps std::mt19937_64 (whose output sequence
/// is fixed by the standard) and maps to doubles/integers by hand so that
/// sampled values are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Modulo bias is below 2^-53 for the n used here.
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
            std::swap(p[i], p[j]);
        }
        return p;
    }

private:
    std::mt19937_64 gen_;
};

/// splitmix64 finalizer; used to derive independent child seeds from a run
/// seed and a fixed purpose tag, so that e.g. data sampling and parameter
/// initialization never share a stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace seed_tag {
inline constexpr std::uint64_t lhs = 1;
inline constexpr std::uint64_t init = 2;
inline constexpr std::uint64_t test_set = 3;
inline constexpr std::uint64_t batch = 4;
inline constexpr std::uint64_t nn_regression = 5;
}  // namespace seed_tag

}  // namespace drills
