#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>

#include "drills/core.hpp"

namespace drills {

// --- Adam ------------------------------------------------------------------

struct AdamState {
    Vec m;
    Vec v;
    long t = 0;
};

/// Standard Adam update with bias correction. beta1 = 0.9, beta2 = 0.999,
/// eps = 1e-8 are the usual defaults.
inline void adam_step(Vec& theta, const Vec& grad, AdamState& st, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (st.m.size() == 0) {
        st.m = Vec::Zero(theta.size());
        st.v = Vec::Zero(theta.size());
        st.t = 0;
    }
    if (grad.size() != theta.size() || st.m.size() != theta.size())
        throw std::invalid_argument("adam_step: size mismatch");
    st.t += 1;
    st.m = beta1 * st.m + (1.0 - beta1) * grad;
    st.v = beta2 * st.v + (1.0 - beta2) * grad.cwiseProduct(grad);
    double mc = 1.0 - std::pow(beta1, double(st.t));
    double vc = 1.0 - std::pow(beta2, double(st.t));
    Vec update = (st.m / mc).array() / ((st.v / vc).array().sqrt() + eps);
    theta -= lr * update;
    if (!all_finite(theta)) throw std::runtime_error("adam_step: non-finite update");
}

/// Step-decay schedule: lr(step) = lr0 * decay^floor(step / every).
inline double decayed_lr(double lr0, double decay, long every, long step) {
    return lr0 * std::pow(decay, double(step / every));
}

// --- L-BFGS with strong Wolfe line search -----------------------------------

/// Objective: returns f(theta) and fills grad.
using ObjectiveFn = std::function<double(const Vec&, Vec&)>;

struct LbfgsOptions {
    int max_steps = 200;
    int memory = 10;
    double c1 = 1e-4;  // sufficient decrease
    double c2 = 0.9;   // curvature
    double stop_fval = -std::numeric_limits<double>::infinity();
    double grad_tol = 1e-12;
    int max_linesearch = 40;
};

struct LbfgsResult {
    Vec theta;
    double fval = 0.0;
    int iterations = 0;
    bool line_search_failed = false;
};

namespace detail {

struct WolfePoint {
    double a, f, dphi;
    Vec grad;
};

/// Strong Wolfe line search (bracket then zoom with bisection). Returns the
/// accepted step, or a = 0 when no acceptable point was found.
inline WolfePoint wolfe_search(const ObjectiveFn& fn, const Vec& theta, const Vec& dir,
                               double f0, const Vec& g0, const LbfgsOptions& opt) {
    double dphi0 = g0.dot(dir);
    WolfePoint fail{0.0, f0, dphi0, g0};
    if (dphi0 >= 0.0) return fail;

    auto eval = [&](double a) {
        WolfePoint p;
        p.a = a;
        p.grad.resize(theta.size());
        p.f = fn(theta + a * dir, p.grad);
        p.dphi = p.grad.dot(dir);
        return p;
    };

    // quadratic interpolation through (lo.a, lo.f, lo.dphi) and (hi.a, hi.f),
    // safeguarded towards bisection near the interval ends
    auto interp = [](const WolfePoint& lo, const WolfePoint& hi) {
        double da = hi.a - lo.a;
        double denom = 2.0 * (hi.f - lo.f - lo.dphi * da);
        double a = lo.a - lo.dphi * da * da / denom;
        double a_min = std::min(lo.a, hi.a), a_max = std::max(lo.a, hi.a);
        double margin = 0.1 * (a_max - a_min);
        if (!std::isfinite(a) || a < a_min + margin || a > a_max - margin)
            a = 0.5 * (lo.a + hi.a);
        return a;
    };

    auto zoom = [&](WolfePoint lo, WolfePoint hi) {
        WolfePoint best = lo;  // lo always satisfies Armijo
        for (int j = 0; j < opt.max_linesearch; ++j) {
            double a = interp(lo, hi);
            WolfePoint p = eval(a);
            if (p.f > f0 + opt.c1 * a * dphi0 || p.f >= lo.f) {
                hi = p;
            } else {
                if (std::abs(p.dphi) <= -opt.c2 * dphi0) return p;
                if (p.dphi * (hi.a - lo.a) >= 0.0) hi = lo;
                lo = p;
                best = p;
            }
            if (std::abs(hi.a - lo.a) < 1e-16 * std::max(1.0, std::abs(lo.a))) break;
        }
        return best.a > 0.0 ? best : fail;
    };

    WolfePoint prev{0.0, f0, dphi0, g0};
    double a = 1.0;
    for (int i = 0; i < opt.max_linesearch; ++i) {
        WolfePoint p = eval(a);
        if (!std::isfinite(p.f) || p.f > f0 + opt.c1 * a * dphi0 || (i > 0 && p.f >= prev.f))
            return zoom(prev, p);
        if (std::abs(p.dphi) <= -opt.c2 * dphi0) return p;
        if (p.dphi >= 0.0) return zoom(p, prev);
        prev = p;
        a *= 2.0;
    }
    return fail;
}

}  // namespace detail

/// Limited-memory BFGS with two-loop recursion. Terminates on max steps, on
/// fval <= stop_fval, on a small gradient, or when the line search cannot make
/// progress (reported via the result, never fatal). The returned iterate is
/// the best one seen, so the final value never exceeds the initial one.
inline LbfgsResult lbfgs_minimize(
    const ObjectiveFn& fn, Vec theta, const LbfgsOptions& opt = {},
    const std::function<void(int, const Vec&, double)>& on_accept = nullptr) {
    Vec g(theta.size());
    double f = fn(theta, g);
    LbfgsResult best{theta, f, 0, false};

    std::deque<Vec> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int it = 1; it <= opt.max_steps; ++it) {
        if (f <= opt.stop_fval) break;
        if (g.cwiseAbs().maxCoeff() <= opt.grad_tol) break;

        // two-loop recursion for dir = -H g
        Vec q = g;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty()) {
            const Vec& s = s_hist.back();
            const Vec& y = y_hist.back();
            q *= s.dot(y) / y.dot(y);
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Vec dir = -q;
        if (dir.dot(g) >= 0.0) {  // not a descent direction: restart
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -g;
        }

        detail::WolfePoint p = detail::wolfe_search(fn, theta, dir, f, g, opt);
        if (p.a <= 0.0) {
            best.line_search_failed = true;
            break;
        }

        Vec s = p.a * dir;
        Vec y = p.grad - g;
        theta += s;
        f = p.f;
        g = p.grad;
        double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opt.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        best.iterations = it;
        if (f <= best.fval) {
            best.fval = f;
            best.theta = theta;
        }
        if (on_accept) on_accept(it, theta, f);
    }
    return best;
}

}  // namespace drills
