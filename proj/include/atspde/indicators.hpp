#pragma once

#include <functional>

#include "atspde/problem.hpp"

namespace atspde {

// Stand-in for u_theta: tests substitute the exact solution here.
using Evaluator = std::function<double(const double* x)>;

enum class Scheme { Rectangle, Trapezoid };

// Which error indicator scores a candidate, plus its sampling parameters.
// ind1/ind2 sample the drifted process, ind3/ind4 reweight pure Brownian
// samples by the Girsanov factor. With J3 == 1 and the shortcut on, the
// evaluated point stands in for its own sample.
struct IndicatorKind {
    enum class Tag { Ind1, Ind2, Ind3, Ind4, IndP, IndF };
    Tag tag = Tag::Ind2;
    int J3 = 1;
    double dt = 5e-4;
    bool shortcut = true;

    Scheme scheme() const {
        return (tag == Tag::Ind1 || tag == Tag::Ind3) ? Scheme::Rectangle : Scheme::Trapezoid;
    }
    bool girsanov() const { return tag == Tag::Ind3 || tag == Tag::Ind4; }
};

namespace detail {

// Coordinatewise F/(sigma sigma^T) for diagonal sigma.
inline void drift_over_sigma2(const EllipticProblem& prob, const double* x, double u, Vec& out) {
    const int d = prob.dim();
    out.resize(d);
    Vec s(d);
    prob.sigma.at(x, s.data());
    prob.drift_at(x, u, out.data());
    for (int k = 0; k < d; ++k) {
        double s2 = s[k] * s[k];
        if (s2 == 0.0) throw std::invalid_argument("girsanov: zero diffusion coordinate");
        out[k] /= s2;
    }
}

// Scalar G/(sigma sigma^T); the scalar division is only well defined for
// isotropic sigma, which covers every benchmark.
inline double source_over_sigma2(const EllipticProblem& prob, const double* x, double u) {
    const int d = prob.dim();
    Vec s(d);
    prob.sigma.at(x, s.data());
    double s2 = s[0] * s[0];
    if (s2 == 0.0) throw std::invalid_argument("girsanov: zero diffusion coordinate");
    for (int k = 1; k < d; ++k) {
        if (s[k] != s[0]) {
            throw std::invalid_argument("girsanov: scalar reward needs isotropic sigma");
        }
    }
    return prob.source_at(x, u) / s2;
}

}  // namespace detail

// Reward R and change-of-measure weight D for one Brownian transition
// x -> x_next, with u supplied at both ends.
inline void girsanov_weights_values(const double* x, const double* x_next, double u_x,
                                    double u_next, const EllipticProblem& prob, Scheme scheme,
                                    double dt, double* R_out, double* D_out) {
    const int d = prob.dim();
    Vec v0;
    detail::drift_over_sigma2(prob, x, u_x, v0);
    if (scheme == Scheme::Rectangle) {
        double y = 0.0, v2 = 0.0;
        for (int k = 0; k < d; ++k) {
            y += v0[k] * (x_next[k] - x[k]);
            v2 += v0[k] * v0[k];
        }
        *R_out = detail::source_over_sigma2(prob, x, u_x) * dt;
        *D_out = std::exp(y - 0.5 * v2 * dt);
        return;
    }
    Vec v1;
    detail::drift_over_sigma2(prob, x_next, u_next, v1);
    double y = 0.0, v2a = 0.0, v2b = 0.0;
    for (int k = 0; k < d; ++k) {
        y += 0.5 * (x_next[k] - x[k]) * (v0[k] + v1[k]);
        v2a += v0[k] * v0[k];
        v2b += v1[k] * v1[k];
    }
    *R_out = 0.5 * dt *
             (detail::source_over_sigma2(prob, x, u_x) +
              detail::source_over_sigma2(prob, x_next, u_next));
    *D_out = std::exp(y - 0.25 * (v2a + v2b) * dt);
}

inline void girsanov_weights(const double* x, const double* x_next, const Evaluator& eval,
                             const EllipticProblem& prob, Scheme scheme, double dt, double* R_out,
                             double* D_out) {
    girsanov_weights_values(x, x_next, eval(x), eval(x_next), prob, scheme, dt, R_out, D_out);
}

// Empirical value from J3 drifted samples x_j = x + F dt + sigma sqrt(dt) xi:
// mean of [eval(x_j) - reward]. J3 == 1 with the shortcut uses x itself.
inline double empirical_value_drifted(const double* x, const Evaluator& eval,
                                      const EllipticProblem& prob, Scheme scheme, int J3,
                                      double dt, Rng& rng, bool shortcut = true) {
    const int d = prob.dim();
    const double u_x = eval(x);
    const double g_x = prob.source_at(x, u_x);
    ProcessSpec proc = prob.process(dt);
    Vec xj(d);
    double acc = 0.0;
    const bool frozen = (J3 == 1 && shortcut);
    for (int j = 0; j < J3; ++j) {
        const double* p;
        if (frozen) {
            p = x;
        } else {
            em_step(x, u_x, proc, rng, xj.data());
            p = xj.data();
        }
        double u_j = (p == x) ? u_x : eval(p);
        double reward = (scheme == Scheme::Rectangle)
                            ? g_x * dt
                            : 0.5 * dt * (g_x + prob.source_at(p, u_j));
        acc += u_j - reward;
    }
    return acc / J3;
}

// Girsanov form: pure Brownian samples x_j = x + sqrt(dt) xi, value
// mean of [eval(x_j) - R] * D.
inline double empirical_value_girsanov(const double* x, const Evaluator& eval,
                                       const EllipticProblem& prob, Scheme scheme, int J3,
                                       double dt, Rng& rng, bool shortcut = true) {
    const int d = prob.dim();
    const double u_x = eval(x);
    Vec xj(d);
    double acc = 0.0;
    const bool frozen = (J3 == 1 && shortcut);
    for (int j = 0; j < J3; ++j) {
        const double* p;
        if (frozen) {
            p = x;
        } else {
            brownian_increment(d, dt, rng, xj.data());
            for (int k = 0; k < d; ++k) xj[k] += x[k];
            p = xj.data();
        }
        double u_j = (p == x) ? u_x : eval(p);
        double R, D;
        girsanov_weights_values(x, p, u_x, u_j, prob, scheme, dt, &R, &D);
        acc += (u_j - R) * D;
    }
    return acc / J3;
}

// Ind_m(x) = |y_m(x) - eval(x)| for m = 1..4.
inline double indicator(const double* x, const IndicatorKind& kind, const Evaluator& eval,
                        const EllipticProblem& prob, Rng& rng) {
    double y;
    if (kind.girsanov()) {
        y = empirical_value_girsanov(x, eval, prob, kind.scheme(), kind.J3, kind.dt, rng,
                                     kind.shortcut);
    } else {
        y = empirical_value_drifted(x, eval, prob, kind.scheme(), kind.J3, kind.dt, rng,
                                    kind.shortcut);
    }
    return std::abs(y - eval(x));
}

// One-sample Bellman mismatch along a stored parent -> candidate transition,
// with u already evaluated at both ends. This is the J3 = 1 scoring used
// when the ATS reuses the training loss's own candidate set: the candidate
// itself acts as its parent's single sample, so no extra network evaluation
// or sampling happens at all.
inline double transition_score(const IndicatorKind& kind, const double* parent,
                               const double* cand, double u_parent, double u_cand,
                               const EllipticProblem& prob, double dt) {
    if (kind.girsanov()) {
        double R, D;
        girsanov_weights_values(parent, cand, u_parent, u_cand, prob, kind.scheme(), dt, &R, &D);
        return std::abs((u_cand - R) * D - u_parent);
    }
    double g_p = prob.source_at(parent, u_parent);
    double reward = (kind.scheme() == Scheme::Rectangle)
                        ? g_p * dt
                        : 0.5 * dt * (g_p + prob.source_at(cand, u_cand));
    return std::abs(u_cand - reward - u_parent);
}

}  // namespace atspde
