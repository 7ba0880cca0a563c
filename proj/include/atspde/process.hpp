#pragma once

#include <functional>
#include <stdexcept>

#include "atspde/domain.hpp"

namespace atspde {

// Diagonal diffusion, evaluated per point. A constant fast path avoids the
// indirect call in tight loops.
struct DiffusionSpec {
    std::function<void(const double* x, double* out)> eval;
    Vec constant;  // used when eval is empty
    int dim = 1;

    static DiffusionSpec isotropic(int dim, double value) {
        DiffusionSpec s;
        s.dim = dim;
        s.constant.assign(dim, value);
        return s;
    }
    static DiffusionSpec diagonal(int dim, std::function<void(const double*, double*)> fn) {
        DiffusionSpec s;
        s.dim = dim;
        s.eval = std::move(fn);
        return s;
    }
    bool is_constant() const { return !eval; }
    void at(const double* x, double* out) const {
        if (eval) {
            eval(x, out);
        } else {
            for (int k = 0; k < dim; ++k) out[k] = constant[k];
        }
    }
};

// dX = F(X, u(X)) dt + sigma(X) dB, discretized by Euler-Maruyama.
struct ProcessSpec {
    std::function<void(const double* x, double u, double* out)> drift;  // null: F = 0
    DiffusionSpec sigma;
    double dt = 1e-3;
    int dim = 1;
};

inline void brownian_increment(int d, double dt, Rng& rng, double* out) {
    if (dt < 0.0) throw std::invalid_argument("brownian_increment: dt < 0");
    double s = std::sqrt(dt);
    fill_normal(rng, out, static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) out[k] *= s;
}

inline Vec brownian_increment(int d, double dt, Rng& rng) {
    Vec out(d);
    brownian_increment(d, dt, rng, out.data());
    return out;
}

// One Euler-Maruyama step from x, given u_value = u(x) for the drift.
inline void em_step(const double* x, double u_value, const ProcessSpec& proc, Rng& rng,
                    double* out) {
    const int d = proc.dim;
    brownian_increment(d, proc.dt, rng, out);
    if (proc.sigma.is_constant()) {
        for (int k = 0; k < d; ++k) out[k] = x[k] + proc.sigma.constant[k] * out[k];
    } else {
        Vec s(d);
        proc.sigma.at(x, s.data());
        for (int k = 0; k < d; ++k) out[k] = x[k] + s[k] * out[k];
    }
    if (proc.drift) {
        Vec f(d);
        proc.drift(x, u_value, f.data());
        for (int k = 0; k < d; ++k) out[k] += f[k] * proc.dt;
    }
}

inline Vec em_step(const Vec& x, double u_value, const ProcessSpec& proc, Rng& rng) {
    Vec out(x.size());
    em_step(x.data(), u_value, proc, rng, out.data());
    return out;
}

enum class ExitPolicy { DragBack, ResampleUniform, None };

// J stochastic successors per parent, grouped by parent index: candidate
// (i, j) sits at flat row i*J + j.
struct CandidateSet {
    Matrix points;
    std::size_t J = 1;
    Vec scores;  // empty until scored

    std::size_t size() const { return points.rows; }
    std::size_t parents() const { return points.rows / J; }
    std::size_t parent_of(std::size_t flat) const { return flat / J; }
    bool has_scores() const { return !scores.empty(); }
};

// Applies the exit policy to a candidate row in place.
inline void fix_exit(const Domain& dom, const double* parent, double* cand, ExitPolicy policy,
                     Rng& rng) {
    if (dom.contains(cand)) return;
    switch (policy) {
        case ExitPolicy::None:
            return;
        case ExitPolicy::DragBack: {
            Vec p = segment_boundary_intersection(dom, parent, cand);
            for (int k = 0; k < dom.dim; ++k) cand[k] = p[k];
            nudge_inside(dom, parent, cand);
            return;
        }
        case ExitPolicy::ResampleUniform: {
            Matrix fresh;
            sample_interior_uniform(dom, 1, rng, fresh);
            for (int k = 0; k < dom.dim; ++k) cand[k] = fresh(0, k);
            return;
        }
    }
}

inline CandidateSet propose_candidates(const Matrix& S, std::size_t J, const ProcessSpec& proc,
                                       const std::function<double(const double*)>& u_eval,
                                       const Domain& dom, ExitPolicy policy, Rng& rng) {
    if (S.rows == 0 || J == 0) throw std::invalid_argument("propose_candidates: empty input");
    if (policy != ExitPolicy::None && !dom.bounded()) {
        throw std::invalid_argument("propose_candidates: exit policy needs a bounded domain");
    }
    CandidateSet cs;
    cs.J = J;
    cs.points.resize(S.rows * J, S.cols);
    for (std::size_t i = 0; i < S.rows; ++i) {
        const double* x = S.row(i);
        double u = (proc.drift && u_eval) ? u_eval(x) : 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            double* c = cs.points.row(i * J + j);
            em_step(x, u, proc, rng, c);
            fix_exit(dom, x, c, policy, rng);
        }
    }
    return cs;
}

}  // namespace atspde
