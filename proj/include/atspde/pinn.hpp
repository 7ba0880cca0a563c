#pragma once

#include "atspde/adam.hpp"
#include "atspde/ats.hpp"
#include "atspde/resnet.hpp"

namespace atspde {

struct PinnConfig {
    std::size_t I = 500;
    std::size_t S = 300;
    double lambda = 1.0;  // boundary weight
    std::size_t J = 10;   // candidates per point
    double dt = 5e-4;     // squared candidate radius
    enum class Ind { IndP, Ind4 };
    Ind indicator = Ind::IndP;
    bool ats = false;
    long steps = 20000;
    double lr = 0.01;
    NetSpec net{2, 1, 60, 3, 2, Activation::Swish};
    std::uint64_t seed = 1;

    void validate(const EllipticProblem& prob) const {
        if (lambda <= 0.0 || I < 1 || S < 1 || J < 1 || steps < 0) {
            throw std::invalid_argument("pinn: invalid configuration");
        }
        if (!prob.domain.bounded()) throw std::invalid_argument("pinn: bounded domain required");
    }
};

// Q(u_theta) over a batch: 1/2 Tr(sigma sigma^T Hess u) + F . grad u - G.
inline void residual_batch(const ResNet& net, const Matrix& X, const EllipticProblem& prob,
                           Vec& res, Matrix* U_out = nullptr, Matrix* G_out = nullptr) {
    const int d = prob.dim();
    static thread_local Matrix U, G, H;
    second_order_batch(net, X, &U, &G, &H);
    res.assign(X.rows, 0.0);
    Vec s(d), f(d);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double* x = X.row(i);
        prob.sigma.at(x, s.data());
        double u = U(i, 0);
        prob.drift_at(x, u, f.data());
        double acc = 0.0;
        for (int k = 0; k < d; ++k) acc += 0.5 * s[k] * s[k] * H(i, k) + f[k] * G(i, k);
        res[i] = acc - prob.source_at(x, u);
    }
    if (U_out) *U_out = U;
    if (G_out) *G_out = G;
}

inline double residual(const ResNet& net, const Vec& x, const EllipticProblem& prob) {
    Matrix X(1, x.size());
    for (std::size_t k = 0; k < x.size(); ++k) X(0, k) = x[k];
    Vec r;
    residual_batch(net, X, prob, r);
    return r[0];
}

inline double indicator_ind_p(const ResNet& net, const Vec& x, const EllipticProblem& prob) {
    return std::abs(residual(net, x, prob));
}

struct PinnLoss {
    double interior = 0.0;
    double boundary = 0.0;  // unweighted mean squared mismatch
    double lambda = 1.0;
    Vec grad;
    double total() const { return interior + lambda * boundary; }
};

// Mean squared residual + lambda * mean squared boundary mismatch, with the
// full parameter gradient.
inline PinnLoss pinn_loss(const ResNet& net, const Matrix& S_int, const Matrix& S_bdy,
                          double lambda, const EllipticProblem& prob) {
    const int d = prob.dim();
    const std::size_t I = S_int.rows;
    // one forward sweep serves both the residual values and, with seed
    // weights assembled from them, the reverse sweep for the gradient
    static thread_local SecondOrderWorkspace W;
    second_order_forward_all(net, S_int, W);

    double loss_int = 0.0;
    Matrix ddw(I, d), dw(I, d);
    Vec vw(I, 0.0);
    Vec s(d), f(d);
    bool any_dw = false, any_vw = false;
    for (std::size_t i = 0; i < I; ++i) {
        const double* x = S_int.row(i);
        prob.sigma.at(x, s.data());
        double u = W.U(i, 0);
        prob.drift_at(x, u, f.data());
        double res = 0.0;
        for (int k = 0; k < d; ++k) res += 0.5 * s[k] * s[k] * W.H(i, k) + f[k] * W.G(i, k);
        res -= prob.source_at(x, u);
        loss_int += res * res;
        double w = 2.0 * res / static_cast<double>(I);
        for (int k = 0; k < d; ++k) {
            ddw(i, k) = w * 0.5 * s[k] * s[k];
            dw(i, k) = w * f[k];
            if (f[k] != 0.0) any_dw = true;
        }
        double chain = 0.0;
        if (prob.drift_du) {
            Vec fu(d);
            prob.drift_du(x, u, fu.data());
            for (int k = 0; k < d; ++k) chain += fu[k] * W.G(i, k);
        }
        if (prob.source_du) chain -= prob.source_du(x, u);
        vw[i] = w * chain;
        if (chain != 0.0) any_vw = true;
    }
    loss_int /= static_cast<double>(I);
    Vec grad = second_order_reverse(net, S_int, W, ddw, any_dw ? &dw : nullptr,
                                    any_vw ? &vw : nullptr);

    static thread_local ForwardTape tape;
    forward_tape(net, S_bdy, tape, true);
    DiffCounters::forward_points() += S_bdy.rows;
    const std::size_t S = S_bdy.rows;
    Matrix Wout(S, 1);
    double loss_bdy = 0.0;
    for (std::size_t q = 0; q < S; ++q) {
        double r = tape.out(q, 0) - prob.boundary_g(S_bdy.row(q));
        loss_bdy += r * r;
        Wout(q, 0) = lambda * 2.0 * r / static_cast<double>(S);
    }
    loss_bdy /= static_cast<double>(S);
    DiffCounters::param_gradient_calls() += 1;
    backprop_from_tape(net, tape, Wout, &grad, nullptr);
    PinnLoss out;
    out.interior = loss_int;
    out.boundary = loss_bdy;
    out.lambda = lambda;
    out.grad = std::move(grad);
    return out;
}

struct PinnStepInfo {
    long step = 0;
    double loss_interior = 0.0, loss_boundary = 0.0;
    const Matrix* training_set = nullptr;
    const ResNet* net = nullptr;
};

using PinnCallback = std::function<void(const PinnStepInfo&)>;

inline ResNet train_pinn(const PinnConfig& cfg, const EllipticProblem& prob,
                         const PinnCallback& on_step = nullptr) {
    cfg.validate(prob);
    NetSpec spec = cfg.net;
    spec.input_dim = prob.dim();
    spec.out_dim = 1;
    ResNet net = init_resnet(spec, cfg.seed);
    AdamState adam(net.param_count(), cfg.lr);
    Rng rng = make_rng(cfg.seed, 1);

    const int d = prob.dim();
    Matrix S_n;
    sample_interior_uniform(prob.domain, cfg.I, rng, S_n);
    Matrix B;

    const double step_scale = std::sqrt(cfg.dt);
    for (long step = 0; step < cfg.steps; ++step) {
        sample_boundary_uniform(prob.domain, cfg.S, rng, B);
        PinnLoss pl = pinn_loss(net, S_n, B, cfg.lambda, prob);
        adam_step(adam, net.flat, pl.grad);

        if (on_step) {
            PinnStepInfo info;
            info.step = step;
            info.loss_interior = pl.interior;
            info.loss_boundary = pl.boundary;
            info.training_set = &S_n;
            info.net = &net;
            on_step(info);
        }

        if (cfg.ats) {
            // candidates ride a plain Brownian step of radius sqrt(dt);
            // exits are replaced by fresh uniform interior points
            CandidateSet cands;
            cands.J = cfg.J;
            cands.points.resize(cfg.I * cfg.J, d);
            std::vector<char> resampled(cfg.I * cfg.J, 0);
            for (std::size_t i = 0; i < cfg.I; ++i) {
                const double* x = S_n.row(i);
                for (std::size_t j = 0; j < cfg.J; ++j) {
                    double* c = cands.points.row(i * cfg.J + j);
                    fill_normal(rng, c, d);
                    for (int k = 0; k < d; ++k) c[k] = x[k] + step_scale * c[k];
                    if (!prob.domain.contains(c)) {
                        Matrix fresh;
                        sample_interior_uniform(prob.domain, 1, rng, fresh);
                        for (int k = 0; k < d; ++k) c[k] = fresh(0, k);
                        resampled[i * cfg.J + j] = 1;
                    }
                }
            }
            cands.scores.assign(cands.size(), 0.0);
            if (cfg.indicator == PinnConfig::Ind::IndP) {
                Vec res;
                residual_batch(net, cands.points, prob, res);
                for (std::size_t f = 0; f < cands.size(); ++f) cands.scores[f] = std::abs(res[f]);
            } else {
                // Ind4 with J3 = 1: candidates score as their parent's single
                // Girsanov sample; resampled points have no generating
                // transition and fall back to the frozen-point value.
                Matrix u_par, u_cand;
                forward(net, S_n, u_par);
                forward(net, cands.points, u_cand);
                IndicatorKind kind;
                kind.tag = IndicatorKind::Tag::Ind4;
                kind.J3 = 1;
                kind.dt = cfg.dt;
                for (std::size_t f = 0; f < cands.size(); ++f) {
                    const double* c = cands.points.row(f);
                    double uc = u_cand(f, 0);
                    if (resampled[f]) {
                        double R, D;
                        girsanov_weights_values(c, c, uc, uc, prob, kind.scheme(), kind.dt, &R,
                                                &D);
                        cands.scores[f] = std::abs((uc - R) * D - uc);
                    } else {
                        std::size_t i = f / cfg.J;
                        cands.scores[f] = transition_score(kind, S_n.row(i), c, u_par(i, 0), uc,
                                                           prob, kind.dt);
                    }
                }
            }
            S_n = select_global(cands, cfg.I);
        } else {
            sample_interior_uniform(prob.domain, cfg.I, rng, S_n);
        }
    }
    return net;
}

}  // namespace atspde
