#pragma once

#include "atspde/adam.hpp"
#include "atspde/ats.hpp"
#include "atspde/resnet.hpp"

namespace atspde {

struct DflmConfig {
    std::size_t I = 500;   // interior batch
    std::size_t S = 300;   // boundary batch
    std::size_t J1 = 20;   // samples per point inside the loss
    double dt = 5e-4;
    enum class Variant { Drifted, Girsanov };
    Variant variant = Variant::Drifted;
    Scheme scheme = Scheme::Trapezoid;

    bool ats = false;
    IndicatorKind::Tag ats_indicator = IndicatorKind::Tag::Ind2;
    int ats_j3 = 1;  // J3 = 1 scores the loss's own candidates in place
    SelectionKind ats_selection = SelectionKind::Global;

    // When true, the Bellman target is a constant for the gradient
    // (temporal-difference bootstrapping); when false, the gradient also
    // flows through u_theta at the sampled neighbors, making the update the
    // exact gradient of the empirical loss.
    bool detach_targets = false;

    long steps = 20000;
    double lr = 0.01;
    NetSpec net{2, 1, 60, 3, 2, Activation::Swish};
    std::uint64_t seed = 1;

    void validate(const EllipticProblem& prob) const {
        if (I < 1 || S < 1 || J1 < 1 || steps < 0) {
            throw std::invalid_argument("dflm: batch sizes and steps must be positive");
        }
        if (variant == Variant::Girsanov || ats_indicator == IndicatorKind::Tag::Ind3 ||
            ats_indicator == IndicatorKind::Tag::Ind4) {
            Vec s(prob.dim());
            Vec probe(prob.dim(), 0.1);
            prob.sigma.at(probe.data(), s.data());
            for (double v : s) {
                if (v == 0.0) {
                    throw std::invalid_argument("dflm: girsanov form needs nonzero sigma");
                }
            }
        }
        if (!prob.domain.bounded()) throw std::invalid_argument("dflm: bounded domain required");
    }
};

// Everything the interior loss hands back: gradient pieces plus the sampled
// neighbor set, which doubles as the admissible candidate set for the ATS.
struct InteriorLossResult {
    double loss = 0.0;
    Vec grad;
    CandidateSet cands;
    Vec u_parent;  // u_theta at the training points
    Vec u_cand;    // u_theta at the candidates
};

// Bellman-target interior loss. Targets are constants for the gradient
// (bootstrapped); the parameter gradient flows only through u_theta at the
// training points themselves, so the loss stays derivative-free.
inline InteriorLossResult interior_loss(const ResNet& net, const Matrix& S_n,
                                        const DflmConfig& cfg, const EllipticProblem& prob,
                                        Rng& rng) {
    const int d = prob.dim();
    const std::size_t I = S_n.rows;
    const std::size_t J = cfg.J1;
    InteriorLossResult res;

    static thread_local ForwardTape tape;
    forward_tape(net, S_n, tape, true);
    DiffCounters::forward_points() += S_n.rows;
    res.u_parent.assign(I, 0.0);
    for (std::size_t i = 0; i < I; ++i) res.u_parent[i] = tape.out(i, 0);

    // neighbors: drifted Euler-Maruyama step or pure Brownian, dragged back
    res.cands.J = J;
    res.cands.points.resize(I * J, d);
    {
        ProcessSpec proc = prob.process(cfg.dt);
        if (cfg.variant == DflmConfig::Variant::Girsanov) proc.drift = nullptr;
        Vec buf(d);
        for (std::size_t i = 0; i < I; ++i) {
            const double* x = S_n.row(i);
            for (std::size_t j = 0; j < J; ++j) {
                double* c = res.cands.points.row(i * J + j);
                em_step(x, res.u_parent[i], proc, rng, c);
                fix_exit(prob.domain, x, c, ExitPolicy::DragBack, rng);
            }
        }
    }

    static thread_local ForwardTape nb_tape;
    forward_tape(net, res.cands.points, nb_tape, !cfg.detach_targets);
    DiffCounters::forward_points() += res.cands.points.rows;
    const Matrix& u_nb = nb_tape.out;
    res.u_cand.assign(I * J, 0.0);
    for (std::size_t f = 0; f < I * J; ++f) res.u_cand[f] = u_nb(f, 0);

    // Bellman targets; dy_du(f) = d y_i / d u_theta(x_f) feeds the exact
    // gradient when targets are not detached
    Vec y(I, 0.0);
    Vec dy_du(cfg.detach_targets ? 0 : I * J, 0.0);
    Vec dy_dup(cfg.detach_targets ? 0 : I, 0.0);
    const double dt = cfg.dt;
    const double Jd = static_cast<double>(J);
    if (cfg.variant == DflmConfig::Variant::Drifted) {
        for (std::size_t i = 0; i < I; ++i) {
            const double* x = S_n.row(i);
            double g_x = prob.source_at(x, res.u_parent[i]);
            double gu_x = prob.source_du ? prob.source_du(x, res.u_parent[i]) : 0.0;
            double acc = 0.0;
            for (std::size_t j = 0; j < J; ++j) {
                std::size_t f = i * J + j;
                double u_j = res.u_cand[f];
                const double* xj = res.cands.points.row(f);
                if (cfg.scheme == Scheme::Rectangle) {
                    acc += u_j - g_x * dt;
                    if (!cfg.detach_targets) dy_du[f] = 1.0 / Jd;
                } else {
                    acc += u_j - 0.5 * dt * (g_x + prob.source_at(xj, u_j));
                    if (!cfg.detach_targets) {
                        double gu_j = prob.source_du ? prob.source_du(xj, u_j) : 0.0;
                        dy_du[f] = (1.0 - 0.5 * dt * gu_j) / Jd;
                    }
                }
            }
            if (!cfg.detach_targets) {
                dy_dup[i] = (cfg.scheme == Scheme::Rectangle) ? -gu_x * dt : -0.5 * dt * gu_x;
            }
            y[i] = acc / Jd;
        }
    } else {
        // Girsanov form; the exact-gradient path treats F and G as
        // u-independent, which covers every benchmark problem
        for (std::size_t i = 0; i < I; ++i) {
            const double* x = S_n.row(i);
            double acc = 0.0;
            for (std::size_t j = 0; j < J; ++j) {
                std::size_t f = i * J + j;
                double R, D;
                girsanov_weights_values(x, res.cands.points.row(f), res.u_parent[i],
                                        res.u_cand[f], prob, cfg.scheme, dt, &R, &D);
                acc += (res.u_cand[f] - R) * D;
                if (!cfg.detach_targets) dy_du[f] = D / Jd;
            }
            y[i] = acc / Jd;
        }
    }

    Vec w(I);
    double loss = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
        double r = y[i] - res.u_parent[i];
        loss += r * r;
        double dparent = cfg.detach_targets ? -1.0 : (dy_dup.empty() ? 0.0 : dy_dup[i]) - 1.0;
        w[i] = 2.0 * r * dparent / static_cast<double>(I);
    }
    res.loss = loss / static_cast<double>(I);

    res.grad.assign(net.param_count(), 0.0);
    Matrix Wout(I, 1);
    for (std::size_t i = 0; i < I; ++i) Wout(i, 0) = w[i];
    DiffCounters::param_gradient_calls() += 1;
    backprop_from_tape(net, tape, Wout, &res.grad, nullptr);

    if (!cfg.detach_targets) {
        Matrix Wnb(I * J, 1);
        for (std::size_t f = 0; f < I * J; ++f) {
            std::size_t i = f / J;
            double r = y[i] - res.u_parent[i];
            Wnb(f, 0) = 2.0 * r * dy_du[f] / static_cast<double>(I);
        }
        DiffCounters::param_gradient_calls() += 1;
        backprop_from_tape(net, nb_tape, Wnb, &res.grad, nullptr);
    }
    return res;
}

inline std::pair<double, Vec> boundary_loss(const ResNet& net, const Matrix& B,
                                            const EllipticProblem& prob) {
    static thread_local ForwardTape tape;
    forward_tape(net, B, tape, true);
    DiffCounters::forward_points() += B.rows;
    const std::size_t S = B.rows;
    Matrix Wout(S, 1);
    double loss = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        double r = tape.out(s, 0) - prob.boundary_g(B.row(s));
        loss += r * r;
        Wout(s, 0) = 2.0 * r / static_cast<double>(S);
    }
    Vec grad(net.param_count(), 0.0);
    DiffCounters::param_gradient_calls() += 1;
    backprop_from_tape(net, tape, Wout, &grad, nullptr);
    return {loss / static_cast<double>(S), std::move(grad)};
}

// Scores the reused candidate set. J3 = 1 uses the stored transitions and
// costs no extra evaluation; J3 > 1 draws fresh samples per candidate and
// evaluates u_theta on them in one batch.
inline void score_candidates(const ResNet& net, const Matrix& parents,
                             InteriorLossResult& interior, const DflmConfig& cfg,
                             const EllipticProblem& prob, Rng& rng) {
    IndicatorKind kind;
    kind.tag = cfg.ats_indicator;
    kind.J3 = cfg.ats_j3;
    kind.dt = cfg.dt;
    CandidateSet& cands = interior.cands;
    cands.scores.assign(cands.size(), 0.0);
    const std::size_t J = cands.J;

    if (kind.J3 == 1) {
        for (std::size_t f = 0; f < cands.size(); ++f) {
            std::size_t i = f / J;
            cands.scores[f] = transition_score(kind, parents.row(i), cands.points.row(f),
                                               interior.u_parent[i], interior.u_cand[f], prob,
                                               cfg.dt);
        }
        return;
    }

    // fresh J3 samples per candidate, batched through the network
    const int d = prob.dim();
    const std::size_t n = cands.size();
    ProcessSpec proc = prob.process(kind.dt);
    if (kind.girsanov()) proc.drift = nullptr;
    Matrix samples(n * kind.J3, d);
    for (std::size_t f = 0; f < n; ++f) {
        for (int j = 0; j < kind.J3; ++j) {
            em_step(cands.points.row(f), interior.u_cand[f], proc, rng,
                    samples.row(f * kind.J3 + j));
        }
    }
    Matrix u_s;
    forward(net, samples, u_s);
    for (std::size_t f = 0; f < n; ++f) {
        const double* x = cands.points.row(f);
        double u_x = interior.u_cand[f];
        double g_x = prob.source_at(x, u_x);
        double acc = 0.0;
        for (int j = 0; j < kind.J3; ++j) {
            std::size_t sidx = f * kind.J3 + j;
            const double* xj = samples.row(sidx);
            double u_j = u_s(sidx, 0);
            if (kind.girsanov()) {
                double R, D;
                girsanov_weights_values(x, xj, u_x, u_j, prob, kind.scheme(), kind.dt, &R, &D);
                acc += (u_j - R) * D;
            } else {
                double reward = (kind.scheme() == Scheme::Rectangle)
                                    ? g_x * kind.dt
                                    : 0.5 * kind.dt * (g_x + prob.source_at(xj, u_j));
                acc += u_j - reward;
            }
        }
        cands.scores[f] = std::abs(acc / kind.J3 - u_x);
    }
}

struct DflmStepInfo {
    long step = 0;
    double loss_interior = 0.0, loss_boundary = 0.0;
    const Matrix* training_set = nullptr;
    const ResNet* net = nullptr;
};

using DflmCallback = std::function<void(const DflmStepInfo&)>;

inline ResNet train_dflm(const DflmConfig& cfg, const EllipticProblem& prob,
                         const DflmCallback& on_step = nullptr) {
    cfg.validate(prob);
    NetSpec spec = cfg.net;
    spec.input_dim = prob.dim();
    spec.out_dim = 1;
    ResNet net = init_resnet(spec, cfg.seed);
    AdamState adam(net.param_count(), cfg.lr);
    Rng rng = make_rng(cfg.seed, 1);

    Matrix S_n;
    sample_interior_uniform(prob.domain, cfg.I, rng, S_n);

    Matrix B;
    Vec grad(net.param_count());
    for (long step = 0; step < cfg.steps; ++step) {
        InteriorLossResult interior = interior_loss(net, S_n, cfg, prob, rng);
        sample_boundary_uniform(prob.domain, cfg.S, rng, B);
        auto [lb, gb] = boundary_loss(net, B, prob);

        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = interior.grad[k] + gb[k];
        adam_step(adam, net.flat, grad);

        if (on_step) {
            DflmStepInfo info;
            info.step = step;
            info.loss_interior = interior.loss;
            info.loss_boundary = lb;
            info.training_set = &S_n;
            info.net = &net;
            on_step(info);
        }

        if (cfg.ats) {
            score_candidates(net, S_n, interior, cfg, prob, rng);
            S_n = (cfg.ats_selection == SelectionKind::Global)
                      ? select_global(interior.cands, cfg.I)
                      : select_local(interior.cands);
        } else {
            sample_interior_uniform(prob.domain, cfg.I, rng, S_n);
        }
    }
    return net;
}

}  // namespace atspde
