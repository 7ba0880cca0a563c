#pragma once

#include "atspde/adam.hpp"
#include "atspde/problem.hpp"
#include "atspde/resnet.hpp"

namespace atspde {

struct FbstdConfig {
    std::size_t I = 512;  // trajectories per iteration
    int N = 50;           // time subintervals
    std::size_t J = 10;   // candidates per point when the ATS is on
    enum class Variant { Fbstd1, Fbstd2 };
    Variant variant = Variant::Fbstd1;
    bool ats = false;
    long iterations = 20000;
    double lr = 0.005;
    double terminal_weight = 1.0;
    NetSpec net{2, 1, 256, 2, 2, Activation::Sine};  // input_dim is set to d+1
    std::uint64_t seed = 1;

    void validate() const {
        if (I < 1 || N < 1 || J < 1 || iterations < 0) {
            throw std::invalid_argument("fbstd: invalid configuration");
        }
    }
};

// Time grid, states and the Brownian increments that produced them; states
// are reproducible by replaying the increments through the Euler scheme.
struct TrajectoryBatch {
    Vec times;                       // N+1 grid points
    std::vector<Matrix> states;      // N+1 state matrices, I x d
    std::vector<Matrix> increments;  // N increment matrices, I x d

    int steps() const { return static_cast<int>(increments.size()); }
    std::size_t trajectories() const { return states.empty() ? 0 : states[0].rows; }
};

namespace detail {

// (t, x) rows for the network input.
inline void time_augment(double t, const Matrix& X, Matrix& out) {
    out.resize(X.rows, X.cols + 1);
    for (std::size_t i = 0; i < X.rows; ++i) {
        double* r = out.row(i);
        r[0] = t;
        std::copy(X.row(i), X.row(i) + X.cols, r + 1);
    }
}

}  // namespace detail

// Z = grad_x u_theta(t, x) per row (fbstd1) or the z-network output (fbstd2).
inline void z_value_batch(const ResNet& u_net, const ResNet* z_net, double t, const Matrix& X,
                          FbstdConfig::Variant variant, Matrix& Z) {
    static thread_local Matrix TX, Gfull;
    detail::time_augment(t, X, TX);
    if (variant == FbstdConfig::Variant::Fbstd1) {
        input_gradient_batch(u_net, TX, Gfull);
        Z.resize(X.rows, X.cols);
        for (std::size_t i = 0; i < X.rows; ++i) {
            std::copy(Gfull.row(i) + 1, Gfull.row(i) + 1 + X.cols, Z.row(i));
        }
    } else {
        if (!z_net) throw std::invalid_argument("z_value: fbstd2 needs the z network");
        forward(*z_net, TX, Z);
    }
}

inline Vec z_value(const ResNet& u_net, const ResNet* z_net, double t, const Vec& x,
                   FbstdConfig::Variant variant) {
    Matrix X(1, x.size());
    for (std::size_t k = 0; k < x.size(); ++k) X(0, k) = x[k];
    Matrix Z;
    z_value_batch(u_net, z_net, t, X, variant, Z);
    return Vec(Z.row(0), Z.row(0) + Z.cols);
}

// One-step bootstrapped value and TD error for a stored transition. Every
// term is a constant with respect to the subsequent gradient step.
inline double td_target(const ResNet& u_net, const ResNet* z_net, double t_n, const double* x_n,
                        double t_next, const double* x_next, const double* dB,
                        const ParabolicProblem& prob, FbstdConfig::Variant variant) {
    const int d = prob.d;
    Matrix X(1, d);
    std::copy(x_n, x_n + d, X.row(0));
    Matrix TX, U;
    detail::time_augment(t_n, X, TX);
    forward(u_net, TX, U);
    double u_n = U(0, 0);
    Vec z = z_value(u_net, z_net, t_n, Vec(x_n, x_n + d), variant);

    Matrix Xn(1, d);
    std::copy(x_next, x_next + d, Xn.row(0));
    Matrix TXn, Un;
    detail::time_augment(t_next, Xn, TXn);
    forward(u_net, TXn, Un);

    Vec s(d), sz(d);
    prob.sigma_at(t_n, x_n, s.data());
    for (int k = 0; k < d; ++k) sz[k] = s[k] * z[k];
    double dt = t_next - t_n;
    double zdB = 0.0;
    for (int k = 0; k < d; ++k) zdB += z[k] * s[k] * dB[k];
    double reward = prob.driver(t_n, x_n, u_n, sz.data()) * dt - zdB;
    return Un(0, 0) + reward;
}

inline double td_error(const ResNet& u_net, const ResNet* z_net, double t_n, const double* x_n,
                       double t_next, const double* x_next, const double* dB,
                       const ParabolicProblem& prob, FbstdConfig::Variant variant) {
    Matrix X(1, prob.d);
    std::copy(x_n, x_n + prob.d, X.row(0));
    Matrix TX, U;
    detail::time_augment(t_n, X, TX);
    forward(u_net, TX, U);
    return td_target(u_net, z_net, t_n, x_n, t_next, x_next, dB, prob, variant) - U(0, 0);
}

inline double indicator_ind_f(const ResNet& u_net, const ResNet* z_net, double t_n,
                              const double* x_n, double t_next, const double* x_next,
                              const double* dB, const ParabolicProblem& prob,
                              FbstdConfig::Variant variant) {
    return std::abs(td_error(u_net, z_net, t_n, x_n, t_next, x_next, dB, prob, variant));
}

// All I trajectories from x0 over the uniform grid. With the ATS on, each
// step proposes J successors per trajectory, scores them with the TD error
// and keeps the per-trajectory (local) maximizer, preserving the temporal
// association between consecutive steps.
inline TrajectoryBatch generate_trajectories(const ResNet& u_net, const ResNet* z_net,
                                             const FbstdConfig& cfg,
                                             const ParabolicProblem& prob, bool ats, Rng& rng) {
    const int d = prob.d;
    const std::size_t I = cfg.I;
    const int N = cfg.N;
    const double dt = prob.T / N;
    TrajectoryBatch batch;
    batch.times.resize(N + 1);
    for (int n = 0; n <= N; ++n) batch.times[n] = prob.T * n / N;
    batch.states.assign(N + 1, Matrix());
    batch.increments.assign(N, Matrix());
    batch.states[0].resize(I, d);
    for (std::size_t i = 0; i < I; ++i) {
        std::copy(prob.x0.begin(), prob.x0.end(), batch.states[0].row(i));
    }

    Vec s(d), f(d);
    Matrix u_n, u_cand, Z;
    Matrix TX;
    const double sdt = std::sqrt(dt);
    for (int n = 0; n < N; ++n) {
        const Matrix& X = batch.states[n];
        Matrix& Xn = batch.states[n + 1];
        Matrix& dB = batch.increments[n];
        Xn.resize(I, d);
        dB.resize(I, d);
        double t_n = batch.times[n];

        if (!ats || cfg.J == 1) {
            for (std::size_t i = 0; i < I; ++i) {
                double* inc = dB.row(i);
                fill_normal(rng, inc, d);
                for (int k = 0; k < d; ++k) inc[k] *= sdt;
                const double* x = X.row(i);
                prob.sigma_at(t_n, x, s.data());
                prob.drift_at(t_n, x, f.data());
                double* xn = Xn.row(i);
                for (int k = 0; k < d; ++k) xn[k] = x[k] + f[k] * dt + s[k] * inc[k];
            }
            continue;
        }

        // ATS: J candidate successors per trajectory, TD-error scored
        const std::size_t J = cfg.J;
        Matrix cand(I * J, d), cand_dB(I * J, d);
        for (std::size_t i = 0; i < I; ++i) {
            const double* x = X.row(i);
            prob.sigma_at(t_n, x, s.data());
            prob.drift_at(t_n, x, f.data());
            for (std::size_t j = 0; j < J; ++j) {
                double* inc = cand_dB.row(i * J + j);
                fill_normal(rng, inc, d);
                for (int k = 0; k < d; ++k) inc[k] *= sdt;
                double* c = cand.row(i * J + j);
                for (int k = 0; k < d; ++k) c[k] = x[k] + f[k] * dt + s[k] * inc[k];
            }
        }
        detail::time_augment(t_n, X, TX);
        forward(u_net, TX, u_n);
        z_value_batch(u_net, z_net, t_n, X, cfg.variant, Z);
        detail::time_augment(batch.times[n + 1], cand, TX);
        forward(u_net, TX, u_cand);

        Vec sz(d);
        for (std::size_t i = 0; i < I; ++i) {
            const double* x = X.row(i);
            prob.sigma_at(t_n, x, s.data());
            const double* z = Z.row(i);
            for (int k = 0; k < d; ++k) sz[k] = s[k] * z[k];
            double fval = prob.driver(t_n, x, u_n(i, 0), sz.data());
            std::size_t best = i * J;
            double best_score = -1.0;
            for (std::size_t j = 0; j < J; ++j) {
                std::size_t fidx = i * J + j;
                const double* inc = cand_dB.row(fidx);
                double zdB = 0.0;
                for (int k = 0; k < d; ++k) zdB += z[k] * s[k] * inc[k];
                double e = u_cand(fidx, 0) + fval * dt - zdB - u_n(i, 0);
                double score = std::abs(e);
                if (score > best_score) {
                    best_score = score;
                    best = fidx;
                }
            }
            std::copy(cand.row(best), cand.row(best) + d, Xn.row(i));
            std::copy(cand_dB.row(best), cand_dB.row(best) + d, dB.row(i));
        }
    }
    return batch;
}

struct StepLossResult {
    double loss_td = 0.0;
    double loss_terminal = 0.0;
    Vec grad_u;
    Vec grad_z;  // empty for fbstd1
};

// TD loss at time step n plus the terminal loss, with semi-gradient
// parameter derivatives (targets detached). For fbstd2 the z network also
// learns from the TD term through the reward and from the terminal
// gradient-matching term.
inline StepLossResult step_loss(const ResNet& u_net, const ResNet* z_net,
                                const TrajectoryBatch& batch, int n, const FbstdConfig& cfg,
                                const ParabolicProblem& prob) {
    if (n < 0 || n >= batch.steps()) throw std::out_of_range("step_loss: bad step index");
    const int d = prob.d;
    const std::size_t I = batch.trajectories();
    const double t_n = batch.times[n], t_next = batch.times[n + 1];
    const double dt = t_next - t_n;
    const Matrix& X = batch.states[n];
    const Matrix& Xn = batch.states[n + 1];
    const Matrix& dB = batch.increments[n];

    StepLossResult out;
    out.grad_u.assign(u_net.param_count(), 0.0);

    static thread_local Matrix TX, TXn, TXT, u_next, Z;
    static thread_local ForwardTape tape_n, tape_T;

    detail::time_augment(t_n, X, TX);
    forward_tape(u_net, TX, tape_n, true);
    DiffCounters::forward_points() += X.rows;
    detail::time_augment(t_next, Xn, TXn);
    forward(u_net, TXn, u_next);
    z_value_batch(u_net, z_net, t_n, X, cfg.variant, Z);

    Vec s(d), sz(d);
    Matrix Wn(I, 1);
    Vec E(I, 0.0);
    std::vector<Vec> sz_rows;
    const bool want_z_grad = (cfg.variant == FbstdConfig::Variant::Fbstd2);
    if (want_z_grad) sz_rows.assign(I, Vec(d, 0.0));
    for (std::size_t i = 0; i < I; ++i) {
        const double* x = X.row(i);
        prob.sigma_at(t_n, x, s.data());
        const double* z = Z.row(i);
        for (int k = 0; k < d; ++k) sz[k] = s[k] * z[k];
        if (want_z_grad) sz_rows[i] = sz;
        double u_n = tape_n.out(i, 0);
        double zdB = 0.0;
        for (int k = 0; k < d; ++k) zdB += z[k] * s[k] * dB.row(i)[k];
        double target = u_next(i, 0) + prob.driver(t_n, x, u_n, sz.data()) * dt - zdB;
        E[i] = target - u_n;
        out.loss_td += E[i] * E[i];
        Wn(i, 0) = -2.0 * E[i] / static_cast<double>(I);
    }
    out.loss_td /= static_cast<double>(I);
    DiffCounters::param_gradient_calls() += 1;
    backprop_from_tape(u_net, tape_n, Wn, &out.grad_u, nullptr);

    // terminal condition, evaluated on the batch endpoints every step
    const Matrix& XT = batch.states[batch.steps()];
    detail::time_augment(prob.T, XT, TXT);
    forward_tape(u_net, TXT, tape_T, true);
    DiffCounters::forward_points() += XT.rows;
    Matrix WT(I, 1);
    for (std::size_t i = 0; i < I; ++i) {
        double r = tape_T.out(i, 0) - prob.terminal(XT.row(i));
        out.loss_terminal += r * r;
        WT(i, 0) = 2.0 * r / static_cast<double>(I);
    }
    out.loss_terminal /= static_cast<double>(I);
    DiffCounters::param_gradient_calls() += 1;
    backprop_from_tape(u_net, tape_T, WT, &out.grad_u, nullptr);

    if (want_z_grad) {
        out.grad_z.assign(z_net->param_count(), 0.0);
        // TD term: dE/dphi = (df/dsz sigma^T - (sigma dB)^T) dz/dphi
        Matrix Wz(I, d);
        Vec dfz(d);
        for (std::size_t i = 0; i < I; ++i) {
            const double* x = X.row(i);
            prob.sigma_at(t_n, x, s.data());
            double w = 2.0 * E[i] / static_cast<double>(I);
            if (prob.driver_dz) {
                prob.driver_dz(t_n, x, tape_n.out(i, 0), sz_rows[i].data(), dfz.data());
            } else {
                std::fill(dfz.begin(), dfz.end(), 0.0);
            }
            for (int k = 0; k < d; ++k) {
                Wz(i, k) = w * (dfz[k] * s[k] * dt - s[k] * dB.row(i)[k]);
            }
        }
        detail::time_augment(t_n, X, TX);
        Vec gz = backprop_weighted_multi(*z_net, TX, Wz);
        for (std::size_t k = 0; k < gz.size(); ++k) out.grad_z[k] += gz[k];

        // terminal gradient matching: |z_phi(T, X_T) - grad g(X_T)|^2
        if (cfg.terminal_weight > 0.0) {
            static thread_local Matrix ZT;
            detail::time_augment(prob.T, XT, TXT);
            forward(*z_net, TXT, ZT);
            Matrix WzT(I, d);
            Vec gg(d);
            double lz = 0.0;
            for (std::size_t i = 0; i < I; ++i) {
                prob.terminal_gradient(XT.row(i), gg.data());
                for (int k = 0; k < d; ++k) {
                    double r = ZT(i, k) - gg[k];
                    lz += r * r;
                    WzT(i, k) = cfg.terminal_weight * 2.0 * r / static_cast<double>(I);
                }
            }
            out.loss_terminal += cfg.terminal_weight * lz / static_cast<double>(I);
            Vec gzT = backprop_weighted_multi(*z_net, TXT, WzT);
            for (std::size_t k = 0; k < gzT.size(); ++k) out.grad_z[k] += gzT[k];
        }
    }
    return out;
}

struct FbstdStepInfo {
    long iteration = 0;
    double loss = 0.0;  // TD + terminal, averaged over the time sweep
    const ResNet* u_net = nullptr;
    const ResNet* z_net = nullptr;
};

using FbstdCallback = std::function<void(const FbstdStepInfo&)>;

struct FbstdResult {
    ResNet u_net;
    ResNet z_net;  // meaningful for fbstd2 only
    bool has_z = false;
};

inline FbstdResult train_fbstd(const FbstdConfig& cfg, const ParabolicProblem& prob,
                               const FbstdCallback& on_iter = nullptr) {
    cfg.validate();
    NetSpec uspec = cfg.net;
    uspec.input_dim = prob.d + 1;
    uspec.out_dim = 1;
    FbstdResult res{init_resnet(uspec, cfg.seed), ResNet{}, false};
    AdamState adam_u(res.u_net.param_count(), cfg.lr);
    AdamState adam_z(0, cfg.lr);
    ResNet* z_net = nullptr;
    if (cfg.variant == FbstdConfig::Variant::Fbstd2) {
        NetSpec zspec = cfg.net;
        zspec.input_dim = prob.d + 1;
        zspec.out_dim = prob.d;
        res.z_net = init_resnet(zspec, mix_seed(cfg.seed, 77));
        res.has_z = true;
        z_net = &res.z_net;
        adam_z = AdamState(res.z_net.param_count(), cfg.lr);
    }

    Rng rng = make_rng(cfg.seed, 1);
    for (long it = 0; it < cfg.iterations; ++it) {
        TrajectoryBatch batch =
            generate_trajectories(res.u_net, z_net, cfg, prob, cfg.ats, rng);
        double loss_acc = 0.0;
        for (int n = 0; n < cfg.N; ++n) {
            StepLossResult sl = step_loss(res.u_net, z_net, batch, n, cfg, prob);
            adam_step(adam_u, res.u_net.flat, sl.grad_u);
            if (z_net) adam_step(adam_z, res.z_net.flat, sl.grad_z);
            loss_acc += sl.loss_td + sl.loss_terminal;
        }
        if (on_iter) {
            FbstdStepInfo info;
            info.iteration = it;
            info.loss = loss_acc / cfg.N;
            info.u_net = &res.u_net;
            info.z_net = z_net;
            on_iter(info);
        }
    }
    return res;
}

}  // namespace atspde
