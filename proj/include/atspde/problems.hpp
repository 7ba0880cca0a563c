#pragma once

#include <complex>
#include <numbers>

#include "atspde/problem.hpp"

namespace atspde {

// 2-D Laplace problem on the wedge {0 <= r <= 1, 0 <= theta <= pi/6} with
// the singular exact solution u = r^(2/3) sin(2 theta / 3). Encoded
// canonically with sigma = sqrt(2) I, F = 0, G = 0.
inline EllipticProblem wedge_laplace() {
    EllipticProblem p;
    p.name = "wedge_laplace";
    p.domain = Domain::wedge2d(1.0, std::numbers::pi / 6.0);
    p.sigma = DiffusionSpec::isotropic(2, std::sqrt(2.0));

    auto holo = [](const double* x, int order) {
        // z^(2/3) and its derivatives; u = Im z^(2/3)
        std::complex<double> z(x[0], x[1]);
        std::complex<double> f;
        if (order == 0) {
            f = std::pow(z, 2.0 / 3.0);
        } else if (order == 1) {
            f = (2.0 / 3.0) * std::pow(z, -1.0 / 3.0);
        } else {
            f = (2.0 / 3.0) * (-1.0 / 3.0) * std::pow(z, -4.0 / 3.0);
        }
        return f;
    };
    p.exact = [holo](const double* x) {
        if (x[0] == 0.0 && x[1] == 0.0) return 0.0;
        return holo(x, 0).imag();
    };
    p.exact_gradient = [holo](const double* x, double* out) {
        auto f1 = holo(x, 1);
        out[0] = f1.imag();  // d/dx Im f = Im f'
        out[1] = f1.real();  // d/dy Im f = Re f'
    };
    p.exact_hessian_diag = [holo](const double* x, double* out) {
        auto f2 = holo(x, 2);
        out[0] = f2.imag();
        out[1] = -f2.imag();  // harmonic: u_yy = -u_xx
    };
    p.boundary_g = [e = p.exact](const double* x) { return e(x); };
    return p;
}

// High-dimensional Poisson problem -Lap u = G_paper on [-1,1]^d with
// u = s^2 + sin s, s = mean(x). Canonical form: sigma = sqrt(2) I, F = 0,
// G(x) = (2 - sin s)/d, so that Q(u) = Lap u - G = 0.
inline EllipticProblem poisson_d(int d) {
    EllipticProblem p;
    p.name = "poisson_" + std::to_string(d);
    p.domain = Domain::hypercube(d, -1.0, 1.0);
    p.sigma = DiffusionSpec::isotropic(d, std::sqrt(2.0));
    auto mean = [d](const double* x) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += x[k];
        return s / d;
    };
    p.source = [mean, d](const double* x, double) {
        return (2.0 - std::sin(mean(x))) / static_cast<double>(d);
    };
    p.exact = [mean](const double* x) {
        double s = mean(x);
        return s * s + std::sin(s);
    };
    p.exact_gradient = [mean, d](const double* x, double* out) {
        double s = mean(x);
        double g = (2.0 * s + std::cos(s)) / d;
        for (int k = 0; k < d; ++k) out[k] = g;
    };
    p.exact_hessian_diag = [mean, d](const double* x, double* out) {
        double s = mean(x);
        double h = (2.0 - std::sin(s)) / (static_cast<double>(d) * d);
        for (int k = 0; k < d; ++k) out[k] = h;
    };
    p.boundary_g = [e = p.exact](const double* x) { return e(x); };
    return p;
}

// Black-Scholes benchmark in d = 100: sigma = 0.1 diag(x), F = 0.1 x,
// driver f = -0.1 y, terminal g = |x|^2, exact u = exp(0.11 (T-t)) |x|^2.
inline ParabolicProblem black_scholes_100() {
    ParabolicProblem p;
    p.name = "black_scholes_100";
    p.d = 100;
    p.T = 1.0;
    p.x0.resize(100);
    for (int k = 0; k < 100; ++k) p.x0[k] = (k % 2 == 0) ? 1.0 : 0.5;
    p.drift = [](double, const double* x, double* out) {
        for (int k = 0; k < 100; ++k) out[k] = 0.1 * x[k];
    };
    p.sigma_diag = [](double, const double* x, double* out) {
        for (int k = 0; k < 100; ++k) out[k] = 0.1 * x[k];
    };
    p.driver = [](double, const double*, double y, const double*) { return -0.1 * y; };
    p.terminal = [](const double* x) {
        double s = 0.0;
        for (int k = 0; k < 100; ++k) s += x[k] * x[k];
        return s;
    };
    p.terminal_gradient = [](const double* x, double* out) {
        for (int k = 0; k < 100; ++k) out[k] = 2.0 * x[k];
    };
    auto amp = [](double t) { return std::exp(0.11 * (1.0 - t)); };
    p.exact = [amp](double t, const double* x) {
        double s = 0.0;
        for (int k = 0; k < 100; ++k) s += x[k] * x[k];
        return amp(t) * s;
    };
    p.exact_dt = [amp](double t, const double* x) {
        double s = 0.0;
        for (int k = 0; k < 100; ++k) s += x[k] * x[k];
        return -0.11 * amp(t) * s;
    };
    p.exact_gradient = [amp](double t, const double* x, double* out) {
        for (int k = 0; k < 100; ++k) out[k] = 2.0 * amp(t) * x[k];
    };
    p.exact_hessian_diag = [amp](double t, const double*, double* out) {
        for (int k = 0; k < 100; ++k) out[k] = 2.0 * amp(t);
    };
    return p;
}

// Quadratically growing nonlinear benchmark:
//   du/dt + |grad u|^2 + 1/2 Lap u = h(t, x),   u(T, x) = sin((|x|^2/d)^kappa),
// exact u = sin(l^kappa) with l = T - t + |x|^2/d. As an FBSDE the forward
// process is pure Brownian (sigma = I, F = 0) and the nonlinearity enters
// the driver: f(t, x, y, z) = |z|^2 - h(t, x). The du/dt term cancels the
// trace part of the Laplacian exactly, which the construction self-test
// re-checks against the hand-derived derivatives.
inline ParabolicProblem quadratic_growth(int d = 100, double kappa = 0.2) {
    ParabolicProblem p;
    p.name = "quadratic_growth_" + std::to_string(d);
    p.d = d;
    p.T = 1.0;
    p.x0.assign(d, 0.0);
    p.sigma_const.assign(d, 1.0);

    const double T = p.T;
    auto lfun = [T, d](double t, const double* x) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += x[k] * x[k];
        return T - t + s / d;
    };
    auto h = [lfun, kappa, d](double t, const double* x) {
        double l = lfun(t, x);
        double lk = std::pow(l, kappa);
        double cs = std::cos(lk), sn = std::sin(lk);
        double x2 = 0.0;
        for (int k = 0; k < d; ++k) x2 += x[k] * x[k];
        double dd = static_cast<double>(d);
        double bracket = kappa * kappa * std::pow(l, 2.0 * kappa - 2.0) * (2.0 * cs * cs - sn) +
                         kappa * (kappa - 1.0) * std::pow(l, kappa - 2.0) * cs;
        return 2.0 * x2 / (dd * dd) * bracket;
    };
    p.driver = [h, d](double t, const double* x, double, const double* sz) {
        double z2 = 0.0;
        for (int k = 0; k < d; ++k) z2 += sz[k] * sz[k];
        return z2 - h(t, x);
    };
    p.driver_dz = [d](double, const double*, double, const double* sz, double* out) {
        for (int k = 0; k < d; ++k) out[k] = 2.0 * sz[k];
    };
    p.terminal = [d, kappa](const double* x) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += x[k] * x[k];
        return std::sin(std::pow(s / d, kappa));
    };
    p.terminal_gradient = [d, kappa](const double* x, double* out) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += x[k] * x[k];
        double m = s / d;
        if (m == 0.0) {
            for (int k = 0; k < d; ++k) out[k] = 0.0;
            return;
        }
        double f = std::cos(std::pow(m, kappa)) * kappa * std::pow(m, kappa - 1.0) * 2.0 / d;
        for (int k = 0; k < d; ++k) out[k] = f * x[k];
    };
    p.exact = [lfun, kappa](double t, const double* x) {
        return std::sin(std::pow(lfun(t, x), kappa));
    };
    p.exact_dt = [lfun, kappa](double t, const double* x) {
        double l = lfun(t, x);
        return -std::cos(std::pow(l, kappa)) * kappa * std::pow(l, kappa - 1.0);
    };
    p.exact_gradient = [lfun, kappa, d](double t, const double* x, double* out) {
        double l = lfun(t, x);
        double f = std::cos(std::pow(l, kappa)) * kappa * std::pow(l, kappa - 1.0) * 2.0 / d;
        for (int k = 0; k < d; ++k) out[k] = f * x[k];
    };
    p.exact_hessian_diag = [lfun, kappa, d](double t, const double* x, double* out) {
        double l = lfun(t, x);
        double lk = std::pow(l, kappa);
        double cs = std::cos(lk), sn = std::sin(lk);
        double a = -sn * kappa * kappa * std::pow(l, 2.0 * kappa - 2.0) +
                   cs * kappa * (kappa - 1.0) * std::pow(l, kappa - 2.0);
        double b = cs * kappa * std::pow(l, kappa - 1.0);
        for (int k = 0; k < d; ++k) {
            double xk2 = (2.0 * x[k] / d) * (2.0 * x[k] / d);
            out[k] = a * xk2 + b * 2.0 / d;
        }
    };
    return p;
}

}  // namespace atspde
