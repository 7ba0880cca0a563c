#pragma once

#include <functional>
#include <string>

#include "atspde/process.hpp"

namespace atspde {

// Elliptic problem in the canonical form
//   Q(u) = 1/2 Tr(sigma sigma^T Hess u) + F . grad u - G = 0   in Omega,
//   u = g                                                      on dOmega.
struct EllipticProblem {
    std::string name;
    Domain domain;
    std::function<void(const double* x, double u, double* out)> drift;  // null: F = 0
    std::function<void(const double* x, double u, double* out)> drift_du;  // dF/du, null: 0
    std::function<double(const double* x, double u)> source;            // null: G = 0
    std::function<double(const double* x, double u)> source_du;         // dG/du, null: 0
    DiffusionSpec sigma;
    std::function<double(const double* x)> boundary_g;

    // optional exact solution with hand-derived derivatives (oracle use)
    std::function<double(const double* x)> exact;
    std::function<void(const double* x, double* out)> exact_gradient;
    std::function<void(const double* x, double* out)> exact_hessian_diag;

    int dim() const { return domain.dim; }
    bool has_exact() const { return static_cast<bool>(exact); }

    double source_at(const double* x, double u) const { return source ? source(x, u) : 0.0; }
    void drift_at(const double* x, double u, double* out) const {
        if (drift) {
            drift(x, u, out);
        } else {
            for (int k = 0; k < dim(); ++k) out[k] = 0.0;
        }
    }
    ProcessSpec process(double dt) const {
        ProcessSpec p;
        p.drift = drift;
        p.sigma = sigma;
        p.dt = dt;
        p.dim = dim();
        return p;
    }
};

// Parabolic problem
//   du/dt + 1/2 Tr(sigma sigma^T Hess u) + F . grad u + f = 0,  u(T, .) = g,
// with driver f = f(t, x, y, sigma^T z) as in the FBSDE formulation.
struct ParabolicProblem {
    std::string name;
    int d = 1;
    double T = 1.0;
    Vec x0;
    std::function<void(double t, const double* x, double* out)> drift;  // null: F = 0
    std::function<void(double t, const double* x, double* out)> sigma_diag;  // null: constant
    Vec sigma_const;
    std::function<double(double t, const double* x, double y, const double* sz)> driver;
    // d f / d(sigma^T z), optional; null means the driver ignores z
    std::function<void(double t, const double* x, double y, const double* sz, double* out)>
        driver_dz;
    std::function<double(const double* x)> terminal;
    std::function<void(const double* x, double* out)> terminal_gradient;

    std::function<double(double t, const double* x)> exact;
    // analytic derivatives of the exact solution, for oracle checks
    std::function<double(double t, const double* x)> exact_dt;
    std::function<void(double t, const double* x, double* out)> exact_gradient;
    std::function<void(double t, const double* x, double* out)> exact_hessian_diag;

    bool has_exact() const { return static_cast<bool>(exact); }

    void sigma_at(double t, const double* x, double* out) const {
        if (sigma_diag) {
            sigma_diag(t, x, out);
        } else {
            for (int k = 0; k < d; ++k) out[k] = sigma_const[k];
        }
    }
    void drift_at(double t, const double* x, double* out) const {
        if (drift) {
            drift(t, x, out);
        } else {
            for (int k = 0; k < d; ++k) out[k] = 0.0;
        }
    }
};

}  // namespace atspde
