#pragma once

#include <cmath>
#include <stdexcept>

#include "atspde/core.hpp"

namespace atspde {

// Adam with bias correction. One state per trained parameter vector.
struct AdamState {
    long step_count = 0;
    Vec m, v;
    double alpha = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(std::size_t n, double lr = 0.01) : m(n, 0.0), v(n, 0.0), alpha(lr) {}
};

inline void adam_step(AdamState& st, Vec& params, const Vec& grad) {
    if (grad.size() != params.size() || st.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: length mismatch");
    }
    st.step_count += 1;
    const double b1 = st.beta1, b2 = st.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step_count));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step_count));
    const double a = st.alpha;
    double* m = st.m.data();
    double* v = st.v.data();
    double* p = params.data();
    const double* g = grad.data();
    const std::size_t n = params.size();
    for (std::size_t k = 0; k < n; ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        double mhat = m[k] / c1;
        double vhat = v[k] / c2;
        p[k] -= a * mhat / (std::sqrt(vhat) + st.epsilon);
    }
}

}  // namespace atspde
