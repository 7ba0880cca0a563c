#pragma once

#include <cmath>
#include <stdexcept>

#include "atspde/core.hpp"

namespace atspde {

// Wedge (sector), axis-aligned hypercube, or all of R^d. Membership tests
// are exact; sampling is uniform with respect to area/length measure.
struct Domain {
    enum class Kind { Wedge2D, Hypercube, FreeSpace };
    Kind kind = Kind::Hypercube;
    int dim = 1;
    double r_max = 1.0, angle_max = 1.0;  // wedge
    double lo = -1.0, hi = 1.0;           // hypercube

    static Domain wedge2d(double r_max, double angle_max) {
        Domain d;
        d.kind = Kind::Wedge2D;
        d.dim = 2;
        d.r_max = r_max;
        d.angle_max = angle_max;
        return d;
    }
    static Domain hypercube(int dim, double lo, double hi) {
        Domain d;
        d.kind = Kind::Hypercube;
        d.dim = dim;
        d.lo = lo;
        d.hi = hi;
        return d;
    }
    static Domain free_space(int dim) {
        Domain d;
        d.kind = Kind::FreeSpace;
        d.dim = dim;
        return d;
    }

    bool bounded() const { return kind != Kind::FreeSpace; }

    bool contains(const double* x) const {
        switch (kind) {
            case Kind::Wedge2D: {
                double r2 = x[0] * x[0] + x[1] * x[1];
                if (r2 > r_max * r_max) return false;
                double th = std::atan2(x[1], x[0]);
                return th >= 0.0 && th <= angle_max;
            }
            case Kind::Hypercube:
                for (int k = 0; k < dim; ++k) {
                    if (x[k] < lo || x[k] > hi) return false;
                }
                return true;
            case Kind::FreeSpace:
                return true;
        }
        return false;
    }
};

// Pulls a point that rounding left marginally outside back into the closure
// by shrinking toward an in-domain anchor along the segment (the domains are
// convex). The step doubles from one ulp, so the movement stays minimal.
inline void nudge_inside(const Domain& dom, const double* anchor, double* p) {
    if (dom.contains(p)) return;
    double delta = 2.3e-16;
    Vec q(dom.dim);
    for (int it = 0; it < 60; ++it, delta *= 2.0) {
        for (int k = 0; k < dom.dim; ++k) q[k] = anchor[k] + (p[k] - anchor[k]) * (1.0 - delta);
        if (dom.contains(q.data())) {
            for (int k = 0; k < dom.dim; ++k) p[k] = q[k];
            return;
        }
    }
    for (int k = 0; k < dom.dim; ++k) p[k] = anchor[k];
}

inline void sample_interior_uniform(const Domain& dom, std::size_t n, Rng& rng, Matrix& out) {
    if (!dom.bounded()) throw std::invalid_argument("sample_interior_uniform: unbounded domain");
    out.resize(n, dom.dim);
    if (dom.kind == Domain::Kind::Wedge2D) {
        // inverse transform in polar coordinates: theta uniform, r ~ r_max sqrt(U)
        for (std::size_t i = 0; i < n; ++i) {
            double th = draw_uniform(rng, 0.0, dom.angle_max);
            double r = dom.r_max * std::sqrt(draw_uniform(rng, 0.0, 1.0));
            out(i, 0) = r * std::cos(th);
            out(i, 1) = r * std::sin(th);
        }
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < dom.dim; ++k) out(i, k) = draw_uniform(rng, dom.lo, dom.hi);
    }
}

inline void sample_boundary_uniform(const Domain& dom, std::size_t n, Rng& rng, Matrix& out) {
    if (!dom.bounded()) throw std::invalid_argument("sample_boundary_uniform: unbounded domain");
    out.resize(n, dom.dim);
    if (dom.kind == Domain::Kind::Wedge2D) {
        // two straight edges of length r_max plus the arc of length r_max*angle
        double len_edge = dom.r_max;
        double len_arc = dom.r_max * dom.angle_max;
        double total = 2.0 * len_edge + len_arc;
        double bisect[2] = {0.5 * dom.r_max * std::cos(0.5 * dom.angle_max),
                            0.5 * dom.r_max * std::sin(0.5 * dom.angle_max)};
        for (std::size_t i = 0; i < n; ++i) {
            double u = draw_uniform(rng, 0.0, total);
            if (u < len_edge) {
                out(i, 0) = u;
                out(i, 1) = 0.0;
            } else if (u < 2.0 * len_edge) {
                double r = u - len_edge;
                out(i, 0) = r * std::cos(dom.angle_max);
                out(i, 1) = r * std::sin(dom.angle_max);
            } else {
                double th = (u - 2.0 * len_edge) / dom.r_max;
                out(i, 0) = dom.r_max * std::cos(th);
                out(i, 1) = dom.r_max * std::sin(th);
            }
            nudge_inside(dom, bisect, out.row(i));
        }
        return;
    }
    // hypercube: all 2d faces have equal measure
    for (std::size_t i = 0; i < n; ++i) {
        int face = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * dom.dim));
        for (int k = 0; k < dom.dim; ++k) out(i, k) = draw_uniform(rng, dom.lo, dom.hi);
        out(i, face / 2) = (face % 2 == 0) ? dom.lo : dom.hi;
    }
}

namespace detail {

// Smallest t in (0, 1] with |a + t (b-a)| = r, given |a| <= r < |b| possible.
inline double smallest_circle_crossing(const double* a, const double* d, double r, double t_max) {
    double dd = d[0] * d[0] + d[1] * d[1];
    double ad = a[0] * d[0] + a[1] * d[1];
    double aa = a[0] * a[0] + a[1] * a[1] - r * r;
    double disc = ad * ad - dd * aa;
    if (disc < 0.0 || dd == 0.0) return -1.0;
    double sq = std::sqrt(disc);
    double t1 = (-ad - sq) / dd, t2 = (-ad + sq) / dd;
    for (double t : {t1, t2}) {
        if (t > 0.0 && t <= t_max) return t;
    }
    return -1.0;
}

}  // namespace detail

// Point on segment [inside, outside] where it first crosses the boundary.
// Preconditions: contains(inside), !contains(outside).
inline Vec segment_boundary_intersection(const Domain& dom, const double* inside,
                                         const double* outside) {
    if (!dom.bounded()) {
        throw std::invalid_argument("segment_boundary_intersection: unbounded domain");
    }
    if (!dom.contains(inside) || dom.contains(outside)) {
        throw std::invalid_argument("segment_boundary_intersection: bracketing violated");
    }
    const int dim = dom.dim;
    Vec d(dim);
    for (int k = 0; k < dim; ++k) d[k] = outside[k] - inside[k];

    if (dom.kind == Domain::Kind::Hypercube) {
        double t_exit = std::numeric_limits<double>::infinity();
        int axis = -1;
        for (int k = 0; k < dim; ++k) {
            if (d[k] == 0.0) continue;
            double face = d[k] > 0.0 ? dom.hi : dom.lo;
            double t = (face - inside[k]) / d[k];
            if (t < t_exit) {
                t_exit = t;
                axis = k;
            }
        }
        Vec p(dim);
        for (int k = 0; k < dim; ++k) p[k] = inside[k] + t_exit * d[k];
        p[axis] = d[axis] > 0.0 ? dom.hi : dom.lo;  // land exactly on the face
        return p;
    }

    // wedge: closed-form crossing per boundary piece, smallest positive root
    double best = std::numeric_limits<double>::infinity();
    Vec p(2);
    auto consider = [&](double t, double px, double py) {
        if (t > 0.0 && t <= 1.0 && t < best) {
            best = t;
            p[0] = px;
            p[1] = py;
        }
    };
    // edge theta = 0 (y = 0, 0 <= x <= r_max)
    if (d[1] != 0.0) {
        double t = -inside[1] / d[1];
        double px = inside[0] + t * d[0];
        if (px >= 0.0 && px <= dom.r_max) consider(t, px, 0.0);
    }
    // edge theta = angle_max
    {
        double nx = std::sin(dom.angle_max), ny = -std::cos(dom.angle_max);
        double denom = nx * d[0] + ny * d[1];
        if (denom != 0.0) {
            double t = -(nx * inside[0] + ny * inside[1]) / denom;
            double px = inside[0] + t * d[0], py = inside[1] + t * d[1];
            double radial = px * std::cos(dom.angle_max) + py * std::sin(dom.angle_max);
            if (radial >= 0.0 && radial <= dom.r_max) consider(t, px, py);
        }
    }
    // arc r = r_max
    {
        double t = detail::smallest_circle_crossing(inside, d.data(), dom.r_max, 1.0);
        if (t > 0.0) {
            double px = inside[0] + t * d[0], py = inside[1] + t * d[1];
            double th = std::atan2(py, px);
            if (th >= 0.0 && th <= dom.angle_max) consider(t, px, py);
        }
    }
    if (best <= 1.0) return p;

    // numerically degenerate: bisection on contains()
    double tlo = 0.0, thi = 1.0;
    for (int it = 0; it < 100; ++it) {
        double tm = 0.5 * (tlo + thi);
        Vec m(2);
        m[0] = inside[0] + tm * d[0];
        m[1] = inside[1] + tm * d[1];
        if (dom.contains(m.data())) {
            tlo = tm;
        } else {
            thi = tm;
        }
    }
    p[0] = inside[0] + tlo * d[0];
    p[1] = inside[1] + tlo * d[1];
    return p;
}

}  // namespace atspde
