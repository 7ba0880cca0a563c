#pragma once

#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "atspde/core.hpp"

namespace atspde {

enum class Activation { Swish, Sine };

inline double sigmoid(double x) {
    double e = fast_exp_clamped(std::min(std::max(-x, -708.0), 708.0));
    return 1.0 / (1.0 + e);
}

// Activation value and derivatives over a contiguous span. Branch-free in
// the element loops so they vectorize. The third derivative shows up when
// differentiating a Hessian-trace graph with respect to parameters.
inline void act_block(Activation a, const double* z, double* v, double* s1, double* s2,
                      double* s3, std::size_t n) {
    if (a == Activation::Sine) {
        for (std::size_t k = 0; k < n; ++k) {
            double sn, cs;
            fast_sincos(z[k], &sn, &cs);
            v[k] = sn;
            if (s1) s1[k] = cs;
            if (s2) s2[k] = -sn;
            if (s3) s3[k] = -cs;
        }
        return;
    }
    if (!s1) {
        for (std::size_t k = 0; k < n; ++k) v[k] = z[k] * sigmoid(z[k]);
        return;
    }
    if (!s2) {
        for (std::size_t k = 0; k < n; ++k) {
            double x = z[k];
            double sg = sigmoid(x);
            double g1 = sg * (1.0 - sg);
            v[k] = x * sg;
            s1[k] = sg + x * g1;
        }
        return;
    }
    for (std::size_t k = 0; k < n; ++k) {
        double x = z[k];
        double sg = sigmoid(x);
        double g1 = sg * (1.0 - sg);
        double g2 = g1 * (1.0 - 2.0 * sg);
        v[k] = x * sg;
        s1[k] = sg + x * g1;
        s2[k] = 2.0 * g1 + x * g2;
        if (s3) {
            double g3 = g2 * (1.0 - 2.0 * sg) - 2.0 * g1 * g1;
            s3[k] = 3.0 * g2 + x * g3;
        }
    }
}

inline void act_eval(Activation a, double z, double* s, double* s1, double* s2, double* s3) {
    double v, d1, d2, d3;
    act_block(a, &z, &v, (s1 || s2 || s3) ? &d1 : nullptr, (s2 || s3) ? &d2 : nullptr,
              s3 ? &d3 : nullptr, 1);
    if (s) *s = v;
    if (s1) *s1 = d1;
    if (s2) *s2 = d2;
    if (s3) *s3 = d3;
}

struct NetSpec {
    int input_dim = 1;
    int out_dim = 1;
    int width = 8;
    int blocks = 1;
    int block_depth = 2;
    Activation activation = Activation::Swish;
};

// Residual network y0 = act(W0 x + b0); per block y <- y + chain of
// block_depth activated layers; output affine. Parameters live in one flat
// vector, traversed input layer first, then blocks in order (row-major W
// then b per layer), output layer last.
struct ResNet {
    NetSpec spec;
    std::uint64_t seed = 0;
    Vec flat;

    struct LayerRef {
        std::size_t w_off, b_off;
        std::size_t out, in;
    };
    std::vector<LayerRef> layers;  // [0] input, [1..B*M] hidden, [last] output

    const double* w(std::size_t l) const { return flat.data() + layers[l].w_off; }
    const double* b(std::size_t l) const { return flat.data() + layers[l].b_off; }
    std::size_t n_affine() const { return layers.size(); }
    std::size_t param_count() const { return flat.size(); }
};

inline ResNet init_resnet(const NetSpec& spec, std::uint64_t seed) {
    if (spec.input_dim < 1 || spec.out_dim < 1 || spec.width < 1 || spec.blocks < 1 ||
        spec.block_depth < 1) {
        throw std::invalid_argument("init_resnet: all sizes must be >= 1");
    }
    ResNet net;
    net.spec = spec;
    net.seed = seed;

    auto push_layer = [&](std::size_t out, std::size_t in) {
        ResNet::LayerRef L;
        L.w_off = net.flat.size();
        L.b_off = L.w_off + out * in;
        L.out = out;
        L.in = in;
        net.flat.resize(L.b_off + out, 0.0);
        net.layers.push_back(L);
    };
    push_layer(spec.width, spec.input_dim);
    for (int i = 0; i < spec.blocks; ++i) {
        for (int j = 0; j < spec.block_depth; ++j) push_layer(spec.width, spec.width);
    }
    push_layer(spec.out_dim, spec.width);

    Rng rng = make_rng(seed, 0);
    for (const auto& L : net.layers) {
        double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
        std::uniform_real_distribution<double> uni(-limit, limit);
        for (std::size_t k = 0; k < L.out * L.in; ++k) net.flat[L.w_off + k] = uni(rng);
        // biases stay zero
    }
    return net;
}

namespace detail {

inline void layer_affine(const Matrix& X, const double* W, const double* b, std::size_t out,
                         std::size_t in, Matrix& Z) {
    assert(X.cols == in);
    Z.resize(X.rows, out);
    parallel_for_work(X.rows, out * in, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const double* xi = X.row(i);
            double* zi = Z.row(i);
            std::size_t o = 0;
            for (; o + 4 <= out; o += 4) {
                const double* w0 = W + o * in;
                dot4(xi, w0, w0 + in, w0 + 2 * in, w0 + 3 * in, in, zi + o);
                if (b) {
                    zi[o] += b[o];
                    zi[o + 1] += b[o + 1];
                    zi[o + 2] += b[o + 2];
                    zi[o + 3] += b[o + 3];
                }
            }
            for (; o < out; ++o) {
                zi[o] = dot(xi, W + o * in, in) + (b ? b[o] : 0.0);
            }
        }
    });
}

// Ain = A * W with A (n x out), W (out x in).
inline void layer_adjoint(const Matrix& A, const double* W, std::size_t out, std::size_t in,
                          Matrix& Ain) {
    Ain.resize(A.rows, in);
    parallel_for_work(A.rows, out * in, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const double* ai = A.row(i);
            double* yi = Ain.row(i);
            std::fill(yi, yi + in, 0.0);
            std::size_t o = 0;
            for (; o + 4 <= out; o += 4) {
                const double* w0 = W + o * in;
                axpy4(ai[o], w0, ai[o + 1], w0 + in, ai[o + 2], w0 + 2 * in, ai[o + 3],
                      w0 + 3 * in, yi, in);
            }
            for (; o < out; ++o) axpy(ai[o], W + o * in, yi, in);
        }
    });
}

// dW += A^T * V, db += column sums of A.
inline void layer_accumulate(const Matrix& A, const Matrix& V, double* dW, double* db,
                             std::size_t out, std::size_t in) {
    parallel_for_work(out, A.rows * in, [&](std::size_t o0, std::size_t o1) {
        for (std::size_t o = o0; o < o1; ++o) {
            double* w = dW + o * in;
            double bsum = 0.0;
            std::size_t i = 0;
            for (; i + 4 <= A.rows; i += 4) {
                double a0 = A(i, o), a1 = A(i + 1, o), a2 = A(i + 2, o), a3 = A(i + 3, o);
                axpy4(a0, V.row(i), a1, V.row(i + 1), a2, V.row(i + 2), a3, V.row(i + 3), w, in);
                bsum += ((a0 + a1) + (a2 + a3));
            }
            for (; i < A.rows; ++i) {
                double a = A(i, o);
                if (a != 0.0) axpy(a, V.row(i), w, in);
                bsum += a;
            }
            if (db) db[o] += bsum;
        }
    });
}

}  // namespace detail

// Captured intermediates of one batched forward pass.
struct ForwardTape {
    std::vector<Matrix> vin;    // input to each affine layer
    std::vector<Matrix> z;      // pre-activation of each activated layer
    std::vector<Matrix> s1;     // activation first derivative at z
    Matrix out;
    bool has_s1 = false;
};

inline void forward_tape(const ResNet& net, const Matrix& X, ForwardTape& T, bool with_s1) {
    const std::size_t L = net.n_affine();
    const int M = net.spec.block_depth;
    T.vin.resize(L);
    T.z.resize(L - 1);
    T.s1.resize(with_s1 ? L - 1 : 0);
    T.has_s1 = with_s1;

    Matrix cur = X;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        const auto& Lr = net.layers[l];
        T.vin[l] = cur;
        detail::layer_affine(cur, net.w(l), net.b(l), Lr.out, Lr.in, T.z[l]);
        const Matrix& Z = T.z[l];
        cur.resize(Z.rows, Z.cols);
        Matrix* s1m = with_s1 ? &T.s1[l] : nullptr;
        if (s1m) s1m->resize(Z.rows, Z.cols);
        Matrix& out = cur;
        Activation a = net.spec.activation;
        parallel_for_work(Z.rows, Z.cols * 16, [&](std::size_t r0, std::size_t r1) {
            std::size_t k0 = r0 * Z.cols, cnt = (r1 - r0) * Z.cols;
            act_block(a, Z.data.data() + k0, out.data.data() + k0,
                      s1m ? s1m->data.data() + k0 : nullptr, nullptr, nullptr, cnt);
        });
        // close a residual block: add the block's input back
        if (l >= 1 && ((l - 1) % M) == static_cast<std::size_t>(M - 1)) {
            const Matrix& skip = T.vin[l - M + 1];
            for (std::size_t k = 0; k < cur.data.size(); ++k) cur.data[k] += skip.data[k];
        }
    }
    T.vin[L - 1] = cur;
    const auto& Lo = net.layers[L - 1];
    detail::layer_affine(cur, net.w(L - 1), net.b(L - 1), Lo.out, Lo.in, T.out);
}

namespace detail {
inline ForwardTape& scratch_fwd() {
    static thread_local ForwardTape t;
    return t;
}
inline ForwardTape& scratch_bwd() {
    static thread_local ForwardTape t;
    return t;
}
}  // namespace detail

inline void forward(const ResNet& net, const Matrix& X, Matrix& out) {
    if (static_cast<int>(X.cols) != net.spec.input_dim) {
        throw std::invalid_argument("forward: batch column count != input_dim");
    }
    DiffCounters::forward_points() += X.rows;
    ForwardTape& T = detail::scratch_fwd();
    forward_tape(net, X, T, false);
    out = T.out;
}

inline double forward_one(const ResNet& net, const double* x) {
    Matrix X(1, net.spec.input_dim);
    for (int j = 0; j < net.spec.input_dim; ++j) X(0, j) = x[j];
    Matrix out;
    forward(net, X, out);
    return out(0, 0);
}

// Accumulates into grad the parameter gradient of sum_{i,o} Wout(i,o) * u_o(x_i),
// reusing a tape captured with with_s1 = true. Optionally returns d/dx as well.
inline void backprop_from_tape(const ResNet& net, const ForwardTape& T, const Matrix& Wout,
                               Vec* grad, Matrix* input_grad) {
    const std::size_t L = net.n_affine();
    const int M = net.spec.block_depth;
    assert(T.has_s1);
    assert(Wout.rows == T.vin[0].rows && Wout.cols == net.layers[L - 1].out);

    Matrix A, Az, Askip, Anext;
    {
        const auto& Lo = net.layers[L - 1];
        if (grad) {
            detail::layer_accumulate(Wout, T.vin[L - 1], grad->data() + Lo.w_off,
                                     grad->data() + Lo.b_off, Lo.out, Lo.in);
        }
        detail::layer_adjoint(Wout, net.w(L - 1), Lo.out, Lo.in, A);
    }
    const int B = net.spec.blocks;
    for (int blk = B - 1; blk >= 0; --blk) {
        Askip = A;
        for (int j = M - 1; j >= 0; --j) {
            std::size_t l = 1 + static_cast<std::size_t>(blk) * M + j;
            const auto& Lr = net.layers[l];
            Az.resize(A.rows, A.cols);
            for (std::size_t k = 0; k < A.data.size(); ++k) Az.data[k] = A.data[k] * T.s1[l].data[k];
            if (grad) {
                detail::layer_accumulate(Az, T.vin[l], grad->data() + Lr.w_off,
                                         grad->data() + Lr.b_off, Lr.out, Lr.in);
            }
            detail::layer_adjoint(Az, net.w(l), Lr.out, Lr.in, Anext);
            std::swap(A, Anext);
        }
        for (std::size_t k = 0; k < A.data.size(); ++k) A.data[k] += Askip.data[k];
    }
    const auto& L0 = net.layers[0];
    Az.resize(A.rows, A.cols);
    for (std::size_t k = 0; k < A.data.size(); ++k) Az.data[k] = A.data[k] * T.s1[0].data[k];
    if (grad) {
        detail::layer_accumulate(Az, T.vin[0], grad->data() + L0.w_off, grad->data() + L0.b_off,
                                 L0.out, L0.in);
    }
    if (input_grad) detail::layer_adjoint(Az, net.w(0), L0.out, L0.in, *input_grad);
}

// Gradient of sum_i weights_i * u(x_i) with respect to the parameters.
inline Vec backprop_weighted(const ResNet& net, const Matrix& X, const Vec& weights) {
    if (weights.size() != X.rows) {
        throw std::invalid_argument("backprop_weighted: weights length != batch rows");
    }
    if (net.spec.out_dim != 1) {
        throw std::invalid_argument("backprop_weighted: scalar-output networks only");
    }
    DiffCounters::param_gradient_calls() += 1;
    ForwardTape& T = detail::scratch_bwd();
    forward_tape(net, X, T, true);
    Matrix Wout(X.rows, 1);
    for (std::size_t i = 0; i < X.rows; ++i) Wout(i, 0) = weights[i];
    Vec grad(net.param_count(), 0.0);
    backprop_from_tape(net, T, Wout, &grad, nullptr);
    return grad;
}

// Same but with a general (n x out_dim) weight matrix on the outputs.
inline Vec backprop_weighted_multi(const ResNet& net, const Matrix& X, const Matrix& Wout) {
    DiffCounters::param_gradient_calls() += 1;
    ForwardTape& T = detail::scratch_bwd();
    forward_tape(net, X, T, true);
    Vec grad(net.param_count(), 0.0);
    backprop_from_tape(net, T, Wout, &grad, nullptr);
    return grad;
}

// d u / d x for every row of X (scalar-output networks): result is n x input_dim.
inline void input_gradient_batch(const ResNet& net, const Matrix& X, Matrix& G) {
    if (net.spec.out_dim != 1) {
        throw std::invalid_argument("input_gradient_batch: scalar-output networks only");
    }
    DiffCounters::input_gradient_points() += X.rows;
    ForwardTape& T = detail::scratch_bwd();
    forward_tape(net, X, T, true);
    Matrix Wout(X.rows, 1, 1.0);
    backprop_from_tape(net, T, Wout, nullptr, &G);
}

inline Vec input_gradient(const ResNet& net, const Vec& x) {
    Matrix X(1, x.size());
    for (std::size_t j = 0; j < x.size(); ++j) X(0, j) = x[j];
    Matrix G;
    input_gradient_batch(net, X, G);
    return Vec(G.row(0), G.row(0) + G.cols);
}

// ---------------------------------------------------------------------------
// Second-order machinery: per-axis forward duals (value, d/dx_k, d2/dx_k2)
// over the shared value tape, with an optional reverse sweep for parameter
// gradients of expressions in u, grad u and the Hessian diagonal.
// ---------------------------------------------------------------------------

struct SecondOrderTape {
    std::vector<Matrix> vin, z, s1, s2, s3;
    Matrix out;
    bool has_s3 = false;
};

inline void second_order_value_pass(const ResNet& net, const Matrix& X, SecondOrderTape& T,
                                    bool need_s3) {
    const std::size_t L = net.n_affine();
    const int M = net.spec.block_depth;
    T.vin.resize(L);
    T.z.resize(L - 1);
    T.s1.resize(L - 1);
    T.s2.resize(L - 1);
    T.s3.resize(need_s3 ? L - 1 : 0);
    T.has_s3 = need_s3;

    Matrix cur = X;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        const auto& Lr = net.layers[l];
        T.vin[l] = cur;
        detail::layer_affine(cur, net.w(l), net.b(l), Lr.out, Lr.in, T.z[l]);
        const Matrix& Z = T.z[l];
        cur.resize(Z.rows, Z.cols);
        T.s1[l].resize(Z.rows, Z.cols);
        T.s2[l].resize(Z.rows, Z.cols);
        if (need_s3) T.s3[l].resize(Z.rows, Z.cols);
        Matrix& out = cur;
        Activation a = net.spec.activation;
        Matrix* s3m = need_s3 ? &T.s3[l] : nullptr;
        Matrix& s1m = T.s1[l];
        Matrix& s2m = T.s2[l];
        parallel_for_work(Z.rows, Z.cols * 24, [&](std::size_t r0, std::size_t r1) {
            std::size_t k0 = r0 * Z.cols, cnt = (r1 - r0) * Z.cols;
            act_block(a, Z.data.data() + k0, out.data.data() + k0, s1m.data.data() + k0,
                      s2m.data.data() + k0, s3m ? s3m->data.data() + k0 : nullptr, cnt);
        });
        if (l >= 1 && ((l - 1) % M) == static_cast<std::size_t>(M - 1)) {
            const Matrix& skip = T.vin[l - M + 1];
            for (std::size_t k = 0; k < cur.data.size(); ++k) cur.data[k] += skip.data[k];
        }
    }
    T.vin[L - 1] = cur;
    const auto& Lo = net.layers[L - 1];
    detail::layer_affine(cur, net.w(L - 1), net.b(L - 1), Lo.out, Lo.in, T.out);
}

struct AxisTape {
    std::vector<Matrix> d_in, dd_in;  // dual inputs to each affine layer
    std::vector<Matrix> zd, zdd;      // dual pre-activations of activated layers
    Matrix du, ddu;                   // n x 1 outputs
};

// Forward the (d/dx_k, d2/dx_k2) dual channels along the value tape.
// The dual layer inputs are always captured: block skips read them, and the
// reverse sweep needs the full set.
inline void second_order_axis_forward(const ResNet& net, const SecondOrderTape& T, int axis,
                                      AxisTape& A) {
    const std::size_t L = net.n_affine();
    const int M = net.spec.block_depth;
    const std::size_t n = T.vin[0].rows;
    A.d_in.resize(L);
    A.dd_in.resize(L);
    A.zd.resize(L - 1);
    A.zdd.resize(L - 1);

    Matrix D(n, T.vin[0].cols, 0.0), DD(n, T.vin[0].cols, 0.0);
    for (std::size_t i = 0; i < n; ++i) D(i, static_cast<std::size_t>(axis)) = 1.0;

    for (std::size_t l = 0; l + 1 < L; ++l) {
        const auto& Lr = net.layers[l];
        A.d_in[l] = D;
        A.dd_in[l] = DD;
        detail::layer_affine(D, net.w(l), nullptr, Lr.out, Lr.in, A.zd[l]);
        detail::layer_affine(DD, net.w(l), nullptr, Lr.out, Lr.in, A.zdd[l]);
        const Matrix& s1 = T.s1[l];
        const Matrix& s2 = T.s2[l];
        const Matrix& zd = A.zd[l];
        const Matrix& zdd = A.zdd[l];
        D.resize(zd.rows, zd.cols);
        DD.resize(zd.rows, zd.cols);
        parallel_for(zd.rows, [&](std::size_t r0, std::size_t r1) {
            for (std::size_t i = r0; i < r1; ++i) {
                for (std::size_t j = 0; j < zd.cols; ++j) {
                    double a1 = s1(i, j), a2 = s2(i, j), d = zd(i, j);
                    D(i, j) = a1 * d;
                    DD(i, j) = a1 * zdd(i, j) + a2 * d * d;
                }
            }
        });
        if (l >= 1 && ((l - 1) % M) == static_cast<std::size_t>(M - 1)) {
            const Matrix& skipd = A.d_in[l - M + 1];
            const Matrix& skipdd = A.dd_in[l - M + 1];
            for (std::size_t k = 0; k < D.data.size(); ++k) D.data[k] += skipd.data[k];
            for (std::size_t k = 0; k < DD.data.size(); ++k) DD.data[k] += skipdd.data[k];
        }
    }
    A.d_in[L - 1] = D;
    A.dd_in[L - 1] = DD;
    const auto& Lo = net.layers[L - 1];
    detail::layer_affine(D, net.w(L - 1), nullptr, Lo.out, Lo.in, A.du);
    detail::layer_affine(DD, net.w(L - 1), nullptr, Lo.out, Lo.in, A.ddu);
}

// Values, input gradients and Hessian diagonals for a batch, in one sweep.
// Any of the output pointers may be null. Scalar-output networks only.
inline void second_order_batch(const ResNet& net, const Matrix& X, Matrix* U, Matrix* G,
                               Matrix* H) {
    if (net.spec.out_dim != 1) {
        throw std::invalid_argument("second_order_batch: scalar-output networks only");
    }
    if (G) DiffCounters::input_gradient_points() += X.rows;
    if (H) DiffCounters::hessian_points() += X.rows;
    static thread_local SecondOrderTape T;
    second_order_value_pass(net, X, T, false);
    if (U) *U = T.out;
    const int d = net.spec.input_dim;
    if (G) G->resize(X.rows, d);
    if (H) H->resize(X.rows, d);
    if (!G && !H) return;
    static thread_local AxisTape A;
    for (int k = 0; k < d; ++k) {
        second_order_axis_forward(net, T, k, A);
        for (std::size_t i = 0; i < X.rows; ++i) {
            if (G) (*G)(i, k) = A.du(i, 0);
            if (H) (*H)(i, k) = A.ddu(i, 0);
        }
    }
}

// Tr(diag(sigma2) Hess u) at a single point: sum_k sigma2_k * d2u/dx_k2.
inline double hessian_trace_weighted(const ResNet& net, const Vec& x, const Vec& sigma2_diag) {
    if (x.size() != static_cast<std::size_t>(net.spec.input_dim) ||
        sigma2_diag.size() != x.size()) {
        throw std::invalid_argument("hessian_trace_weighted: dimension mismatch");
    }
    Matrix X(1, x.size());
    for (std::size_t j = 0; j < x.size(); ++j) X(0, j) = x[j];
    Matrix H;
    second_order_batch(net, X, nullptr, nullptr, &H);
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) acc += sigma2_diag[k] * H(0, k);
    return acc;
}

// Forward state for the two-phase second-order evaluation: run all axis
// forwards once (keeping their tapes), inspect values/gradients/Hessian
// diagonals, then reverse with seed weights that may depend on them.
struct SecondOrderWorkspace {
    SecondOrderTape T;
    std::vector<AxisTape> axes;
    Matrix U, G, H;  // n x 1, n x d, n x d
};

inline void second_order_forward_all(const ResNet& net, const Matrix& X,
                                     SecondOrderWorkspace& W) {
    if (net.spec.out_dim != 1) {
        throw std::invalid_argument("second_order_forward_all: scalar-output networks only");
    }
    DiffCounters::input_gradient_points() += X.rows;
    DiffCounters::hessian_points() += X.rows;
    const int d = net.spec.input_dim;
    second_order_value_pass(net, X, W.T, true);
    W.axes.resize(d);
    W.U = W.T.out;
    W.G.resize(X.rows, d);
    W.H.resize(X.rows, d);
    for (int k = 0; k < d; ++k) {
        second_order_axis_forward(net, W.T, k, W.axes[k]);
        for (std::size_t i = 0; i < X.rows; ++i) {
            W.G(i, k) = W.axes[k].du(i, 0);
            W.H(i, k) = W.axes[k].ddu(i, 0);
        }
    }
}

// Reverse half: parameter gradient of
//   sum_i [ sum_k ddw(i,k) u_kk(x_i) + sum_k dw(i,k) u_k(x_i) + vw_i u(x_i) ]
// over the tapes captured by second_order_forward_all.
inline Vec second_order_reverse(const ResNet& net, const Matrix& X, SecondOrderWorkspace& W,
                                const Matrix& ddw, const Matrix* dw, const Vec* vw) {
    DiffCounters::param_gradient_calls() += 1;
    const std::size_t L = net.n_affine();
    const int M = net.spec.block_depth;
    const int B = net.spec.blocks;
    const std::size_t n = X.rows;
    const SecondOrderTape& T = W.T;
    Vec grad(net.param_count(), 0.0);

    Matrix Av, Ad, Add, Azv, Azd, Azdd, Avs, Ads, Adds, tmp;
    for (int k = 0; k < net.spec.input_dim; ++k) {
        AxisTape& Ax = W.axes[k];

        // seeds on the three scalar outputs
        Matrix SeedV(n, 1, 0.0), SeedD(n, 1, 0.0), SeedDD(n, 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            SeedDD(i, 0) = ddw(i, k);
            if (dw) SeedD(i, 0) = (*dw)(i, k);
            if (k == 0 && vw) SeedV(i, 0) = (*vw)[i];
        }

        const auto& Lo = net.layers[L - 1];
        detail::layer_accumulate(SeedV, T.vin[L - 1], grad.data() + Lo.w_off,
                                 grad.data() + Lo.b_off, Lo.out, Lo.in);
        detail::layer_accumulate(SeedD, Ax.d_in[L - 1], grad.data() + Lo.w_off, nullptr, Lo.out,
                                 Lo.in);
        detail::layer_accumulate(SeedDD, Ax.dd_in[L - 1], grad.data() + Lo.w_off, nullptr, Lo.out,
                                 Lo.in);
        detail::layer_adjoint(SeedV, net.w(L - 1), Lo.out, Lo.in, Av);
        detail::layer_adjoint(SeedD, net.w(L - 1), Lo.out, Lo.in, Ad);
        detail::layer_adjoint(SeedDD, net.w(L - 1), Lo.out, Lo.in, Add);

        auto activation_backward = [&](std::size_t l) {
            const Matrix& s1 = T.s1[l];
            const Matrix& s2 = T.s2[l];
            const Matrix& s3 = T.s3[l];
            const Matrix& zd = Ax.zd[l];
            const Matrix& zdd = Ax.zdd[l];
            Azv.resize(Av.rows, Av.cols);
            Azd.resize(Av.rows, Av.cols);
            Azdd.resize(Av.rows, Av.cols);
            parallel_for(Av.rows, [&](std::size_t r0, std::size_t r1) {
                for (std::size_t i = r0; i < r1; ++i) {
                    for (std::size_t j = 0; j < Av.cols; ++j) {
                        double a1 = s1(i, j), a2 = s2(i, j), a3 = s3(i, j);
                        double d = zd(i, j), dd = zdd(i, j);
                        double av = Av(i, j), ad = Ad(i, j), add = Add(i, j);
                        Azv(i, j) = av * a1 + ad * a2 * d + add * (a2 * dd + a3 * d * d);
                        Azd(i, j) = ad * a1 + add * 2.0 * a2 * d;
                        Azdd(i, j) = add * a1;
                    }
                }
            });
        };

        for (int blk = B - 1; blk >= 0; --blk) {
            Avs = Av;
            Ads = Ad;
            Adds = Add;
            for (int j = M - 1; j >= 0; --j) {
                std::size_t l = 1 + static_cast<std::size_t>(blk) * M + j;
                const auto& Lr = net.layers[l];
                activation_backward(l);
                detail::layer_accumulate(Azv, T.vin[l], grad.data() + Lr.w_off,
                                         grad.data() + Lr.b_off, Lr.out, Lr.in);
                detail::layer_accumulate(Azd, Ax.d_in[l], grad.data() + Lr.w_off, nullptr, Lr.out,
                                         Lr.in);
                detail::layer_accumulate(Azdd, Ax.dd_in[l], grad.data() + Lr.w_off, nullptr,
                                         Lr.out, Lr.in);
                detail::layer_adjoint(Azv, net.w(l), Lr.out, Lr.in, tmp);
                std::swap(Av, tmp);
                detail::layer_adjoint(Azd, net.w(l), Lr.out, Lr.in, tmp);
                std::swap(Ad, tmp);
                detail::layer_adjoint(Azdd, net.w(l), Lr.out, Lr.in, tmp);
                std::swap(Add, tmp);
            }
            for (std::size_t q = 0; q < Av.data.size(); ++q) {
                Av.data[q] += Avs.data[q];
                Ad.data[q] += Ads.data[q];
                Add.data[q] += Adds.data[q];
            }
        }

        const auto& L0 = net.layers[0];
        activation_backward(0);
        detail::layer_accumulate(Azv, T.vin[0], grad.data() + L0.w_off, grad.data() + L0.b_off,
                                 L0.out, L0.in);
        // dual input of the first layer is the constant basis vector e_k:
        // its weight-gradient contribution lands in column k of W0.
        parallel_for(L0.out, [&](std::size_t o0, std::size_t o1) {
            for (std::size_t o = o0; o < o1; ++o) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += Azd(i, o);
                grad[L0.w_off + o * L0.in + static_cast<std::size_t>(k)] += acc;
            }
        });
    }
    return grad;
}

inline Vec second_order_param_gradient(const ResNet& net, const Matrix& X, const Matrix& ddw,
                                       const Matrix* dw, const Vec* vw) {
    static thread_local SecondOrderWorkspace W;
    second_order_forward_all(net, X, W);
    return second_order_reverse(net, X, W, ddw, dw, vw);
}

}  // namespace atspde
