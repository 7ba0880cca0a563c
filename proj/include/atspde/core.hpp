#pragma once

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace atspde {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

// Row-major dense matrix. The only container the numeric kernels use.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    // Does not preserve or zero contents; every kernel writes each entry.
    void resize(std::size_t r, std::size_t c) {
        rows = r;
        cols = c;
        if (data.size() != r * c) data.resize(r * c);
    }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

// Explicit 8-lane vector type; gcc/clang lower it to the widest SIMD the
// target has. All reductions keep a fixed lane order, so results are
// deterministic for any thread count without -ffast-math.
typedef double v8d __attribute__((vector_size(64)));

inline v8d v8load(const double* p) {
    v8d v;
    std::memcpy(&v, p, 64);
    return v;
}

inline double v8sum(v8d v) {
    return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
}

// Dot product with a fixed 8-lane accumulation order.
inline double dot(const double* a, const double* b, std::size_t n) {
    v8d acc = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) acc += v8load(a + k) * v8load(b + k);
    double tail[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t j = 0; k < n; ++k, ++j) tail[j] = a[k] * b[k];
    v8d tv;
    std::memcpy(&tv, tail, 64);
    return v8sum(acc + tv);
}

// out[0..3] = dot(x, w0..w3); the four chains share each x load and hide
// FMA latency.
inline void dot4(const double* x, const double* w0, const double* w1, const double* w2,
                 const double* w3, std::size_t n, double* out) {
    v8d a0 = {0, 0, 0, 0, 0, 0, 0, 0}, a1 = a0, a2 = a0, a3 = a0;
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) {
        v8d xv = v8load(x + k);
        a0 += xv * v8load(w0 + k);
        a1 += xv * v8load(w1 + k);
        a2 += xv * v8load(w2 + k);
        a3 += xv * v8load(w3 + k);
    }
    double t0 = 0, t1 = 0, t2 = 0, t3 = 0;
    for (; k < n; ++k) {
        double xv = x[k];
        t0 += xv * w0[k];
        t1 += xv * w1[k];
        t2 += xv * w2[k];
        t3 += xv * w3[k];
    }
    out[0] = v8sum(a0) + t0;
    out[1] = v8sum(a1) + t1;
    out[2] = v8sum(a2) + t2;
    out[3] = v8sum(a3) + t3;
}

// y += a0*x0 + a1*x1 + a2*x2 + a3*x3, elementwise over length n.
inline void axpy4(double a0, const double* x0, double a1, const double* x1, double a2,
                  const double* x2, double a3, const double* x3, double* y, std::size_t n) {
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) {
        v8d yv = v8load(y + k);
        yv += a0 * v8load(x0 + k);
        yv += a1 * v8load(x1 + k);
        yv += a2 * v8load(x2 + k);
        yv += a3 * v8load(x3 + k);
        std::memcpy(y + k, &yv, 64);
    }
    for (; k < n; ++k) {
        y[k] += ((a0 * x0[k] + a1 * x1[k]) + (a2 * x2[k] + a3 * x3[k]));
    }
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

// exp with branch-free range reduction and a degree-13 polynomial on
// [-ln2/2, ln2/2] (relative error ~1e-16). Vectorizable, unlike libm's exp,
// which dominates activation cost otherwise. Input must lie in [-708, 708];
// fast_exp clamps, callers in hot loops pre-clamp.
inline double fast_exp_clamped(double x) {
    constexpr double log2e = 1.4426950408889634;
    constexpr double ln2_hi = 6.93147180369123816490e-01;
    constexpr double ln2_lo = 1.90821492927058770002e-10;
    double kd = std::nearbyint(x * log2e);
    double r = (x - kd * ln2_hi) - kd * ln2_lo;
    // exp(r) by Horner on the Taylor series; |r| <= 0.3466
    double p = 1.0 / 6227020800.0;  // 1/13!
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // scale by 2^k through the exponent bits
    std::int64_t k = static_cast<std::int64_t>(kd);
    std::uint64_t bits;
    std::memcpy(&bits, &p, 8);
    bits += static_cast<std::uint64_t>(k) << 52;
    std::memcpy(&p, &bits, 8);
    return p;
}

inline double fast_exp(double x) {
    if (x > 708.0) return std::numeric_limits<double>::infinity();
    if (x < -708.0) return 0.0;
    return fast_exp_clamped(x);
}

// sin and cos together, Cody-Waite reduction to [-pi/4, pi/4] plus Taylor
// polynomials; absolute error ~1e-16 for |x| up to ~1e6.
inline void fast_sincos(double x, double* sn, double* cs) {
    constexpr double two_over_pi = 0.63661977236758134308;
    constexpr double pio2_hi = 1.57079632673412561417e+00;
    constexpr double pio2_mid = 6.07710050650619224932e-11;
    constexpr double pio2_lo = 2.02226624879595063154e-21;
    double kd = std::nearbyint(x * two_over_pi);
    double r = ((x - kd * pio2_hi) - kd * pio2_mid) - kd * pio2_lo;
    double r2 = r * r;
    double sp = -1.0 / 1307674368000.0;  // -1/15!
    sp = sp * r2 + 1.0 / 6227020800.0;
    sp = sp * r2 - 1.0 / 39916800.0;
    sp = sp * r2 + 1.0 / 362880.0;
    sp = sp * r2 - 1.0 / 5040.0;
    sp = sp * r2 + 1.0 / 120.0;
    sp = sp * r2 - 1.0 / 6.0;
    double s = r + r * (r2 * sp);
    double cp = 1.0 / 20922789888000.0;  // 1/16!
    cp = cp * r2 - 1.0 / 87178291200.0;
    cp = cp * r2 + 1.0 / 479001600.0;
    cp = cp * r2 - 1.0 / 3628800.0;
    cp = cp * r2 + 1.0 / 40320.0;
    cp = cp * r2 - 1.0 / 720.0;
    cp = cp * r2 + 1.0 / 24.0;
    double c = 1.0 + r2 * (-0.5 + r2 * cp);
    // rotate by the quadrant
    std::int64_t q = static_cast<std::int64_t>(kd);
    bool swap = (q & 1) != 0;
    double s_mag = swap ? c : s;
    double c_mag = swap ? s : c;
    double s_sign = (q & 2) ? -1.0 : 1.0;
    double c_sign = ((q + 1) & 2) ? -1.0 : 1.0;
    *sn = s_sign * s_mag;
    *cs = c_sign * c_mag;
}

// Worker pool for data-parallel loops. Results are bit-identical for any
// worker count: each output element is owned by exactly one task and all
// inner reductions run in a fixed order.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    // Effective worker count (>= 1).
    int threads() const { return threads_; }

    void set_threads(int n) {
        if (n < 1) n = 1;
        std::lock_guard<std::mutex> lk(config_mutex_);
        if (n == threads_) return;
        stop_workers();
        threads_ = n;
        if (threads_ > 1) start_workers(threads_ - 1);
    }

    // Runs fn(begin, end) over [0, n) split into contiguous chunks.
    void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
        if (n == 0) return;
        int nt = threads_;
        if (nt <= 1 || n < 2) {
            fn(0, n);
            return;
        }
        std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(nt), n);
        std::size_t per = (n + chunks - 1) / chunks;
        {
            std::unique_lock<std::mutex> lk(mutex_);
            job_ = &fn;
            job_n_ = n;
            job_per_ = per;
            job_next_ = per;  // chunk 0 runs on this thread
            pending_ = 0;
            for (std::size_t c = 1; c * per < n; ++c) ++pending_;
            ++epoch_;
        }
        cv_.notify_all();
        fn(0, std::min(per, n));
        std::unique_lock<std::mutex> lk(mutex_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

    ~ThreadPool() { stop_workers(); }

private:
    ThreadPool() {
        int n = 1;
        if (const char* env = std::getenv("ATS_PDE_THREADS")) {
            n = std::max(1, std::atoi(env));
        }
        threads_ = n;
        if (threads_ > 1) start_workers(threads_ - 1);
    }

    void start_workers(int count) {
        stop_ = false;
        for (int i = 0; i < count; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    void stop_workers() {
        {
            std::lock_guard<std::mutex> lk(mutex_);
            stop_ = true;
            ++epoch_;
        }
        cv_.notify_all();
        for (auto& w : workers_) {
            if (w.joinable()) w.join();
        }
        workers_.clear();
        stop_ = false;
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* job = nullptr;
            std::size_t begin = 0, end = 0;
            {
                std::unique_lock<std::mutex> lk(mutex_);
                cv_.wait(lk, [&] { return stop_ || (epoch_ != seen && job_ != nullptr); });
                if (stop_) return;
                seen = epoch_;
                job = job_;
            }
            // Claim chunks until the job is exhausted.
            for (;;) {
                {
                    std::lock_guard<std::mutex> lk(mutex_);
                    if (job_ != job || job_next_ >= job_n_) break;
                    begin = job_next_;
                    job_next_ += job_per_;
                    end = std::min(begin + job_per_, job_n_);
                }
                (*job)(begin, end);
                {
                    std::lock_guard<std::mutex> lk(mutex_);
                    if (--pending_ == 0) done_cv_.notify_all();
                }
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_, config_mutex_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
    std::size_t job_n_ = 0, job_per_ = 0, job_next_ = 0;
    int pending_ = 0;
    std::uint64_t epoch_ = 0;
    int threads_ = 1;
    bool stop_ = false;
};

inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    ThreadPool::instance().run(n, fn);
}

// Skips the pool when the total work would be dwarfed by dispatch overhead.
inline void parallel_for_work(std::size_t n, std::size_t work_per_item,
                              const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n * work_per_item < 32768) {
        fn(0, n);
        return;
    }
    ThreadPool::instance().run(n, fn);
}

// Y = X * W^T + b, with X (n x in), W (out x in) and b broadcast per column.
inline void affine_forward(const Matrix& X, const Matrix& W, const Vec& b, Matrix& Y) {
    Y.resize(X.rows, W.rows);
    parallel_for(X.rows, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const double* xi = X.row(i);
            double* yi = Y.row(i);
            for (std::size_t o = 0; o < W.rows; ++o) {
                yi[o] = dot(xi, W.row(o), W.cols) + (b.empty() ? 0.0 : b[o]);
            }
        }
    });
}

// Y = A * B, A (n x k), B (k x m).
inline void matmul(const Matrix& A, const Matrix& B, Matrix& Y) {
    Y.resize(A.rows, B.cols);
    parallel_for(A.rows, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const double* ai = A.row(i);
            double* yi = Y.row(i);
            std::fill(yi, yi + B.cols, 0.0);
            for (std::size_t k = 0; k < A.cols; ++k) {
                axpy(ai[k], B.row(k), yi, B.cols);
            }
        }
    });
}

// dW += A^T * X with A (n x out), X (n x in). Each output row is owned by
// one worker; the reduction over n runs in index order.
inline void accumulate_atb(const Matrix& A, const Matrix& X, Matrix& dW) {
    parallel_for(A.cols, [&](std::size_t o0, std::size_t o1) {
        for (std::size_t o = o0; o < o1; ++o) {
            double* w = dW.row(o);
            for (std::size_t i = 0; i < A.rows; ++i) {
                axpy(A(i, o), X.row(i), w, X.cols);
            }
        }
    });
}

inline void accumulate_colsum(const Matrix& A, double* out) {
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        for (std::size_t j = 0; j < A.cols; ++j) out[j] += ai[j];
    }
}

// Independent RNG streams derived from one seed (splitmix64 mixing).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) { return Rng(mix_seed(seed, stream)); }

inline void fill_normal(Rng& rng, double* out, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) out[k] = normal(rng);
}

inline double draw_normal(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    return normal(rng);
}

inline double draw_uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> uni(lo, hi);
    return uni(rng);
}

// Counters instrumenting how many derivative passes each code path performs.
// They feed the cost-asymmetry and derivative-freeness checks in the tests.
struct DiffCounters {
    static std::atomic<std::uint64_t>& input_gradient_points() {
        static std::atomic<std::uint64_t> c{0};
        return c;
    }
    static std::atomic<std::uint64_t>& hessian_points() {
        static std::atomic<std::uint64_t> c{0};
        return c;
    }
    static std::atomic<std::uint64_t>& param_gradient_calls() {
        static std::atomic<std::uint64_t> c{0};
        return c;
    }
    static std::atomic<std::uint64_t>& forward_points() {
        static std::atomic<std::uint64_t> c{0};
        return c;
    }
    static void reset() {
        input_gradient_points() = 0;
        hessian_points() = 0;
        param_gradient_calls() = 0;
        forward_points() = 0;
    }
};

}  // namespace atspde
