#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "atspde/checkpoint.hpp"
#include "atspde/dflm.hpp"
#include "atspde/fbstd.hpp"
#include "atspde/pinn.hpp"
#include "atspde/problems.hpp"

namespace atspde {

struct RunConfig {
    std::string benchmark = "wedge_laplace";
    int dimension = 10;  // poisson_d / quadratic_growth
    std::string solver = "dflm";
    std::string indicator = "ind2";  // ind1..ind4 | ind_p
    std::string scheme = "trapezoid";
    std::string variant = "drifted";  // dflm only
    std::size_t interior_batch = 500;
    std::size_t boundary_batch = 300;
    std::size_t j_loss = 20;  // J1, dflm
    std::size_t j_ats = 10;   // J, pinn/fbstd candidates
    int j3 = 1;
    double dt = 5e-4;
    long steps = 20000;  // training steps (elliptic) or iterations (parabolic)
    int time_steps = 50;
    double lambda = 1.0;
    double terminal_weight = 1.0;
    int width = 60, blocks = 3, block_depth = 2;
    std::string activation = "swish";
    double lr = 0.01;
    std::uint64_t seed = 1;
    std::size_t eval_points = 10000;
    std::size_t eval_trajectories = 256;
    std::uint64_t eval_seed = 9999;
    long log_every = 100;
    std::string output_dir = "out";
    std::vector<long> svg_steps;
    bool record_walltime = true;

    bool is_parabolic_solver() const { return solver.rfind("fbstd", 0) == 0 || solver.rfind("ats_fbstd", 0) == 0; }
};

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Config files are plain "key = value" lines; '#' starts a comment.
inline RunConfig parse_run_config(std::istream& in) {
    RunConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "benchmark") c.benchmark = val;
        else if (key == "dimension") c.dimension = std::stoi(val);
        else if (key == "solver") c.solver = val;
        else if (key == "indicator") c.indicator = val;
        else if (key == "scheme") c.scheme = val;
        else if (key == "variant") c.variant = val;
        else if (key == "interior_batch") c.interior_batch = std::stoul(val);
        else if (key == "boundary_batch") c.boundary_batch = std::stoul(val);
        else if (key == "j_loss") c.j_loss = std::stoul(val);
        else if (key == "j_ats") c.j_ats = std::stoul(val);
        else if (key == "j3") c.j3 = std::stoi(val);
        else if (key == "dt") c.dt = std::stod(val);
        else if (key == "steps") c.steps = std::stol(val);
        else if (key == "time_steps") c.time_steps = std::stoi(val);
        else if (key == "lambda") c.lambda = std::stod(val);
        else if (key == "terminal_weight") c.terminal_weight = std::stod(val);
        else if (key == "width") c.width = std::stoi(val);
        else if (key == "blocks") c.blocks = std::stoi(val);
        else if (key == "block_depth") c.block_depth = std::stoi(val);
        else if (key == "activation") c.activation = val;
        else if (key == "lr") c.lr = std::stod(val);
        else if (key == "seed") c.seed = std::stoull(val);
        else if (key == "eval_points") c.eval_points = std::stoul(val);
        else if (key == "eval_trajectories") c.eval_trajectories = std::stoul(val);
        else if (key == "eval_seed") c.eval_seed = std::stoull(val);
        else if (key == "log_every") c.log_every = std::stol(val);
        else if (key == "output_dir") c.output_dir = val;
        else if (key == "record_walltime") c.record_walltime = (val == "true" || val == "1");
        else if (key == "svg_steps") {
            for (const auto& tok : split(val, ',')) c.svg_steps.push_back(std::stol(trim(tok)));
        } else {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    return parse_run_config(f);
}

// ---------------------------------------------------------------------------
// evaluation sets and relative errors
// ---------------------------------------------------------------------------

inline Matrix make_elliptic_eval_set(const EllipticProblem& prob, std::size_t n,
                                     std::uint64_t eval_seed) {
    Rng rng = make_rng(eval_seed, 100);
    Matrix X;
    sample_interior_uniform(prob.domain, n, rng, X);
    return X;
}

inline double relative_error(const ResNet& net, const EllipticProblem& prob,
                             const Matrix& eval_set) {
    if (!prob.has_exact()) throw std::invalid_argument("relative_error: no exact solution");
    Matrix U;
    forward(net, eval_set, U);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < eval_set.rows; ++i) {
        double e = prob.exact(eval_set.row(i));
        num += (U(i, 0) - e) * (U(i, 0) - e);
        den += e * e;
    }
    return std::sqrt(num / den);
}

// Fresh plain Euler-Maruyama test trajectories on the solver's grid.
inline TrajectoryBatch make_parabolic_eval_set(const ParabolicProblem& prob, std::size_t n_traj,
                                               int N, std::uint64_t eval_seed) {
    Rng rng = make_rng(eval_seed, 101);
    TrajectoryBatch b;
    const int d = prob.d;
    const double dt = prob.T / N;
    b.times.resize(N + 1);
    for (int n = 0; n <= N; ++n) b.times[n] = prob.T * n / N;
    b.states.assign(N + 1, Matrix());
    b.increments.assign(N, Matrix());
    b.states[0].resize(n_traj, d);
    for (std::size_t i = 0; i < n_traj; ++i) {
        std::copy(prob.x0.begin(), prob.x0.end(), b.states[0].row(i));
    }
    Vec s(d), f(d);
    const double sdt = std::sqrt(dt);
    for (int n = 0; n < N; ++n) {
        b.states[n + 1].resize(n_traj, d);
        b.increments[n].resize(n_traj, d);
        double t_n = b.times[n];
        for (std::size_t i = 0; i < n_traj; ++i) {
            const double* x = b.states[n].row(i);
            double* inc = b.increments[n].row(i);
            fill_normal(rng, inc, d);
            for (int k = 0; k < d; ++k) inc[k] *= sdt;
            prob.sigma_at(t_n, x, s.data());
            prob.drift_at(t_n, x, f.data());
            double* xn = b.states[n + 1].row(i);
            for (int k = 0; k < d; ++k) xn[k] = x[k] + f[k] * dt + s[k] * inc[k];
        }
    }
    return b;
}

// L2 relative error over all trajectories and all grid times.
inline double relative_error_parabolic(const ResNet& u_net, const ParabolicProblem& prob,
                                       const TrajectoryBatch& eval) {
    if (!prob.has_exact()) throw std::invalid_argument("relative_error: no exact solution");
    double num = 0.0, den = 0.0;
    Matrix TX, U;
    for (std::size_t n = 0; n < eval.states.size(); ++n) {
        detail::time_augment(eval.times[n], eval.states[n], TX);
        forward(u_net, TX, U);
        for (std::size_t i = 0; i < eval.states[n].rows; ++i) {
            double e = prob.exact(eval.times[n], eval.states[n].row(i));
            num += (U(i, 0) - e) * (U(i, 0) - e);
            den += e * e;
        }
    }
    return std::sqrt(num / den);
}

inline double relative_error_at_start(const ResNet& u_net, const ParabolicProblem& prob) {
    Matrix X(1, prob.d);
    std::copy(prob.x0.begin(), prob.x0.end(), X.row(0));
    Matrix TX, U;
    detail::time_augment(0.0, X, TX);
    forward(u_net, TX, U);
    double e = prob.exact(0.0, prob.x0.data());
    return std::abs(U(0, 0) - e) / std::abs(e);
}

// ---------------------------------------------------------------------------
// deterministic scatter SVG (domain outline + one circle per point)
// ---------------------------------------------------------------------------

inline void emit_scatter_svg(const Matrix& points, const Domain& dom, const std::string& path) {
    if (points.cols != 2 && points.rows > 0) {
        throw std::invalid_argument("emit_scatter_svg: 2-D points required");
    }
    double xlo, xhi, ylo, yhi;
    if (dom.kind == Domain::Kind::Wedge2D) {
        xlo = 0.0;
        xhi = dom.r_max;
        ylo = 0.0;
        yhi = dom.r_max * std::sin(dom.angle_max);
    } else {
        xlo = dom.lo;
        xhi = dom.hi;
        ylo = dom.lo;
        yhi = dom.hi;
    }
    const double W = 640.0, H = 640.0, pad = 20.0;
    double sx = (W - 2 * pad) / (xhi - xlo);
    double sy = (H - 2 * pad) / (yhi - ylo);
    auto px = [&](double x) { return pad + (x - xlo) * sx; };
    auto py = [&](double y) { return H - pad - (y - ylo) * sy; };

    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw std::runtime_error("emit_scatter_svg: cannot open " + tmp);
        char buf[256];
        f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
             "viewBox=\"0 0 640 640\">\n";
        if (dom.kind == Domain::Kind::Wedge2D) {
            std::snprintf(buf, sizeof buf,
                          "<path d=\"M %.3f %.3f L %.3f %.3f A %.3f %.3f 0 0 0 %.3f %.3f Z\" "
                          "fill=\"none\" stroke=\"black\"/>\n",
                          px(0.0), py(0.0), px(dom.r_max), py(0.0), dom.r_max * sx,
                          dom.r_max * sy, px(dom.r_max * std::cos(dom.angle_max)),
                          py(dom.r_max * std::sin(dom.angle_max)));
            f << buf;
        } else if (dom.kind == Domain::Kind::Hypercube) {
            std::snprintf(buf, sizeof buf,
                          "<rect x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" height=\"%.3f\" "
                          "fill=\"none\" stroke=\"black\"/>\n",
                          px(xlo), py(yhi), (xhi - xlo) * sx, (yhi - ylo) * sy);
            f << buf;
        }
        for (std::size_t i = 0; i < points.rows; ++i) {
            std::snprintf(buf, sizeof buf,
                          "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"2\" fill=\"steelblue\"/>\n",
                          px(points(i, 0)), py(points(i, 1)));
            f << buf;
        }
        f << "</svg>\n";
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// run: dispatch a config to the matching training loop, log history.csv,
// final.json and a checkpoint into output_dir
// ---------------------------------------------------------------------------

struct RunResult {
    double final_re = 0.0;
    double final_re0 = 0.0;  // parabolic only
    double wall_seconds = 0.0;
    std::string history_path, final_path, checkpoint_path;
};

namespace detail {

inline EllipticProblem make_elliptic(const RunConfig& c) {
    if (c.benchmark == "wedge_laplace") return wedge_laplace();
    if (c.benchmark == "poisson_d") return poisson_d(c.dimension);
    throw std::runtime_error("solver/benchmark mismatch: " + c.benchmark);
}

inline ParabolicProblem make_parabolic(const RunConfig& c) {
    if (c.benchmark == "black_scholes_100") return black_scholes_100();
    if (c.benchmark == "quadratic_growth") return quadratic_growth(c.dimension, 0.2);
    throw std::runtime_error("solver/benchmark mismatch: " + c.benchmark);
}

inline NetSpec net_from(const RunConfig& c) {
    NetSpec s;
    s.width = c.width;
    s.blocks = c.blocks;
    s.block_depth = c.block_depth;
    if (c.activation == "swish") {
        s.activation = Activation::Swish;
    } else if (c.activation == "sine") {
        s.activation = Activation::Sine;
    } else {
        throw std::runtime_error("unknown activation " + c.activation);
    }
    return s;
}

inline IndicatorKind::Tag indicator_tag(const std::string& name) {
    if (name == "ind1") return IndicatorKind::Tag::Ind1;
    if (name == "ind2") return IndicatorKind::Tag::Ind2;
    if (name == "ind3") return IndicatorKind::Tag::Ind3;
    if (name == "ind4") return IndicatorKind::Tag::Ind4;
    throw std::runtime_error("unknown indicator " + name);
}

inline Scheme scheme_from(const std::string& name) {
    if (name == "rectangle") return Scheme::Rectangle;
    if (name == "trapezoid") return Scheme::Trapezoid;
    throw std::runtime_error("unknown scheme " + name);
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace detail

inline RunResult run(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const std::string hist_tmp = cfg.output_dir + "/history.csv.tmp";
    RunResult rr;
    rr.history_path = cfg.output_dir + "/history.csv";
    rr.final_path = cfg.output_dir + "/final.json";
    rr.checkpoint_path = cfg.output_dir + "/checkpoint.bin";

    const bool parabolic = cfg.is_parabolic_solver();
    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return cfg.record_walltime
                   ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                   : 0.0;
    };

    std::ofstream hist(hist_tmp, std::ios::trunc);
    if (!hist) throw std::runtime_error("cannot write " + hist_tmp);

    nlohmann::json fin;
    fin["config"] = {{"benchmark", cfg.benchmark},
                     {"dimension", cfg.dimension},
                     {"solver", cfg.solver},
                     {"indicator", cfg.indicator},
                     {"scheme", cfg.scheme},
                     {"variant", cfg.variant},
                     {"interior_batch", cfg.interior_batch},
                     {"boundary_batch", cfg.boundary_batch},
                     {"j_loss", cfg.j_loss},
                     {"j_ats", cfg.j_ats},
                     {"j3", cfg.j3},
                     {"dt", cfg.dt},
                     {"steps", cfg.steps},
                     {"time_steps", cfg.time_steps},
                     {"lambda", cfg.lambda},
                     {"terminal_weight", cfg.terminal_weight},
                     {"width", cfg.width},
                     {"blocks", cfg.blocks},
                     {"block_depth", cfg.block_depth},
                     {"activation", cfg.activation},
                     {"lr", cfg.lr},
                     {"seed", cfg.seed},
                     {"eval_points", cfg.eval_points},
                     {"eval_trajectories", cfg.eval_trajectories},
                     {"eval_seed", cfg.eval_seed}};
    nlohmann::json snapshots = nlohmann::json::array();

    if (!parabolic) {
        EllipticProblem prob = detail::make_elliptic(cfg);
        Matrix eval_set = make_elliptic_eval_set(prob, cfg.eval_points, cfg.eval_seed);
        fin["evaluation"] = {{"kind", "uniform_interior"},
                             {"points", cfg.eval_points},
                             {"eval_seed", cfg.eval_seed}};
        hist << "step,loss_interior,loss_boundary,relative_error,elapsed_seconds\n";

        auto snapshot = [&](long step, const Matrix& S) {
            if (prob.dim() != 2) return;
            if (std::find(cfg.svg_steps.begin(), cfg.svg_steps.end(), step) ==
                cfg.svg_steps.end()) {
                return;
            }
            std::string file = cfg.output_dir + "/points_step_" + std::to_string(step) + ".svg";
            emit_scatter_svg(S, prob.domain, file);
            double frac = 0.0;
            for (std::size_t i = 0; i < S.rows; ++i) {
                if (std::hypot(S(i, 0), S(i, 1)) < 0.25) frac += 1.0;
            }
            if (S.rows > 0) frac /= static_cast<double>(S.rows);
            snapshots.push_back({{"step", step}, {"frac_r_lt_0.25", frac}, {"file", file}});
        };

        ResNet net;
        const bool is_pinn = cfg.solver == "pinn" || cfg.solver == "ats_pinn";
        if (is_pinn) {
            PinnConfig pc;
            pc.I = cfg.interior_batch;
            pc.S = cfg.boundary_batch;
            pc.lambda = cfg.lambda;
            pc.J = cfg.j_ats;
            pc.dt = cfg.dt;
            pc.ats = cfg.solver == "ats_pinn";
            pc.indicator = (cfg.indicator == "ind_p") ? PinnConfig::Ind::IndP : PinnConfig::Ind::Ind4;
            if (pc.ats && cfg.indicator != "ind_p" && cfg.indicator != "ind4") {
                throw std::runtime_error("ats_pinn supports indicators ind_p and ind4");
            }
            pc.steps = cfg.steps;
            pc.lr = cfg.lr;
            pc.net = detail::net_from(cfg);
            pc.seed = cfg.seed;
            net = train_pinn(pc, prob, [&](const PinnStepInfo& info) {
                snapshot(info.step, *info.training_set);
                if (info.step % cfg.log_every == 0 || info.step == cfg.steps - 1) {
                    double re = relative_error(*info.net, prob, eval_set);
                    hist << info.step << "," << detail::fmt(info.loss_interior) << ","
                         << detail::fmt(info.loss_boundary) << "," << detail::fmt(re) << ","
                         << detail::fmt(elapsed()) << "\n";
                }
            });
        } else if (cfg.solver == "dflm" || cfg.solver == "ats_dflm") {
            DflmConfig dc;
            dc.I = cfg.interior_batch;
            dc.S = cfg.boundary_batch;
            dc.J1 = cfg.j_loss;
            dc.dt = cfg.dt;
            dc.variant = cfg.variant == "girsanov" ? DflmConfig::Variant::Girsanov
                                                   : DflmConfig::Variant::Drifted;
            dc.scheme = detail::scheme_from(cfg.scheme);
            dc.ats = cfg.solver == "ats_dflm";
            dc.ats_indicator = detail::indicator_tag(cfg.indicator);
            dc.ats_j3 = cfg.j3;
            dc.steps = cfg.steps;
            dc.lr = cfg.lr;
            dc.net = detail::net_from(cfg);
            dc.seed = cfg.seed;
            net = train_dflm(dc, prob, [&](const DflmStepInfo& info) {
                snapshot(info.step, *info.training_set);
                if (info.step % cfg.log_every == 0 || info.step == cfg.steps - 1) {
                    double re = relative_error(*info.net, prob, eval_set);
                    hist << info.step << "," << detail::fmt(info.loss_interior) << ","
                         << detail::fmt(info.loss_boundary) << "," << detail::fmt(re) << ","
                         << detail::fmt(elapsed()) << "\n";
                }
            });
        } else {
            throw std::runtime_error("unknown elliptic solver " + cfg.solver);
        }
        rr.final_re = relative_error(net, prob, eval_set);
        save_checkpoint(net, rr.checkpoint_path);
        fin["snapshots"] = snapshots;
    } else {
        ParabolicProblem prob = detail::make_parabolic(cfg);
        TrajectoryBatch eval_set =
            make_parabolic_eval_set(prob, cfg.eval_trajectories, cfg.time_steps, cfg.eval_seed);
        fin["evaluation"] = {{"kind", "plain_em_trajectories"},
                             {"trajectories", cfg.eval_trajectories},
                             {"time_steps", cfg.time_steps},
                             {"eval_seed", cfg.eval_seed}};
        hist << "step,loss_interior,loss_boundary,relative_error,elapsed_seconds,re0\n";

        FbstdConfig fc;
        fc.I = cfg.interior_batch;
        fc.N = cfg.time_steps;
        fc.J = cfg.j_ats;
        fc.variant = (cfg.solver == "fbstd2" || cfg.solver == "ats_fbstd2")
                         ? FbstdConfig::Variant::Fbstd2
                         : FbstdConfig::Variant::Fbstd1;
        fc.ats = cfg.solver.rfind("ats_", 0) == 0;
        fc.iterations = cfg.steps;
        fc.lr = cfg.lr;
        fc.terminal_weight = cfg.terminal_weight;
        fc.net = detail::net_from(cfg);
        fc.seed = cfg.seed;
        FbstdResult res = train_fbstd(fc, prob, [&](const FbstdStepInfo& info) {
            if (info.iteration % cfg.log_every == 0 || info.iteration == cfg.steps - 1) {
                double re = relative_error_parabolic(*info.u_net, prob, eval_set);
                double re0 = relative_error_at_start(*info.u_net, prob);
                hist << info.iteration << "," << detail::fmt(info.loss) << ",0,"
                     << detail::fmt(re) << "," << detail::fmt(elapsed()) << ","
                     << detail::fmt(re0) << "\n";
            }
        });
        rr.final_re = relative_error_parabolic(res.u_net, prob, eval_set);
        rr.final_re0 = relative_error_at_start(res.u_net, prob);
        save_checkpoint(res.u_net, rr.checkpoint_path);
        if (res.has_z) save_checkpoint(res.z_net, cfg.output_dir + "/checkpoint_z.bin");
        fin["final_re0"] = rr.final_re0;
    }

    hist.close();
    std::filesystem::rename(hist_tmp, rr.history_path);
    rr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fin["final_re"] = rr.final_re;
    fin["wall_seconds"] = cfg.record_walltime ? rr.wall_seconds : 0.0;
    {
        std::ofstream f(rr.final_path + ".tmp", std::ios::trunc);
        f << fin.dump(2) << "\n";
    }
    std::filesystem::rename(rr.final_path + ".tmp", rr.final_path);
    return rr;
}

}  // namespace atspde
