// ats-pde: benchmark harness for the adaptive-trajectories-sampling PDE
// solvers. Subcommands:
//   run    train one configuration from a key = value config file
//   check  fast self-verification of the numerical core
//   bench  reproduce one of the four benchmark tables
#include <CLI11.hpp>

#include <cstdio>

#include "atspde/ats.hpp"
#include "atspde/harness.hpp"

using namespace atspde;

namespace {

int run_command(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    std::printf("running %s / %s into %s\n", cfg.benchmark.c_str(), cfg.solver.c_str(),
                cfg.output_dir.c_str());
    RunResult rr = run(cfg);
    std::printf("final RE %.6e", rr.final_re);
    if (cfg.is_parabolic_solver()) std::printf("  RE0 %.6e", rr.final_re0);
    std::printf("  (%.1f s)\n", rr.wall_seconds);
    std::printf("history: %s\nfinal:   %s\n", rr.history_path.c_str(), rr.final_path.c_str());
    return 0;
}

bool check_line(const char* name, bool ok) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
    return ok;
}

// Quick sanity pass over the numerical core; the full oracle suites live in
// the test binaries.
int check_command() {
    bool all = true;

    {  // gradient vs finite differences on a small net
        NetSpec spec{3, 1, 5, 2, 2, Activation::Swish};
        ResNet net = init_resnet(spec, 5);
        Rng rng = make_rng(1);
        Matrix X(4, 3);
        for (auto& v : X.data) v = draw_uniform(rng, -1.0, 1.0);
        Vec w = {0.3, -0.7, 0.2, 0.9};
        Vec g = backprop_weighted(net, X, w);
        auto f = [&](ResNet& n) {
            Matrix out;
            forward(n, X, out);
            double acc = 0.0;
            for (int i = 0; i < 4; ++i) acc += w[i] * out(i, 0);
            return acc;
        };
        double worst = 0.0;
        ResNet work = net;
        for (std::size_t k = 0; k < net.param_count(); ++k) {
            double o = work.flat[k];
            work.flat[k] = o + 1e-4;
            double fp = f(work);
            work.flat[k] = o - 1e-4;
            double fm = f(work);
            work.flat[k] = o;
            double fd = (fp - fm) / 2e-4;
            worst = std::max(worst, std::abs(fd - g[k]) / (std::abs(fd) + 1e-8));
        }
        all &= check_line("parameter gradient matches finite differences (<= 1e-4)",
                          worst <= 1e-4);
    }

    {  // Girsanov martingale: E[D] = 1
        EllipticProblem prob = poisson_d(2);
        prob.drift = [](const double*, double, double* out) {
            out[0] = 0.6;
            out[1] = -1.0;
        };
        Rng rng = make_rng(2);
        const int n = 100000;
        const double dt = 0.01;
        double sum = 0.0, sum2 = 0.0;
        Vec x = {0.1, 0.2}, xn(2);
        for (int i = 0; i < n; ++i) {
            brownian_increment(2, dt, rng, xn.data());
            xn[0] += x[0];
            xn[1] += x[1];
            double R, D;
            girsanov_weights_values(x.data(), xn.data(), 0.0, 0.0, prob, Scheme::Rectangle, dt,
                                    &R, &D);
            sum += D;
            sum2 += D * D;
        }
        double mean = sum / n;
        double se = std::sqrt((sum2 / n - mean * mean) / n);
        all &= check_line("Girsanov weight is a martingale (|E D - 1| <= 3 se)",
                          std::abs(mean - 1.0) <= 3.0 * se);
    }

    {  // selection against brute force
        Rng rng = make_rng(3);
        bool ok = true;
        for (int rep = 0; rep < 200 && ok; ++rep) {
            CandidateSet cs;
            cs.J = 10;
            cs.points.resize(100, 1);
            cs.scores.resize(100);
            for (auto& v : cs.scores) v = draw_uniform(rng, 0.0, 1.0);
            auto got = select_global_indices(cs, 20);
            std::vector<std::size_t> pool(100), want;
            std::iota(pool.begin(), pool.end(), 0);
            for (int i = 0; i < 20; ++i) {
                std::size_t best = pool[0];
                for (auto c : pool) {
                    if (cs.scores[c] > cs.scores[best]) best = c;
                }
                want.push_back(best);
                pool.erase(std::find(pool.begin(), pool.end(), best));
            }
            ok = got == want;
        }
        all &= check_line("global selection matches repeated-argmax oracle", ok);
    }

    {  // benchmark self-tests: exact solutions satisfy their PDEs
        bool ok = true;
        EllipticProblem w = wedge_laplace();
        EllipticProblem p10 = poisson_d(10);
        Rng rng = make_rng(4);
        Matrix X;
        sample_interior_uniform(w.domain, 100, rng, X);
        for (std::size_t i = 0; i < X.rows && ok; ++i) {
            Vec g(2), h(2);
            w.exact_gradient(X.row(i), g.data());
            w.exact_hessian_diag(X.row(i), h.data());
            ok = std::abs(h[0] + h[1]) < 1e-8;
        }
        sample_interior_uniform(p10.domain, 100, rng, X);
        for (std::size_t i = 0; i < X.rows && ok; ++i) {
            Vec h(10);
            p10.exact_hessian_diag(X.row(i), h.data());
            double lap = 0.0;
            for (double v : h) lap += v;
            ok = std::abs(lap - p10.source_at(X.row(i), 0.0)) < 1e-10;
        }
        ParabolicProblem bs = black_scholes_100();
        ParabolicProblem qg = quadratic_growth(100, 0.2);
        for (int rep = 0; rep < 100 && ok; ++rep) {
            double t = draw_uniform(rng, 0.0, 0.99);
            Vec x(100);
            for (auto& v : x) v = draw_uniform(rng, 0.2, 1.2);
            for (const ParabolicProblem* pr : {&bs, &qg}) {
                Vec g(100), h(100), s(100), f(100), sz(100);
                pr->exact_gradient(t, x.data(), g.data());
                pr->exact_hessian_diag(t, x.data(), h.data());
                pr->sigma_at(t, x.data(), s.data());
                pr->drift_at(t, x.data(), f.data());
                double acc = pr->exact_dt(t, x.data());
                for (int k = 0; k < 100; ++k) {
                    acc += 0.5 * s[k] * s[k] * h[k] + f[k] * g[k];
                    sz[k] = s[k] * g[k];
                }
                acc += pr->driver(t, x.data(), pr->exact(t, x.data()), sz.data());
                ok = ok && std::abs(acc) < 1e-8 * std::max(1.0, std::abs(pr->exact(t, x.data())));
            }
        }
        all &= check_line("benchmark exact solutions satisfy their PDEs", ok);
    }

    std::printf(all ? "all checks passed\n" : "CHECKS FAILED\n");
    return all ? 0 : 1;
}

RunConfig table_config(const std::string& solver, const std::string& benchmark, int dim,
                       long steps) {
    RunConfig c;
    c.benchmark = benchmark;
    c.dimension = dim;
    c.solver = solver;
    c.steps = steps;
    c.log_every = 200;
    if (benchmark == "wedge_laplace" || benchmark == "poisson_d") {
        c.width = 60;
        c.blocks = 3;
        c.activation = "swish";
        c.lr = 0.01;
        c.interior_batch = 500;
        c.boundary_batch = 300;
        c.dt = 5e-4;
        c.j_loss = 20;
        c.indicator = solver == "ats_pinn" ? "ind_p" : "ind2";
        c.j_ats = 10;
    } else {
        c.width = 256;
        c.blocks = 2;
        c.activation = "sine";
        c.lr = 0.005;
        c.interior_batch = 512;
        c.j_ats = 10;
        c.time_steps = benchmark == "black_scholes_100" ? 50 : 30;
        c.eval_trajectories = 256;
    }
    return c;
}

int bench_command(int table, long steps, int dim, const std::string& outdir) {
    struct Row {
        std::string label;
        RunConfig cfg;
        double paper_re;
    };
    std::vector<Row> rows;
    if (table == 1) {
        rows.push_back({"PINN", table_config("pinn", "wedge_laplace", 2, steps), 1.833e-2});
        rows.push_back({"ATS-PINN", table_config("ats_pinn", "wedge_laplace", 2, steps), 9.765e-3});
        rows.push_back({"DFLM", table_config("dflm", "wedge_laplace", 2, steps), 2.874e-2});
        Row j2{"ATS-DFLM(J3=2)", table_config("ats_dflm", "wedge_laplace", 2, steps), 1.442e-2};
        j2.cfg.j3 = 2;
        rows.push_back(j2);
        rows.push_back(
            {"ATS-DFLM(J3=1)", table_config("ats_dflm", "wedge_laplace", 2, steps), 6.431e-3});
    } else if (table == 2) {
        if (dim <= 0) dim = 10;
        std::map<int, std::map<std::string, double>> ref = {
            {10,
             {{"PINN", 5.657e-2},
              {"ATS-PINN(IndP)", 1.376e-2},
              {"ATS-PINN(Ind4)", 7.176e-4},
              {"DFLM", 9.138e-4},
              {"ATS-DFLM", 5.982e-4}}},
            {20,
             {{"PINN", 5.756e-2},
              {"ATS-PINN(IndP)", 2.515e-3},
              {"ATS-PINN(Ind4)", 8.354e-4},
              {"DFLM", 1.098e-3},
              {"ATS-DFLM", 8.535e-4}}},
            {30,
             {{"PINN", 8.556e-2},
              {"ATS-PINN(IndP)", 1.219e-2},
              {"ATS-PINN(Ind4)", 1.187e-3},
              {"DFLM", 3.452e-3},
              {"ATS-DFLM", 6.854e-4}}},
            {50,
             {{"PINN", 1.269e-1},
              {"ATS-PINN(IndP)", 2.619e-2},
              {"ATS-PINN(Ind4)", 1.144e-3},
              {"DFLM", 2.430e-3},
              {"ATS-DFLM", 1.380e-3}}}};
        if (!ref.count(dim)) {
            std::fprintf(stderr, "table 2 dimensions: 10, 20, 30, 50\n");
            return 1;
        }
        rows.push_back({"PINN", table_config("pinn", "poisson_d", dim, steps), ref[dim]["PINN"]});
        Row ip{"ATS-PINN(IndP)", table_config("ats_pinn", "poisson_d", dim, steps),
               ref[dim]["ATS-PINN(IndP)"]};
        ip.cfg.indicator = "ind_p";
        rows.push_back(ip);
        Row i4{"ATS-PINN(Ind4)", table_config("ats_pinn", "poisson_d", dim, steps),
               ref[dim]["ATS-PINN(Ind4)"]};
        i4.cfg.indicator = "ind4";
        rows.push_back(i4);
        rows.push_back({"DFLM", table_config("dflm", "poisson_d", dim, steps), ref[dim]["DFLM"]});
        rows.push_back(
            {"ATS-DFLM", table_config("ats_dflm", "poisson_d", dim, steps), ref[dim]["ATS-DFLM"]});
    } else if (table == 3 || table == 4) {
        std::string bench = table == 3 ? "black_scholes_100" : "quadratic_growth";
        std::map<std::string, double> ref =
            table == 3 ? std::map<std::string, double>{{"FBSTD1", 3.110e-3},
                                                       {"FBSTD2", 3.640e-3},
                                                       {"ATS-FBSTD1", 7.078e-4},
                                                       {"ATS-FBSTD2", 1.500e-3}}
                       : std::map<std::string, double>{{"FBSTD1", 3.845e-3},
                                                       {"FBSTD2", 5.500e-3},
                                                       {"ATS-FBSTD1", 2.513e-3},
                                                       {"ATS-FBSTD2", 3.385e-3}};
        for (const std::string solver : {"fbstd1", "fbstd2", "ats_fbstd1", "ats_fbstd2"}) {
            std::string label = solver;
            for (auto& ch : label) ch = static_cast<char>(std::toupper(ch));
            label.erase(std::remove(label.begin(), label.end(), '_'), label.end());
            if (label.rfind("ATS", 0) == 0) label.insert(3, "-");
            rows.push_back({label, table_config(solver, bench, 100, steps), ref[label]});
        }
    } else {
        std::fprintf(stderr, "unknown table %d (use 1..4)\n", table);
        return 1;
    }

    std::printf("%-18s %-12s %-12s %-10s\n", "Method", "RE", "paper RE", "Time(s)");
    for (auto& row : rows) {
        row.cfg.output_dir = outdir + "/table" + std::to_string(table) + "_" + row.label;
        RunResult rr = run(row.cfg);
        std::printf("%-18s %-12.3e %-12.3e %-10.0f\n", row.label.c_str(), rr.final_re,
                    row.paper_re, rr.wall_seconds);
        std::fflush(stdout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive trajectories sampling for deep PDE solvers"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "train one configuration");
    run_cmd->add_option("--config", config_path, "key = value config file")->required();

    auto* check_cmd = app.add_subcommand("check", "fast numerical self-checks");

    int table = 1, dim = 0;
    long steps = 20000;
    std::string outdir = "bench_out";
    auto* bench_cmd = app.add_subcommand("bench", "reproduce a benchmark table");
    bench_cmd->add_option("--table", table, "table number 1..4")->required();
    bench_cmd->add_option("--dim", dim, "dimension for table 2 (10/20/30/50)");
    bench_cmd->add_option("--steps", steps, "training steps (default 20000)");
    bench_cmd->add_option("--out", outdir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return run_command(config_path);
        if (check_cmd->parsed()) return check_command();
        if (bench_cmd->parsed()) return bench_command(table, steps, dim, outdir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
