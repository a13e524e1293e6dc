#include <ssncvx/io.hpp>
#include <ssncvx/presets.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

namespace {

constexpr int exit_converged = 0;
constexpr int exit_not_converged = 2;
constexpr int exit_input = 3;

struct Manifest {
    std::string file;
    std::string preset;
    std::optional<std::uint64_t> seed;
    ssncvx::Index n = 0, m = 0;
    double lambda = 0;
    double tol = 1e-6;
    int max_iter = 200;
    double time_limit = ssncvx::inf;
    double sigma0 = 1;
    std::string report, trace, write_problem;
    bool verbose = false;
};

void apply_threads() {
    if (const char *t = std::getenv("SSNCVX_THREADS")) {
        const int n = std::atoi(t);
        if (n > 0)
            Eigen::setNbThreads(n);
    }
}

int run(const Manifest &mf) {
    using namespace ssncvx;
    ProblemSpec spec;
    VariableLayout layout;
    try {
        if (!mf.preset.empty()) {
            if (!mf.file.empty())
                throw Error(Errc::InvalidArgument, "preset", "give either a problem file or --preset, not both");
            if (!mf.seed)
                throw Error(Errc::InvalidArgument, "seed", "--seed is required with --preset");
            spec = generate_preset({mf.preset, *mf.seed, mf.n, mf.m, mf.lambda}).spec;
        } else if (!mf.file.empty()) {
            spec = io::load_problem(mf.file);
        } else {
            throw Error(Errc::InvalidArgument, "file", "no problem file or --preset given");
        }
        std::tie(spec, layout) = build_problem(std::move(spec));
        if (!mf.write_problem.empty())
            io::write_json(io::problem_to_json(spec), mf.write_problem);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    }

    SolverConfig cfg;
    cfg.tol = mf.tol;
    cfg.max_iter = mf.max_iter;
    cfg.time_limit = mf.time_limit;
    cfg.sigma0 = mf.sigma0;
    try {
        cfg.validate();
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    }

    SolveHooks hooks;
    hooks.on_iter = [&](const IterTrace &t) {
        std::printf("%4d %.6e %.6e %.3e %.3e %s", t.k, t.F_norm, t.eta_max, t.tau, t.sigma, accept_name(t.accepted));
        if (mf.verbose)
            std::printf("  i=%d alpha=%.3g rho=%.3e kappa=%.3e %s/%d t=%.3fs", t.inner, t.alpha, t.rho, t.kappa,
                        t.linsys.c_str(), t.linsys_iters, t.time);
        std::printf("\n");
        std::fflush(stdout);
    };

    SolveReport rep;
    try {
        rep = solve(spec, layout, cfg, std::nullopt, hooks);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    }
    std::printf("%s: iterations %d, time %.3fs, eta_max %.3e, pobj %.12e, dobj %.12e\n", rep.status.c_str(),
                rep.iterations, rep.wall_time, rep.kkt.eta_max, rep.kkt.pobj, rep.kkt.dobj);
    try {
        if (!mf.report.empty())
            io::write_json(io::report_to_json(rep), mf.report);
        if (!mf.trace.empty())
            io::write_trace_csv(rep, mf.trace);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    }
    return rep.converged ? exit_converged : exit_not_converged;
}

} // namespace

int main(int argc, char **argv) {
    apply_threads();
    CLI::App app{"Semismooth Newton solver for convex composite problems"};
    app.require_subcommand(1);
    Manifest mf;
    auto *solve = app.add_subcommand("solve", "Solve a problem file or a generated preset");
    solve->add_option("file", mf.file, "JSON problem file");
    std::string names;
    for (const auto &p : ssncvx::preset_names())
        names += (names.empty() ? "" : ", ") + p;
    solve->add_option("--preset", mf.preset, "Generated problem: " + names);
    solve->add_option("--seed", mf.seed, "Preset seed (required with --preset)");
    solve->add_option("--n", mf.n, "Preset size parameter n");
    solve->add_option("--m", mf.m, "Preset size parameter m");
    solve->add_option("--lambda", mf.lambda, "Override the preset regularization weight");
    solve->add_option("--tol", mf.tol, "Target eta_max")->capture_default_str();
    solve->add_option("--max-iter", mf.max_iter, "Iteration limit")->capture_default_str();
    solve->add_option("--time-limit", mf.time_limit, "Wall-clock limit in seconds");
    solve->add_option("--sigma0", mf.sigma0, "Initial penalty parameter")->capture_default_str();
    solve->add_option("--report", mf.report, "Write a JSON report");
    solve->add_option("--trace", mf.trace, "Write the iteration trace as CSV");
    solve->add_option("--write-problem", mf.write_problem, "Write the validated problem as JSON");
    solve->add_flag("-v,--verbose", mf.verbose, "Extra per-iteration detail");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return exit_input;
    }
    return run(mf);
}
