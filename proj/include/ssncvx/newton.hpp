#pragma once

// Regularized semismooth Newton outer loop with nonmonotone acceptance,
// regularized fallback, optional backtracking, and kappa/sigma adaptation.

#include "linsys.hpp"

#include <cmath>
#include <deque>
#include <functional>

namespace ssncvx {

enum class Accept { nonmonotone, fallback, linesearch };

inline const char *accept_name(Accept a) {
    switch (a) {
        case Accept::nonmonotone: return "nonmonotone";
        case Accept::fallback: return "fallback";
        case Accept::linesearch: return "linesearch";
    }
    return "?";
}

struct SolverConfig {
    double nu = 0.999;
    int zeta = 10;
    double kappa0 = 1e-2;
    double gamma = 10;
    int i_max = 3;
    double beta = 0.6;
    double c_fallback = 1;
    double varsigma0 = 1e-4; ///< varsigma_k = varsigma0 / k^2
    double C_eps = 1;        ///< eps schedule ||eps_k|| <= C_eps k^{-beta}
    double linsys_rtol = 1e-9; ///< ||eps_k|| <= linsys_rtol (1 + ||F||)
    double forcing = 1e-3;     ///< ||eps_k|| <= forcing ||F|| min(1, ||F||)
    bool line_search = true;
    double backtrack = 0.5;
    int max_backtracks = 8;
    double eta1 = 0.01, eta2 = 0.2;
    double gamma1 = 0.5, gamma2 = 0.9, gamma3 = 10;
    double tau_lo = 1e-8, tau_hi = 1;
    int sigma_window = 10;
    double delta = 1.5;
    double gamma_sigma = 0.5;
    double sigma0 = 1;
    double sigma_min = 1e-4, sigma_max = 1e6;
    bool adapt_sigma = true;
    double tol = 1e-6;
    /// Also stop when ||F|| <= f_tol (0 disables).
    double f_tol = 0;
    int max_iter = 200;
    double time_limit = inf;
    /// Barrier continuation for SOCBarrier kinds.
    double mu_min = 1e-10;
    /// Record ||(J + tau I) d + F - eps|| per step (one extra Jacobian apply).
    bool check_newton_system = true;
    LinsysOptions linsys;

    void validate() const {
        auto bad = [](const char *f, const char *m) { throw Error(Errc::InvalidArgument, f, m); };
        if (!(nu > 0 && nu < 1))
            bad("nu", "must lie in (0,1)");
        if (zeta < 1)
            bad("zeta", "must be >= 1");
        if (!(kappa0 > 0))
            bad("kappa0", "must be positive");
        if (!(gamma > 1))
            bad("gamma", "must exceed 1");
        if (i_max < 0)
            bad("i_max", "must be >= 0");
        if (!(beta > 0.5 && beta <= 1))
            bad("beta", "must lie in (1/2, 1]");
        if (!(c_fallback > 0))
            bad("c", "must be positive");
        if (!(sigma0 > 0) || !(sigma_min > 0) || !(sigma_max >= sigma_min))
            bad("sigma", "invalid sigma bounds");
        if (!(gamma_sigma > 0 && gamma_sigma < 1))
            bad("gamma_sigma", "must lie in (0,1)");
        if (!(tol >= 0))
            bad("tol", "must be nonnegative");
    }
};

struct IterTrace {
    int k = 0;
    double F_norm = 0;      ///< ||F(w^k)|| before the step
    double F_next = 0;      ///< ||F(w^{k+1})||
    double eta_max = 0;     ///< at w^k
    double tau = 0;
    int inner = 0;
    Accept accepted = Accept::nonmonotone;
    double alpha = 1;
    double window_bound = 0; ///< nu * max(window) + varsigma_k
    double rho = 0;
    double kappa = 0;
    double sigma = 0;
    double mu = 0;
    double system_residual = 0; ///< ||(J + tau I) d + F - eps||
    double eps_norm = 0;
    std::string linsys;
    int linsys_iters = 0;
    double time = 0;
};

struct SolveReport {
    bool converged = false;
    std::string status;
    int iterations = 0;
    double wall_time = 0;
    KktResiduals kkt;
    double F_norm = 0;
    double sigma = 1;
    std::vector<IterTrace> trace;
    Vec x;
    IterateW w;
};

struct SolveHooks {
    std::function<void(const IterTrace &)> on_iter;
    std::function<bool()> cancelled;
};

/// Three-branch kappa update.
inline double update_kappa(double kappa, double rho, const SolverConfig &c) {
    if (rho >= c.eta2)
        return std::max(c.gamma1 * kappa, c.tau_lo);
    if (rho >= c.eta1)
        return c.gamma2 * kappa;
    return std::min(c.gamma3 * kappa, c.tau_hi);
}

/// Ratio-based sigma update over the last `sigma_window` (primal, dual) pairs.
inline double update_sigma(const std::vector<std::pair<double, double>> &hist, double sigma, const SolverConfig &c) {
    const int l = c.sigma_window;
    if (int(hist.size()) < l)
        return sigma;
    double lp = 0, ld = 0;
    for (int j = int(hist.size()) - l; j < int(hist.size()); ++j) {
        lp += std::log(std::max(hist[j].first, 1e-300));
        ld += std::log(std::max(hist[j].second, 1e-300));
    }
    const double omega = std::exp((lp - ld) / l);
    double s = sigma;
    if (omega > c.delta)
        s = sigma * c.gamma_sigma;
    else if (omega < 1 / c.delta)
        s = sigma / c.gamma_sigma;
    return std::clamp(s, c.sigma_min, c.sigma_max);
}

namespace detail {

inline bool is_barrier(const FunctionSpec &g) { return std::holds_alternative<fn::SocBarrier>(g.kind); }

inline void set_mu(FunctionSpec &g, double mu) { std::get<fn::SocBarrier>(g.kind).mu = mu; }

inline FunctionSpec barrier_limit(const FunctionSpec &g) {
    return FunctionSpec(fn::SocIndicator{std::get<fn::SocBarrier>(g.kind).dims}, g.shift);
}

} // namespace detail

/// One outer iteration state shared by newton_step and line_search.
struct NewtonState {
    const ProblemSpec *spec;
    const VariableLayout *layout;
    IterateW w;
    SaddleEval e; ///< at w, with Jacobians
    double F_norm;
    std::deque<double> window;
    LinsysCache cache;

    double window_max() const { return *std::max_element(window.begin(), window.end()); }
};

struct StepResult {
    IterateW w;
    SaddleEval e; ///< at the new point, without Jacobians
    double F_norm = 0;
    Vec d;
    double tau = 0;
    int inner = 0;
    Accept accepted = Accept::nonmonotone;
    double alpha = 1;
    double bound = 0;
    double system_residual = 0;
    double eps_norm = 0;
    double rho = 0; ///< -<d, F(w + d)> / ||d||^2 for the returned step
    SolveStats stats;
};

namespace detail {

/// Solve with tau, escalating tau on factorization breakdown.
inline NewtonDirection direction_with_retry(NewtonState &S, double &tau, double tol_abs, const SolverConfig &c) {
    for (int attempt = 0;; ++attempt) {
        try {
            return newton_direction(*S.spec, *S.layout, S.e, tau, tol_abs, c.linsys, S.cache);
        } catch (const Error &err) {
            if (err.code() != Errc::BreakdownNonSPD || attempt >= 3)
                throw;
            tau *= 2;
        }
    }
}

/// ||(J + tau I) d + F - eps|| for the unscaled direction.
inline double system_residual(const NewtonState &S, const NewtonDirection &nd, double tau) {
    Vec r = apply_jacobian(*S.spec, *S.layout, S.e, nd.d) + tau * nd.d + S.e.F - nd.eps;
    return r.norm();
}

} // namespace detail

/// Regularized Newton step: inner tau loop with nonmonotone test, then
/// backtracking (if enabled), then the regularized fallback.
inline StepResult newton_step(NewtonState &S, int k, double kappa, const SolverConfig &c) {
    if (!(S.F_norm > 0))
        throw Error(Errc::InvalidArgument, "F", "residual is zero; already converged");
    const auto &spec = *S.spec;
    const auto &L = *S.layout;
    const double varsigma = c.varsigma0 / (double(k) * k);
    const double bound = c.nu * S.window_max() + varsigma;
    const double tol_abs = std::min({c.C_eps * std::pow(double(k), -c.beta), c.linsys_rtol * (1 + S.F_norm),
                                     c.forcing * S.F_norm * std::min(1.0, S.F_norm)});

    auto make = [&](const NewtonDirection &nd, double tau, double alpha) {
        StepResult r;
        r.w = S.w;
        r.w.w += alpha * nd.d;
        r.w.check_finite();
        r.e = evaluate(spec, L, r.w, false);
        r.F_norm = r.e.F.norm();
        r.d = alpha * nd.d;
        r.tau = tau;
        r.alpha = alpha;
        r.bound = bound;
        r.stats = nd.stats;
        r.eps_norm = nd.schur_residual;
        const double dn2 = r.d.squaredNorm();
        r.rho = dn2 > 0 ? -r.d.dot(r.e.F) / dn2 : 0.0;
        return r;
    };
    auto finish = [&](StepResult r, const NewtonDirection &nd) {
        if (c.check_newton_system)
            r.system_residual = detail::system_residual(S, nd, r.tau);
        return r;
    };

    NewtonDirection last;
    double tau = 0;
    for (int i = 0; i <= c.i_max; ++i) {
        tau = kappa * std::pow(c.gamma, i) * S.F_norm;
        tau = std::max(tau, 1e-300);
        last = detail::direction_with_retry(S, tau, tol_abs, c);
        StepResult r = make(last, tau, 1.0);
        r.inner = i;
        if (r.F_norm <= bound) {
            r.accepted = Accept::nonmonotone;
            return finish(std::move(r), last);
        }
    }
    if (c.line_search) {
        double alpha = 1;
        for (int b = 0; b < c.max_backtracks; ++b) {
            alpha *= c.backtrack;
            StepResult r = make(last, tau, alpha);
            r.inner = c.i_max;
            if (r.F_norm <= bound) {
                r.accepted = Accept::linesearch;
                // alpha d is a scaled copy of the direction that solved the system
                if (c.check_newton_system)
                    r.system_residual = detail::system_residual(S, last, tau);
                return r;
            }
        }
    }
    double tau_fb = std::max(c.c_fallback * std::pow(double(k), c.beta), tau);
    NewtonDirection nd = detail::direction_with_retry(S, tau_fb, tol_abs, c);
    StepResult r = make(nd, tau_fb, 1.0);
    r.inner = c.i_max + 1;
    r.accepted = Accept::fallback;
    return finish(std::move(r), nd);
}

/// Backtracking along d from S.w against the nonmonotone bound.
inline std::optional<double> line_search(const NewtonState &S, const Vec &d, double bound, const SolverConfig &c) {
    double alpha = 1;
    for (int b = 0; b <= c.max_backtracks; ++b) {
        IterateW t = S.w;
        t.w += alpha * d;
        if (residual_F(*S.spec, *S.layout, t).norm() <= bound)
            return alpha;
        alpha *= c.backtrack;
    }
    return std::nullopt;
}

inline SolveReport solve(const ProblemSpec &spec_in, const VariableLayout &L, const SolverConfig &c,
                         std::optional<IterateW> w0 = std::nullopt, const SolveHooks &hooks = {}) {
    c.validate();
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

    ProblemSpec spec = spec_in;
    const bool barrier = detail::is_barrier(spec.p);
    std::optional<ProblemSpec> limit;
    double mu = 0;
    if (barrier) {
        mu = std::max(1e-2 * (1 + spec.c.norm()), c.mu_min);
        detail::set_mu(spec.p, mu);
        limit = spec_in;
        limit->p = detail::barrier_limit(spec_in.p);
    }

    NewtonState S{&spec, &L, w0 ? *w0 : IterateW::zeros(L, c.sigma0), {}, 0, {}, {}};
    if (!w0)
        S.w.sigma = c.sigma0;
    S.w.check_finite();
    auto refresh = [&] {
        S.e = evaluate(spec, L, S.w, true);
        S.F_norm = S.e.F.norm();
    };
    refresh();
    S.window.push_back(S.F_norm);

    SolveReport rep;
    double kappa = c.kappa0;
    std::vector<std::pair<double, double>> hist;
    int since_sigma = 0;

    auto measure = [&]() -> KktResiduals {
        if (!limit)
            return kkt_residuals(spec, L, S.w, S.e);
        return kkt_residuals(*limit, L, S.w);
    };

    KktResiduals kkt = measure();
    rep.status = "max_iter";
    for (int k = 1;; ++k) {
        if (barrier) {
            KktResiduals kb = kkt_residuals(spec, L, S.w, S.e);
            bool changed = false;
            while (kb.eta_max < 10 * mu && mu > c.mu_min) {
                mu = std::max(mu / 10, c.mu_min);
                changed = true;
                kb.eta_max = inf;
            }
            if (changed) {
                detail::set_mu(spec.p, mu);
                refresh();
                S.window.assign(1, S.F_norm);
            }
        }
        const bool done_eta = kkt.eta_max <= c.tol;
        const bool done_f = c.f_tol > 0 && S.F_norm <= c.f_tol;
        if (done_eta || done_f || S.F_norm == 0) {
            rep.converged = true;
            rep.status = "converged";
            break;
        }
        if (k > c.max_iter) {
            rep.status = "max_iter";
            break;
        }
        if (elapsed() > c.time_limit) {
            rep.status = "time_limit";
            break;
        }
        if (hooks.cancelled && hooks.cancelled()) {
            rep.status = "cancelled";
            break;
        }

        IterTrace tr;
        tr.k = k;
        tr.F_norm = S.F_norm;
        tr.eta_max = kkt.eta_max;
        tr.sigma = S.w.sigma;
        tr.mu = mu;
        StepResult st = newton_step(S, k, kappa, c);
        tr.tau = st.tau;
        tr.inner = st.inner;
        tr.accepted = st.accepted;
        tr.alpha = st.alpha;
        tr.window_bound = st.bound;
        tr.F_next = st.F_norm;
        tr.system_residual = st.system_residual;
        tr.eps_norm = st.eps_norm;
        tr.linsys = st.stats.method;
        tr.linsys_iters = st.stats.iterations;

        tr.rho = st.rho;
        kappa = update_kappa(kappa, tr.rho, c);
        tr.kappa = kappa;

        S.w = std::move(st.w);
        refresh();
        S.window.push_back(S.F_norm);
        while (int(S.window.size()) > c.zeta)
            S.window.pop_front();
        kkt = measure();

        hist.emplace_back(std::max(kkt.eta_P, kkt.eta_Pset), kkt.eta_D);
        if (c.adapt_sigma && ++since_sigma >= c.sigma_window) {
            since_sigma = 0;
            const double s_new = update_sigma(hist, S.w.sigma, c);
            if (s_new != S.w.sigma) {
                S.w.sigma = s_new;
                refresh();
                S.window.assign(1, S.F_norm);
                kkt = measure();
            }
        }
        tr.time = elapsed();
        rep.trace.push_back(tr);
        if (hooks.on_iter)
            hooks.on_iter(tr);
    }
    rep.iterations = int(rep.trace.size());
    rep.wall_time = elapsed();
    rep.kkt = kkt;
    rep.F_norm = S.F_norm;
    rep.sigma = S.w.sigma;
    rep.x = S.e.x;
    rep.w = S.w;
    return rep;
}

inline SolveReport solve(const ProblemSpec &raw, const SolverConfig &c, const SolveHooks &hooks = {}) {
    auto [spec, L] = build_problem(raw);
    return solve(spec, L, c, std::nullopt, hooks);
}

} // namespace ssncvx
