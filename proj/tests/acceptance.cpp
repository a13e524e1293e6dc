// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "oracles.hpp"

#include <ssncvx/linsys.hpp>
#include <ssncvx/newton.hpp>
#include <ssncvx/presets.hpp>
#include <ssncvx/prox.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

using namespace ssncvx;
using oracle::rel;

namespace {

struct Outcome {
    bool ok = true;
    std::ostringstream note;

    void check(bool cond, const std::string &what) {
        if (!cond && ok) {
            ok = false;
            note << "first failure: " << what << "; ";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Mat mat_of(const Vec &x, Index n1, Index n2) { return Eigen::Map<const Mat>(x.data(), n1, n2); }
Vec vec_of(const Mat &M) { return Eigen::Map<const Vec>(M.data(), M.size()); }

struct Kind {
    std::string name;
    FunctionSpec g;
    Index dim;
};

std::vector<Kind> catalog(bool large) {
    if (!large)
        return {
            {"zero", FunctionSpec(fn::Zero{}), 7},
            {"l1", FunctionSpec(fn::L1{0.7}), 9},
            {"l2norm", FunctionSpec(fn::L2Norm{1.3}), 6},
            {"l2ball", FunctionSpec(fn::L2Ball{0.8}), 6},
            {"box", FunctionSpec(fn::Box{BoxSet{Vec{{-1.0, -inf, 0.0, -0.5, 2.0}}, Vec{{1.0, 0.5, inf, 0.7, 2.0}}}}),
             5},
            {"soc", FunctionSpec(fn::SocIndicator{{4, 1, 3}}), 8},
            {"socbarrier", FunctionSpec(fn::SocBarrier{{4, 1, 3}, 0.3}), 8},
            {"nuclear", FunctionSpec(fn::Nuclear{0.9, 5, 3}), 15},
            {"spectral", FunctionSpec(fn::Spectral{1.5, 3, 5}), 15},
            {"psd", FunctionSpec(fn::Psd{4}), 16},
            {"fused", FunctionSpec(fn::Fused{0.3, 0.6}), 12},
            {"squared", FunctionSpec(fn::SquaredLoss{}), 5},
        };
    Vec lo = Vec::Constant(64, -0.5), hi = Vec::Constant(64, 0.8);
    lo.head(8).setConstant(-inf);
    hi.tail(8).setConstant(inf);
    return {
        {"zero", FunctionSpec(fn::Zero{}), 64},
        {"l1", FunctionSpec(fn::L1{0.7}), 64},
        {"l2norm", FunctionSpec(fn::L2Norm{4.0}), 64},
        {"l2ball", FunctionSpec(fn::L2Ball{5.0}), 64},
        {"box", FunctionSpec(fn::Box{BoxSet{lo, hi}}), 64},
        {"soc", FunctionSpec(fn::SocIndicator{{10, 1, 20, 33}}), 64},
        {"socbarrier", FunctionSpec(fn::SocBarrier{{10, 1, 20, 33}, 0.3}), 64},
        {"nuclear", FunctionSpec(fn::Nuclear{2.0, 8, 8}), 64},
        {"spectral", FunctionSpec(fn::Spectral{3.0, 8, 6}), 48},
        {"psd", FunctionSpec(fn::Psd{8}), 64},
        {"fused", FunctionSpec(fn::Fused{0.3, 0.6}), 64},
        {"squared", FunctionSpec(fn::SquaredLoss{}), 64},
    };
}

Vec point(oracle::Rng &rng, const Kind &k) {
    Vec x = 1.5 * rng.randn(k.dim);
    if (const auto *p = std::get_if<fn::Psd>(&k.g.kind)) {
        Mat X = mat_of(x, p->n, p->n);
        x = vec_of(0.5 * (X + X.transpose()));
    }
    return x;
}

/// Projector onto symmetric directions in column-major n*n space.
Mat sym_projector(Index n) {
    Mat S = Mat::Zero(n * n, n * n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            S(i + n * j, i + n * j) += 0.5;
            S(i + n * j, j + n * i) += 0.5;
        }
    return S;
}

// ---- conjugate-side oracles ------------------------------------------------

/// Spectral frame of a single second-order cone block: z = l1 c1 + l2 c2.
struct Frame {
    double l1, l2;
    Vec u;
};

Frame frame(const Vec &z) {
    const Index d = z.size();
    if (d == 1)
        return {z[0], z[0], Vec()};
    Vec bar = z.tail(d - 1);
    const double nb = bar.norm();
    Vec u = nb > 0 ? Vec(bar / nb) : Vec(Vec::Unit(d - 1, 0));
    return {z[0] - nb, z[0] + nb, u};
}

Vec from_frame(double a, double b, const Vec &u, Index d) {
    if (d == 1)
        return Vec::Constant(1, a);
    Vec y(d);
    y[0] = 0.5 * (a + b);
    y.tail(d - 1) = 0.5 * (b - a) * u;
    return y;
}

/// prox of (t g)* / t at z / t for the log barrier whose prox solves x - t mu x^{-1} = z:
/// eigenvalues (s - sqrt(s^2 + 4 mu / t)) / 2 at s = lambda / t, in cancellation-free form.
Vec barrier_conj_prox(const Vec &z, const std::vector<Index> &dims, double mu, double t) {
    Vec out(z.size());
    Index off = 0;
    auto root = [&](double lam) {
        const double s = lam / t, c = mu / t, q = std::sqrt(s * s + 4 * c);
        return s <= 0 ? 0.5 * (s - q) : -2 * c / (s + q);
    };
    for (Index d : dims) {
        Frame f = frame(z.segment(off, d));
        out.segment(off, d) = from_frame(root(f.l1), root(f.l2), f.u, d);
        off += d;
    }
    return out;
}

/// Certificate that (x - p) / t lies in the subdifferential of
/// l1||.||_1 + l2 TV at p, by propagating the feasible interval of the
/// difference multipliers q_i in [-1, 1] from left to right.
bool fused_certificate(const Vec &x, const Vec &p, double t, double l1, double l2, double slack) {
    const Index n = x.size();
    Vec y = (x - p) / t;
    double qlo = 0, qhi = 0;
    for (Index i = 0; i < n; ++i) {
        double slo = -1, shi = 1;
        if (p[i] != 0)
            slo = shi = p[i] > 0 ? 1 : -1;
        // y_i = l1 s_i + l2 (q_{i-1} - q_i)
        double lo = qlo + (l1 * slo - y[i]) / l2 - slack, hi = qhi + (l1 * shi - y[i]) / l2 + slack;
        if (i + 1 == n)
            return lo <= 0 && 0 <= hi;
        double tlo = -1, thi = 1;
        const double diff = p[i + 1] - p[i];
        if (std::abs(diff) > 1e-12 * (1 + std::abs(p[i])))
            tlo = thi = diff > 0 ? 1 : -1;
        qlo = std::max(lo, tlo);
        qhi = std::min(hi, thi);
        if (qlo > qhi)
            return false;
    }
    return true;
}

/// t * prox_{g*/t}(x/t) from an independent formula, or nothing when the
/// kind is checked by a certificate instead.
std::optional<Vec> conj_part(const Kind &k, const Vec &x, double t) {
    Vec u = x / t;
    return std::visit(
        [&](const auto &g) -> std::optional<Vec> {
            using K = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<K, fn::Zero>) {
                return Vec(Vec::Zero(x.size()));
            } else if constexpr (std::is_same_v<K, fn::L1>) {
                return Vec(t * u.cwiseMax(-g.lambda).cwiseMin(g.lambda));
            } else if constexpr (std::is_same_v<K, fn::L2Norm>) {
                return Vec(t * (u.norm() <= g.lambda ? u : Vec(g.lambda * u / u.norm())));
            } else if constexpr (std::is_same_v<K, fn::L2Ball>) {
                return Vec(t * std::max(0.0, 1 - (g.radius / t) / u.norm()) * u);
            } else if constexpr (std::is_same_v<K, fn::Box>) {
                // conjugate is the support function; prox by scalar cases
                Vec c(x.size());
                for (Index i = 0; i < x.size(); ++i) {
                    const double l = g.set.lower[i], h = g.set.upper[i], s = u[i], w = 1 / t;
                    c[i] = s > w * h ? s - w * h : s < w * l ? s - w * l : 0.0;
                }
                return Vec(t * c);
            } else if constexpr (std::is_same_v<K, fn::SocIndicator>) {
                // polar cone is -K: x - Pi_K(x) = -Pi_K(-x), via the spectral frame
                Vec c(x.size());
                Index off = 0;
                for (Index d : g.dims) {
                    Frame f = frame(Vec(-x.segment(off, d)));
                    c.segment(off, d) = -from_frame(std::max(f.l1, 0.0), std::max(f.l2, 0.0), f.u, d);
                    off += d;
                }
                return c;
            } else if constexpr (std::is_same_v<K, fn::SocBarrier>) {
                return Vec(t * barrier_conj_prox(x, g.dims, g.mu, t));
            } else if constexpr (std::is_same_v<K, fn::Nuclear>) {
                Mat C = oracle::svd_map(mat_of(u, g.n1, g.n2), [&](const Vec &s) { return s.cwiseMin(g.lambda); });
                return Vec(t * vec_of(C));
            } else if constexpr (std::is_same_v<K, fn::Spectral>) {
                Mat C = oracle::svd_map(mat_of(u, g.n1, g.n2),
                                        [&](const Vec &s) { return oracle::project_l1_ball_nonneg(s, g.lambda); });
                return Vec(t * vec_of(C));
            } else if constexpr (std::is_same_v<K, fn::Psd>) {
                Eigen::SelfAdjointEigenSolver<Mat> es(mat_of(x, g.n, g.n));
                Vec ev = es.eigenvalues().cwiseMin(0.0);
                return Vec(vec_of(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose()));
            } else if constexpr (std::is_same_v<K, fn::SquaredLoss>) {
                return Vec(t * u / (1 + 1 / t));
            } else {
                return std::nullopt;
            }
        },
        k.g.kind);
}

// ---- criteria ---------------------------------------------------------------

void prox_correctness(Outcome &o) {
    oracle::Rng rng(101);
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0, worst_firm = 0;
    for (const Kind &k : catalog(false)) {
        for (int i = 0; i < 100; ++i) {
            const double t = rng.uniform(0.2, 2.0);
            Vec x = point(rng, k);
            Vec p = prox(k.g, t, x);
            if (auto c = conj_part(k, x, t)) {
                const double err = (p + *c - x).norm() / (1 + x.norm());
                worst = std::max(worst, err);
                o.check(err <= 1e-10, k.name + " Moreau");
            } else {
                const auto &f = std::get<fn::Fused>(k.g.kind);
                o.check(fused_certificate(x, p, t, f.lambda1, f.lambda2, 1e-10 / (t * f.lambda2)),
                        k.name + " subgradient certificate");
            }
            Vec y = point(rng, k), q = prox(k.g, t, y);
            const double gap = (p - q).squaredNorm() - (p - q).dot(x - y);
            worst_firm = std::max(worst_firm, gap / (1 + (x - y).squaredNorm()));
            o.check(gap <= 1e-12 * (1 + (x - y).squaredNorm()), k.name + " firm nonexpansiveness");
        }
    }
    const double secs = seconds_since(t0);
    o.check(secs < 10, "runtime");
    o.note << "max Moreau err " << worst << ", max firm gap " << worst_firm << ", " << secs << " s";
}

void jacobian_suite(Outcome &o) {
    oracle::Rng rng(202);
    auto t0 = std::chrono::steady_clock::now();
    const double h = 1e-6;
    double worst_fd = 0, worst_dense = 0;
    int resampled = 0;
    for (const Kind &k : catalog(false)) {
        const auto *psd = std::get_if<fn::Psd>(&k.g.kind);
        Mat S = psd ? sym_projector(psd->n) : Mat::Identity(k.dim, k.dim);
        int accepted = 0;
        for (int attempt = 0; accepted < 50 && attempt < 500; ++attempt) {
            const double t = rng.uniform(0.3, 1.5);
            Vec x = point(rng, k);
            auto f = [&](const Vec &z) { return prox(k.g, t, z); };
            Mat Jc(k.dim, k.dim), Jf(k.dim, k.dim), Jb(k.dim, k.dim);
            Vec f0 = f(x);
            for (Index j = 0; j < k.dim; ++j) {
                Vec e = S.col(j);
                Vec fp = f(Vec(x + h * e)), fm = f(Vec(x - h * e));
                Jc.col(j) = (fp - fm) / (2 * h);
                Jf.col(j) = (fp - f0) / h;
                Jb.col(j) = (f0 - fm) / h;
            }
            // one-sided slopes disagree near a kink: not a differentiable point
            if ((Jf - Jb).norm() > 1e-4 * std::max(1.0, Jc.norm())) {
                ++resampled;
                continue;
            }
            ++accepted;
            ProxEval e = prox_eval(k.g, t, x);
            const double err = rel(Mat(e.jac.materialize() * S), Jc);
            worst_fd = std::max(worst_fd, err);
            o.check(err <= 1e-5, k.name + " finite differences");
        }
        o.check(accepted == 50, k.name + " too few differentiable points");
    }
    for (const Kind &k : catalog(true)) {
        for (int i = 0; i < 4; ++i) {
            const double sigma = rng.uniform(0.2, 3.0), tau = std::pow(10.0, rng.uniform(-4, 0));
            Vec x = point(rng, k);
            ProxEval e = prox_eval(k.g, sigma, x);
            auto J = std::make_shared<const JacobianRep>(e.jac);
            DerivedOps ops = derived_ops(k.g, J, sigma, tau);
            Mat D = J->materialize(), I = Mat::Identity(k.dim, k.dim);
            Mat Tinv = ((I - D) / sigma + tau * I).inverse();
            Mat Bar = sigma * D + D * Tinv * D;
            const double e1 = rel(ops.dtau_inv_dense(), Tinv), e2 = rel(ops.dbar_dense(), Bar);
            worst_dense = std::max({worst_dense, e1, e2});
            o.check(e1 <= 1e-10, k.name + " dense (D^tau)^-1");
            o.check(e2 <= 1e-10, k.name + " dense Dbar");
        }
    }
    const double secs = seconds_since(t0);
    o.check(secs < 30, "runtime");
    o.note << "max FD err " << worst_fd << ", max dense err " << worst_dense << ", " << resampled
           << " kink points resampled, " << secs << " s";
}

void soc_barrier_lemma(Outcome &o) {
    oracle::Rng rng(303);
    const std::vector<Index> dims{3, 1, 6};
    double worst_rt = 0, worst_proj = 0, worst_inv = 0;
    for (double mu : {1e-4, 1.0, 10.0})
        for (int i = 0; i < 100; ++i) {
            Vec z = 3 * rng.randn(10);
            Vec x = soc_barrier_prox(mu, z, dims);
            Index off = 0;
            for (Index d : dims) {
                Vec xb = x.segment(off, d), zb = z.segment(off, d);
                o.check(xb[0] > (d > 1 ? xb.tail(d - 1).norm() : 0.0), "prox not interior");
                Vec back = xb - mu * soc::inverse(xb);
                const double err = (back - zb).norm() / (1 + zb.norm());
                worst_rt = std::max(worst_rt, err);
                o.check(err <= 1e-10, "roundtrip at mu " + std::to_string(mu));
                off += d;
            }
        }
    FunctionSpec K(fn::SocIndicator{dims});
    for (int i = 0; i < 100; ++i) {
        Vec z = 3 * rng.randn(10);
        const double err = (soc_barrier_prox(1e-8, z, dims) - prox(K, 1, z)).norm();
        worst_proj = std::max(worst_proj, err);
        o.check(err <= 1e-4, "small mu vs projection");
    }
    for (Index d : {Index(1), Index(2), Index(7), Index(32)})
        for (double mu : {1e-4, 1.0, 10.0})
            for (int i = 0; i < 10; ++i) {
                Vec z = 2 * rng.randn(d);
                Mat M = soc_barrier_jacobian(mu, z, {d}).materialize();
                // x and z share the spectral frame; x_i - mu / x_i = lambda_i(z)
                auto root = [&](double l) {
                    const double q = std::sqrt(l * l + 4 * mu);
                    return l >= 0 ? 0.5 * (l + q) : 2 * mu / (q - l);
                };
                Frame f = frame(z);
                const double x1 = root(f.l1), x2 = root(f.l2);
                Mat Jinv(d, d);
                if (d == 1) {
                    Jinv(0, 0) = 1 + mu / (x1 * x1);
                } else {
                    Vec c1 = from_frame(1, 0, f.u, d), c2 = from_frame(0, 1, f.u, d);
                    Mat P1 = 2 * c1 * c1.transpose(), P2 = 2 * c2 * c2.transpose();
                    Mat Pp = Mat::Identity(d, d) - P1 - P2;
                    Jinv = (1 + mu / (x1 * x1)) * P1 + (1 + mu / (x2 * x2)) * P2 + (1 + mu / (x1 * x2)) * Pp;
                }
                const double err = (M * Jinv - Mat::Identity(d, d)).norm();
                worst_inv = std::max(worst_inv, err);
                o.check(err <= 1e-9, "J * J^-1 at dim " + std::to_string(d));
            }
    o.note << "max roundtrip " << worst_rt << ", max |prox - proj| " << worst_proj << ", max |J Jinv - I| "
           << worst_inv;
}

/// Dense (D^tau)^{-1} G for the nuclear-norm prox at X via entrywise
/// Hadamard inversion in the full singular basis of X.
Mat hadamard_inverse(const Mat &X, const Mat &G, double thr, double sigma, double tau) {
    const Index m = X.rows(), n = X.cols();
    Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat Uf = svd.matrixU(), Vf = svd.matrixV();
    Vec sv = svd.singularValues(), f = oracle::soft(sv, thr);
    auto phi = [&](double d) { return 1.0 / ((1 - d) / sigma + tau); };
    Mat Gt = Uf.transpose() * G * Vf, R(m, n);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) {
            if (i >= n) {
                R(i, j) = phi(f[j] / sv[j]) * Gt(i, j);
                continue;
            }
            const double sym = i == j ? (sv[i] > thr ? 1.0 : 0.0) : (f[i] - f[j]) / (sv[i] - sv[j]);
            const double skw = (f[i] + f[j]) / (sv[i] + sv[j]);
            const double sy = 0.5 * (Gt(i, j) + Gt(j, i)), sk = 0.5 * (Gt(i, j) - Gt(j, i));
            R(i, j) = phi(sym) * sy + phi(skw) * sk;
        }
    return Uf * R * Vf.transpose();
}

void spectral_algorithm(Outcome &o) {
    oracle::Rng rng(404);
    double worst = 0;
    for (auto [m, n] : {std::pair<Index, Index>{8, 5}, {32, 20}})
        for (Index r : {1, 3})
            for (int trial = 0; trial < 5; ++trial) {
                const double lam = 1.0, sigma = rng.uniform(0.3, 2.0), tau = std::pow(10.0, rng.uniform(-4, 0));
                const double thr = lam * sigma;
                Mat U = Eigen::HouseholderQR<Mat>(rng.randn(m, m)).householderQ() * Mat::Identity(m, n);
                Mat V = Eigen::HouseholderQR<Mat>(rng.randn(n, n)).householderQ();
                Vec s(n);
                for (Index i = 0; i < n; ++i)
                    s[i] = i < r ? thr * (1.5 + 2 * double(r - i)) : thr * 0.9 * double(n - i) / double(n + 1);
                Mat X = U * s.asDiagonal() * V.transpose();
                FunctionSpec g(fn::Nuclear{lam, m, n});
                ProxEval e = prox_eval(g, sigma, vec_of(X));
                o.check(Index(e.jac.as<jac::Spectral>().alpha.size()) == r, "survivor rank");
                auto J = std::make_shared<const JacobianRep>(e.jac);
                DerivedOps ops = derived_ops(g, J, sigma, tau);
                for (int k = 0; k < 3; ++k) {
                    Mat G = rng.randn(m, n);
                    Mat ref = hadamard_inverse(X, G, thr, sigma, tau);
                    const double err = (mat_of(ops.dtau_inv(vec_of(G)), m, n) - ref).norm() / ref.norm();
                    worst = std::max(worst, err);
                    o.check(err <= 1e-10, std::to_string(m) + "x" + std::to_string(n) + " r=" + std::to_string(r));
                }
            }
    o.note << "max rel err " << worst;
}

/// Dense Theta Gamma Theta from an independent TV solution: fused pairs
/// (equal neighbours) enter Sigma, nonzero entries enter Theta.
Mat dense_fused_jacobian(const Vec &v, double l1, double l2) {
    const Index n = v.size();
    Vec xtv = oracle::tv_dual_pg(v, l2, 400000);
    Mat F = Mat::Zero(n - 1, n), Sigma = Mat::Zero(n - 1, n - 1), Th = Mat::Zero(n, n);
    for (Index i = 0; i + 1 < n; ++i) {
        F(i, i) = -1;
        F(i, i + 1) = 1;
        Sigma(i, i) = std::abs(xtv[i + 1] - xtv[i]) < 1e-6 ? 1.0 : 0.0;
    }
    for (Index i = 0; i < n; ++i)
        Th(i, i) = std::abs(xtv[i]) > l1 ? 1.0 : 0.0;
    Mat M = Sigma * F * F.transpose() * Sigma;
    Mat G = Mat::Identity(n, n) - F.transpose() * M.completeOrthogonalDecomposition().pseudoInverse() * F;
    return Th * G * Th;
}

void fused_factorization(Outcome &o) {
    oracle::Rng rng(505);
    double worst = 0, worst_smw = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Index n = 2 + Index(rng.uniform(0, 39));
        Vec v = 2 * rng.randn(n);
        const double l1 = rng.uniform(0.05, 0.6), l2 = rng.uniform(0.05, 0.8);
        JacobianRep J(fused_jacobian_factors(v, l1, l2));
        const double err = (J.materialize() - dense_fused_jacobian(v, l1, l2)).norm();
        worst = std::max(worst, err);
        o.check(err <= 1e-10, "factor n=" + std::to_string(n));
    }
    int cases = 0;
    for (int trial = 0; trial < 200 && cases < 20; ++trial) {
        const Index m = 10 + Index(rng.uniform(0, 20)), n = 40;
        ProblemSpec raw;
        raw.n = n;
        raw.p = FunctionSpec(fn::Fused{rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.8)});
        raw.f = FunctionSpec(fn::SquaredLoss{}, rng.randn(m));
        raw.B = LinearOperator::dense(rng.randn(m, n));
        auto [s, L] = build_problem(raw);
        IterateW w = IterateW::zeros(L, rng.uniform(0.5, 2.0));
        w.w = 0.1 * rng.randn(L.total);
        SaddleEval e = evaluate(s, L, w, true);
        const double tau = std::pow(10.0, rng.uniform(-4, -1));
        SchurSystem S = build_schur(s, L, e, tau);
        LinsysCache cache;
        SolveStats st;
        Vec x = solve_schur(S, 1e-13, LinsysOptions{}, cache, st);
        o.check(st.method == "smw", "SMW path not taken");
        // dense reduction of the full (J + tau I) onto the first block
        Mat Jd = jacobian_dense(s, L, e);
        Jd.diagonal().array() += tau;
        const Index n1 = L.n1, n2 = L.total - n1;
        Eigen::PartialPivLU<Mat> lu(Jd.bottomRightCorner(n2, n2));
        Mat Sd = Jd.topLeftCorner(n1, n1) - Jd.topRightCorner(n1, n2) * lu.solve(Jd.bottomLeftCorner(n2, n1));
        Vec rhs = -e.F.head(n1) + Jd.topRightCorner(n1, n2) * lu.solve(Vec(e.F.tail(n2)));
        // with no active fused block Ht11 is a multiple of I; skip those draws
        if ((Sd - Sd(0, 0) * Mat::Identity(n1, n1)).norm() <= 1e-8 * Sd(0, 0))
            continue;
        ++cases;
        Vec ref = Sd.fullPivLu().solve(rhs);
        const double err = (x - ref).norm() / (1 + ref.norm());
        worst_smw = std::max(worst_smw, err);
        o.check(err <= 1e-8, "SMW vs dense solve");
    }
    o.check(cases == 20, "too few SMW systems with an active block");
    o.note << "max factor err " << worst << ", max SMW rel err " << worst_smw << " over " << cases << " systems";
}

void newton_consistency(Outcome &o) {
    double worst = 0;
    int steps = 0;
    for (const auto &name : preset_names())
        for (std::uint64_t seed : {1, 2}) {
            Preset p = generate_preset({name, seed});
            SolverConfig c;
            c.check_newton_system = true;
            SolveReport r = solve(p.spec, c);
            for (const auto &t : r.trace) {
                const double v = t.system_residual / (1 + t.F_norm);
                worst = std::max(worst, v);
                ++steps;
                o.check(v <= 1e-8, name + " k=" + std::to_string(t.k));
            }
        }
    o.note << steps << " steps on 6 presets x 2 seeds, max residual/(1+|F|) " << worst;
}

double lasso_objective(const Mat &B, const Vec &b, double lam, const Vec &x) {
    return 0.5 * (B * x - b).squaredNorm() + lam * x.lpNorm<1>();
}

double fused_objective(const Mat &B, const Vec &b, double l1, double l2, const Vec &x) {
    const Index n = x.size();
    return 0.5 * (B * x - b).squaredNorm() + l1 * x.lpNorm<1>() + l2 * (x.tail(n - 1) - x.head(n - 1)).lpNorm<1>();
}

void end_to_end(Outcome &o) {
    SolverConfig c;
    c.check_newton_system = false;
    {
        Preset p = generate_preset({"lasso", 1});
        SolveReport r = solve(p.spec, c);
        Mat B = p.spec.B.to_dense();
        const Vec &b = *p.spec.f->shift;
        const double lam = std::get<fn::L1>(p.spec.p.kind).lambda;
        // check the lambda rule independently of the generator
        o.check(std::abs(lam - 1e-3 * (B.transpose() * b).lpNorm<Eigen::Infinity>()) <= 1e-15 * lam, "lasso lambda");
        Vec xo = oracle::fista_lasso(B, b, lam, 1e-12);
        const double fo = lasso_objective(B, b, lam, xo), fs = lasso_objective(B, b, lam, r.x);
        const double relerr = std::abs(fs - fo) / std::abs(fo);
        o.check(r.converged && r.wall_time < 5 && relerr <= 1e-6, "lasso");
        o.note << "lasso " << B.rows() << "x" << B.cols() << " " << r.wall_time << " s rel obj " << relerr << "; ";
    }
    {
        Preset p = generate_preset({"fused-lasso", 1});
        SolveReport r = solve(p.spec, c);
        Mat B = p.spec.B.to_dense();
        const Vec &b = *p.spec.f->shift;
        const auto &f = std::get<fn::Fused>(p.spec.p.kind);
        Vec xo = oracle::admm_fused(B, b, f.lambda1, f.lambda2);
        const double fo = fused_objective(B, b, f.lambda1, f.lambda2, xo);
        const double relerr = std::abs(fused_objective(B, b, f.lambda1, f.lambda2, r.x) - fo) / std::abs(fo);
        o.check(r.converged && B.cols() == 500 && relerr <= 1e-6, "fused lasso");
        o.note << "fused n=" << B.cols() << " rel obj " << relerr << "; ";
    }
    {
        Preset p = generate_preset({"qp-portfolio", 1});
        SolverConfig q = c;
        q.tol = 1e-7;
        SolveReport r = solve(p.spec, q);
        o.check(r.kkt.eta_max <= 1e-7 && r.wall_time < 10 && p.spec.n == 512, "qp portfolio");
        o.note << "qp n=512 eta " << r.kkt.eta_max << " in " << r.wall_time << " s; ";
    }
    {
        Preset p = generate_preset({"socp", 1});
        const auto &K = std::get<fn::SocIndicator>(p.spec.p.kind);
        SolveReport r = solve(p.spec, c);
        o.check(K.dims == std::vector<Index>(5, 10) && r.kkt.eta_max <= 1e-6, "socp");
        o.note << "socp eta " << r.kkt.eta_max << "; ";
    }
    {
        Preset p = generate_preset({"spca", 1});
        SolverConfig q = c;
        q.tol = 1e-8;
        SolveReport r = solve(p.spec, q);
        o.check(p.rows == 64 && r.kkt.eta_max <= 1e-8, "spca");
        o.note << "spca eta " << r.kkt.eta_max << "; ";
    }
    {
        Preset p = generate_preset({"lrmc", 1});
        SolverConfig q = c;
        q.tol = 1e-8;
        SolveReport r = solve(p.spec, q);
        Vec s = Eigen::JacobiSVD<Mat>(mat_of(r.x, 64, 64)).singularValues();
        const Index rank = (s.array() > 1e-6 * s[0]).count();
        o.check(r.kkt.eta_max <= 1e-8 && rank == 3, "lrmc");
        o.note << "lrmc eta " << r.kkt.eta_max << " rank " << rank;
    }
}

void globalization(Outcome &o) {
    int converged = 0, fallbacks = 0, iters = 0;
    double worst_F = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Preset p = generate_preset({"lasso", seed, 200, 60});
        auto [s, L] = build_problem(p.spec);
        SolverConfig c;
        c.tol = 0;
        c.f_tol = 1e-8;
        c.max_iter = 500;
        oracle::Rng rng(808 + seed);
        IterateW w0 = IterateW::zeros(L, c.sigma0);
        w0.w = 10 * rng.randn(L.total);
        SolveReport r = solve(s, L, c, w0);
        for (const auto &t : r.trace) {
            if (t.accepted == Accept::fallback)
                ++fallbacks;
            else
                o.check(t.F_next <= t.window_bound, "window bound seed " + std::to_string(seed));
        }
        o.check(r.F_norm < 1e-8, "residual seed " + std::to_string(seed));
        converged += r.F_norm < 1e-8;
        worst_F = std::max(worst_F, r.F_norm);
        iters = std::max(iters, r.iterations);
    }
    o.note << converged << "/20 reached |F| < 1e-8, max final |F| " << worst_F << ", max iterations " << iters << ", "
           << fallbacks << " fallback steps";
}

/// Lasso with a planted solution x* satisfying strict complementarity:
/// b = B x* + r with B_S^T r = lam sign(x*_S) and |B_j^T r| <= margin lam off S.
std::optional<std::pair<ProblemSpec, Vec>> sc_lasso(oracle::Rng &rng, Index m, Index n, Index k, double margin) {
    Mat B = rng.randn(m, n);
    B.colwise().normalize();
    const double lam = 0.1;
    std::vector<Index> S(k);
    Vec xs = Vec::Zero(n), sg(k);
    for (Index i = 0; i < k; ++i) {
        S[i] = i * (n / k);
        const double mag = 1 + rng.uniform(0, 1);
        sg[i] = rng.uniform(0, 1) < 0.5 ? -1 : 1;
        xs[S[i]] = sg[i] * mag;
    }
    Mat BS(m, k);
    for (Index i = 0; i < k; ++i)
        BS.col(i) = B.col(S[i]);
    Vec r = BS * (BS.transpose() * BS).ldlt().solve(lam * sg);
    Vec g = B.transpose() * r / lam;
    for (Index j = 0; j < n; ++j)
        if (xs[j] == 0 && std::abs(g[j]) > margin)
            return std::nullopt;
    ProblemSpec s;
    s.n = n;
    s.p = FunctionSpec(fn::L1{lam});
    s.f = FunctionSpec(fn::SquaredLoss{}, Vec(B * xs + r));
    s.B = LinearOperator::dense(B);
    return std::make_pair(std::move(s), xs);
}

void superlinear_tail(Outcome &o) {
    oracle::Rng rng(909);
    int made = 0;
    std::ostringstream tails;
    for (int attempt = 0; made < 5 && attempt < 200; ++attempt) {
        auto inst = sc_lasso(rng, 80, 200, 6, 0.8);
        if (!inst)
            continue;
        ++made;
        SolverConfig c;
        c.tol = 0;
        // stop well above the rounding floor of ||F|| so the ratios are meaningful
        c.f_tol = 1e-9;
        c.max_iter = 300;
        SolveReport r = solve(inst->first, c);
        const auto &T = r.trace;
        o.check(r.F_norm <= 1e-9, "instance did not converge");
        o.check((r.x - inst->second).norm() <= 1e-6 * (1 + inst->second.norm()), "planted solution not recovered");
        if (T.size() < 3) {
            o.check(false, "fewer than three steps");
            continue;
        }
        const std::size_t e = T.size();
        double q[3];
        for (int i = 0; i < 3; ++i)
            q[i] = T[e - 3 + i].F_next / T[e - 3 + i].F_norm;
        o.check(q[0] > q[1] && q[1] > q[2] && q[2] < 0.1, "tail ratios");
        tails << "(" << q[0] << ", " << q[1] << ", " << q[2] << ") ";
    }
    o.check(made == 5, "could not construct instances");
    o.note << made << " instances, last three ratios " << tails.str();
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome &)>>> criteria = {
        {"prox correctness", prox_correctness},
        {"jacobian suite", jacobian_suite},
        {"SOC barrier lemma", soc_barrier_lemma},
        {"spectral inverse algorithm", spectral_algorithm},
        {"fused factorization", fused_factorization},
        {"Newton system consistency", newton_consistency},
        {"end-to-end solves", end_to_end},
        {"globalization", globalization},
        {"superlinear tail", superlinear_tail},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(o);
        } catch (const std::exception &e) {
            o.ok = false;
            o.note << "exception: " << e.what();
        }
        failed += !o.ok;
        std::printf("%s %zu %s: %s (%.2f s)\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.note.str().c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
