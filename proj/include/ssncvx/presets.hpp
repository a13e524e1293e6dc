#pragma once

// Seeded problem generators for the benchmark families.

#include "model.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

namespace ssncvx {

/// SplitMix64 with Box-Muller normals; bit-identical across platforms.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : s_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (s_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    /// Uniform in [0, 1).
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do
            u1 = uniform();
        while (u1 <= 0);
        const double u2 = uniform();
        const double r = std::sqrt(-2 * std::log(u1));
        spare_ = r * std::sin(2 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2 * M_PI * u2);
    }
    Index below(Index n) { return Index(next() % std::uint64_t(n)); }

    Vec normal_vec(Index n) {
        Vec v(n);
        for (Index i = 0; i < n; ++i)
            v[i] = normal();
        return v;
    }
    Mat normal_mat(Index r, Index c) {
        Mat M(r, c);
        for (Index j = 0; j < c; ++j)
            for (Index i = 0; i < r; ++i)
                M(i, j) = normal();
        return M;
    }

  private:
    std::uint64_t s_;
    double spare_ = 0;
    bool has_spare_ = false;
};

struct PresetParams {
    std::string name;
    std::uint64_t seed = 1;
    Index n = 0; ///< 0 selects the family default
    Index m = 0;
    double lambda = 0; ///< 0 selects the family rule
};

struct Preset {
    ProblemSpec spec;
    std::string name;
    Vec truth;          ///< generating signal, when meaningful
    Index rows = 0, cols = 0; ///< matrix shape for matrix families
};

inline const std::vector<std::string> &preset_names() {
    static const std::vector<std::string> names = {"lasso", "fused-lasso", "qp-portfolio", "socp", "spca", "lrmc"};
    return names;
}

namespace detail {

inline void cap(Index v, Index limit, const char *field) {
    if (v < 1 || v > limit)
        throw Error(Errc::SizeCap, field, std::to_string(v) + " outside [1, " + std::to_string(limit) + "]");
}

/// 1/2 ||Bx - b||^2 + g(x) with Gaussian B scaled by 1/sqrt(m).
inline ProblemSpec least_squares(SplitMix64 &rng, Index m, Index n, const Vec &x0, FunctionSpec g, Vec &b) {
    Mat B = rng.normal_mat(m, n) / std::sqrt(double(m));
    b = B * x0 + 0.01 * rng.normal_vec(m);
    ProblemSpec s;
    s.n = n;
    s.p = std::move(g);
    s.f = FunctionSpec(fn::SquaredLoss{}, b);
    s.B = LinearOperator::dense(std::move(B));
    return s;
}

inline Preset lasso(const PresetParams &P) {
    const Index m = P.m ? P.m : 200, n = P.n ? P.n : 1000;
    cap(m, 5000, "m");
    cap(n, 5000, "n");
    SplitMix64 rng(P.seed);
    Vec x0 = Vec::Zero(n);
    const Index k = std::max<Index>(1, n / 20);
    for (Index i = 0; i < k; ++i)
        x0[rng.below(n)] = rng.normal();
    Vec b;
    ProblemSpec s = least_squares(rng, m, n, x0, FunctionSpec(fn::L1{1}), b);
    const double lam = P.lambda > 0 ? P.lambda : 1e-3 * s.B.apply_adjoint(b).lpNorm<Eigen::Infinity>();
    s.p = FunctionSpec(fn::L1{lam});
    return {std::move(s), "lasso", x0};
}

inline Preset fused_lasso(const PresetParams &P) {
    const Index m = P.m ? P.m : 200, n = P.n ? P.n : 500;
    cap(m, 5000, "m");
    cap(n, 5000, "n");
    SplitMix64 rng(P.seed);
    // piecewise-constant signal with a few nonzero plateaus
    Vec x0 = Vec::Zero(n);
    const Index blocks = std::max<Index>(1, n / 50);
    for (Index j = 0; j < blocks; ++j) {
        const Index start = rng.below(n), len = 1 + rng.below(std::max<Index>(1, n / 25));
        const double h = rng.normal();
        for (Index i = start; i < std::min(n, start + len); ++i)
            x0[i] = h;
    }
    Vec b;
    ProblemSpec s = least_squares(rng, m, n, x0, FunctionSpec(fn::L1{1}), b);
    const double l1 = P.lambda > 0 ? P.lambda : 1e-3 * s.B.apply_adjoint(b).lpNorm<Eigen::Infinity>();
    s.p = FunctionSpec(fn::Fused{l1, 5 * l1});
    return {std::move(s), "fused-lasso", x0};
}

/// min 1/2 <x, Qx> + <c, x>, e^T x = 1, x >= 0 with Q = 2 (cov(F') + D).
inline Preset qp_portfolio(const PresetParams &P) {
    const Index n = P.n ? P.n : 512;
    cap(n, 5000, "n");
    SplitMix64 rng(P.seed);
    const Index p = std::max<Index>(2, Index(0.01 * double(n)));
    // sparse normal factor with density 0.1
    Mat F = Mat::Zero(n, p);
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < n; ++i)
            if (rng.uniform() < 0.1)
                F(i, j) = rng.normal();
    // cov(F'): observations are the p columns of F, variables its n rows
    Vec mean = F.rowwise().mean();
    Mat C = F.colwise() - mean;
    Mat Q = (C * C.transpose()) / double(p - 1);
    for (Index i = 0; i < n; ++i)
        Q(i, i) += std::sqrt(double(p)) * rng.uniform();
    Q *= 2;
    ProblemSpec s;
    s.n = n;
    s.p = FunctionSpec(fn::Zero{});
    s.Q = LinearOperator::dense(std::move(Q));
    s.c = rng.normal_vec(n);
    s.A = LinearOperator::dense(Mat::Ones(1, n));
    s.P2 = BoxSet::point(Vec::Ones(1));
    s.P1 = BoxSet::nonneg(n);
    s.trust_psd = true; // PSD by construction
    return {std::move(s), "qp-portfolio", {}};
}

/// min <c, x>, Ax = b, x in a product of second-order cones, with strictly
/// feasible primal and dual points by construction.
inline Preset socp(const PresetParams &P) {
    const Index cones = P.n ? P.n : 5, m = P.m ? P.m : 20;
    const Index d = 10;
    cap(cones, 500, "n");
    cap(m, 5000, "m");
    const Index n = cones * d;
    SplitMix64 rng(P.seed);
    Mat A = rng.normal_mat(m, n);
    Vec x0(n), s0(n);
    for (Index k = 0; k < cones; ++k) {
        for (Vec *v : {&x0, &s0}) {
            Vec bar = rng.normal_vec(d - 1);
            v->segment(k * d + 1, d - 1) = bar;
            (*v)[k * d] = bar.norm() + 1 + rng.uniform();
        }
    }
    Vec y0 = rng.normal_vec(m);
    ProblemSpec s;
    s.n = n;
    s.p = FunctionSpec(fn::SocIndicator{std::vector<Index>(cones, d)});
    s.c = A.transpose() * y0 + s0;
    s.P2 = BoxSet::point(A * x0);
    s.A = LinearOperator::dense(std::move(A));
    return {std::move(s), "socp", x0};
}

/// min -<L, X> + lambda ||X||_1, Tr X = 1, X psd, with L = u u^T / ||u|| + V V^T.
inline Preset spca(const PresetParams &P) {
    const Index n = P.n ? P.n : 64;
    cap(n, 256, "n");
    SplitMix64 rng(P.seed);
    Vec u(n);
    for (Index i = 0; i < n; ++i)
        u[i] = 1.0 / double(i + 1);
    Mat V(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i)
            V(i, j) = rng.uniform();
    Mat Lm = u * u.transpose() / u.norm() + V * V.transpose();
    const double lam = P.lambda > 0 ? P.lambda : 1.0;
    ProblemSpec s;
    s.n = n * n;
    s.p = FunctionSpec(fn::Psd{n});
    s.f = FunctionSpec(fn::L1{lam});
    s.B = LinearOperator::identity(n * n);
    s.c = -Eigen::Map<const Vec>(Lm.data(), n * n);
    SpMat A(1, n * n);
    std::vector<Eigen::Triplet<double>> t;
    for (Index i = 0; i < n; ++i)
        t.emplace_back(0, i * n + i, 1.0);
    A.setFromTriplets(t.begin(), t.end());
    s.A = LinearOperator::sparse(std::move(A));
    s.P2 = BoxSet::point(Vec::Ones(1));
    return {std::move(s), "spca", {}, n, n};
}

/// min 1/2 ||P_Omega(X) - b||^2 + lambda ||X||_* on a random rank-r matrix.
inline Preset lrmc(const PresetParams &P) {
    const Index n = P.n ? P.n : 64, r = P.m ? P.m : 3;
    cap(n, 256, "n");
    cap(r, n, "m");
    SplitMix64 rng(P.seed);
    Mat M = rng.normal_mat(n, r) * rng.normal_mat(r, n);
    std::vector<Index> idx(n * n);
    std::iota(idx.begin(), idx.end(), 0);
    for (Index i = Index(idx.size()) - 1; i > 0; --i) // Fisher-Yates
        std::swap(idx[i], idx[rng.below(i + 1)]);
    idx.resize(idx.size() / 2);
    std::sort(idx.begin(), idx.end());
    const Index l = Index(idx.size());
    SpMat B(l, n * n);
    std::vector<Eigen::Triplet<double>> t;
    Vec b(l);
    for (Index k = 0; k < l; ++k) {
        t.emplace_back(k, idx[k], 1.0);
        b[k] = M.data()[idx[k]];
    }
    B.setFromTriplets(t.begin(), t.end());
    Eigen::JacobiSVD<Mat> svd(M);
    const double lam = P.lambda > 0 ? P.lambda : 1e-2 * svd.singularValues()[0];
    ProblemSpec s;
    s.n = n * n;
    s.p = FunctionSpec(fn::Nuclear{lam, n, n});
    s.f = FunctionSpec(fn::SquaredLoss{}, b);
    s.B = LinearOperator::sparse(std::move(B));
    return {std::move(s), "lrmc", Eigen::Map<const Vec>(M.data(), n * n), n, n};
}

} // namespace detail

inline Preset generate_preset(const PresetParams &P) {
    if (P.name == "lasso")
        return detail::lasso(P);
    if (P.name == "fused-lasso")
        return detail::fused_lasso(P);
    if (P.name == "qp-portfolio")
        return detail::qp_portfolio(P);
    if (P.name == "socp")
        return detail::socp(P);
    if (P.name == "spca")
        return detail::spca(P);
    if (P.name == "lrmc")
        return detail::lrmc(P);
    throw Error(Errc::UnknownPreset, "preset", "unknown preset '" + P.name + "'");
}

} // namespace ssncvx
