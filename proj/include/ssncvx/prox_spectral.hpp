#pragma once

// Spectral proximal maps on matrices stored column-major: nuclear norm,
// spectral norm and the PSD cone, with Hadamard-form Jacobians.

#include "jacobian.hpp"

#include <algorithm>
#include <numeric>

namespace ssncvx {

namespace spectral {

struct Svd {
    Mat U, V;
    Vec s;
};

/// Thin SVD of the a x b working matrix (a <= b): U a x a, V b x a.
inline Svd thin_svd(const Mat &W) {
    Eigen::BDCSVD<Mat> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.matrixV(), svd.singularValues()};
}

/// Working matrix (transposed when n1 > n2).
inline Mat work(const Vec &x, Index n1, Index n2, bool &transposed) {
    Eigen::Map<const Mat> X(x.data(), n1, n2);
    transposed = n1 > n2;
    return transposed ? Mat(X.transpose()) : Mat(X);
}

inline Vec flatten(const Mat &W, bool transposed) {
    Mat X = transposed ? Mat(W.transpose()) : W;
    return Eigen::Map<const Vec>(X.data(), X.size());
}

/// Prox of thr * ||X||_* and a Jacobian element.
inline Vec nuclear(const Vec &x, Index n1, Index n2, double thr, JacobianRep *J) {
    bool tr;
    Mat W = work(x, n1, n2, tr);
    auto [U, V, s] = thin_svd(W);
    const Index a = s.size();
    Vec f = (s.array() - thr).max(0.0).matrix();
    Mat P = U * f.asDiagonal() * V.transpose();
    if (J) {
        jac::Spectral S;
        S.n1 = n1;
        S.n2 = n2;
        S.transposed = tr;
        S.U = U;
        S.V = V;
        S.ds.resize(a, a);
        S.da.resize(a, a);
        S.d3.resize(W.cols() > a ? a : 0);
        auto above = [&](Index i) { return s[i] >= thr; };
        for (Index i = 0; i < a; ++i) {
            for (Index j = 0; j < a; ++j) {
                double ds;
                if (above(i) && above(j))
                    ds = 1;
                else if (!above(i) && !above(j))
                    ds = 0;
                else
                    ds = (f[i] - f[j]) / (s[i] - s[j]);
                S.ds(i, j) = ds;
                const double den = s[i] + s[j];
                S.da(i, j) = den > 0 ? (f[i] + f[j]) / den : 0.0;
            }
            if (above(i))
                S.alpha.push_back(i);
        }
        if (S.d3.size())
            for (Index i = 0; i < a; ++i)
                S.d3[i] = s[i] > 0 ? f[i] / s[i] : 0.0;
        *J = S;
    }
    return flatten(P, tr);
}

/// Prox of thr * ||.||_inf on a nonnegative vector: clip from above at t*.
/// Returns the clipped set through `clipped` (empty result -> all zero).
inline Vec linf_prox_nonneg(const Vec &s, double thr, std::vector<char> &clipped, bool &zero) {
    const Index a = s.size();
    clipped.assign(a, 0);
    zero = s.sum() <= thr;
    if (zero)
        return Vec::Zero(a);
    std::vector<Index> idx(a);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](Index i, Index j) { return s[i] > s[j]; });
    double cum = 0, tstar = 0;
    for (Index k = 0; k < a; ++k) {
        cum += s[idx[k]];
        const double t = (cum - thr) / double(k + 1);
        const double next = k + 1 < a ? s[idx[k + 1]] : -inf;
        if (t >= next) {
            tstar = t;
            break;
        }
    }
    Vec F(a);
    for (Index i = 0; i < a; ++i) {
        clipped[i] = s[i] > tstar;
        F[i] = std::min(s[i], tstar);
    }
    return F;
}

/// Prox of thr * ||X||_2 (largest singular value).
inline Vec spectral_norm(const Vec &x, Index n1, Index n2, double thr, JacobianRep *J) {
    bool tr;
    Mat W = work(x, n1, n2, tr);
    auto [U, V, s] = thin_svd(W);
    const Index a = s.size();
    std::vector<char> C;
    bool zero;
    Vec F = linf_prox_nonneg(s, thr, C, zero);
    Mat P = U * F.asDiagonal() * V.transpose();
    if (J) {
        jac::Spectral S;
        S.n1 = n1;
        S.n2 = n2;
        S.transposed = tr;
        S.U = U;
        S.V = V;
        S.ds = Mat::Zero(a, a);
        S.da = Mat::Zero(a, a);
        S.d3 = Vec::Zero(W.cols() > a ? a : 0);
        if (!zero) {
            Index nc = 0;
            for (char c : C)
                nc += c;
            Mat Fp = Mat::Zero(a, a);
            for (Index i = 0; i < a; ++i)
                for (Index j = 0; j < a; ++j) {
                    if (C[i] && C[j])
                        Fp(i, j) = 1.0 / double(nc);
                    else if (i == j)
                        Fp(i, j) = 1.0;
                }
            for (Index i = 0; i < a; ++i)
                for (Index j = 0; j < a; ++j) {
                    if (i == j)
                        continue;
                    if (s[i] != s[j])
                        S.ds(i, j) = (F[i] - F[j]) / (s[i] - s[j]);
                    else
                        S.ds(i, j) = Fp(i, i) - Fp(i, j);
                    const double den = s[i] + s[j];
                    S.da(i, j) = den > 0 ? (F[i] + F[j]) / den : Fp(i, i);
                }
            for (Index i = 0; i < a; ++i)
                S.ds(i, i) = Fp(i, i);
            for (Index i = 0; i < S.d3.size(); ++i)
                S.d3[i] = s[i] > 0 ? F[i] / s[i] : (C[i] ? 0.0 : 1.0);
            S.coupling = Fp;
            S.alpha.resize(a);
            std::iota(S.alpha.begin(), S.alpha.end(), 0);
        }
        *J = S;
    }
    return flatten(P, tr);
}

/// Projection onto symmetric PSD matrices (of the symmetric part of X).
inline Vec psd(const Vec &x, Index n, JacobianRep *J) {
    Eigen::Map<const Mat> X(x.data(), n, n);
    Mat Sx = 0.5 * (X + X.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(Sx);
    const Vec &lam = es.eigenvalues();
    const Mat &Q = es.eigenvectors();
    Vec f = lam.cwiseMax(0.0);
    Mat P = Q * f.asDiagonal() * Q.transpose();
    if (J) {
        jac::Spectral S;
        S.n1 = S.n2 = n;
        S.symmetric = true;
        S.U = Q;
        S.V = Q;
        S.ds.resize(n, n);
        S.da = Mat::Zero(n, n);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                const bool pi = lam[i] >= 0, pj = lam[j] >= 0;
                if (pi && pj)
                    S.ds(i, j) = 1;
                else if (!pi && !pj)
                    S.ds(i, j) = 0;
                else
                    S.ds(i, j) = (f[i] - f[j]) / (lam[i] - lam[j]);
            }
            if (lam[i] >= 0)
                S.alpha.push_back(i);
        }
        *J = S;
    }
    return Eigen::Map<const Vec>(P.data(), P.size());
}

} // namespace spectral

} // namespace ssncvx
