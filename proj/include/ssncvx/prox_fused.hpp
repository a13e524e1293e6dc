#pragma once

// Fused lasso prox: lambda1 ||x||_1 + lambda2 sum |x_{i+1} - x_i|.
// prox = soft_{lambda1}(tv_{lambda2}(v)) where tv is 1-D total-variation
// denoising, solved exactly by Condat's direct algorithm.

#include "jacobian.hpp"

namespace ssncvx {

namespace fused {

/// argmin_x 1/2 ||x - y||^2 + lam * sum |x_{i+1} - x_i|.
inline Vec tv1d(const Vec &y, double lam) {
    const Index N = y.size();
    Vec x(N);
    if (N == 0)
        return x;
    if (lam <= 0) {
        x = y;
        return x;
    }
    Index k = 0, k0 = 0, kplus = 0, kminus = 0;
    double umin = lam, umax = -lam;
    double vmin = y[0] - lam, vmax = y[0] + lam;
    const double twolam = 2 * lam, minlam = -lam;
    for (;;) {
        while (k == N - 1) {
            if (umin < 0) {
                do
                    x[k0++] = vmin;
                while (k0 <= kminus);
                k = kminus = k0;
                vmin = y[k];
                umin = lam;
                umax = vmin + umin - vmax;
            } else if (umax > 0) {
                do
                    x[k0++] = vmax;
                while (k0 <= kplus);
                k = kplus = k0;
                vmax = y[k];
                umax = minlam;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / double(k - k0 + 1);
                do
                    x[k0++] = vmin;
                while (k0 <= k);
                return x;
            }
        }
        if ((umin += y[k + 1] - vmin) < minlam) {
            do
                x[k0++] = vmin;
            while (k0 <= kminus);
            k = kminus = kplus = k0;
            vmin = y[k];
            vmax = vmin + twolam;
            umin = lam;
            umax = minlam;
        } else if ((umax += y[k + 1] - vmax) > lam) {
            do
                x[k0++] = vmax;
            while (k0 <= kplus);
            k = kminus = kplus = k0;
            vmax = y[k];
            vmin = vmax - twolam;
            umin = lam;
            umax = minlam;
        } else {
            ++k;
            if (umin >= lam) {
                kminus = k;
                vmin += (umin - lam) / double(kminus - k0 + 1);
                umin = lam;
            }
            if (umax <= minlam) {
                kplus = k;
                vmax += (umax + lam) / double(kplus - k0 + 1);
                umax = minlam;
            }
        }
    }
}

/// Dual variable z with x_tv = v - F^T z, F the forward-difference matrix.
inline Vec tv_dual(const Vec &v, const Vec &xtv) {
    const Index n = v.size();
    Vec z(std::max<Index>(n - 1, 0));
    double c = 0;
    for (Index i = 0; i + 1 < n; ++i) {
        c += xtv[i] - v[i];
        z[i] = c;
    }
    return z;
}

struct Result {
    Vec prox, xtv, z;
};

/// Prox of t*(l1 ||.||_1 + l2 TV) with its Jacobian factors.
inline Result prox(const Vec &v, double l1, double l2, JacobianRep *J) {
    Result r;
    r.xtv = tv1d(v, l2);
    r.z = tv_dual(v, r.xtv);
    const Index n = v.size();
    r.prox.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double a = std::abs(r.xtv[i]);
        r.prox[i] = a > l1 ? (r.xtv[i] > 0 ? a - l1 : l1 - a) : 0.0;
    }
    if (J) {
        jac::FusedFactors F;
        F.n = n;
        const double tol2 = 1e-12 * (1 + l2), tol1 = 1e-12 * (1 + l1);
        Index start = 0;
        for (Index i = 1; i <= n; ++i) {
            const bool cut = i == n || l2 <= 0 || std::abs(r.xtv[i] - r.xtv[i - 1]) > tol2;
            if (cut) {
                F.segments.push_back({start, i - start, std::abs(r.xtv[start]) > l1 + tol1});
                start = i;
            }
        }
        *J = F;
    }
    return r;
}

} // namespace fused

/// Factor structure of the fused prox Jacobian at `v` (scale already applied
/// to the weights).
inline jac::FusedFactors fused_jacobian_factors(const Vec &v, double lambda1, double lambda2) {
    JacobianRep J;
    fused::prox(v, lambda1, lambda2, &J);
    return J.as<jac::FusedFactors>();
}

} // namespace ssncvx
