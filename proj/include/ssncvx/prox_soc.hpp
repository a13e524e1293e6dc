#pragma once

// Second-order cone Q^n = {(x0, xbar) : x0 >= ||xbar||}: projection, the
// log-barrier prox of mu * (-1/2 log det x), and their Jacobians.

#include "jacobian.hpp"

namespace ssncvx {

namespace soc {

inline double det(const Vec &x) {
    const double x0 = x[0], nb = x.tail(x.size() - 1).norm();
    return (x0 - nb) * (x0 + nb);
}

/// x^{-1} = (x0, -xbar) / det(x).
inline Vec inverse(const Vec &x) {
    Vec r = -x;
    r[0] = x[0];
    return r / det(x);
}

/// Projection of one cone block and its Jacobian element.
inline Vec project(const Vec &z, jac::Block *jb = nullptr, Index offset = 0) {
    const Index n = z.size();
    const double z0 = z[0];
    const double nb = n > 1 ? z.tail(n - 1).norm() : 0.0;
    if (nb <= z0) {
        if (jb)
            *jb = {offset, n, jac::ScaledIdentity{1.0}};
        return z;
    }
    if (nb <= -z0) {
        if (jb)
            *jb = {offset, n, jac::ScaledIdentity{0.0}};
        return Vec::Zero(n);
    }
    Vec zh = z.tail(n - 1) / nb;
    Vec x(n);
    const double s = 0.5 * (z0 + nb);
    x[0] = s;
    x.tail(n - 1) = s * zh;
    if (jb) {
        const double theta = 0.5 * (1.0 + z0 / nb);
        Mat q(n, 2);
        q(0, 0) = q(0, 1) = 1.0 / std::sqrt(2.0);
        q.col(0).tail(n - 1) = zh / std::sqrt(2.0);
        q.col(1).tail(n - 1) = -zh / std::sqrt(2.0);
        *jb = {offset, n, jac::LowRank{theta, std::move(q), Eigen::Vector2d(1.0, 0.0)}};
    }
    return x;
}

/// Scalars of the barrier prox of one cone: x0, xbar = t * zbar, and
/// rho = mu / det(x), evaluated without cancellation in either sign of z0.
struct BarrierPoint {
    double x0, t, rho;
};

inline BarrierPoint barrier_point(double mu, const Vec &z) {
    const Index n = z.size();
    const double z0 = z[0];
    const double nb2 = n > 1 ? z.tail(n - 1).squaredNorm() : 0.0;
    const double N = z0 * z0 + nb2;
    const double dz = z0 * z0 - nb2;
    const double Delta = std::sqrt(dz * dz + 8 * mu * N + 16 * mu * mu);
    // E = Delta - det(z)
    const double E = dz <= 0 ? Delta - dz : (8 * mu * N + 16 * mu * mu) / (Delta + dz);
    const double S = std::sqrt(0.5 * (N + 4 * mu + Delta));
    const double W = 0.5 * (E + 4 * mu); // S^2 - z0^2
    BarrierPoint p;
    if (z0 >= 0) {
        p.x0 = 0.5 * (z0 + S);
        p.t = 0.5 * (1.0 + z0 / S);
        p.rho = W / ((S + z0) * (S + z0));
    } else {
        p.x0 = 0.5 * W / (S - z0);
        p.t = 0.5 * W / (S * (S - z0));
        p.rho = (S - z0) * (S - z0) / W;
    }
    return p;
}

inline Vec barrier_prox_cone(double mu, const Vec &z) {
    const auto p = barrier_point(mu, z);
    Vec x = p.t * z;
    x[0] = p.x0;
    return x;
}

/// Jacobian of the barrier prox of one cone. x shares the spectral frame of z
/// with eigenvalues x_i - mu / x_i = lambda_i(z), so J has eigenvalues
/// x_i^2 / (x_i^2 + mu) on (1, -+u) / sqrt(2) and x_1 x_2 / (x_1 x_2 + mu) on
/// the rest. The diag + rank-one form
/// Lambda^{-1} - 2 mu Lambda^{-1} v v^T Lambda^{-1} / (1 + 2 mu v^T Lambda^{-1} v)
/// with Lambda = diag(1 - rho, (1 + rho) I), v = x^{-1} is returned unless it is
/// singular (rho near 1) or recovers a small eigenvalue by cancellation.
inline jac::Block barrier_jacobian_cone(double mu, const Vec &z, Index offset) {
    const Index n = z.size();
    auto root = [mu](double l) {
        const double q = std::sqrt(l * l + 4 * mu);
        return l >= 0 ? 0.5 * (l + q) : 2 * mu / (q - l);
    };
    auto coef = [mu](double xx) { return xx / (xx + mu); };
    const double nb = n > 1 ? z.tail(n - 1).norm() : 0.0;
    if (nb == 0) {
        const double x = root(z[0]);
        return {offset, n, jac::ScaledIdentity{coef(x * x)}};
    }
    const double x1 = root(z[0] - nb), x2 = root(z[0] + nb);
    const double e1 = coef(x1 * x1), e2 = coef(x2 * x2), ea = coef(x1 * x2);
    const auto p = barrier_point(mu, z);
    const double rho = p.rho;
    if (std::abs(1.0 - rho) >= 1e-2 && std::min({e1, e2, ea}) >= 1e-2) {
        Vec x = p.t * z;
        x[0] = p.x0;
        const double detx = mu / rho;
        Vec v = -x / detx;
        v[0] = x[0] / detx;
        jac::DiagPlusRankOne d;
        d.a0 = 1.0 / (1.0 - rho);
        d.a1 = 1.0 / (1.0 + rho);
        d.u = v;
        d.u[0] *= d.a0;
        d.u.tail(n - 1) *= d.a1;
        d.a = -2 * mu / (1.0 + 2 * mu * v.dot(d.u));
        return {offset, n, d};
    }
    Mat q(n, 2);
    q(0, 0) = q(0, 1) = 1.0 / std::sqrt(2.0);
    q.col(0).tail(n - 1) = -z.tail(n - 1) / (nb * std::sqrt(2.0));
    q.col(1).tail(n - 1) = z.tail(n - 1) / (nb * std::sqrt(2.0));
    return {offset, n, jac::LowRank{ea, std::move(q), Eigen::Vector2d(e1, e2)}};
}

} // namespace soc

/// Barrier prox over a product of cones.
inline Vec soc_barrier_prox(double mu, const Vec &z, const std::vector<Index> &dims) {
    Vec x(z.size());
    Index off = 0;
    for (Index d : dims) {
        x.segment(off, d) = soc::barrier_prox_cone(mu, z.segment(off, d));
        off += d;
    }
    return x;
}

inline JacobianRep soc_barrier_jacobian(double mu, const Vec &z, const std::vector<Index> &dims) {
    jac::SocBlockList L{z.size(), {}};
    Index off = 0;
    for (Index d : dims) {
        L.blocks.push_back(soc::barrier_jacobian_cone(mu, z.segment(off, d), off));
        off += d;
    }
    return L;
}

} // namespace ssncvx
