#pragma once

#include "jacobian.hpp"
#include "prox_fused.hpp"
#include "prox_soc.hpp"
#include "prox_spectral.hpp"

namespace ssncvx {

struct ProxEval {
    Vec point;
    double scale;
    Vec prox;
    double envelope;
    JacobianRep jac;
};

namespace detail {

inline Vec soft(const Vec &x, double thr) {
    return x.unaryExpr([thr](double v) { return v > thr ? v - thr : (v < -thr ? v + thr : 0.0); });
}

inline void check_dim(const FunctionSpec &g, const Vec &x) {
    if (auto d = g.fixed_dim(); d && *d != x.size()) {
        const bool matrix = std::holds_alternative<fn::Nuclear>(g.kind) ||
                            std::holds_alternative<fn::Spectral>(g.kind) || std::holds_alternative<fn::Psd>(g.kind);
        throw Error(matrix ? Errc::ShapeMismatch : Errc::DimensionMismatch, g.name(),
                    "input length " + std::to_string(x.size()) + " != " + std::to_string(*d));
    }
}

/// prox of t * g (unshifted) at x; fills J when non-null.
inline Vec prox_unshifted(const FunctionSpec &g, double t, const Vec &x, JacobianRep *J) {
    check_dim(g, x);
    const Index n = x.size();
    return std::visit(
        [&](const auto &k) -> Vec {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, fn::Zero>) {
                if (J)
                    *J = jac::Diagonal{Vec::Ones(n)};
                return x;
            } else if constexpr (std::is_same_v<K, fn::L1>) {
                const double thr = t * k.lambda;
                if (J)
                    *J = jac::Diagonal{x.unaryExpr([thr](double v) { return std::abs(v) > thr ? 1.0 : 0.0; })};
                return soft(x, thr);
            } else if constexpr (std::is_same_v<K, fn::L2Norm>) {
                const double thr = t * k.lambda, nx = x.norm();
                if (nx <= thr) {
                    if (J)
                        *J = jac::SocBlockList{n, {{0, n, jac::ScaledIdentity{0.0}}}};
                    return Vec::Zero(n);
                }
                if (J)
                    *J = jac::SocBlockList{n, {{0, n, jac::RankOne{1.0 - thr / nx, thr / nx, x / nx}}}};
                return (1.0 - thr / nx) * x;
            } else if constexpr (std::is_same_v<K, fn::L2Ball>) {
                const double nx = x.norm();
                if (nx <= k.radius) {
                    if (J)
                        *J = jac::SocBlockList{n, {{0, n, jac::ScaledIdentity{1.0}}}};
                    return x;
                }
                const double q = k.radius / nx;
                if (J)
                    *J = jac::SocBlockList{n, {{0, n, jac::RankOne{q, -q, x / nx}}}};
                return q * x;
            } else if constexpr (std::is_same_v<K, fn::Box>) {
                if (J)
                    *J = jac::Diagonal{k.set.project_jacobian(x)};
                return k.set.project(x);
            } else if constexpr (std::is_same_v<K, fn::SocIndicator>) {
                Vec y(n);
                jac::SocBlockList L{n, {}};
                Index off = 0;
                for (Index d : k.dims) {
                    jac::Block b{};
                    y.segment(off, d) = soc::project(x.segment(off, d), J ? &b : nullptr, off);
                    if (J)
                        L.blocks.push_back(std::move(b));
                    off += d;
                }
                if (J)
                    *J = std::move(L);
                return y;
            } else if constexpr (std::is_same_v<K, fn::SocBarrier>) {
                if (J)
                    *J = soc_barrier_jacobian(t * k.mu, x, k.dims);
                return soc_barrier_prox(t * k.mu, x, k.dims);
            } else if constexpr (std::is_same_v<K, fn::Nuclear>) {
                return spectral::nuclear(x, k.n1, k.n2, t * k.lambda, J);
            } else if constexpr (std::is_same_v<K, fn::Spectral>) {
                return spectral::spectral_norm(x, k.n1, k.n2, t * k.lambda, J);
            } else if constexpr (std::is_same_v<K, fn::Psd>) {
                return spectral::psd(x, k.n, J);
            } else if constexpr (std::is_same_v<K, fn::Fused>) {
                return fused::prox(x, t * k.lambda1, t * k.lambda2, J).prox;
            } else if constexpr (std::is_same_v<K, fn::SquaredLoss>) {
                if (J)
                    *J = jac::Diagonal{Vec::Constant(n, 1.0 / (1.0 + t))};
                return x / (1.0 + t);
            } else {
                Vec y(n);
                jac::Composite C{n, {}};
                for (const auto &p : k.pieces) {
                    JacobianRep sub;
                    Vec xs = x.segment(p.offset, p.length);
                    if (p.fn->shift)
                        xs -= *p.fn->shift;
                    Vec ys = prox_unshifted(*p.fn, t, xs, J ? &sub : nullptr);
                    if (p.fn->shift)
                        ys += *p.fn->shift;
                    y.segment(p.offset, p.length) = ys;
                    if (J)
                        C.parts.emplace_back(p.offset, std::make_shared<const JacobianRep>(std::move(sub)));
                }
                if (J)
                    *J = std::move(C);
                return y;
            }
        },
        g.kind);
}

} // namespace detail

/// prox_{t g}(x), shift included: b + prox_{t g0}(x - b).
inline Vec prox(const FunctionSpec &g, double t, const Vec &x, JacobianRep *J = nullptr) {
    if (!(t > 0))
        throw Error(Errc::InvalidArgument, "t", "prox scale must be positive");
    if (g.shift) {
        if (g.shift->size() != x.size())
            throw Error(Errc::DimensionMismatch, "shift", "length differs from input");
        return *g.shift + detail::prox_unshifted(g, t, x - *g.shift, J);
    }
    return detail::prox_unshifted(g, t, x, J);
}

inline ProxEval prox_eval(const FunctionSpec &g, double t, const Vec &x) {
    ProxEval e;
    e.point = x;
    e.scale = t;
    e.prox = prox(g, t, x, &e.jac);
    e.envelope = function_value(g, e.prox) + (e.prox - x).squaredNorm() / (2 * t);
    return e;
}

// ---------------------------------------------------------------------------
// Derived operators
// ---------------------------------------------------------------------------

namespace detail {

/// Closed forms for D = diag(a0, a1 I) + a u u^T with Lambda1 = (1 + sigma tau) I - Lambda:
///   (D^tau)^{-1} = sigma (Lambda1^{-1} + c Lambda1^{-1} u u^T Lambda1^{-1}),
///   Dbar = sigma (Lambda~ + diag((b0 - b1^2/b2) u0^2, 0)) + sigma b2 u~ u~^T.
/// Returns nullopt when the rank-one part degenerates (b2 == 0 with ubar != 0).
inline std::optional<TermList> arrow_closed_form(const jac::DiagPlusRankOne &r, Index n, OpKind k,
                                                 const OpScalars &s) {
    const double sg = s.sigma, st = s.sigma * s.tau;
    const double l0 = 1 + st - r.a0, l1 = 1 + st - r.a1; // Lambda1
    Vec Mu = r.u;
    Mu[0] /= l0;
    Mu.tail(n - 1) /= l1;
    const double gamma = r.u.dot(Mu);
    const double c = r.a / (1 - r.a * gamma);
    TermList t;
    t.diag.resize(n);
    if (k == OpKind::tau_inv) {
        t.diag[0] = sg / l0;
        t.diag.tail(n - 1).setConstant(sg / l1);
        t.rank_one.push_back({0, Mu, sg * c});
        return t;
    }
    if (k != OpKind::bar)
        return std::nullopt;
    const double c0 = r.a0 / l0, c1 = r.a1 / l1;
    const double kk = r.a + r.a * r.a * gamma + r.a * r.a * c * gamma * gamma;
    const double w = r.a * (1 + c * gamma);
    const double b0 = c * c0 * c0 + 2 * w * c0 + kk;
    const double b1 = c * c0 * c1 + w * (c0 + c1) + kk;
    const double b2 = c * c1 * c1 + 2 * w * c1 + kk;
    const double u0 = r.u[0];
    const double nb = n > 1 ? r.u.tail(n - 1).norm() : 0.0;
    t.diag[0] = sg * (r.a0 * c0 + r.a0);
    t.diag.tail(n - 1).setConstant(sg * (r.a1 * c1 + r.a1));
    if (nb == 0 || n == 1) {
        t.diag[0] += sg * b0 * u0 * u0;
        return t;
    }
    if (std::abs(b2) <= 1e-300)
        return std::nullopt;
    t.diag[0] += sg * (b0 - b1 * b1 / b2) * u0 * u0;
    Vec ut = r.u;
    ut[0] = b1 / b2 * u0;
    t.rank_one.push_back({0, ut, sg * b2});
    return t;
}

} // namespace detail

/// (D^tau)^{-1}, Dbar and D (D^tau)^{-1} for one Jacobian element.
class DerivedOps {
  public:
    DerivedOps() = default;
    DerivedOps(std::shared_ptr<const JacobianRep> jac, double sigma, double tau)
        : jac_(std::move(jac)), s_{sigma, tau} {
        if (!(sigma > 0) || !(tau > 0))
            throw Error(Errc::InvalidArgument, "sigma,tau", "must be positive");
        bar_terms_ = build_terms(OpKind::bar);
        tinv_terms_ = build_terms(OpKind::tau_inv);
    }

    double sigma() const { return s_.sigma; }
    double tau() const { return s_.tau; }
    const JacobianRep &jac() const { return *jac_; }
    Index dim() const { return jac_->dim(); }

    Vec apply_d(const Vec &x) const { return jac_->apply(x); }
    Vec dtau_inv(const Vec &x) const {
        if (tinv_terms_)
            return tinv_terms_->apply(x);
        return jac_->apply_op(OpKind::tau_inv, s_, x);
    }
    Vec dbar(const Vec &x) const {
        if (bar_terms_)
            return bar_terms_->apply(x);
        return jac_->apply_op(OpKind::bar, s_, x);
    }
    /// D (D^tau)^{-1} x.
    Vec d_dtau_inv(const Vec &x) const {
        if (jac_->is<jac::SocBlockList>())
            return jac_->apply(dtau_inv(x));
        return jac_->apply_op(OpKind::d_tau_inv, s_, x);
    }

    /// Dbar as diagonal + low-rank terms (absent for spectral parts).
    const std::optional<TermList> &dbar_terms() const { return bar_terms_; }
    Vec dbar_diagonal() const {
        if (bar_terms_)
            return bar_terms_->diagonal();
        return jac_->diagonal_fn([&](double d) { return s_(OpKind::bar, d); });
    }

    Mat dbar_dense() const { return materialize([&](const Vec &e) { return dbar(e); }); }
    Mat dtau_inv_dense() const { return materialize([&](const Vec &e) { return dtau_inv(e); }); }

  private:
    template <class F>
    Mat materialize(F &&f) const {
        const Index n = dim();
        Mat M(n, n);
        for (Index j = 0; j < n; ++j)
            M.col(j) = f(Vec::Unit(n, j));
        return M;
    }

    std::optional<TermList> build_terms(OpKind k) const {
        auto h = [&](double d) { return s_(k, d); };
        if (jac_->is<jac::SocBlockList>()) {
            const auto &L = jac_->as<jac::SocBlockList>();
            TermList t;
            t.diag = Vec::Zero(L.dim);
            for (const auto &b : L.blocks) {
                std::optional<TermList> sub;
                if (const auto *ar = std::get_if<jac::DiagPlusRankOne>(&b.rep))
                    sub = detail::arrow_closed_form(*ar, b.len, k, s_);
                if (!sub) {
                    jac::SocBlockList one{b.len, {{0, b.len, b.rep}}};
                    sub = JacobianRep(one).terms_opt(h);
                }
                t.append(*sub, b.offset);
            }
            return t;
        }
        if (jac_->is<jac::Spectral>())
            return std::nullopt;
        return jac_->terms_opt(h);
    }

    std::shared_ptr<const JacobianRep> jac_;
    OpScalars s_;
    std::optional<TermList> bar_terms_, tinv_terms_;
};

namespace detail {
inline bool compatible(const FunctionSpec &g, const JacobianRep &J) {
    return std::visit(
        [&](const auto &k) -> bool {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, fn::Nuclear> || std::is_same_v<K, fn::Spectral> ||
                          std::is_same_v<K, fn::Psd>)
                return J.is<jac::Spectral>() || J.is<jac::Dense>();
            else if constexpr (std::is_same_v<K, fn::Fused>)
                return J.is<jac::FusedFactors>() || J.is<jac::Dense>();
            else if constexpr (std::is_same_v<K, fn::SocIndicator> || std::is_same_v<K, fn::SocBarrier> ||
                               std::is_same_v<K, fn::L2Norm> || std::is_same_v<K, fn::L2Ball>)
                return J.is<jac::SocBlockList>() || J.is<jac::Dense>();
            else if constexpr (std::is_same_v<K, fn::Composite>)
                return J.is<jac::Composite>() || J.is<jac::Dense>();
            else
                return J.is<jac::Diagonal>() || J.is<jac::Dense>();
        },
        g.kind);
}
} // namespace detail

inline DerivedOps derived_ops(const FunctionSpec &kind, std::shared_ptr<const JacobianRep> jac, double sigma,
                              double tau) {
    if (!detail::compatible(kind, *jac))
        throw Error(Errc::StructureMismatch, kind.name(), "Jacobian representation does not match the kind");
    return DerivedOps(std::move(jac), sigma, tau);
}

} // namespace ssncvx
