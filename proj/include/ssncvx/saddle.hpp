#pragma once

// Saddle variable w = (y, z, r, v | x1, x2, x3, x4), the residual map F(w)
// and the KKT accuracy measures.
//
// With L w1 = A^T y + B^T z + r - Q v and u = x4 + sigma (L w1 - c):
//   F_y  = A P - Pi_P2(x1 - sigma y)        F_x1 = (x1 - Pi_P2(x1 - sigma y)) / sigma
//   F_z  = B P - pi_f                        F_x2 = (x2 - pi_f) / sigma
//   F_r  = P - Pi_P1(x3 - sigma r)           F_x3 = (x3 - Pi_P1(x3 - sigma r)) / sigma
//   F_v  = -Q P + Q v                        F_x4 = (x4 - P) / sigma
// where P = prox_{sigma p}(u) and pi_f = prox_{sigma f}(x2 - sigma z), shifts
// included (g(. - b) has prox b + prox_g(. - b)). For SquaredLoss f the x2 slot
// is absent and F_z = B P - (grad f*(-z) + b2) = B P + z - b2.

#include "prox.hpp"

namespace ssncvx {

struct IterateW {
    VariableLayout layout;
    Vec w;
    double sigma = 1;

    static IterateW zeros(const VariableLayout &L, double sigma) { return {L, Vec::Zero(L.total), sigma}; }

    auto slot(Slot s) { return w.segment(layout.off(s), layout.size(s)); }
    auto slot(Slot s) const { return w.segment(layout.off(s), layout.size(s)); }
    auto w1() const { return w.head(layout.n1); }
    auto w2() const { return w.tail(layout.total - layout.n1); }

    void check_finite() const {
        for (int i = 0; i < num_slots; ++i)
            if (layout.has(Slot(i)) && !slot(Slot(i)).allFinite())
                throw Error(Errc::InvalidArgument, slot_names[i], "non-finite entries in iterate");
    }
};

struct KktResiduals {
    double eta_P = 0, eta_D = 0, eta_K = 0, eta_Pset = 0, eta_gap = 0, eta_max = 0;
    double pobj = 0, dobj = 0;
};

/// Everything computed while evaluating F at one iterate.
struct SaddleEval {
    double sigma = 1;
    Vec F;
    Vec Lw1;       ///< A^T y + B^T z + r - Q v
    Vec u, x;      ///< prox argument and primal point prox_{sigma p}(u)
    Vec pi2, pif, pi1;
    std::shared_ptr<const JacobianRep> Dp, D2, Df, D1;

    auto block(const VariableLayout &L, Slot s) const { return F.segment(L.off(s), L.size(s)); }
};

namespace detail {
inline void check_layout(const VariableLayout &L, const IterateW &w) {
    if (!(w.layout == L) || w.w.size() != L.total)
        throw Error(Errc::LayoutMismatch, "w", "iterate layout differs from the problem layout");
    if (!(w.sigma > 0))
        throw Error(Errc::InvalidArgument, "sigma", "must be positive");
}

inline std::shared_ptr<const JacobianRep> share(JacobianRep J) {
    return std::make_shared<const JacobianRep>(std::move(J));
}
} // namespace detail

/// L w1 = A^T y + B^T z + r - Q v (present slots only); w1 has size L.n1.
inline Vec apply_L(const ProblemSpec &s, const VariableLayout &L, const Eigen::Ref<const Vec> &w1) {
    Vec out = Vec::Zero(s.n);
    auto seg = [&](Slot k) { return Vec(w1.segment(L.off(k), L.size(k))); };
    if (L.has_y)
        out += s.A.apply_adjoint(seg(Slot::y));
    if (L.has_z)
        out += s.B.apply_adjoint(seg(Slot::z));
    if (L.has_r)
        out += seg(Slot::r);
    if (L.has_v)
        out -= s.Q.apply(seg(Slot::v));
    return out;
}

/// L^T x = (A x; B x; x; -Q x) restricted to present slots.
inline Vec apply_Lt(const ProblemSpec &s, const VariableLayout &L, const Vec &x) {
    Vec out(L.n1);
    if (L.has_y)
        out.segment(L.off(Slot::y), L.size(Slot::y)) = s.A.apply(x);
    if (L.has_z)
        out.segment(L.off(Slot::z), L.size(Slot::z)) = s.B.apply(x);
    if (L.has_r)
        out.segment(L.off(Slot::r), L.size(Slot::r)) = x;
    if (L.has_v)
        out.segment(L.off(Slot::v), L.size(Slot::v)) = -s.Q.apply(x);
    return out;
}

inline SaddleEval evaluate(const ProblemSpec &s, const VariableLayout &L, const IterateW &w, bool want_jac) {
    detail::check_layout(L, w);
    const double sg = w.sigma;
    SaddleEval e;
    e.sigma = sg;
    e.F.resize(L.total);
    e.Lw1 = apply_L(s, L, w.w1());
    e.u = w.slot(Slot::x4) + sg * (e.Lw1 - s.c);
    JacobianRep J;
    e.x = prox(s.p, sg, e.u, want_jac ? &J : nullptr);
    if (want_jac)
        e.Dp = detail::share(std::move(J));
    auto put = [&](Slot k, const Vec &v) { e.F.segment(L.off(k), L.size(k)) = v; };

    if (L.has_y) {
        if (L.has_x1) {
            Vec arg = w.slot(Slot::x1) - sg * w.slot(Slot::y);
            e.pi2 = s.P2.project(arg);
            if (want_jac)
                e.D2 = detail::share(jac::Diagonal{s.P2.project_jacobian(arg)});
            put(Slot::x1, (w.slot(Slot::x1) - e.pi2) / sg);
        } else {
            e.pi2 = s.P2.lower;
        }
        put(Slot::y, s.A.apply(e.x) - e.pi2);
    }
    if (L.has_z) {
        Vec Bx = s.B.apply(e.x);
        if (L.has_x2) {
            Vec arg = w.slot(Slot::x2) - sg * w.slot(Slot::z);
            e.pif = prox(*s.f, sg, arg, want_jac ? &J : nullptr);
            if (want_jac)
                e.Df = detail::share(std::move(J));
            put(Slot::x2, (w.slot(Slot::x2) - e.pif) / sg);
        } else {
            // SquaredLoss: grad f*(-z) + b2 = b2 - z
            e.pif = -w.slot(Slot::z);
            if (s.f->shift)
                e.pif += *s.f->shift;
        }
        put(Slot::z, Bx - e.pif);
    }
    if (L.has_r) {
        Vec arg = w.slot(Slot::x3) - sg * w.slot(Slot::r);
        e.pi1 = s.P1.project(arg);
        if (want_jac)
            e.D1 = detail::share(jac::Diagonal{s.P1.project_jacobian(arg)});
        put(Slot::r, e.x - e.pi1);
        put(Slot::x3, (w.slot(Slot::x3) - e.pi1) / sg);
    }
    if (L.has_v)
        put(Slot::v, s.Q.apply(Vec(w.slot(Slot::v) - e.x)));
    put(Slot::x4, (w.slot(Slot::x4) - e.x) / sg);
    return e;
}

inline Vec residual_F(const ProblemSpec &s, const VariableLayout &L, const IterateW &w) {
    return evaluate(s, L, w, false).F;
}

/// x = prox_{sigma p}(x4 + sigma (L w1 - c)).
inline Vec recover_primal(const ProblemSpec &s, const VariableLayout &L, const IterateW &w) {
    detail::check_layout(L, w);
    Vec u = w.slot(Slot::x4) + w.sigma * (apply_L(s, L, w.w1()) - s.c);
    return prox(s.p, w.sigma, u);
}

/// Matrix-free J d, J the generalized Jacobian of F built from e's elements.
inline Vec apply_jacobian(const ProblemSpec &s, const VariableLayout &L, const SaddleEval &e, const Vec &d) {
    const double sg = e.sigma;
    Vec out(L.total);
    auto seg = [&](Slot k) { return Vec(d.segment(L.off(k), L.size(k))); };
    auto put = [&](Slot k, const Vec &v) { out.segment(L.off(k), L.size(k)) = v; };
    Vec dP = e.Dp->apply(Vec(sg * apply_L(s, L, d.head(L.n1)) + seg(Slot::x4)));
    if (L.has_y) {
        Vec r = s.A.apply(dP);
        if (L.has_x1) {
            Vec t = e.D2->apply(Vec(seg(Slot::x1) - sg * seg(Slot::y)));
            r -= t;
            put(Slot::x1, (seg(Slot::x1) - t) / sg);
        }
        put(Slot::y, r);
    }
    if (L.has_z) {
        Vec r = s.B.apply(dP);
        if (L.has_x2) {
            Vec t = e.Df->apply(Vec(seg(Slot::x2) - sg * seg(Slot::z)));
            r -= t;
            put(Slot::x2, (seg(Slot::x2) - t) / sg);
        } else {
            r += seg(Slot::z);
        }
        put(Slot::z, r);
    }
    if (L.has_r) {
        Vec t = e.D1->apply(Vec(seg(Slot::x3) - sg * seg(Slot::r)));
        put(Slot::r, dP - t);
        put(Slot::x3, (seg(Slot::x3) - t) / sg);
    }
    if (L.has_v)
        put(Slot::v, s.Q.apply(Vec(seg(Slot::v) - dP)));
    put(Slot::x4, (seg(Slot::x4) - dP) / sg);
    return out;
}

/// Dense materialization of J (verification only).
inline Mat jacobian_dense(const ProblemSpec &s, const VariableLayout &L, const SaddleEval &e) {
    Mat J(L.total, L.total);
    for (Index j = 0; j < L.total; ++j)
        J.col(j) = apply_jacobian(s, L, e, Vec::Unit(L.total, j));
    return J;
}

/// KKT measures at x = recover_primal(w). eta_max = max(eta_P, eta_D, eta_K,
/// eta_Pset); eta_gap is reported but not part of eta_max.
inline KktResiduals kkt_residuals(const ProblemSpec &s, const VariableLayout &L, const IterateW &w,
                                  const SaddleEval &e) {
    const double sg = w.sigma;
    const Vec &x = e.x;
    KktResiduals k;
    const double nx = x.norm();
    // s = (P - u) / sigma, so the dual residual A*y + B*z + s - Qv + r - c = -F_x4
    Vec sd = (x - e.u) / sg;
    k.eta_D = e.block(L, Slot::x4).norm() / (1 + s.c.norm());

    double dual_terms = 0;
    if (L.has_y) {
        Vec y = w.slot(Slot::y);
        Vec Ax = s.A.apply(x);
        k.eta_P = (Ax - s.P2.project(Vec(Ax - y))).norm() / (1 + nx);
        if (L.has_x1) {
            // -o = (x1 - sigma y - Pi) / sigma lies in the normal cone at Pi
            Vec mo = (w.slot(Slot::x1) - sg * y - e.pi2) / sg;
            dual_terms += mo.dot(e.pi2);
        } else {
            dual_terms += -y.dot(s.P2.lower);
        }
    }

    std::vector<double> kb, pb;
    kb.push_back((x - prox(s.p, 1.0, Vec(x - sd))).norm() / (1 + sd.norm() + nx));
    if (L.has_v) {
        Vec Qv = s.Q.apply(Vec(w.slot(Slot::v))), Qx = s.Q.apply(x);
        kb.push_back((Qv - Qx).norm() / (1 + Qv.norm() + Qx.norm()));
        dual_terms += 0.5 * Qv.dot(w.slot(Slot::v));
    }
    k.eta_K = *std::min_element(kb.begin(), kb.end());

    if (L.has_z) {
        Vec z = w.slot(Slot::z);
        Vec Bx = s.B.apply(x);
        if (L.has_x2) {
            pb.push_back((prox(*s.f, 1.0, Vec(Bx - z)) - Bx).norm() / (1 + Bx.norm() + z.norm()));
            // -q = (x2 - sigma z - pi_f) / sigma is a subgradient of f at pi_f
            Vec mq = (w.slot(Slot::x2) - sg * z - e.pif) / sg;
            dual_terms += mq.dot(e.pif) - function_value(*s.f, e.pif);
        } else {
            pb.push_back((e.pif - Bx).norm() / (1 + Bx.norm() + z.norm()));
            dual_terms += -z.dot(e.pif) - function_value(*s.f, e.pif);
        }
    }
    if (L.has_r) {
        Vec r = w.slot(Slot::r);
        pb.push_back((s.P1.project(Vec(x - r)) - x).norm() / (1 + nx + r.norm()));
        Vec mt = (w.slot(Slot::x3) - sg * r - e.pi1) / sg;
        dual_terms += mt.dot(e.pi1);
    }
    if (!pb.empty())
        k.eta_Pset = *std::max_element(pb.begin(), pb.end());

    // p*(-s) by Fenchel-Young: -s is a subgradient of p at x
    dual_terms += -sd.dot(x) - function_value(s.p, x);
    k.pobj = objective_value(s, x);
    k.dobj = -dual_terms;
    if (std::isfinite(k.pobj) && std::isfinite(k.dobj))
        k.eta_gap = std::abs(k.pobj - k.dobj) / (1 + std::abs(k.pobj) + std::abs(k.dobj));
    else
        k.eta_gap = inf;
    k.eta_max = std::max({k.eta_P, k.eta_D, k.eta_K, k.eta_Pset});
    return k;
}

inline KktResiduals kkt_residuals(const ProblemSpec &s, const VariableLayout &L, const IterateW &w) {
    return kkt_residuals(s, L, w, evaluate(s, L, w, false));
}

} // namespace ssncvx
