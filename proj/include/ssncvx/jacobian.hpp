#pragma once

// Structured generalized-Jacobian elements D of proximal maps and the derived
// operators used by the Newton system:
//   (D^tau)^{-1} = (sigma^{-1}(I - D) + tau I)^{-1}
//   Dbar         = sigma D + D (D^tau)^{-1} D
// Every representation is a symmetric operator with spectrum in [0, 1], so each
// derived operator is a scalar function of D applied through its structure.

#include "model.hpp"

#include <functional>

namespace ssncvx {

enum class OpKind { jac, tau_inv, d_tau_inv, bar };

struct OpScalars {
    double sigma = 1, tau = 1;

    double tau_inv(double d) const { return 1.0 / ((1.0 - d) / sigma + tau); }
    double operator()(OpKind k, double d) const {
        switch (k) {
            case OpKind::jac: return d;
            case OpKind::tau_inv: return tau_inv(d);
            case OpKind::d_tau_inv: return d * tau_inv(d);
            case OpKind::bar: return sigma * d + d * d * tau_inv(d);
        }
        return 0;
    }
};

/// coef * u u^T placed at rows/cols [offset, offset + u.size()).
struct RankOneTerm {
    Index offset;
    Vec u;
    double coef;
};
struct DenseTerm {
    Index offset;
    Mat block;
};
/// diag(diag) + sum of rank-one and dense block terms.
struct TermList {
    Vec diag;
    std::vector<RankOneTerm> rank_one;
    std::vector<DenseTerm> dense;

    Vec apply(const Vec &x) const {
        Vec y = diag.cwiseProduct(x);
        for (const auto &t : rank_one)
            y.segment(t.offset, t.u.size()) += (t.coef * t.u.dot(x.segment(t.offset, t.u.size()))) * t.u;
        for (const auto &t : dense)
            y.segment(t.offset, t.block.rows()) += t.block * x.segment(t.offset, t.block.rows());
        return y;
    }
    Vec diagonal() const {
        Vec d = diag;
        for (const auto &t : rank_one)
            d.segment(t.offset, t.u.size()) += t.coef * t.u.cwiseAbs2();
        for (const auto &t : dense)
            d.segment(t.offset, t.block.rows()) += t.block.diagonal();
        return d;
    }
    void append(const TermList &o, Index off) {
        diag.segment(off, o.diag.size()) = o.diag;
        for (auto t : o.rank_one) {
            t.offset += off;
            rank_one.push_back(std::move(t));
        }
        for (auto t : o.dense) {
            t.offset += off;
            dense.push_back(std::move(t));
        }
    }
};

namespace jac {

struct Diagonal {
    Vec d;
};

// Per-cone blocks of a block-diagonal Jacobian (SOC, L2 kinds).
struct ScaledIdentity {
    double value;
};
/// alpha I + beta u u^T with ||u|| = 1.
struct RankOne {
    double alpha, beta;
    Vec u;
};
/// a I + sum_k (e_k - a) q_k q_k^T, q orthonormal columns.
struct LowRank {
    double a;
    Mat q;
    Vec e;
};
/// diag(a0, a1 I) + a u u^T.
struct DiagPlusRankOne {
    double a0, a1, a;
    Vec u;
};
struct Block {
    Index offset, len;
    std::variant<ScaledIdentity, RankOne, LowRank, DiagPlusRankOne> rep;
};
struct SocBlockList {
    Index dim;
    std::vector<Block> blocks;
};

/// Spectral operator G -> U [H1 o G1 + H2 o G1^T, diag(d3) G2] V^T in the
/// working shape a x b (a <= b), where the input matrix is transposed first
/// when n1 > n2. H1 = (ds + da)/2, H2 = (ds - da)/2. When `coupling` is
/// nonempty it replaces the diagonal action on diag(G1).
struct Spectral {
    Index n1, n2;
    bool transposed = false;
    bool symmetric = false;
    Mat U, V;       ///< a x a, b x a
    Mat ds, da;     ///< a x a, symmetric
    Vec d3;         ///< a (empty when a == b)
    Mat coupling;   ///< a x a or empty
    std::vector<Index> alpha; ///< indices outside of which ds, da, d3 vanish
    Index a() const { return U.rows(); }
    Index b() const { return V.rows(); }
};

/// Block-diagonal projector structure of the fused-lasso prox Jacobian.
struct FusedFactors {
    Index n;
    struct Segment {
        Index start, len;
        bool active; ///< soft threshold passes this segment
    };
    std::vector<Segment> segments;

    std::vector<Index> alpha1() const {
        std::vector<Index> r;
        for (const auto &s : segments)
            if (s.active)
                for (Index i = 0; i < s.len; ++i)
                    r.push_back(s.start + i);
        return r;
    }
    std::vector<Index> alpha2() const {
        std::vector<Index> r;
        for (const auto &s : segments)
            if (s.active && s.len == 1)
                r.push_back(s.start);
        return r;
    }
    /// Active blocks of length >= 2, each a column 1/sqrt(len) on its range.
    std::vector<Segment> blocks() const {
        std::vector<Segment> r;
        for (const auto &s : segments)
            if (s.active && s.len >= 2)
                r.push_back(s);
        return r;
    }
};

struct Dense {
    Mat D;
};

} // namespace jac

class JacobianRep;

namespace jac {
struct Composite {
    Index dim;
    std::vector<std::pair<Index, std::shared_ptr<const JacobianRep>>> parts;
};
} // namespace jac

namespace detail {

template <class H>
Mat apply_h(const Mat &M, H &&h) {
    return M.unaryExpr([&](double d) { return h(d); });
}

/// Dense symmetric function of a small symmetric matrix.
template <class H>
Mat sym_fn(const Mat &C, H &&h) {
    Eigen::SelfAdjointEigenSolver<Mat> es(C);
    Vec e = es.eigenvalues().unaryExpr([&](double d) { return h(d); });
    return es.eigenvectors() * e.asDiagonal() * es.eigenvectors().transpose();
}

inline Mat to_work(const jac::Spectral &S, const Vec &x) {
    Eigen::Map<const Mat> X(x.data(), S.n1, S.n2);
    return S.transposed ? Mat(X.transpose()) : Mat(X);
}

inline Vec from_work(const jac::Spectral &S, const Mat &W) {
    Mat X = S.transposed ? Mat(W.transpose()) : W;
    return Eigen::Map<const Vec>(X.data(), X.size());
}

/// Full spectral application of h(D).
template <class H>
Vec spectral_apply(const jac::Spectral &S, const Vec &x, H &&h) {
    const Index a = S.a(), b = S.b();
    Mat G = to_work(S, x);
    Mat UtG = S.U.transpose() * G;
    Mat G1 = UtG * S.V;
    Mat Sy = 0.5 * (G1 + G1.transpose());
    Mat Sk = 0.5 * (G1 - G1.transpose());
    Mat R = apply_h(S.ds, h).cwiseProduct(Sy) + apply_h(S.da, h).cwiseProduct(Sk);
    if (S.coupling.size()) {
        Vec dg = sym_fn(S.coupling, h) * G1.diagonal();
        R.diagonal() = dg;
    }
    Mat out = R * S.V.transpose();
    if (b > a) {
        Mat Gr = UtG - G1 * S.V.transpose();
        Vec h3 = S.d3.unaryExpr([&](double d) { return h(d); });
        out += h3.asDiagonal() * Gr;
    }
    return from_work(S, S.U * out);
}

/// Low-rank application of h(D) = h(0) I + (terms supported on alpha), the
/// structure exploited for (D^tau)^{-1}: only rows/columns in alpha of the
/// Hadamard coefficients differ from the constant h(0).
template <class H>
Vec spectral_apply_lowrank(const jac::Spectral &S, const Vec &x, H &&h) {
    const Index a = S.a(), b = S.b(), r = Index(S.alpha.size());
    const double c0 = h(0.0);
    Mat G = to_work(S, x);
    Mat out = c0 * G;
    if (r == 0)
        return from_work(S, out);
    std::vector<char> in(a, 0);
    for (Index i : S.alpha)
        in[i] = 1;
    std::vector<Index> abar;
    for (Index i = 0; i < a; ++i)
        if (!in[i])
            abar.push_back(i);
    const Index rb = Index(abar.size());

    Mat Ua(a, r), Va(b, r), Ub(a, rb), Vb(b, rb);
    for (Index k = 0; k < r; ++k) {
        Ua.col(k) = S.U.col(S.alpha[k]);
        Va.col(k) = S.V.col(S.alpha[k]);
    }
    for (Index k = 0; k < rb; ++k) {
        Ub.col(k) = S.U.col(abar[k]);
        Vb.col(k) = S.V.col(abar[k]);
    }
    auto K1 = [&](Index i, Index j) {
        return 0.5 * (h(S.ds(i, j)) + h(S.da(i, j))) - c0;
    };
    auto K2 = [&](Index i, Index j) { return 0.5 * (h(S.ds(i, j)) - h(S.da(i, j))); };

    // Step 1: the blocks of U^T G V that meet alpha.
    Mat GVa = G * Va;                    // a x r
    Mat GtUa = G.transpose() * Ua;       // b x r
    Mat G1_aa = Ua.transpose() * GVa;    // r x r
    Mat G1_ba = Ub.transpose() * GVa;    // rb x r   (rows abar, cols alpha)
    Mat G1_ab = GtUa.transpose() * Vb;   // r x rb   (rows alpha, cols abar)

    // Step 2: Hadamard scaling with the shifted coefficients.
    Mat R_aa(r, r), R_ba(rb, r), R_ab(r, rb);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < r; ++j) {
            const Index I = S.alpha[i], J = S.alpha[j];
            R_aa(i, j) = K1(I, J) * G1_aa(i, j) + K2(I, J) * G1_aa(j, i);
        }
    for (Index i = 0; i < rb; ++i)
        for (Index j = 0; j < r; ++j) {
            const Index I = abar[i], J = S.alpha[j];
            R_ba(i, j) = K1(I, J) * G1_ba(i, j) + K2(I, J) * G1_ab(j, i);
            R_ab(j, i) = K1(J, I) * G1_ab(j, i) + K2(J, I) * G1_ba(i, j);
        }
    if (S.coupling.size()) {
        Mat C = sym_fn(S.coupling, h);
        // coupling is supported on alpha x alpha by construction
        Vec g(r);
        for (Index i = 0; i < r; ++i)
            g[i] = G1_aa(i, i);
        for (Index i = 0; i < r; ++i) {
            double s = 0;
            for (Index j = 0; j < r; ++j)
                s += C(S.alpha[i], S.alpha[j]) * g[j];
            R_aa(i, i) = s - c0 * g[i];
        }
    }

    // Step 3: assemble U R V^T restricted to the nonzero blocks.
    out += (Ua * R_aa + Ub * R_ba) * Va.transpose() + Ua * R_ab * Vb.transpose();

    // Step 4: the G2 part (rows alpha only).
    if (b > a) {
        Mat Gr_a = GtUa.transpose() - (GtUa.transpose() * S.V) * S.V.transpose(); // r x b
        Vec k3(r);
        for (Index i = 0; i < r; ++i)
            k3[i] = h(S.d3[S.alpha[i]]) - c0;
        out += Ua * k3.asDiagonal() * Gr_a;
    }
    return from_work(S, out);
}

/// Diagonal of h(D) in the original coordinates.
template <class H>
Vec spectral_diagonal(const jac::Spectral &S, H &&h) {
    const Index a = S.a(), b = S.b();
    Mat hs = apply_h(S.ds, h), hd = apply_h(S.da, h);
    Mat H1 = 0.5 * (hs + hd), H2 = 0.5 * (hs - hd);
    Mat C;
    if (S.coupling.size()) {
        C = sym_fn(S.coupling, h);
        for (Index p = 0; p < a; ++p) {
            H1(p, p) = 0;
            H2(p, p) = 0;
        }
    }
    Mat U2 = S.U.cwiseAbs2(), V2 = S.V.cwiseAbs2();
    Mat W = U2 * H1 * V2.transpose(); // a x b
    Vec w(a);
    for (Index i = 0; i < a; ++i)
        for (Index j = 0; j < b; ++j) {
            w = S.U.row(i).transpose().cwiseProduct(S.V.row(j).transpose());
            W(i, j) += w.dot(H2 * w);
            if (C.size())
                W(i, j) += w.dot(C * w);
        }
    if (b > a) {
        Vec h3 = S.d3.unaryExpr([&](double d) { return h(d); });
        Vec uh = U2 * h3;
        for (Index j = 0; j < b; ++j) {
            const double rest = 1.0 - V2.row(j).sum();
            W.col(j) += rest * uh;
        }
    }
    return from_work(S, W);
}

} // namespace detail

/// One element of the generalized Jacobian of a proximal map.
class JacobianRep {
  public:
    using Variant = std::variant<jac::Diagonal, jac::SocBlockList, jac::Spectral, jac::FusedFactors, jac::Dense,
                                 jac::Composite>;

    JacobianRep() : v_(jac::Diagonal{Vec()}) {}
    template <class T>
    JacobianRep(T t) : v_(std::move(t)) {}

    const Variant &variant() const { return v_; }
    template <class T>
    bool is() const { return std::holds_alternative<T>(v_); }
    template <class T>
    const T &as() const { return std::get<T>(v_); }

    Index dim() const {
        return std::visit(
            [](const auto &r) -> Index {
                using R = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<R, jac::Diagonal>)
                    return r.d.size();
                else if constexpr (std::is_same_v<R, jac::SocBlockList> || std::is_same_v<R, jac::Composite>)
                    return r.dim;
                else if constexpr (std::is_same_v<R, jac::Spectral>)
                    return r.n1 * r.n2;
                else if constexpr (std::is_same_v<R, jac::FusedFactors>)
                    return r.n;
                else
                    return r.D.rows();
            },
            v_);
    }

    Vec apply(const Vec &x) const { return apply_op(OpKind::jac, OpScalars{}, x); }

    /// h(D) x for the scalar function selected by `k`.
    Vec apply_op(OpKind k, const OpScalars &s, const Vec &x) const {
        auto h = [&](double d) { return s(k, d); };
        return apply_fn(h, x, k != OpKind::jac);
    }

    /// Generic h(D) x. `lowrank` selects the low-rank spectral path.
    template <class H>
    Vec apply_fn(H &&h, const Vec &x, bool lowrank = false) const {
        return std::visit(
            [&](const auto &r) -> Vec {
                using R = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<R, jac::Diagonal>) {
                    return r.d.unaryExpr([&](double d) { return h(d); }).cwiseProduct(x);
                } else if constexpr (std::is_same_v<R, jac::Spectral>) {
                    if (lowrank && Index(r.alpha.size()) < r.a())
                        return detail::spectral_apply_lowrank(r, x, h);
                    return detail::spectral_apply(r, x, h);
                } else if constexpr (std::is_same_v<R, jac::Dense>) {
                    return detail::sym_fn(r.D, h) * x;
                } else if constexpr (std::is_same_v<R, jac::Composite>) {
                    Vec y(x.size());
                    for (const auto &[off, p] : r.parts)
                        y.segment(off, p->dim()) = p->apply_fn(h, Vec(x.segment(off, p->dim())), lowrank);
                    return y;
                } else {
                    return terms_fn(h).apply(x);
                }
            },
            v_);
    }

    /// h(D) as diagonal + rank-one/dense terms; empty for spectral.
    template <class H>
    std::optional<TermList> terms_opt(H &&h) const {
        if (is<jac::Spectral>())
            return std::nullopt;
        if (is<jac::Composite>()) {
            const auto &c = as<jac::Composite>();
            TermList t;
            t.diag = Vec::Zero(c.dim);
            for (const auto &[off, p] : c.parts) {
                auto sub = p->terms_opt(h);
                if (!sub)
                    return std::nullopt;
                t.append(*sub, off);
            }
            return t;
        }
        return terms_fn(h);
    }

    template <class H>
    Vec diagonal_fn(H &&h) const {
        if (is<jac::Spectral>())
            return detail::spectral_diagonal(as<jac::Spectral>(), h);
        if (is<jac::Composite>()) {
            const auto &c = as<jac::Composite>();
            Vec d(c.dim);
            for (const auto &[off, p] : c.parts)
                d.segment(off, p->dim()) = p->diagonal_fn(h);
            return d;
        }
        return terms_fn(h).diagonal();
    }

    Mat materialize() const {
        const Index n = dim();
        Mat M(n, n);
        for (Index j = 0; j < n; ++j)
            M.col(j) = apply(Vec::Unit(n, j));
        return M;
    }

    Mat materialize_op(OpKind k, const OpScalars &s) const {
        const Index n = dim();
        Mat M(n, n);
        for (Index j = 0; j < n; ++j)
            M.col(j) = apply_op(k, s, Vec::Unit(n, j));
        return M;
    }

  private:
    template <class H>
    TermList terms_fn(H &&h) const {
        TermList t;
        std::visit(
            [&](const auto &r) {
                using R = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<R, jac::Diagonal>) {
                    t.diag = r.d.unaryExpr([&](double d) { return h(d); });
                } else if constexpr (std::is_same_v<R, jac::SocBlockList>) {
                    t.diag = Vec::Zero(r.dim);
                    for (const auto &b : r.blocks)
                        block_terms(b, h, t);
                } else if constexpr (std::is_same_v<R, jac::FusedFactors>) {
                    t.diag = Vec::Constant(r.n, h(0.0));
                    const double h1 = h(1.0), h0 = h(0.0);
                    for (const auto &s : r.segments) {
                        if (!s.active)
                            continue;
                        if (s.len == 1) {
                            t.diag[s.start] = h1;
                        } else {
                            Vec u = Vec::Constant(s.len, 1.0 / std::sqrt(double(s.len)));
                            t.rank_one.push_back({s.start, std::move(u), h1 - h0});
                        }
                    }
                } else if constexpr (std::is_same_v<R, jac::Dense>) {
                    t.diag = Vec::Zero(r.D.rows());
                    t.dense.push_back({0, detail::sym_fn(r.D, h)});
                } else {
                    throw Error(Errc::StructureMismatch, "jacobian", "no term form for this representation");
                }
            },
            v_);
        return t;
    }

    template <class H>
    static void block_terms(const jac::Block &b, H &&h, TermList &t) {
        std::visit(
            [&](const auto &r) {
                using R = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<R, jac::ScaledIdentity>) {
                    t.diag.segment(b.offset, b.len).setConstant(h(r.value));
                } else if constexpr (std::is_same_v<R, jac::RankOne>) {
                    const double ha = h(r.alpha);
                    t.diag.segment(b.offset, b.len).setConstant(ha);
                    t.rank_one.push_back({b.offset, r.u, h(r.alpha + r.beta) - ha});
                } else if constexpr (std::is_same_v<R, jac::LowRank>) {
                    const double ha = h(r.a);
                    t.diag.segment(b.offset, b.len).setConstant(ha);
                    for (Index k = 0; k < r.q.cols(); ++k)
                        t.rank_one.push_back({b.offset, r.q.col(k), h(r.e[k]) - ha});
                } else {
                    // diag(a0, a1 I) + a u u^T: exact eigen-structure on span{e0, (0, ubar)}.
                    const Index n = b.len;
                    t.diag.segment(b.offset, n).setConstant(h(r.a1));
                    Vec ub = r.u.tail(n - 1);
                    const double nb = ub.norm();
                    if (n == 1 || nb == 0) {
                        t.diag[b.offset] = h(r.a0 + r.a * r.u[0] * r.u[0]);
                        return;
                    }
                    Vec e = ub / nb;
                    Eigen::Matrix2d M;
                    M << r.a0 + r.a * r.u[0] * r.u[0], r.a * r.u[0] * nb, r.a * r.u[0] * nb, r.a1 + r.a * nb * nb;
                    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(M);
                    const double h1 = h(r.a1);
                    for (int k = 0; k < 2; ++k) {
                        Vec q(n);
                        q[0] = es.eigenvectors()(0, k);
                        q.tail(n - 1) = es.eigenvectors()(1, k) * e;
                        t.rank_one.push_back({b.offset, std::move(q), h(es.eigenvalues()[k]) - h1});
                    }
                }
            },
            b.rep);
    }

    Variant v_;
};

} // namespace ssncvx
