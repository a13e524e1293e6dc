#pragma once

// Regularized Newton system (J + tau I) d = -F via elimination of d2:
//   Ht11 d1 = -F1 + H12 (H22 + tau)^{-1} F2,
//   Ht11 = L^T Dbar_p L + blkdiag(Dbar_P2, Dbar_f | I, Dbar_P1, Q) + tau I,
//   d2 = (H22 + tau)^{-1} (H12^T d1 - F2).

#include "saddle.hpp"

#include <chrono>

namespace ssncvx {

enum class SolveMode { automatic, direct, iterative };

struct LinsysOptions {
    SolveMode mode = SolveMode::automatic;
    Index direct_threshold = 2000;
    /// Dense L is only formed when n * n1 stays below this.
    double dense_entries_cap = 6e7;
    int cg_max_iter = 2000;
    int refine_steps = 3;
};

struct SolveStats {
    std::string method;
    int iterations = 0;
    double residual = 0; ///< ||Ht11 d1 - rhs||
    bool converged = true;
};

/// Per-solve data that does not change between Newton iterations.
struct LinsysCache {
    bool built = false;
    bool dense_ok = false;
    Mat Ld;  ///< n x n1 dense matrix of L
    Mat Qd;
    Mat LtL; ///< Ld^T Ld, formed lazily

    void prepare(const ProblemSpec &s, const VariableLayout &L, const LinsysOptions &o) {
        if (built)
            return;
        built = true;
        dense_ok = L.n1 <= o.direct_threshold && double(s.n) * double(L.n1) <= o.dense_entries_cap;
        if (!dense_ok)
            return;
        Ld.resize(s.n, L.n1);
        if (L.has_y)
            Ld.middleCols(L.off(Slot::y), L.size(Slot::y)) = s.A.adjoint_dense();
        if (L.has_z)
            Ld.middleCols(L.off(Slot::z), L.size(Slot::z)) = s.B.adjoint_dense();
        if (L.has_r)
            Ld.middleCols(L.off(Slot::r), s.n).setIdentity();
        if (L.has_v) {
            Qd = s.Q.to_dense();
            Ld.middleCols(L.off(Slot::v), s.n) = -Qd;
        }
    }
};

struct SchurSystem {
    const ProblemSpec *spec = nullptr;
    const VariableLayout *layout = nullptr;
    double sigma = 1, tau = 1;
    DerivedOps op_p;
    std::optional<DerivedOps> op_2, op_f, op_1;
    Vec rhs;

    Index dim() const { return layout->n1; }

    /// Ht11 d1.
    Vec apply(const Vec &d1) const {
        const auto &L = *layout;
        Vec out = apply_Lt(*spec, L, op_p.dbar(apply_L(*spec, L, d1)));
        auto seg = [&](Slot k) { return Vec(d1.segment(L.off(k), L.size(k))); };
        if (op_2)
            out.segment(L.off(Slot::y), L.size(Slot::y)) += op_2->dbar(seg(Slot::y));
        if (L.has_z)
            out.segment(L.off(Slot::z), L.size(Slot::z)) += op_f ? op_f->dbar(seg(Slot::z)) : seg(Slot::z);
        if (op_1)
            out.segment(L.off(Slot::r), L.size(Slot::r)) += op_1->dbar(seg(Slot::r));
        if (L.has_v)
            out.segment(L.off(Slot::v), L.size(Slot::v)) += spec->Q.apply(seg(Slot::v));
        return out + tau * d1;
    }

    /// Diagonal of Ht11 with the off-diagonal part of Dbar_p ignored.
    Vec jacobi_diagonal() const {
        const auto &L = *layout;
        const auto &s = *spec;
        Vec dp = op_p.dbar_diagonal();
        Vec d = Vec::Constant(L.n1, tau);
        auto sq = [&](const LinearOperator &op, const Vec &v) -> Vec {
            switch (op.rep()) {
                case LinearOperator::Rep::dense: return op.dense_matrix().cwiseAbs2() * v;
                case LinearOperator::Rep::sparse: return op.sparse_matrix().cwiseAbs2() * v;
                default: return v;
            }
        };
        if (L.has_y)
            d.segment(L.off(Slot::y), L.size(Slot::y)) += sq(s.A, dp);
        if (L.has_z) {
            d.segment(L.off(Slot::z), L.size(Slot::z)) +=
                sq(s.B, dp) + (op_f ? op_f->dbar_diagonal() : Vec::Ones(L.size(Slot::z)));
        }
        if (op_2)
            d.segment(L.off(Slot::y), L.size(Slot::y)) += op_2->dbar_diagonal();
        if (L.has_r)
            d.segment(L.off(Slot::r), s.n) += dp + op_1->dbar_diagonal();
        if (L.has_v) {
            Vec qd = s.Q.rep() == LinearOperator::Rep::dense    ? Vec(s.Q.dense_matrix().diagonal())
                     : s.Q.rep() == LinearOperator::Rep::sparse ? Vec(s.Q.sparse_matrix().diagonal())
                                                                : Vec::Ones(s.n);
            d.segment(L.off(Slot::v), s.n) += sq(s.Q, dp) + qd;
        }
        return d;
    }
};

/// Build Ht11 and the reduced right-hand side -F1 + H12 (H22 + tau)^{-1} F2.
inline SchurSystem build_schur(const ProblemSpec &s, const VariableLayout &L, const SaddleEval &e, double tau) {
    SchurSystem S;
    S.spec = &s;
    S.layout = &L;
    S.sigma = e.sigma;
    S.tau = tau;
    S.op_p = derived_ops(s.p, e.Dp, e.sigma, tau);
    if (L.has_x1)
        S.op_2 = DerivedOps(e.D2, e.sigma, tau);
    if (L.has_x2)
        S.op_f = derived_ops(*s.f, e.Df, e.sigma, tau);
    if (L.has_x3)
        S.op_1 = DerivedOps(e.D1, e.sigma, tau);

    auto F = [&](Slot k) { return Vec(e.block(L, k)); };
    S.rhs = -e.F.head(L.n1);
    S.rhs += apply_Lt(s, L, S.op_p.d_dtau_inv(F(Slot::x4)));
    if (S.op_2)
        S.rhs.segment(L.off(Slot::y), L.size(Slot::y)) -= S.op_2->d_dtau_inv(F(Slot::x1));
    if (S.op_f)
        S.rhs.segment(L.off(Slot::z), L.size(Slot::z)) -= S.op_f->d_dtau_inv(F(Slot::x2));
    if (S.op_1)
        S.rhs.segment(L.off(Slot::r), L.size(Slot::r)) -= S.op_1->d_dtau_inv(F(Slot::x3));
    return S;
}

/// d2 = (H22 + tau)^{-1} (H12^T d1 - F2), slot by slot.
inline Vec recover_d2(const SchurSystem &S, const SaddleEval &e, const Vec &d1) {
    const auto &L = *S.layout;
    Vec d2(L.total - L.n1);
    auto put = [&](Slot k, const Vec &v) { d2.segment(L.off(k) - L.n1, L.size(k)) = v; };
    auto seg = [&](Slot k) { return Vec(d1.segment(L.off(k), L.size(k))); };
    auto F = [&](Slot k) { return Vec(e.block(L, k)); };
    if (S.op_2)
        put(Slot::x1, -S.op_2->d_dtau_inv(seg(Slot::y)) - S.op_2->dtau_inv(F(Slot::x1)));
    if (S.op_f)
        put(Slot::x2, -S.op_f->d_dtau_inv(seg(Slot::z)) - S.op_f->dtau_inv(F(Slot::x2)));
    if (S.op_1)
        put(Slot::x3, -S.op_1->d_dtau_inv(seg(Slot::r)) - S.op_1->dtau_inv(F(Slot::x3)));
    put(Slot::x4, S.op_p.d_dtau_inv(apply_L(*S.spec, L, d1)) - S.op_p.dtau_inv(F(Slot::x4)));
    return d2;
}

namespace detail {

/// Add Ld^T T Ld to M for T given as terms over the n rows of Ld.
inline void add_congruence(Mat &M, const Mat &Ld, const TermList &T) {
    std::vector<Index> sup;
    for (Index i = 0; i < T.diag.size(); ++i)
        if (T.diag[i] != 0)
            sup.push_back(i);
    if (!sup.empty()) {
        Mat W(Index(sup.size()), Ld.cols());
        Vec d(Index(sup.size()));
        for (Index k = 0; k < Index(sup.size()); ++k) {
            W.row(k) = Ld.row(sup[k]);
            d[k] = T.diag[sup[k]];
        }
        Mat DW = d.asDiagonal() * W;
        M.noalias() += W.transpose() * DW;
    }
    for (const auto &t : T.rank_one) {
        Vec g = Ld.middleRows(t.offset, t.u.size()).transpose() * t.u;
        M.noalias() += t.coef * g * g.transpose();
    }
    for (const auto &t : T.dense) {
        const auto G = Ld.middleRows(t.offset, t.block.rows());
        M.noalias() += G.transpose() * t.block * G;
    }
}

inline void add_block_terms(Mat &M, Index off, const TermList &T) {
    const Index n = T.diag.size();
    M.block(off, off, n, n).diagonal() += T.diag;
    for (const auto &t : T.rank_one)
        M.block(off + t.offset, off + t.offset, t.u.size(), t.u.size()).noalias() += t.coef * t.u * t.u.transpose();
    for (const auto &t : T.dense)
        M.block(off + t.offset, off + t.offset, t.block.rows(), t.block.rows()) += t.block;
}

/// Dbar_p as terms with a single nonneg low-rank factor: Dbar = V V^T.
inline std::optional<Mat> nonneg_factor(const TermList &T, Index n) {
    if (!T.dense.empty())
        return std::nullopt;
    for (const auto &t : T.rank_one)
        if (t.coef < 0)
            return std::nullopt;
    Index k = 0;
    for (Index i = 0; i < T.diag.size(); ++i) {
        if (T.diag[i] < 0)
            return std::nullopt;
        k += T.diag[i] > 0;
    }
    k += Index(T.rank_one.size());
    Mat V = Mat::Zero(n, k);
    Index c = 0;
    for (Index i = 0; i < T.diag.size(); ++i)
        if (T.diag[i] > 0)
            V(i, c++) = std::sqrt(T.diag[i]);
    for (const auto &t : T.rank_one)
        V.col(c++).segment(t.offset, t.u.size()) = std::sqrt(t.coef) * t.u;
    return V;
}

} // namespace detail

/// Preconditioned conjugate gradient on the SPD operator.
template <class Op>
Vec pcg(Op &&A, const Vec &b, const Vec &diag, double tol_abs, int max_iter, SolveStats &st) {
    const Index n = b.size();
    Vec x = Vec::Zero(n), r = b;
    Vec dinv = diag.cwiseMax(1e-300).cwiseInverse();
    Vec z = dinv.cwiseProduct(r), p = z;
    double rz = r.dot(z);
    double best = r.norm();
    Vec xbest = x;
    int it = 0;
    for (; it < max_iter && best > tol_abs; ++it) {
        Vec Ap = A(p);
        const double pAp = p.dot(Ap);
        if (!(pAp > 0))
            throw Error(Errc::BreakdownNonSPD, "schur", "nonpositive curvature in CG");
        const double alpha = rz / pAp;
        x += alpha * p;
        r -= alpha * Ap;
        const double rn = r.norm();
        if (rn < best) {
            best = rn;
            xbest = x;
        }
        z = dinv.cwiseProduct(r);
        const double rz2 = r.dot(z);
        p = z + (rz2 / rz) * p;
        rz = rz2;
    }
    st.iterations += it;
    // recompute the true residual of the returned iterate
    st.residual = (b - A(xbest)).norm();
    st.converged = st.residual <= tol_abs;
    return xbest;
}

/// Solve Ht11 d1 = rhs. `tol_abs` bounds the returned residual norm.
inline Vec solve_schur(const SchurSystem &S, double tol_abs, const LinsysOptions &o, LinsysCache &cache,
                       SolveStats &st) {
    const auto &s = *S.spec;
    const auto &L = *S.layout;
    cache.prepare(s, L, o);
    const auto &Tp = S.op_p.dbar_terms();
    bool blocks_ok = !S.op_f || S.op_f->dbar_terms().has_value();
    const bool can_direct = cache.dense_ok && Tp && blocks_ok;
    const bool direct = o.mode == SolveMode::direct || (o.mode == SolveMode::automatic && can_direct);
    if (direct && !can_direct)
        throw Error(Errc::InvalidArgument, "mode", "direct solve unavailable for this structure");

    auto refine = [&](auto &&solve_fn, Vec d) {
        Vec res = S.rhs - S.apply(d);
        double rn = res.norm();
        for (int k = 0; k < o.refine_steps && rn > tol_abs; ++k) {
            Vec dn = d + solve_fn(res);
            Vec rs = S.rhs - S.apply(dn);
            const double rnn = rs.norm();
            if (!(rnn < rn))
                break;
            d = std::move(dn);
            res = std::move(rs);
            rn = rnn;
        }
        st.residual = rn;
        st.converged = rn <= tol_abs;
        return d;
    };

    if (direct) {
        const Index n1 = L.n1;
        // single z slot with smooth f: Ht11 = (1 + tau) I + B Dbar B^T, use SMW when low rank
        const bool single_z = L.has_z && !L.has_x2 && n1 == L.size(Slot::z);
        if (single_z) {
            if (auto V = detail::nonneg_factor(*Tp, s.n); V && V->cols() < n1) {
                st.method = "smw";
                Mat W = cache.Ld.transpose() * (*V); // n1 x k
                const double a = 1 + S.tau;
                Mat K = W.transpose() * W;
                K.diagonal().array() += a;
                Eigen::LLT<Mat> llt(K);
                if (llt.info() != Eigen::Success)
                    throw Error(Errc::BreakdownNonSPD, "schur", "SMW inner factorization failed");
                auto solve_fn = [&](const Vec &b) -> Vec { return (b - W * llt.solve(W.transpose() * b)) / a; };
                return refine(solve_fn, solve_fn(S.rhs));
            }
        }
        st.method = "cholesky";
        Mat M = Mat::Zero(n1, n1);
        const bool scalar = Tp->rank_one.empty() && Tp->dense.empty() && Tp->diag.size() > 0 &&
                            (Tp->diag.array() == Tp->diag[0]).all();
        if (scalar) {
            if (cache.LtL.size() == 0)
                cache.LtL = cache.Ld.transpose() * cache.Ld;
            M = Tp->diag[0] * cache.LtL;
        } else {
            detail::add_congruence(M, cache.Ld, *Tp);
        }
        if (S.op_2)
            detail::add_block_terms(M, L.off(Slot::y), *S.op_2->dbar_terms());
        if (L.has_z) {
            if (S.op_f)
                detail::add_block_terms(M, L.off(Slot::z), *S.op_f->dbar_terms());
            else
                M.block(L.off(Slot::z), L.off(Slot::z), L.size(Slot::z), L.size(Slot::z)).diagonal().array() += 1;
        }
        if (S.op_1)
            detail::add_block_terms(M, L.off(Slot::r), *S.op_1->dbar_terms());
        if (L.has_v)
            M.block(L.off(Slot::v), L.off(Slot::v), s.n, s.n) += cache.Qd;
        M.diagonal().array() += S.tau;
        Eigen::LLT<Mat> llt(M);
        if (llt.info() != Eigen::Success)
            throw Error(Errc::BreakdownNonSPD, "schur", "Cholesky pivot failure");
        auto solve_fn = [&](const Vec &b) -> Vec { return llt.solve(b); };
        return refine(solve_fn, solve_fn(S.rhs));
    }

    st.method = "pcg";
    Vec diag = S.jacobi_diagonal();
    return pcg([&](const Vec &v) { return S.apply(v); }, S.rhs, diag, tol_abs, o.cg_max_iter, st);
}

struct NewtonDirection {
    Vec d;
    SolveStats stats;
    double schur_residual = 0; ///< ||eps||, eps = (Ht11 d1 - rhs; 0)
    Vec eps;                   ///< full-length inexactness vector
};

/// Direction of (J + tau I) d = -F + eps.
inline NewtonDirection newton_direction(const ProblemSpec &s, const VariableLayout &L, const SaddleEval &e,
                                        double tau, double tol_abs, const LinsysOptions &o, LinsysCache &cache) {
    SchurSystem S = build_schur(s, L, e, tau);
    NewtonDirection nd;
    Vec d1 = solve_schur(S, tol_abs, o, cache, nd.stats);
    nd.d.resize(L.total);
    nd.d.head(L.n1) = d1;
    nd.d.tail(L.total - L.n1) = recover_d2(S, e, d1);
    nd.eps = Vec::Zero(L.total);
    nd.eps.head(L.n1) = S.apply(d1) - S.rhs;
    nd.schur_residual = nd.eps.norm();
    return nd;
}

} // namespace ssncvx
