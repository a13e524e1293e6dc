#pragma once

#include "errors.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ssncvx {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

inline constexpr double inf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Box sets
// ---------------------------------------------------------------------------

/// {x : lower <= x <= upper}. An empty (size 0) box means "absent".
struct BoxSet {
    enum class Class { absent, singleton, general };

    Vec lower, upper;

    BoxSet() = default;
    BoxSet(Vec l, Vec u) : lower(std::move(l)), upper(std::move(u)) {
        if (lower.size() != upper.size())
            throw Error(Errc::DimensionMismatch, "box", "lower/upper lengths differ");
        for (Index i = 0; i < lower.size(); ++i)
            if (!(lower[i] <= upper[i]))
                throw Error(Errc::InvalidArgument, "box", "lower > upper at index " + std::to_string(i));
    }

    static BoxSet nonneg(Index n) { return {Vec::Zero(n), Vec::Constant(n, inf)}; }
    static BoxSet point(const Vec &b) { return {b, b}; }

    Index dim() const { return lower.size(); }

    Class classify() const {
        if (dim() == 0)
            return Class::absent;
        bool all_inf = true, all_eq = true;
        for (Index i = 0; i < dim(); ++i) {
            if (std::isfinite(lower[i]) || std::isfinite(upper[i]))
                all_inf = false;
            if (lower[i] != upper[i])
                all_eq = false;
        }
        if (all_inf)
            return Class::absent;
        return all_eq ? Class::singleton : Class::general;
    }

    Vec project(const Vec &x) const { return x.cwiseMax(lower).cwiseMin(upper); }

    /// 0/1 diagonal of a Clarke Jacobian of the projection (boundary -> 0).
    Vec project_jacobian(const Vec &x) const {
        Vec d(x.size());
        for (Index i = 0; i < x.size(); ++i)
            d[i] = (x[i] > lower[i] && x[i] < upper[i]) ? 1.0 : 0.0;
        return d;
    }

    /// Support function sup_{x in box} <s, x>.
    double support(const Vec &s) const {
        double v = 0;
        for (Index i = 0; i < s.size(); ++i) {
            if (s[i] > 0)
                v += s[i] * upper[i];
            else if (s[i] < 0)
                v += s[i] * lower[i];
        }
        return v;
    }

    bool contains(const Vec &x, double tol) const {
        for (Index i = 0; i < x.size(); ++i)
            if (x[i] < lower[i] - tol || x[i] > upper[i] + tol)
                return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Linear operators
// ---------------------------------------------------------------------------

class LinearOperator {
  public:
    enum class Rep { absent, dense, sparse, identity };

    LinearOperator() = default;

    static LinearOperator dense(Mat M) {
        LinearOperator op;
        op.rep_ = Rep::dense;
        op.rows_ = M.rows();
        op.cols_ = M.cols();
        op.dense_ = std::make_shared<const Mat>(std::move(M));
        return op;
    }
    static LinearOperator sparse(SpMat M) {
        LinearOperator op;
        M.makeCompressed();
        op.rep_ = Rep::sparse;
        op.rows_ = M.rows();
        op.cols_ = M.cols();
        op.sparse_ = std::make_shared<const SpMat>(std::move(M));
        return op;
    }
    static LinearOperator identity(Index n) {
        LinearOperator op;
        op.rep_ = Rep::identity;
        op.rows_ = op.cols_ = n;
        return op;
    }

    Rep rep() const { return rep_; }
    bool present() const { return rep_ != Rep::absent; }
    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    const Mat &dense_matrix() const { return *dense_; }
    const SpMat &sparse_matrix() const { return *sparse_; }

    Vec apply(const Vec &x) const {
        switch (rep_) {
            case Rep::dense: return (*dense_) * x;
            case Rep::sparse: return (*sparse_) * x;
            case Rep::identity: return x;
            case Rep::absent: break;
        }
        throw Error(Errc::InvalidArgument, "operator", "apply on absent operator");
    }

    Vec apply_adjoint(const Vec &y) const {
        switch (rep_) {
            case Rep::dense: return dense_->transpose() * y;
            case Rep::sparse: return sparse_->transpose() * y;
            case Rep::identity: return y;
            case Rep::absent: break;
        }
        throw Error(Errc::InvalidArgument, "operator", "adjoint on absent operator");
    }

    Mat to_dense() const {
        switch (rep_) {
            case Rep::dense: return *dense_;
            case Rep::sparse: return Mat(*sparse_);
            case Rep::identity: return Mat::Identity(rows_, cols_);
            case Rep::absent: break;
        }
        return Mat(0, 0);
    }

    /// Operator transpose as a dense (cols x rows) matrix.
    Mat adjoint_dense() const { return to_dense().transpose(); }

  private:
    Rep rep_ = Rep::absent;
    Index rows_ = 0, cols_ = 0;
    std::shared_ptr<const Mat> dense_;
    std::shared_ptr<const SpMat> sparse_;
};

// ---------------------------------------------------------------------------
// Function catalog
// ---------------------------------------------------------------------------

struct FunctionSpec;

namespace fn {
struct Zero {};
struct L1 { double lambda; };
struct L2Norm { double lambda; };
struct L2Ball { double radius; };
struct Box { BoxSet set; };
struct SocIndicator { std::vector<Index> dims; };
/// mu * sum over cones of -1/2 log det(x_i).
struct SocBarrier { std::vector<Index> dims; double mu; };
/// Matrix kinds act on an n1 x n2 matrix flattened column-major.
struct Nuclear { double lambda; Index n1, n2; };
struct Spectral { double lambda; Index n1, n2; };
struct Psd { Index n; };
/// lambda1 ||x||_1 + lambda2 sum_i |x_{i+1} - x_i|.
struct Fused { double lambda1, lambda2; };
/// 1/2 ||x||^2.
struct SquaredLoss {};
struct Piece {
    Index offset, length;
    std::shared_ptr<const FunctionSpec> fn;
};
/// Block-separable sum over disjoint index ranges.
struct Composite { std::vector<Piece> pieces; };
} // namespace fn

using FunctionKind = std::variant<fn::Zero, fn::L1, fn::L2Norm, fn::L2Ball, fn::Box, fn::SocIndicator,
                                  fn::SocBarrier, fn::Nuclear, fn::Spectral, fn::Psd, fn::Fused,
                                  fn::SquaredLoss, fn::Composite>;

struct FunctionSpec {
    FunctionKind kind = fn::Zero{};
    /// g(x) is evaluated as g_kind(x - shift).
    std::optional<Vec> shift;

    FunctionSpec() = default;
    FunctionSpec(FunctionKind k, std::optional<Vec> s = std::nullopt) : kind(std::move(k)), shift(std::move(s)) {
        validate();
    }

    bool is_zero() const { return std::holds_alternative<fn::Zero>(kind); }
    bool smooth_conjugate() const { return std::holds_alternative<fn::SquaredLoss>(kind); }

    std::string name() const {
        static const std::array<const char *, 13> names = {
            "Zero", "L1", "L2Norm", "L2Ball", "BoxIndicator", "SOCIndicator", "SOCBarrier",
            "NuclearNorm", "SpectralNorm", "PSDIndicator", "Fused", "SquaredLoss", "Composite"};
        return names[kind.index()];
    }

    /// Dimension implied by the kind, if any.
    std::optional<Index> fixed_dim() const {
        return std::visit(
            [](const auto &k) -> std::optional<Index> {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, fn::Box>)
                    return k.set.dim();
                else if constexpr (std::is_same_v<K, fn::SocIndicator> || std::is_same_v<K, fn::SocBarrier>) {
                    Index s = 0;
                    for (Index d : k.dims)
                        s += d;
                    return s;
                } else if constexpr (std::is_same_v<K, fn::Nuclear> || std::is_same_v<K, fn::Spectral>)
                    return k.n1 * k.n2;
                else if constexpr (std::is_same_v<K, fn::Psd>)
                    return k.n * k.n;
                else if constexpr (std::is_same_v<K, fn::Composite>) {
                    Index s = 0;
                    for (const auto &p : k.pieces)
                        s = std::max(s, p.offset + p.length);
                    return s;
                } else
                    return std::nullopt;
            },
            kind);
    }

    void validate() const {
        auto pos = [](double v, const char *what) {
            if (!(v > 0) || !std::isfinite(v))
                throw Error(Errc::InvalidArgument, what, "must be positive and finite");
        };
        std::visit(
            [&](const auto &k) {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, fn::L1> || std::is_same_v<K, fn::L2Norm>)
                    pos(k.lambda, "lambda");
                else if constexpr (std::is_same_v<K, fn::L2Ball>)
                    pos(k.radius, "radius");
                else if constexpr (std::is_same_v<K, fn::SocIndicator> || std::is_same_v<K, fn::SocBarrier>) {
                    if (k.dims.empty())
                        throw Error(Errc::InvalidArgument, "dims", "empty cone list");
                    for (Index d : k.dims)
                        if (d < 1)
                            throw Error(Errc::InvalidArgument, "dims", "cone dimension < 1");
                    if constexpr (std::is_same_v<K, fn::SocBarrier>)
                        pos(k.mu, "mu");
                } else if constexpr (std::is_same_v<K, fn::Nuclear> || std::is_same_v<K, fn::Spectral>) {
                    pos(k.lambda, "lambda");
                    if (k.n1 < 1 || k.n2 < 1)
                        throw Error(Errc::ShapeMismatch, "n1,n2", "matrix shape must be positive");
                } else if constexpr (std::is_same_v<K, fn::Psd>) {
                    if (k.n < 1)
                        throw Error(Errc::ShapeMismatch, "n", "matrix order must be positive");
                } else if constexpr (std::is_same_v<K, fn::Fused>) {
                    if (!(k.lambda1 >= 0) || !(k.lambda2 >= 0) || !(k.lambda1 + k.lambda2 > 0))
                        throw Error(Errc::InvalidArgument, "lambda1,lambda2", "must be nonnegative, not both zero");
                } else if constexpr (std::is_same_v<K, fn::Composite>) {
                    Index end = 0;
                    for (const auto &p : k.pieces) {
                        if (!p.fn || p.offset != end || p.length < 1)
                            throw Error(Errc::InvalidArgument, "pieces", "pieces must tile the vector in order");
                        auto fd = p.fn->fixed_dim();
                        if (fd && *fd != p.length)
                            throw Error(Errc::DimensionMismatch, "pieces", "piece length differs from its kind");
                        end += p.length;
                    }
                }
            },
            kind);
        if (shift) {
            auto fd = fixed_dim();
            if (fd && *fd != shift->size())
                throw Error(Errc::DimensionMismatch, "shift", "shift length differs from function dimension");
        }
    }
};

// ---------------------------------------------------------------------------
// Function values
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::Map<const Mat> as_matrix(const Vec &x, Index n1, Index n2) { return {x.data(), n1, n2}; }

inline double value_unshifted(const FunctionSpec &g, const Vec &x) {
    const double tol = 1e-9 * (1 + x.norm());
    return std::visit(
        [&](const auto &k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, fn::Zero>)
                return 0;
            else if constexpr (std::is_same_v<K, fn::L1>)
                return k.lambda * x.lpNorm<1>();
            else if constexpr (std::is_same_v<K, fn::L2Norm>)
                return k.lambda * x.norm();
            else if constexpr (std::is_same_v<K, fn::L2Ball>)
                return x.norm() <= k.radius + tol ? 0 : inf;
            else if constexpr (std::is_same_v<K, fn::Box>)
                return k.set.contains(x, tol) ? 0 : inf;
            else if constexpr (std::is_same_v<K, fn::SocIndicator>) {
                Index off = 0;
                for (Index d : k.dims) {
                    if (x[off] < x.segment(off + 1, d - 1).norm() - tol)
                        return inf;
                    off += d;
                }
                return 0;
            } else if constexpr (std::is_same_v<K, fn::SocBarrier>) {
                Index off = 0;
                double v = 0;
                for (Index d : k.dims) {
                    double x0 = x[off], nb = x.segment(off + 1, d - 1).norm();
                    if (!(x0 > nb))
                        return inf;
                    v -= 0.5 * std::log((x0 - nb) * (x0 + nb));
                    off += d;
                }
                return k.mu * v;
            } else if constexpr (std::is_same_v<K, fn::Nuclear> || std::is_same_v<K, fn::Spectral>) {
                Eigen::JacobiSVD<Mat> svd(as_matrix(x, k.n1, k.n2));
                const Vec &s = svd.singularValues();
                if constexpr (std::is_same_v<K, fn::Nuclear>)
                    return k.lambda * s.sum();
                else
                    return k.lambda * (s.size() ? s[0] : 0.0);
            } else if constexpr (std::is_same_v<K, fn::Psd>) {
                auto X = as_matrix(x, k.n, k.n);
                if ((X - X.transpose()).norm() > tol)
                    return inf;
                Eigen::SelfAdjointEigenSolver<Mat> es(Mat(0.5 * (X + X.transpose())), Eigen::EigenvaluesOnly);
                return es.eigenvalues().minCoeff() >= -tol ? 0 : inf;
            } else if constexpr (std::is_same_v<K, fn::Fused>) {
                double tv = 0;
                for (Index i = 0; i + 1 < x.size(); ++i)
                    tv += std::abs(x[i + 1] - x[i]);
                return k.lambda1 * x.lpNorm<1>() + k.lambda2 * tv;
            } else if constexpr (std::is_same_v<K, fn::SquaredLoss>)
                return 0.5 * x.squaredNorm();
            else {
                double v = 0;
                for (const auto &p : k.pieces) {
                    Vec xs = x.segment(p.offset, p.length);
                    if (p.fn->shift)
                        xs -= *p.fn->shift;
                    v += value_unshifted(*p.fn, xs);
                }
                return v;
            }
        },
        g.kind);
}

} // namespace detail

/// g(x) including the shift.
inline double function_value(const FunctionSpec &g, const Vec &x) {
    if (g.shift)
        return detail::value_unshifted(g, x - *g.shift);
    return detail::value_unshifted(g, x);
}

// ---------------------------------------------------------------------------
// Problem and layout
// ---------------------------------------------------------------------------

/// min p(x) + f(Bx) + <c,x> + 1/2 <x,Qx>  s.t.  x in P1, Ax in P2.
struct ProblemSpec {
    Index n = 0;
    FunctionSpec p;
    std::optional<FunctionSpec> f;
    LinearOperator A, B, Q;
    Vec c;
    BoxSet P1, P2;
    /// Skip the eigenvalue PSD check on Q.
    bool trust_psd = false;
};

enum class Slot { y = 0, z, r, v, x1, x2, x3, x4 };
inline constexpr int num_slots = 8;
inline constexpr std::array<const char *, num_slots> slot_names = {"y", "z", "r", "v", "x1", "x2", "x3", "x4"};

/// Which saddle variables exist, their sizes and offsets in the stacked vector.
/// The stacked order is (y, z, r, v | x1, x2, x3, x4); the first four form w1.
struct VariableLayout {
    bool has_y = false, has_x1 = false, has_z = false, has_x2 = false, has_r = false, has_x3 = false,
         has_v = false, has_x4 = true;
    std::array<Index, num_slots> dim{};
    std::array<Index, num_slots> offset{};
    Index n1 = 0;    ///< size of w1
    Index total = 0; ///< size of w

    bool has(Slot s) const {
        switch (s) {
            case Slot::y: return has_y;
            case Slot::z: return has_z;
            case Slot::r: return has_r;
            case Slot::v: return has_v;
            case Slot::x1: return has_x1;
            case Slot::x2: return has_x2;
            case Slot::x3: return has_x3;
            case Slot::x4: return has_x4;
        }
        return false;
    }
    Index size(Slot s) const { return has(s) ? dim[int(s)] : 0; }
    Index off(Slot s) const { return offset[int(s)]; }

    bool operator==(const VariableLayout &o) const {
        return has_y == o.has_y && has_x1 == o.has_x1 && has_z == o.has_z && has_x2 == o.has_x2 &&
               has_r == o.has_r && has_x3 == o.has_x3 && has_v == o.has_v && has_x4 == o.has_x4 &&
               dim == o.dim && offset == o.offset;
    }
};

inline VariableLayout make_layout(const ProblemSpec &s) {
    VariableLayout L;
    const auto c2 = s.P2.classify(), c1 = s.P1.classify();
    const Index m = s.A.present() ? s.A.rows() : 0;
    const Index l = s.f ? (s.B.present() ? s.B.rows() : s.n) : 0;
    L.has_y = c2 != BoxSet::Class::absent;
    L.has_x1 = L.has_y && c2 != BoxSet::Class::singleton;
    L.has_z = s.f.has_value();
    L.has_x2 = L.has_z && !s.f->smooth_conjugate();
    L.has_r = L.has_x3 = c1 != BoxSet::Class::absent;
    L.has_v = s.Q.present();
    L.has_x4 = true;
    L.dim = {m, l, s.n, s.n, m, l, s.n, s.n};
    Index off = 0;
    for (int i = 0; i < num_slots; ++i) {
        L.offset[i] = off;
        if (L.has(Slot(i)))
            off += L.dim[i];
        if (i == 3)
            L.n1 = off;
    }
    L.total = off;
    return L;
}

/// Validate dimensions and Q, fill defaults (B = I when f is present without B),
/// and derive the layout.
inline std::pair<ProblemSpec, VariableLayout> build_problem(ProblemSpec s) {
    const Index n = s.n;
    if (n < 1)
        throw Error(Errc::DimensionMismatch, "n", "primal dimension must be positive");
    if (s.c.size() == 0)
        s.c = Vec::Zero(n);
    if (s.c.size() != n)
        throw Error(Errc::DimensionMismatch, "c", "length " + std::to_string(s.c.size()) + " != n");
    if (s.p.is_zero() && !s.f && !s.Q.present() && s.c.isZero(0))
        throw Error(Errc::EmptyModel, "p,f", "no objective block present");
    s.p.validate();
    if (auto d = s.p.fixed_dim(); d && *d != n)
        throw Error(Errc::DimensionMismatch, "p", "kind dimension " + std::to_string(*d) + " != n");
    if (s.p.shift && s.p.shift->size() != n)
        throw Error(Errc::DimensionMismatch, "p.shift", "length != n");
    if (s.A.present() && s.A.cols() != n)
        throw Error(Errc::DimensionMismatch, "A", "A has " + std::to_string(s.A.cols()) + " columns, n = " + std::to_string(n));
    if (s.f) {
        s.f->validate();
        if (!s.B.present())
            s.B = LinearOperator::identity(n);
        if (s.B.cols() != n)
            throw Error(Errc::DimensionMismatch, "B", "B has " + std::to_string(s.B.cols()) + " columns, n = " + std::to_string(n));
        const Index l = s.B.rows();
        if (auto d = s.f->fixed_dim(); d && *d != l)
            throw Error(Errc::DimensionMismatch, "f", "kind dimension != rows of B");
        if (s.f->shift && s.f->shift->size() != l)
            throw Error(Errc::DimensionMismatch, "f.shift", "length != rows of B");
    } else if (s.B.present()) {
        throw Error(Errc::DimensionMismatch, "B", "B given without f");
    }
    if (s.P1.dim() != 0 && s.P1.dim() != n)
        throw Error(Errc::DimensionMismatch, "P1", "dimension != n");
    if (s.P2.dim() != 0) {
        if (!s.A.present())
            throw Error(Errc::DimensionMismatch, "P2", "P2 given without A");
        if (s.P2.dim() != s.A.rows())
            throw Error(Errc::DimensionMismatch, "P2", "dimension != rows of A");
    } else if (s.A.present()) {
        throw Error(Errc::DimensionMismatch, "A", "A given without P2");
    }
    if (s.Q.present()) {
        if (s.Q.rows() != n || s.Q.cols() != n)
            throw Error(Errc::DimensionMismatch, "Q", "Q must be n x n");
        if (s.Q.rep() != LinearOperator::Rep::identity && !s.trust_psd) {
            Mat Qd = s.Q.to_dense();
            const double nq = Qd.norm();
            if ((Qd - Qd.transpose()).norm() > 1e-10 * nq)
                throw Error(Errc::NotPSD, "Q", "not symmetric");
            if (n <= 2000) {
                Eigen::SelfAdjointEigenSolver<Mat> es(Qd, Eigen::EigenvaluesOnly);
                if (es.eigenvalues().minCoeff() < -1e-8 * nq)
                    throw Error(Errc::NotPSD, "Q", "negative eigenvalue");
            }
        }
    }
    VariableLayout L = make_layout(s);
    return {std::move(s), L};
}

/// p(x-b1) + f(Bx-b2) + <c,x> + 1/2 <x,Qx>.
inline double objective_value(const ProblemSpec &s, const Vec &x) {
    if (x.size() != s.n)
        throw Error(Errc::DimensionMismatch, "x", "length != n");
    double v = function_value(s.p, x);
    if (s.c.size() != 0) {
        if (s.c.size() != s.n)
            throw Error(Errc::DimensionMismatch, "c", "length != n");
        v += s.c.dot(x);
    }
    if (s.f)
        v += function_value(*s.f, s.B.present() ? s.B.apply(x) : x);
    if (s.Q.present())
        v += 0.5 * x.dot(s.Q.apply(x));
    return v;
}

} // namespace ssncvx
