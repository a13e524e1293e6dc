#pragma once

// JSON problem files and solve reports.

#include "newton.hpp"

#include <json.hpp>
#include <unsupported/Eigen/SparseExtra>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace ssncvx::io {

using json = nlohmann::json;

namespace detail {

[[noreturn]] inline void fail(const std::string &field, const std::string &msg) {
    throw Error(Errc::Parse, field, msg);
}

inline const json &need(const json &j, const char *key, const std::string &path) {
    auto it = j.find(key);
    if (it == j.end())
        fail(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
}

inline std::string join(const std::string &path, const std::string &key) {
    return path.empty() ? key : path + "." + key;
}

/// Accepts numbers and the strings "inf", "-inf", "nan".
inline double real(const json &j, const std::string &path) {
    if (j.is_number())
        return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "+inf")
            return inf;
        if (s == "-inf")
            return -inf;
        if (s == "nan")
            return std::numeric_limits<double>::quiet_NaN();
    }
    fail(path, "expected a number");
}

inline json real_out(double v) {
    if (std::isfinite(v))
        return v;
    if (std::isnan(v))
        return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline Index integer(const json &j, const std::string &path) {
    if (!j.is_number_integer())
        fail(path, "expected an integer");
    return j.get<Index>();
}

inline Vec vec(const json &j, const std::string &path) {
    if (!j.is_array())
        fail(path, "expected an array of numbers");
    Vec v(Index(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[Index(i)] = real(j[i], path + "[" + std::to_string(i) + "]");
    return v;
}

inline json vec_out(const Vec &v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i)
        a.push_back(real_out(v[i]));
    return a;
}

/// Operator forms: "identity"; {"dense": [[...], ...]};
/// {"rows", "cols", "entries": [[i, j, v], ...]}; {"mtx": "file.mtx"}.
inline LinearOperator op(const json &j, const std::string &path, const std::filesystem::path &base) {
    if (j.is_string()) {
        if (j.get<std::string>() == "identity")
            fail(path, "identity needs a size; use {\"identity\": n}");
        fail(path, "unknown operator form");
    }
    if (!j.is_object())
        fail(path, "expected an operator object");
    if (j.contains("identity"))
        return LinearOperator::identity(integer(j["identity"], join(path, "identity")));
    if (j.contains("dense")) {
        const json &rows = j["dense"];
        const std::string p = join(path, "dense");
        if (!rows.is_array() || rows.empty() || !rows[0].is_array())
            fail(p, "expected a nonempty array of rows");
        const Index r = Index(rows.size()), c = Index(rows[0].size());
        Mat M(r, c);
        for (Index i = 0; i < r; ++i) {
            Vec row = vec(rows[std::size_t(i)], p + "[" + std::to_string(i) + "]");
            if (row.size() != c)
                fail(p + "[" + std::to_string(i) + "]", "ragged row");
            M.row(i) = row.transpose();
        }
        return LinearOperator::dense(std::move(M));
    }
    if (j.contains("mtx")) {
        const std::string p = join(path, "mtx");
        if (!j["mtx"].is_string())
            fail(p, "expected a file name");
        std::filesystem::path f = j["mtx"].get<std::string>();
        if (f.is_relative())
            f = base / f;
        SpMat M;
        if (!std::filesystem::exists(f) || !Eigen::loadMarket(M, f.string()))
            fail(p, "cannot read Matrix Market file '" + f.string() + "'");
        return LinearOperator::sparse(std::move(M));
    }
    const Index r = integer(need(j, "rows", path), join(path, "rows"));
    const Index c = integer(need(j, "cols", path), join(path, "cols"));
    if (r < 1 || c < 1)
        fail(path, "rows and cols must be positive");
    const json &ent = need(j, "entries", path);
    const std::string p = join(path, "entries");
    if (!ent.is_array())
        fail(p, "expected an array of [i, j, v] triplets");
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(ent.size());
    for (std::size_t k = 0; k < ent.size(); ++k) {
        const std::string pk = p + "[" + std::to_string(k) + "]";
        if (!ent[k].is_array() || ent[k].size() != 3)
            fail(pk, "expected [i, j, v]");
        const Index i = integer(ent[k][0], pk), jj = integer(ent[k][1], pk);
        if (i < 0 || i >= r || jj < 0 || jj >= c)
            fail(pk, "index out of range");
        t.emplace_back(i, jj, real(ent[k][2], pk));
    }
    SpMat M(r, c);
    M.setFromTriplets(t.begin(), t.end());
    return LinearOperator::sparse(std::move(M));
}

inline json op_out(const LinearOperator &A) {
    switch (A.rep()) {
        case LinearOperator::Rep::identity: return {{"identity", A.rows()}};
        case LinearOperator::Rep::dense: {
            json rows = json::array();
            const Mat &M = A.dense_matrix();
            for (Index i = 0; i < M.rows(); ++i)
                rows.push_back(vec_out(M.row(i).transpose()));
            return {{"dense", rows}};
        }
        case LinearOperator::Rep::sparse: {
            json ent = json::array();
            const SpMat &M = A.sparse_matrix();
            for (Index k = 0; k < M.outerSize(); ++k)
                for (SpMat::InnerIterator it(M, k); it; ++it)
                    ent.push_back({it.row(), it.col(), it.value()});
            return {{"rows", M.rows()}, {"cols", M.cols()}, {"entries", ent}};
        }
        case LinearOperator::Rep::absent: break;
    }
    return nullptr;
}

inline BoxSet box(const json &j, const std::string &path) {
    if (!j.is_object())
        fail(path, "expected {\"lower\": [...], \"upper\": [...]}");
    Vec lo = vec(need(j, "lower", path), join(path, "lower"));
    Vec up = vec(need(j, "upper", path), join(path, "upper"));
    if (lo.size() != up.size())
        fail(path, "lower and upper lengths differ");
    try {
        return BoxSet(std::move(lo), std::move(up));
    } catch (const Error &e) {
        fail(path, e.what());
    }
}

inline json box_out(const BoxSet &b) { return {{"lower", vec_out(b.lower)}, {"upper", vec_out(b.upper)}}; }

inline std::vector<Index> dims(const json &j, const std::string &path) {
    if (!j.is_array() || j.empty())
        fail(path, "expected a nonempty array of cone dimensions");
    std::vector<Index> d;
    for (std::size_t i = 0; i < j.size(); ++i)
        d.push_back(integer(j[i], path + "[" + std::to_string(i) + "]"));
    return d;
}

inline FunctionSpec function(const json &j, const std::string &path) {
    if (!j.is_object())
        fail(path, "expected a function object");
    const json &kj = need(j, "kind", path);
    if (!kj.is_string())
        fail(join(path, "kind"), "expected a string");
    const std::string k = kj.get<std::string>();
    auto num = [&](const char *key) { return real(need(j, key, path), join(path, key)); };
    auto idx = [&](const char *key) { return integer(need(j, key, path), join(path, key)); };
    FunctionKind kind;
    if (k == "Zero")
        kind = fn::Zero{};
    else if (k == "L1")
        kind = fn::L1{num("lambda")};
    else if (k == "L2Norm")
        kind = fn::L2Norm{num("lambda")};
    else if (k == "L2Ball")
        kind = fn::L2Ball{num("radius")};
    else if (k == "BoxIndicator")
        kind = fn::Box{box(j, path)};
    else if (k == "SOCIndicator")
        kind = fn::SocIndicator{dims(need(j, "dims", path), join(path, "dims"))};
    else if (k == "SOCBarrier")
        kind = fn::SocBarrier{dims(need(j, "dims", path), join(path, "dims")), num("mu")};
    else if (k == "NuclearNorm")
        kind = fn::Nuclear{num("lambda"), idx("n1"), idx("n2")};
    else if (k == "SpectralNorm")
        kind = fn::Spectral{num("lambda"), idx("n1"), idx("n2")};
    else if (k == "PSDIndicator")
        kind = fn::Psd{idx("n")};
    else if (k == "Fused")
        kind = fn::Fused{num("lambda1"), num("lambda2")};
    else if (k == "SquaredLoss")
        kind = fn::SquaredLoss{};
    else if (k == "Composite") {
        const json &pj = need(j, "pieces", path);
        const std::string pp = join(path, "pieces");
        if (!pj.is_array())
            fail(pp, "expected an array");
        fn::Composite c;
        for (std::size_t i = 0; i < pj.size(); ++i) {
            const std::string pi = pp + "[" + std::to_string(i) + "]";
            fn::Piece piece{integer(need(pj[i], "offset", pi), join(pi, "offset")),
                            integer(need(pj[i], "length", pi), join(pi, "length")),
                            std::make_shared<const FunctionSpec>(function(need(pj[i], "fn", pi), join(pi, "fn")))};
            c.pieces.push_back(std::move(piece));
        }
        kind = std::move(c);
    } else
        fail(join(path, "kind"), "unknown function kind '" + k + "'");
    std::optional<Vec> shift;
    if (j.contains("shift"))
        shift = vec(j["shift"], join(path, "shift"));
    try {
        return FunctionSpec(std::move(kind), std::move(shift));
    } catch (const Error &e) {
        throw Error(e.code(), join(path, e.field()), e.what());
    }
}

inline json function_out(const FunctionSpec &g) {
    json j = {{"kind", g.name()}};
    std::visit(
        [&](const auto &k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, fn::L1> || std::is_same_v<K, fn::L2Norm>)
                j["lambda"] = k.lambda;
            else if constexpr (std::is_same_v<K, fn::L2Ball>)
                j["radius"] = k.radius;
            else if constexpr (std::is_same_v<K, fn::Box>)
                j.update(box_out(k.set));
            else if constexpr (std::is_same_v<K, fn::SocIndicator>)
                j["dims"] = k.dims;
            else if constexpr (std::is_same_v<K, fn::SocBarrier>) {
                j["dims"] = k.dims;
                j["mu"] = k.mu;
            } else if constexpr (std::is_same_v<K, fn::Nuclear> || std::is_same_v<K, fn::Spectral>) {
                j["lambda"] = k.lambda;
                j["n1"] = k.n1;
                j["n2"] = k.n2;
            } else if constexpr (std::is_same_v<K, fn::Psd>)
                j["n"] = k.n;
            else if constexpr (std::is_same_v<K, fn::Fused>) {
                j["lambda1"] = k.lambda1;
                j["lambda2"] = k.lambda2;
            } else if constexpr (std::is_same_v<K, fn::Composite>) {
                json pieces = json::array();
                for (const auto &p : k.pieces)
                    pieces.push_back({{"offset", p.offset}, {"length", p.length}, {"fn", function_out(*p.fn)}});
                j["pieces"] = pieces;
            }
        },
        g.kind);
    if (g.shift)
        j["shift"] = vec_out(*g.shift);
    return j;
}

} // namespace detail

/// Parse a problem document. Relative Matrix Market paths resolve against `base`.
inline ProblemSpec parse_problem(const json &j, const std::filesystem::path &base = {}) {
    using namespace detail;
    if (!j.is_object())
        fail("problem", "expected a JSON object");
    ProblemSpec s;
    s.n = integer(need(j, "n", ""), "n");
    if (s.n < 1)
        fail("n", "must be positive");
    if (j.contains("c"))
        s.c = vec(j["c"], "c");
    s.p = j.contains("p") ? function(j["p"], "p") : FunctionSpec();
    if (j.contains("f"))
        s.f = function(j["f"], "f");
    for (const char *k : {"A", "B", "Q"}) {
        if (!j.contains(k))
            continue;
        LinearOperator o = op(j[k], k, base);
        (k[0] == 'A' ? s.A : k[0] == 'B' ? s.B : s.Q) = std::move(o);
    }
    if (j.contains("P1"))
        s.P1 = box(j["P1"], "P1");
    if (j.contains("P2"))
        s.P2 = box(j["P2"], "P2");
    if (j.contains("trust_psd"))
        s.trust_psd = j["trust_psd"].get<bool>();
    return s;
}

inline ProblemSpec load_problem(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        detail::fail("file", "cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        detail::fail("file", e.what());
    }
    return parse_problem(j, std::filesystem::path(path).parent_path());
}

inline json problem_to_json(const ProblemSpec &s) {
    using namespace detail;
    json j = {{"n", s.n}, {"p", function_out(s.p)}};
    if (s.c.size())
        j["c"] = vec_out(s.c);
    if (s.f)
        j["f"] = function_out(*s.f);
    if (s.A.present())
        j["A"] = op_out(s.A);
    if (s.B.present())
        j["B"] = op_out(s.B);
    if (s.Q.present())
        j["Q"] = op_out(s.Q);
    if (s.P1.dim())
        j["P1"] = box_out(s.P1);
    if (s.P2.dim())
        j["P2"] = box_out(s.P2);
    if (s.trust_psd)
        j["trust_psd"] = true;
    return j;
}

inline json kkt_to_json(const KktResiduals &k) {
    using detail::real_out;
    return {{"eta_P", real_out(k.eta_P)},       {"eta_D", real_out(k.eta_D)}, {"eta_K", real_out(k.eta_K)},
            {"eta_Pset", real_out(k.eta_Pset)}, {"eta_gap", real_out(k.eta_gap)}, {"eta_max", real_out(k.eta_max)}};
}

inline json trace_to_json(const IterTrace &t) {
    using detail::real_out;
    return {{"k", t.k},
            {"F_norm", real_out(t.F_norm)},
            {"F_next", real_out(t.F_next)},
            {"eta_max", real_out(t.eta_max)},
            {"tau", real_out(t.tau)},
            {"inner", t.inner},
            {"accepted", accept_name(t.accepted)},
            {"alpha", real_out(t.alpha)},
            {"window_bound", real_out(t.window_bound)},
            {"rho", real_out(t.rho)},
            {"kappa", real_out(t.kappa)},
            {"sigma", real_out(t.sigma)},
            {"mu", real_out(t.mu)},
            {"system_residual", real_out(t.system_residual)},
            {"eps_norm", real_out(t.eps_norm)},
            {"linsys", t.linsys},
            {"linsys_iters", t.linsys_iters},
            {"time", real_out(t.time)}};
}

inline json report_to_json(const SolveReport &r, bool with_trace = true) {
    using detail::real_out;
    json j = {{"status", r.status},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"wall_time", real_out(r.wall_time)},
              {"pobj", real_out(r.kkt.pobj)},
              {"dobj", real_out(r.kkt.dobj)},
              {"eta", kkt_to_json(r.kkt)},
              {"F_norm", real_out(r.F_norm)},
              {"sigma", real_out(r.sigma)},
              {"x", detail::vec_out(r.x)}};
    if (with_trace) {
        json t = json::array();
        for (const auto &tr : r.trace)
            t.push_back(trace_to_json(tr));
        j["trace"] = t;
    }
    return j;
}

/// Real-valued fields round-trip exactly: the serializer emits the shortest
/// representation that parses back to the same double.
inline void write_json(const json &j, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        detail::fail("report", "cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

/// One CSV row per iteration.
inline void write_trace_csv(const SolveReport &r, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        detail::fail("trace", "cannot write '" + path + "'");
    out.precision(17);
    out << "k,F_norm,F_next,eta_max,tau,inner,accepted,alpha,rho,kappa,sigma,mu,system_residual,linsys,linsys_iters,time\n";
    for (const auto &t : r.trace)
        out << t.k << ',' << t.F_norm << ',' << t.F_next << ',' << t.eta_max << ',' << t.tau << ',' << t.inner << ','
            << accept_name(t.accepted) << ',' << t.alpha << ',' << t.rho << ',' << t.kappa << ',' << t.sigma << ','
            << t.mu << ',' << t.system_residual << ',' << t.linsys << ',' << t.linsys_iters << ',' << t.time << '\n';
}

} // namespace ssncvx::io
