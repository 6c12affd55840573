#include "tensegrity/structure.hpp"

#include "tensegrity/error.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace tensegrity {

std::string_view to_string(MemberRole role)
{
    switch (role) {
    case MemberRole::cable: return "cable";
    case MemberRole::strut: return "strut";
    case MemberRole::removed_candidate: return "removed-candidate";
    case MemberRole::unassigned: return "unassigned";
    }
    return "unassigned";
}

MemberRole role_from_string(std::string_view s)
{
    if (s == "cable") return MemberRole::cable;
    if (s == "strut") return MemberRole::strut;
    if (s == "removed-candidate") return MemberRole::removed_candidate;
    if (s == "unassigned") return MemberRole::unassigned;
    throw Error(ErrorCode::parse, "unknown member role", std::string(s));
}

std::string_view to_string(CellOrigin kind)
{
    switch (kind) {
    case CellOrigin::regular: return "regular";
    case CellOrigin::virtual_cell: return "virtual";
    case CellOrigin::fused: return "fused";
    }
    return "regular";
}

CellOrigin origin_from_string(std::string_view s)
{
    if (s == "regular") return CellOrigin::regular;
    if (s == "virtual") return CellOrigin::virtual_cell;
    if (s == "fused") return CellOrigin::fused;
    throw Error(ErrorCode::parse, "unknown cell kind", std::string(s));
}

std::optional<std::size_t> StructureState::find(const Member& m) const
{
    auto it = std::lower_bound(members.begin(), members.end(), m);
    if (it == members.end() || *it != m)
        return std::nullopt;
    return static_cast<std::size_t>(it - members.begin());
}

std::size_t StructureState::index_of(const Member& m) const
{
    auto i = find(m);
    if (!i)
        throw Error(ErrorCode::not_found, "member not in structure", to_string(m));
    return *i;
}

std::vector<NodeId> StructureState::node_ids() const
{
    std::vector<NodeId> ids;
    ids.reserve(nodes.size());
    for (const auto& [id, p] : nodes)
        ids.push_back(id);
    return ids;
}

double StructureState::diameter() const
{
    std::vector<Point3> pts;
    pts.reserve(nodes.size());
    for (const auto& [id, p] : nodes)
        pts.push_back(p);
    return tensegrity::diameter(pts);
}

Eigen::MatrixXd assemble_equilibrium_matrix(const std::map<NodeId, Point3>& nodes,
                                            const std::vector<Member>& members)
{
    std::map<NodeId, int> row;
    int r = 0;
    for (const auto& [id, p] : nodes)
        row[id] = r++;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3 * static_cast<Eigen::Index>(nodes.size()),
                                              static_cast<Eigen::Index>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k) {
        const Member& m = members[k];
        auto ia = row.find(m.a), ib = row.find(m.b);
        if (ia == row.end() || ib == row.end())
            throw Error(ErrorCode::not_found, "member endpoint missing", to_string(m));
        const Point3 d = nodes.at(m.a) - nodes.at(m.b);
        if (norm(d) == 0)
            throw Error(ErrorCode::degenerate_member, "member endpoints coincide", to_string(m));
        const double v[3] = {d.x, d.y, d.z};
        for (int c = 0; c < 3; ++c) {
            A(3 * ia->second + c, k) = v[c];
            A(3 * ib->second + c, k) = -v[c];
        }
    }
    return A;
}

Eigen::MatrixXd assemble_equilibrium_matrix(const StructureState& state)
{
    return assemble_equilibrium_matrix(state.nodes, state.members);
}

namespace {

struct Svd {
    Eigen::VectorXd sigma;
    Eigen::MatrixXd V;
};

Svd svd(const Eigen::MatrixXd& M, bool want_v)
{
    const unsigned opts = want_v ? static_cast<unsigned>(Eigen::ComputeFullV) : 0u;
    if (std::min(M.rows(), M.cols()) <= 32) {
        Eigen::JacobiSVD<Eigen::MatrixXd> s(M, opts);
        return {s.singularValues(), want_v ? Eigen::MatrixXd(s.matrixV()) : Eigen::MatrixXd()};
    }
    Eigen::BDCSVD<Eigen::MatrixXd> s(M, opts);
    return {s.singularValues(), want_v ? Eigen::MatrixXd(s.matrixV()) : Eigen::MatrixXd()};
}

int rank_of(const Eigen::VectorXd& sigma, double tol)
{
    if (sigma.size() == 0)
        return 0;
    const double cut = tol * sigma(0);
    int r = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        if (sigma(i) > cut)
            ++r;
    return r;
}

}  // namespace

Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& A, double tol)
{
    if (A.rows() == 0 || A.cols() == 0)
        throw Error(ErrorCode::usage, "nullspace of an empty matrix");
    if (!(tol > 0))
        throw Error(ErrorCode::usage, "rank tolerance must be positive");
    const Svd s = svd(A, true);
    const int r = rank_of(s.sigma, tol);
    return s.V.rightCols(A.cols() - r);
}

int numeric_rank(const Eigen::MatrixXd& M, double tol)
{
    if (M.rows() == 0 || M.cols() == 0)
        return 0;
    return rank_of(svd(M, false).sigma, tol);
}

int maxwell_mechanisms(int nodes, int members, int dim_w)
{
    return dim_w - (members - 3 * nodes + 6);
}

CountReport count_report(const StructureState& state, double tol)
{
    const int V = static_cast<int>(state.nodes.size());
    const int E = static_cast<int>(state.members.size());
    if (V < 3)
        throw Error(ErrorCode::out_of_domain, "counting rules need at least three nodes");
    CountReport r;
    r.nodes = V;
    r.members = E;
    r.laman_bound = 6 + E - 3 * V;
    r.rank_a = E == 0 ? 0 : numeric_rank(assemble_equilibrium_matrix(state), tol);
    r.dim_w = E - r.rank_a;
    r.mechanisms = 3 * V - 6 - r.rank_a;
    r.dof = r.dim_w - r.laman_bound;
    if (V <= 4) {
        r.small_branch = true;
        r.dof_small_branch = V * (V - 1) / 2 - E;
    }
    return r;
}

std::vector<MemberRole> typology_from_stress(const StructureState& state,
                                             const Eigen::VectorXd& combination, double tol)
{
    if (combination.size() != state.basis.cols())
        throw Error(ErrorCode::usage, "combination length differs from basis dimension");
    const Eigen::VectorXd w = state.basis * combination;
    const double peak = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
    std::vector<MemberRole> out(state.members.size(), MemberRole::unassigned);
    std::string zeros;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double v = w(static_cast<Eigen::Index>(k));
        if (!(std::abs(v) > tol * peak)) {
            zeros += (zeros.empty() ? "" : ",") + to_string(state.members[k]);
            continue;
        }
        out[k] = v > 0 ? MemberRole::cable : MemberRole::strut;
    }
    if (!zeros.empty())
        throw Error(ErrorCode::ambiguous_typology, "stress combination vanishes on some members", zeros);
    return out;
}

std::vector<MemberRole> default_typology(const StructureState& state, double tol)
{
    if (state.basis.cols() == 0)
        return std::vector<MemberRole>(state.members.size(), MemberRole::unassigned);
    try {
        return typology_from_stress(state, Eigen::VectorXd::Ones(state.basis.cols()), tol);
    } catch (const Error&) {
        return std::vector<MemberRole>(state.members.size(), MemberRole::unassigned);
    }
}

std::vector<Violation> audit(const StructureState& state, double tol)
{
    std::vector<Violation> out;
    for (const auto& m : state.members)
        if (!state.nodes.count(m.a) || !state.nodes.count(m.b))
            out.push_back({"member-endpoints", to_string(m)});
    if (!std::is_sorted(state.members.begin(), state.members.end()) ||
        std::adjacent_find(state.members.begin(), state.members.end()) != state.members.end())
        out.push_back({"canonical-order", "members are not strictly lexicographic"});
    if (state.basis.rows() != static_cast<Eigen::Index>(state.members.size()))
        out.push_back({"basis-shape", "basis rows differ from member count"});
    if (state.typology.size() != state.members.size())
        out.push_back({"typology-shape", "typology length differs from member count"});
    if (!out.empty() || state.members.empty())
        return out;

    const Eigen::MatrixXd A = assemble_equilibrium_matrix(state);
    const double diam = state.diameter();
    for (Eigen::Index c = 0; c < state.basis.cols(); ++c) {
        const double wn = state.basis.col(c).norm();
        const double res = (A * state.basis.col(c)).norm();
        if (!(wn > 0) || !(res <= tol * wn * diam)) {
            std::ostringstream s;
            s << "column " << c << " residual " << res << " (norm " << wn << ")";
            out.push_back({"equilibrium", s.str()});
        }
    }
    const int cols = static_cast<int>(state.basis.cols());
    if (cols > 0 && numeric_rank(state.basis, tol) != cols)
        out.push_back({"independence", "basis columns are linearly dependent"});

    const int nullity = static_cast<int>(state.members.size()) - numeric_rank(A, tol);
    if (nullity != cols) {
        out.push_back({"completeness", "basis has " + std::to_string(cols) + " columns, nullspace has " +
                                           std::to_string(nullity)});
    } else if (cols > 0) {
        const Eigen::MatrixXd N = nullspace_basis(A, tol);
        Eigen::MatrixXd Q = state.basis.householderQr().householderQ() *
                            Eigen::MatrixXd::Identity(state.basis.rows(), cols);
        const double r1 = (N - Q * (Q.transpose() * N)).norm();
        const double r2 = (Q - N * (N.transpose() * Q)).norm();
        if (!(std::max(r1, r2) <= 1e-8 * std::sqrt(static_cast<double>(cols)))) {
            std::ostringstream s;
            s << "projection residual " << std::max(r1, r2);
            out.push_back({"span", s.str()});
        }
    }

    bool assigned = std::any_of(state.typology.begin(), state.typology.end(),
                                [](MemberRole r) { return r == MemberRole::cable || r == MemberRole::strut; });
    if (assigned && cols > 0) {
        const Eigen::VectorXd w = state.basis * Eigen::VectorXd::Ones(cols);
        for (std::size_t k = 0; k < state.members.size(); ++k) {
            const MemberRole r = state.typology[k];
            if (r != MemberRole::cable && r != MemberRole::strut)
                continue;
            const double v = w(static_cast<Eigen::Index>(k));
            if ((r == MemberRole::cable) != (v > 0)) {
                out.push_back({"typology", "sign disagrees on " + to_string(state.members[k])});
                break;
            }
        }
    }
    return out;
}

int MorphoGraph::add_cell(CellOrigin kind, int step, std::vector<NodeId> nodes, std::vector<Member> edges)
{
    std::sort(nodes.begin(), nodes.end());
    std::sort(edges.begin(), edges.end());
    const int id = next_id();
    for (const auto& [other_id, other] : cells) {
        std::vector<Member> shared;
        std::set_intersection(edges.begin(), edges.end(), other.edges.begin(), other.edges.end(),
                              std::back_inserter(shared));
        if (!shared.empty())
            adjacency[{other_id, id}] = std::move(shared);
    }
    cells[id] = MorphoCell{id, kind, step, std::move(nodes), std::move(edges)};
    return id;
}

const MorphoCell& MorphoGraph::cell(int id) const
{
    auto it = cells.find(id);
    if (it == cells.end())
        throw Error(ErrorCode::not_found, "no such cell", std::to_string(id));
    return it->second;
}

}  // namespace tensegrity
