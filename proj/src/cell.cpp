#include "tensegrity/cell.hpp"

#include "tensegrity/error.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace tensegrity {

Member make_member(NodeId i, NodeId j)
{
    if (i == j)
        throw Error(ErrorCode::degenerate_member, "member endpoints coincide", std::to_string(i));
    return i < j ? Member{i, j} : Member{j, i};
}

std::string to_string(const Member& m)
{
    return std::to_string(m.a) + "-" + std::to_string(m.b);
}

std::array<Member, 10> cell_members(const std::array<NodeId, 5>& nodes)
{
    std::array<NodeId, 5> s = nodes;
    std::sort(s.begin(), s.end());
    std::array<Member, 10> out{};
    int k = 0;
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j)
            out[k++] = make_member(s[i], s[j]);
    return out;
}

double CellStress::at(const Member& m) const
{
    for (int k = 0; k < 10; ++k)
        if (members[k] == m)
            return values[k];
    throw Error(ErrorCode::not_found, "member not in cell", to_string(m));
}

void validate(const CellSpec& spec, double gp_tol)
{
    std::set<NodeId> ids(spec.nodes.begin(), spec.nodes.end());
    if (ids.size() != 5)
        throw Error(ErrorCode::usage, "cell node ids must be distinct");
    if (!ids.count(spec.anchor.a) || !ids.count(spec.anchor.b) || spec.anchor.a == spec.anchor.b)
        throw Error(ErrorCode::usage, "anchor member is not an edge of the cell", to_string(spec.anchor));
    if (spec.anchor_value == 0 || !std::isfinite(spec.anchor_value))
        throw Error(ErrorCode::usage, "anchor value must be finite and nonzero");
    for (const auto& p : spec.coords)
        if (!p.finite())
            throw Error(ErrorCode::usage, "non-finite coordinate in cell");
    const auto gp = general_position(spec.coords, gp_tol);
    if (!gp.ok) {
        std::string q;
        for (int i : gp.quadruple)
            q += (q.empty() ? "" : ",") + std::to_string(spec.nodes[i]);
        throw Error(ErrorCode::degenerate_geometry, "cell nodes are not in general position",
                    "coplanar quadruple " + q);
    }
}

CellStress cell_self_stress(const CellSpec& spec, double gp_tol)
{
    validate(spec, gp_tol);

    // Relabel so the anchor becomes (P1, P2); the other three keep spec order.
    std::array<int, 5> pos{};
    int k = 0;
    for (int i = 0; i < 5; ++i)
        if (spec.nodes[i] == spec.anchor.a)
            pos[0] = i;
        else if (spec.nodes[i] == spec.anchor.b)
            pos[1] = i;
    k = 2;
    for (int i = 0; i < 5; ++i)
        if (spec.nodes[i] != spec.anchor.a && spec.nodes[i] != spec.anchor.b)
            pos[k++] = i;

    auto P = [&](int label) { return spec.coords[pos[label - 1]]; };
    auto f = [&](int a, int b, int c, int d) { return oriented_volume(P(a), P(b), P(c), P(d)); };

    const double f1234 = f(1, 2, 3, 4), f1235 = f(1, 2, 3, 5), f1245 = f(1, 2, 4, 5);
    const double f1345 = f(1, 3, 4, 5), f2345 = f(2, 3, 4, 5);
    const double r23 = f1245 / f2345;
    const double alpha = spec.anchor_value;

    std::map<std::pair<int, int>, double> w;
    w[{1, 2}] = 1.0;
    w[{1, 3}] = -f1245 / f1345;
    w[{1, 4}] = f1235 / f1345;
    w[{1, 5}] = -f1234 / f1345;
    w[{2, 3}] = r23;
    w[{2, 4}] = -f1235 / f2345;
    w[{2, 5}] = f1234 / f2345;
    w[{3, 4}] = f1235 / f1345 * r23;
    w[{3, 5}] = -f1234 / f1345 * r23;
    w[{4, 5}] = f1235 / f1345 * (f1234 / f2345);

    CellStress out;
    out.members = cell_members(spec.nodes);
    for (const auto& [labels, value] : w) {
        const Member m = make_member(spec.nodes[pos[labels.first - 1]], spec.nodes[pos[labels.second - 1]]);
        for (int i = 0; i < 10; ++i)
            if (out.members[i] == m)
                out.values[i] = alpha * value;
    }
    return out;
}

CellKind classify_cell(const CellStress& stress)
{
    double peak = 0;
    for (double v : stress.values)
        peak = std::max(peak, std::abs(v));
    std::vector<Member> neg, pos;
    for (int i = 0; i < 10; ++i) {
        if (!(std::abs(stress.values[i]) > 1e-12 * peak))
            throw Error(ErrorCode::degenerate_geometry, "zero force density in cell", to_string(stress.members[i]));
        (stress.values[i] < 0 ? neg : pos).push_back(stress.members[i]);
    }
    const std::vector<Member>* group = nullptr;
    if (neg.size() == 4)
        group = &neg;
    else if (pos.size() == 4)
        group = &pos;
    else
        throw Error(ErrorCode::classification, "sign partition is not 6/4",
                    std::to_string(neg.size()) + " negative entries");

    std::map<NodeId, int> degree;
    for (const auto& m : *group) {
        ++degree[m.a];
        ++degree[m.b];
    }
    for (const auto& [node, d] : degree)
        if (d == 4)
            return CellKind::TypeII;

    // triangle plus a disjoint edge: three nodes of degree 2, and the two
    // degree-1 nodes joined by a group member (a path has the same degrees)
    int deg2 = 0;
    std::vector<NodeId> leaves;
    for (const auto& [node, d] : degree) {
        if (d == 2) ++deg2;
        if (d == 1) leaves.push_back(node);
    }
    if (deg2 == 3 && leaves.size() == 2 &&
        std::find(group->begin(), group->end(), make_member(leaves[0], leaves[1])) != group->end())
        return CellKind::TypeI;
    throw Error(ErrorCode::classification, "four-member group is neither a star nor a triangle with an edge");
}

double cell_equilibrium_residual(const CellSpec& spec, const CellStress& stress)
{
    double worst = 0;
    for (int i = 0; i < 5; ++i) {
        Point3 sum;
        for (int k = 0; k < 10; ++k) {
            const Member& m = stress.members[k];
            if (m.a != spec.nodes[i] && m.b != spec.nodes[i])
                continue;
            const NodeId other = m.a == spec.nodes[i] ? m.b : m.a;
            const auto j = std::find(spec.nodes.begin(), spec.nodes.end(), other) - spec.nodes.begin();
            sum = sum + (spec.coords[i] - spec.coords[j]) * stress.values[k];
        }
        worst = std::max(worst, norm(sum));
    }
    return worst;
}

}  // namespace tensegrity
