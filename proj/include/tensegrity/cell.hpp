#pragma once

#include "tensegrity/geometry.hpp"

#include <array>
#include <compare>
#include <string>
#include <vector>

namespace tensegrity {

using NodeId = int;

// Unordered node pair, stored with a < b.
struct Member {
    NodeId a = 0, b = 0;
    auto operator<=>(const Member&) const = default;
};

Member make_member(NodeId i, NodeId j);
std::string to_string(const Member& m);

struct CellSpec {
    std::array<NodeId, 5> nodes{};
    std::array<Point3, 5> coords{};
    Member anchor{};
    double anchor_value = 1.0;
};

// The 10 members of a cell in lexicographic order of sorted pairs.
std::array<Member, 10> cell_members(const std::array<NodeId, 5>& nodes);

struct CellStress {
    std::array<Member, 10> members{};
    std::array<double, 10> values{};

    double at(const Member& m) const;
};

enum class CellKind { TypeI, TypeII };

// Throws degenerate_geometry, or usage for a bad anchor / repeated ids.
void validate(const CellSpec& spec, double gp_tol = 1e-9);

CellStress cell_self_stress(const CellSpec& spec, double gp_tol = 1e-9);
CellKind classify_cell(const CellStress& stress);
double cell_equilibrium_residual(const CellSpec& spec, const CellStress& stress);

}  // namespace tensegrity
