#pragma once

#include "tensegrity/cell.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tensegrity {

enum class MemberRole { cable, strut, removed_candidate, unassigned };

std::string_view to_string(MemberRole role);
MemberRole role_from_string(std::string_view s);

struct StructureState {
    std::map<NodeId, Point3> nodes;
    std::vector<Member> members;        // lexicographic
    Eigen::MatrixXd basis;              // members.size() x dim
    std::vector<MemberRole> typology;   // parallel to members

    int dim() const { return static_cast<int>(basis.cols()); }
    std::optional<std::size_t> find(const Member& m) const;
    std::size_t index_of(const Member& m) const;  // throws not_found
    std::vector<NodeId> node_ids() const;
    double diameter() const;
};

// 3|V| x |E|; rows follow ascending node ids, columns follow state.members.
Eigen::MatrixXd assemble_equilibrium_matrix(const StructureState& state);
Eigen::MatrixXd assemble_equilibrium_matrix(const std::map<NodeId, Point3>& nodes,
                                            const std::vector<Member>& members);

// Orthonormal right nullspace; singular values below tol * sigma_max count as zero.
Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& A, double tol = 1e-9);
int numeric_rank(const Eigen::MatrixXd& M, double tol = 1e-9);

struct CountReport {
    int nodes = 0;
    int members = 0;
    int laman_bound = 0;
    int dim_w = 0;
    int rank_a = 0;
    int mechanisms = 0;
    int dof = 0;
    // The two branches of the rigidity proposition overlap for 3 or 4 nodes;
    // both values are reported there.
    bool small_branch = false;
    int dof_small_branch = 0;
};

CountReport count_report(const StructureState& state, double tol = 1e-9);

// Mechanism count implied by the Maxwell identity for given counts.
int maxwell_mechanisms(int nodes, int members, int dim_w);

// Throws ambiguous_typology if an entry of W * combination is near zero.
std::vector<MemberRole> typology_from_stress(const StructureState& state,
                                             const Eigen::VectorXd& combination, double tol = 1e-9);
// All-ones combination; unassigned instead of throwing.
std::vector<MemberRole> default_typology(const StructureState& state, double tol = 1e-9);

struct Violation {
    std::string invariant;
    std::string detail;
};

std::vector<Violation> audit(const StructureState& state, double tol = 1e-9);

// G_c: cells as vertices, shared members as edges.
enum class CellOrigin { regular, virtual_cell, fused };

std::string_view to_string(CellOrigin kind);
CellOrigin origin_from_string(std::string_view s);

struct MorphoCell {
    int id = 0;
    CellOrigin kind = CellOrigin::regular;
    int step = 0;
    std::vector<NodeId> nodes;   // sorted
    std::vector<Member> edges;   // sorted
};

struct MorphoGraph {
    std::map<int, MorphoCell> cells;
    std::map<std::pair<int, int>, std::vector<Member>> adjacency;
    std::vector<int> columns;  // owning cell of each basis column

    int next_id() const { return cells.empty() ? 1 : cells.rbegin()->first + 1; }
    int add_cell(CellOrigin kind, int step, std::vector<NodeId> nodes, std::vector<Member> edges);
    const MorphoCell& cell(int id) const;
};

struct Snapshot {
    StructureState state;
    MorphoGraph graph;
};

}  // namespace tensegrity
