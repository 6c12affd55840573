#pragma once

#include "tensegrity/structure.hpp"

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace tensegrity {

struct PlaneConstraint {
    LinearForm3 form;
};

// [xD,yD,zD,1] * m * [xE,yE,zE,1]^T
struct BilinearConstraint {
    Eigen::Matrix4d m;
};

// [1,x,y,z] * t * [1,x,y,z]^T, not symmetrized
struct QuadricConstraint {
    Eigen::Matrix4d t;
};

using PlacementConstraint = std::variant<PlaneConstraint, BilinearConstraint, QuadricConstraint>;

std::string constraint_kind(const PlacementConstraint& c);

// Cell ABCDE with A,B,C fixed: zero set is where w_AB / w_BC = w1 / w2.
BilinearConstraint constraint_adjacent_shared3(const Point3& A, const Point3& B, const Point3& C, double w1,
                                               double w2);
// Same, with D fixed; a plane in E.
PlaneConstraint plane_adjacent_shared4(const Point3& A, const Point3& B, const Point3& C, const Point3& D,
                                       double w1, double w2);
PlaneConstraint contract(const BilinearConstraint& c, const Point3& D);
// Cell ABCDE removing AB and CD: zero set is where w_AB / w_CD = w1 / w2.
QuadricConstraint quadric_nonadjacent_shared4(const Point3& A, const Point3& B, const Point3& C,
                                              const Point3& D, double w1, double w2);

double evaluate(const PlaneConstraint& c, const Point3& e);
double evaluate(const QuadricConstraint& c, const Point3& e);
double evaluate(const BilinearConstraint& c, const Point3& d, const Point3& e);

// Scale-free value in [-1, 1]: |value| / (|coefficients| * |[1,e]|^degree).
double normalized_residual(const PlacementConstraint& c, const Point3& e);
// First-order distance to the zero set (value over gradient norm).
double distance_estimate(const PlacementConstraint& c, const Point3& e);

struct SolveOptions {
    double scale = 1.0;
    double tol = 1e-10;   // times scale
    int max_iterations = 200;
    double damping = 0.5;
};

Point3 solve_on_constraints(const std::vector<PlacementConstraint>& constraints, const Point3& guess,
                            const SolveOptions& opt = {});

struct Box {
    Point3 lo, hi;
};

Box bounding_box(const StructureState& state, double margin = 0.25);

std::vector<Point3> sample_surface(const PlacementConstraint& c, int count, const Box& region,
                                   std::uint64_t seed = 1);

// Constraint for moving a new node of `cell` so that the members `targets`
// cancel when the cell is fused into `existing` (the structure before the cell
// was added).
struct FusionSurface {
    std::vector<PlacementConstraint> constraints;
    std::string kind;   // "plane", "quadric", "bilinear-fixed"
    NodeId unknown = 0;
    std::optional<NodeId> fixed;
    std::vector<Member> targets;
    std::vector<double> densities;   // required new-cell force densities on targets
};

FusionSurface fusion_surface(const StructureState& existing, const CellSpec& cell,
                             const std::vector<Member>& targets, std::optional<NodeId> fixed = std::nullopt,
                             std::optional<NodeId> unknown = std::nullopt);

}  // namespace tensegrity
