#include "common.hpp"

#include "tensegrity/error.hpp"
#include "tensegrity/placement.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace tensegrity;
using testutil::P;

namespace {

// Stress of cell {A,B,C,D,E} (ids 1..5) from the SVD nullspace.
std::map<Member, double> svd_stress(const std::array<Point3, 5>& p)
{
    std::map<NodeId, Point3> nodes;
    for (int i = 0; i < 5; ++i) nodes[i + 1] = p[i];
    auto mem = cell_members({1, 2, 3, 4, 5});
    std::vector<Member> members(mem.begin(), mem.end());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(assemble_equilibrium_matrix(nodes, members), Eigen::ComputeFullV);
    std::map<Member, double> out;
    for (int k = 0; k < 10; ++k) out[members[k]] = svd.matrixV()(k, 9);
    return out;
}

double ratio(const std::map<Member, double>& w, Member a, Member b) { return w.at(a) / w.at(b); }

bool spread(std::mt19937_64& rng, std::array<Point3, 5>& p, int fixed)
{
    for (int i = 0; i < fixed; ++i) p[i] = testutil::random_point(rng);
    std::vector<Point3> v(p.begin(), p.begin() + fixed);
    return diameter(v) > 0.5;
}

}  // namespace

TEST(Plane, EqualsContraction)
{
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
        Point3 A = testutil::random_point(rng), B = testutil::random_point(rng), C = testutil::random_point(rng),
               D = testutil::random_point(rng);
        const double w1 = 0.3 + t * 0.01, w2 = -0.7;
        const auto a = plane_adjacent_shared4(A, B, C, D, w1, w2).form.coeffs();
        const auto b = contract(constraint_adjacent_shared3(A, B, C, w1, w2), D).form.coeffs();
        double scale = 0;
        for (double x : a) scale = std::max(scale, std::abs(x));
        for (int k = 0; k < 4; ++k) EXPECT_NEAR(a[k], b[k], 1e-12 * scale);
    }
}

TEST(Plane, RoundTrip)
{
    std::mt19937_64 rng(17);
    int done = 0;
    for (int t = 0; done < 100 && t < 1000; ++t) {
        std::array<Point3, 5> p;
        if (!spread(rng, p, 4)) continue;
        const double w1 = std::uniform_real_distribution<double>(0.2, 2)(rng);
        const double w2 = -std::uniform_real_distribution<double>(0.2, 2)(rng);
        PlacementConstraint c = plane_adjacent_shared4(p[0], p[1], p[2], p[3], w1, w2);
        auto pts = sample_surface(c, 1, Box{P(-2, -2, -2), P(2, 2, 2)}, t + 1);
        if (pts.empty()) continue;
        p[4] = pts[0];
        if (!general_position(p, 1e-4).ok) continue;
        auto w = svd_stress(p);
        EXPECT_NEAR(ratio(w, {1, 2}, {2, 3}), w1 / w2, 1e-7 * std::abs(w1 / w2)) << t;
        ++done;
    }
    EXPECT_EQ(done, 100);
}

TEST(Bilinear, RoundTrip)
{
    std::mt19937_64 rng(23);
    int done = 0;
    for (int t = 0; done < 100 && t < 1000; ++t) {
        std::array<Point3, 5> p;
        if (!spread(rng, p, 3)) continue;
        const double w1 = 1, w2 = std::uniform_real_distribution<double>(-2, 2)(rng);
        if (std::abs(w2) < 0.1) continue;
        auto bl = constraint_adjacent_shared3(p[0], p[1], p[2], w1, w2);
        p[3] = testutil::random_point(rng);
        PlaneConstraint pl;
        try {
            pl = contract(bl, p[3]);
        } catch (const Error&) {
            continue;
        }
        auto pts = sample_surface(pl, 1, Box{P(-2, -2, -2), P(2, 2, 2)}, t + 1);
        if (pts.empty()) continue;
        p[4] = pts[0];
        if (!general_position(p, 1e-4).ok) continue;
        EXPECT_NEAR(evaluate(bl, p[3], p[4]), 0, 1e-9);
        auto w = svd_stress(p);
        EXPECT_NEAR(ratio(w, {1, 2}, {2, 3}), w1 / w2, 1e-7 * std::abs(w1 / w2)) << t;
        ++done;
    }
    EXPECT_EQ(done, 100);
}

TEST(Quadric, RoundTrip)
{
    std::mt19937_64 rng(29);
    int done = 0;
    for (int t = 0; done < 100 && t < 2000; ++t) {
        std::array<Point3, 5> p;
        if (!spread(rng, p, 4)) continue;
        if (std::abs(oriented_volume(p[0], p[1], p[2], p[3])) < 1e-3) continue;
        const double w1 = 1, w2 = std::uniform_real_distribution<double>(-2, 2)(rng);
        if (std::abs(w2) < 0.1) continue;
        PlacementConstraint q = quadric_nonadjacent_shared4(p[0], p[1], p[2], p[3], w1, w2);
        auto pts = sample_surface(q, 1, Box{P(-2, -2, -2), P(2, 2, 2)}, t + 1);
        if (pts.empty()) continue;
        p[4] = pts[0];
        if (!general_position(p, 1e-4).ok) continue;
        EXPECT_LE(normalized_residual(q, p[4]), 1e-9);
        auto w = svd_stress(p);
        EXPECT_NEAR(ratio(w, {1, 2}, {3, 4}), w1 / w2, 1e-7 * std::abs(w1 / w2)) << t;
        ++done;
    }
    EXPECT_EQ(done, 100);
}

TEST(Quadric, PairSymmetry)
{
    // swapping the roles of the two removed members inverts the ratio
    std::mt19937_64 rng(31);
    for (int t = 0; t < 20; ++t) {
        Point3 A = testutil::random_point(rng), B = testutil::random_point(rng), C = testutil::random_point(rng),
               D = testutil::random_point(rng), E = testutil::random_point(rng);
        const auto q1 = quadric_nonadjacent_shared4(A, B, C, D, 1.0, 0.5);
        const auto q2 = quadric_nonadjacent_shared4(C, D, A, B, 0.5, 1.0);
        const double a = evaluate(q1, E), b = evaluate(q2, E);
        EXPECT_NEAR(std::abs(a) / q1.t.norm(), std::abs(b) / q2.t.norm(), 1e-12);
    }
}

TEST(Quadric, FlatBaseRejected)
{
    EXPECT_THROW(quadric_nonadjacent_shared4(P(0, 0, 0), P(1, 0, 0), P(0, 1, 0), P(1, 1, 0), 1, 1), Error);
}

TEST(Residuals, ScaleFree)
{
    PlacementConstraint c = PlaneConstraint{LinearForm3{-1, 0, 0, 2}};  // z = 0.5
    EXPECT_NEAR(distance_estimate(c, P(3, 4, 1.5)), 1.0, 1e-15);
    PlacementConstraint d = PlaneConstraint{LinearForm3{-1000, 0, 0, 2000}};
    EXPECT_NEAR(normalized_residual(c, P(0, 0, 2)), normalized_residual(d, P(0, 0, 2)), 1e-15);
    EXPECT_LE(normalized_residual(c, P(0, 0, 2)), 1.0);
    EXPECT_EQ(constraint_kind(c), "plane");
}

TEST(Solver, ProjectsOntoPlane)
{
    PlacementConstraint c = PlaneConstraint{LinearForm3{-1, 1, 1, 1}};
    Point3 x = solve_on_constraints({c}, P(2, 2, 2));
    EXPECT_NEAR(x.x + x.y + x.z, 1, 1e-10);
    EXPECT_NEAR(x.x, 1.0 / 3, 1e-9);  // nearest point along the normal
}

TEST(Solver, RecoversKnownPoint)
{
    std::mt19937_64 rng(41);
    for (int t = 0; t < 20; ++t) {
        Point3 A = testutil::random_point(rng), B = testutil::random_point(rng), C = testutil::random_point(rng),
               D = testutil::random_point(rng), E = testutil::random_point(rng);
        if (std::abs(oriented_volume(A, B, C, D)) < 1e-2) continue;
        // constraints built to pass through E
        std::array<Point3, 5> p{A, B, C, D, E};
        auto w = svd_stress(p);
        PlacementConstraint q = quadric_nonadjacent_shared4(A, B, C, D, w[{1, 2}], w[{3, 4}]);
        PlacementConstraint pl = plane_adjacent_shared4(A, B, C, D, w[{1, 2}], w[{2, 3}]);
        EXPECT_LE(normalized_residual(q, E), 1e-10);
        EXPECT_LE(normalized_residual(pl, E), 1e-10);
        Point3 x = solve_on_constraints({q, pl}, E + P(1e-3, -2e-3, 1e-3));
        EXPECT_LE(std::abs(distance_estimate(q, x)), 1e-9);
        EXPECT_LE(std::abs(distance_estimate(pl, x)), 1e-9);
    }
}

TEST(Solver, ParallelPlanesHaveNoSolution)
{
    PlacementConstraint a = PlaneConstraint{LinearForm3{0, 0, 0, 1}};
    PlacementConstraint b = PlaneConstraint{LinearForm3{-1, 0, 0, 1}};
    try {
        solve_on_constraints({a, b}, P(0, 0, 0.3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::no_solution);
    }
}

TEST(Sampling, Deterministic)
{
    PlacementConstraint c = quadric_nonadjacent_shared4(P(0, 0, 0), P(1, 0, 0), P(0, 1, 0), P(0, 0, 1), 1, -0.5);
    Box box{P(-2, -2, -2), P(2, 2, 2)};
    auto a = sample_surface(c, 25, box, 9);
    auto b = sample_surface(c, 25, box, 9);
    ASSERT_EQ(a.size(), 25u);
    EXPECT_EQ(a, b);
    for (const auto& p : a) EXPECT_LE(normalized_residual(c, p), 1e-9);
    EXPECT_THROW(sample_surface(c, 0, box), Error);
    PlacementConstraint bl = constraint_adjacent_shared3(P(0, 0, 0), P(1, 0, 0), P(0, 1, 0), 1, 2);
    EXPECT_THROW(sample_surface(bl, 3, box), Error);
}

TEST(FusionSurface, TriplexNodesLieOnQuadric)
{
    auto rr = testutil::run_fixture("triplex.script");
    const auto& nodes = rr.snapshots[1].state.nodes;
    // cell B,C,D,E,F removing BD and CE; F is the node to place
    CellSpec cell;
    cell.nodes = {2, 3, 4, 5, 6};
    for (int k = 0; k < 5; ++k) cell.coords[k] = nodes.at(cell.nodes[k]);
    cell.anchor = {2, 4};
    auto fs = fusion_surface(rr.snapshots[0].state, cell, {{2, 4}, {3, 5}});
    EXPECT_EQ(fs.kind, "quadric");
    EXPECT_EQ(fs.unknown, 6);
    ASSERT_EQ(fs.constraints.size(), 1u);
    for (const auto& [id, p] : nodes) EXPECT_LE(normalized_residual(fs.constraints[0], p), 1e-9) << id;
}

TEST(FusionSurface, ThreeCellPlaneThroughNode7)
{
    auto rr = testutil::run_fixture("three_cells.script");
    const auto& s = rr.snapshots[2].state;
    CellSpec cell;
    cell.nodes = {1, 2, 3, 6, 7};
    for (int k = 0; k < 5; ++k) cell.coords[k] = s.nodes.at(cell.nodes[k]);
    cell.anchor = {1, 2};
    // two adjacent targets and four shared nodes: the new node moves on a plane
    auto fs = fusion_surface(rr.snapshots[1].state, cell, {{1, 2}, {2, 3}});
    EXPECT_EQ(fs.kind, "plane");
    EXPECT_EQ(fs.unknown, 7);
    ASSERT_EQ(fs.densities.size(), 2u);
}
