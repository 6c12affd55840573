#include "common.hpp"

#include "tensegrity/error.hpp"
#include "tensegrity/structure.hpp"

#include <gtest/gtest.h>

using namespace tensegrity;
using testutil::P;

namespace {

StructureState triangle()
{
    StructureState s;
    s.nodes = {{1, P(0, 0, 0)}, {2, P(1, 0, 0)}, {3, P(0, 1, 0)}};
    s.members = {{1, 2}, {1, 3}, {2, 3}};
    s.basis = Eigen::MatrixXd(3, 0);
    s.typology.assign(3, MemberRole::unassigned);
    return s;
}

bool has(const std::vector<Violation>& v, const std::string& name)
{
    for (const auto& x : v)
        if (x.invariant == name) return true;
    return false;
}

}  // namespace

TEST(EquilibriumMatrix, Layout)
{
    const auto A = assemble_equilibrium_matrix(triangle());
    ASSERT_EQ(A.rows(), 9);
    ASSERT_EQ(A.cols(), 3);
    // column (1,2): x1 - x2 in block of node 1, x2 - x1 in block of node 2
    EXPECT_EQ(A(0, 0), -1);
    EXPECT_EQ(A(3, 0), 1);
    EXPECT_EQ(A.col(0).segment(6, 3).norm(), 0);
    EXPECT_NEAR(A.colwise().sum().norm(), 0, 1e-15);
}

TEST(EquilibriumMatrix, Errors)
{
    auto s = triangle();
    s.members.push_back({3, 9});
    EXPECT_THROW(assemble_equilibrium_matrix(s), Error);
    s = triangle();
    s.nodes[3] = s.nodes[1];
    EXPECT_THROW(assemble_equilibrium_matrix(s), Error);
}

TEST(Nullspace, Dimensions)
{
    EXPECT_EQ(nullspace_basis(assemble_equilibrium_matrix(triangle())).cols(), 0);
    StructureState s = run_script(parse_script(read_file(testutil::fixture("triplex.script")))).final().state;
    const auto N = nullspace_basis(assemble_equilibrium_matrix(s));
    EXPECT_EQ(N.cols(), 1);
    EXPECT_NEAR((N.transpose() * N - Eigen::MatrixXd::Identity(1, 1)).norm(), 0, 1e-12);
    EXPECT_THROW(nullspace_basis(Eigen::MatrixXd(0, 0)), Error);
}

TEST(Counts, Triangle)
{
    auto r = count_report(triangle());
    EXPECT_EQ(r.nodes, 3);
    EXPECT_EQ(r.members, 3);
    EXPECT_EQ(r.dim_w, 0);
    EXPECT_EQ(r.rank_a, 3);
    // a triangle in space is rigid up to rigid motions
    EXPECT_EQ(r.mechanisms, 0);
    EXPECT_TRUE(r.small_branch);
    EXPECT_EQ(r.dof_small_branch, 0);
}

TEST(Counts, OutOfDomain)
{
    StructureState s;
    s.nodes = {{1, P(0, 0, 0)}, {2, P(1, 0, 0)}};
    s.members = {{1, 2}};
    EXPECT_THROW(count_report(s), Error);
}

TEST(Counts, MaxwellIdentityOnFixtures)
{
    for (const char* f : {"three_cells.script", "triplex.script", "triplex_place.script", "icosahedron.script"}) {
        auto rr = testutil::run_fixture(f);
        ASSERT_FALSE(rr.error) << f << ": " << rr.error->what();
        for (const auto& snap : rr.snapshots) {
            auto r = count_report(snap.state);
            EXPECT_EQ(r.dim_w - r.mechanisms, r.members - 3 * r.nodes + 6) << f;
            EXPECT_EQ(r.dim_w, snap.state.dim()) << f;
        }
    }
}

TEST(Counts, MaxwellArithmetic)
{
    EXPECT_EQ(maxwell_mechanisms(12, 30, 1), 1);
    EXPECT_EQ(maxwell_mechanisms(6, 12, 1), 1);
    // high-resolution mesh example: 548 = 2126 - 1584 + 6 with no mechanisms
    EXPECT_EQ(maxwell_mechanisms(528, 2126, 548), 0);
}

TEST(Typology, TriplexSigns)
{
    auto s = testutil::run_fixture("triplex.script").final().state;
    int struts = 0, cables = 0;
    for (std::size_t k = 0; k < s.members.size(); ++k) {
        struts += s.typology[k] == MemberRole::strut;
        cables += s.typology[k] == MemberRole::cable;
    }
    EXPECT_EQ(struts, 3);
    EXPECT_EQ(cables, 9);
    EXPECT_EQ(s.typology[s.index_of({1, 5})], MemberRole::strut);
    EXPECT_EQ(s.typology[s.index_of({2, 6})], MemberRole::strut);
    EXPECT_EQ(s.typology[s.index_of({3, 4})], MemberRole::strut);

    // positive rescaling leaves the assignment alone, negation swaps it
    auto t = typology_from_stress(s, Eigen::VectorXd::Constant(1, 4.0));
    EXPECT_EQ(t, s.typology);
    t = typology_from_stress(s, Eigen::VectorXd::Constant(1, -1.0));
    EXPECT_EQ(t[s.index_of({1, 5})], MemberRole::cable);
}

TEST(Typology, AmbiguousListsMembers)
{
    auto rr = testutil::run_fixture("three_cells.script");
    auto s = rr.snapshots[1].state;  // two cells
    Eigen::VectorXd c(2);
    c << 0, 1;  // second column alone vanishes on the first cell's private members
    try {
        typology_from_stress(s, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ambiguous_typology);
        EXPECT_NE(e.detail().find("1-2"), std::string::npos);
    }
    EXPECT_THROW(typology_from_stress(s, Eigen::VectorXd::Ones(3)), Error);
}

TEST(Typology, RoleStrings)
{
    for (auto r : {MemberRole::cable, MemberRole::strut, MemberRole::removed_candidate, MemberRole::unassigned})
        EXPECT_EQ(role_from_string(to_string(r)), r);
    EXPECT_THROW(role_from_string("rope"), Error);
}

TEST(Audit, CleanFixtures)
{
    for (const char* f : {"three_cells.script", "icosahedron.script"})
        for (const auto& snap : testutil::run_fixture(f).snapshots) EXPECT_TRUE(audit(snap.state).empty()) << f;
}

TEST(Audit, DetectsDamage)
{
    auto base = testutil::run_fixture("three_cells.script").final().state;

    auto s = base;
    s.basis(0, 0) += 0.5;
    EXPECT_TRUE(has(audit(s), "equilibrium"));

    s = base;
    s.basis.col(1) = s.basis.col(0) * 2;
    EXPECT_TRUE(has(audit(s), "independence"));

    s = base;
    s.basis.conservativeResize(Eigen::NoChange, s.basis.cols() - 1);
    EXPECT_TRUE(has(audit(s), "completeness"));

    s = base;
    std::swap(s.members[0], s.members[1]);
    EXPECT_TRUE(has(audit(s), "canonical-order"));

    s = base;
    s.typology.pop_back();
    EXPECT_TRUE(has(audit(s), "typology-shape"));

    s = base;
    s.members.push_back({7, 99});
    EXPECT_TRUE(has(audit(s), "member-endpoints"));
}

TEST(MorphoGraph, AdjacencyBySharedEdges)
{
    MorphoGraph g;
    auto m1 = cell_members({1, 2, 3, 4, 5});
    auto m2 = cell_members({1, 2, 3, 6, 7});
    int a = g.add_cell(CellOrigin::regular, 0, {1, 2, 3, 4, 5}, {m1.begin(), m1.end()});
    int b = g.add_cell(CellOrigin::regular, 1, {1, 2, 3, 6, 7}, {m2.begin(), m2.end()});
    EXPECT_EQ(a, 1);
    EXPECT_EQ(b, 2);
    ASSERT_EQ(g.adjacency.count({1, 2}), 1u);
    EXPECT_EQ(g.adjacency.at({1, 2}), (std::vector<Member>{{1, 2}, {1, 3}, {2, 3}}));
    EXPECT_EQ(to_string(CellOrigin::virtual_cell), "virtual");
    EXPECT_EQ(origin_from_string("fused"), CellOrigin::fused);
    EXPECT_THROW(g.cell(42), Error);
}
