#include "common.hpp"

#include "tensegrity/error.hpp"
#include "tensegrity/geometry.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

using namespace tensegrity;
using testutil::P;

TEST(OrientedVolume, UnitSimplex) { EXPECT_DOUBLE_EQ(oriented_volume(P(0, 0, 0), P(1, 0, 0), P(0, 1, 0), P(0, 0, 1)), 1.0 / 6); }

TEST(OrientedVolume, IntegerExample)
{
    EXPECT_NEAR(oriented_volume(P(1, 2, 3), P(4, 5, 7), P(2, -1, 0), P(0, 3, 5)), -7.0 / 3, 1e-14);
}

TEST(OrientedVolume, FixtureCell)
{
    auto c = testutil::three_cell_seed();
    EXPECT_NEAR(oriented_volume(c.coords[0], c.coords[1], c.coords[2], c.coords[3]), 3.0 / 40, 1e-15);
    EXPECT_NEAR(oriented_volume(c.coords[1], c.coords[2], c.coords[3], c.coords[4]), 13.0 / 150, 1e-15);
}

TEST(OrientedVolume, PermutationParity)
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<Point3, 4> p;
        for (auto& q : p) q = testutil::random_point(rng);
        const double base = oriented_volume(p[0], p[1], p[2], p[3]);
        std::array<int, 4> perm{0, 1, 2, 3};
        int count = 0;
        do {
            int inversions = 0;
            for (int i = 0; i < 4; ++i)
                for (int j = i + 1; j < 4; ++j) inversions += perm[i] > perm[j];
            const double v = oriented_volume(p[perm[0]], p[perm[1]], p[perm[2]], p[perm[3]]);
            EXPECT_NEAR(v, inversions % 2 ? -base : base, 1e-14);
            ++count;
        } while (std::next_permutation(perm.begin(), perm.end()));
        EXPECT_EQ(count, 24);
    }
}

TEST(OrientedVolume, TranslationInvariant)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Point3 a = testutil::random_point(rng), b = testutil::random_point(rng), c = testutil::random_point(rng),
               d = testutil::random_point(rng), t = testutil::random_point(rng, -10, 10);
        EXPECT_NEAR(oriented_volume(a, b, c, d), oriented_volume(a + t, b + t, c + t, d + t), 1e-12);
    }
}

TEST(LinearForm, MatchesVolume)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        Point3 a = testutil::random_point(rng), b = testutil::random_point(rng), c = testutil::random_point(rng),
               d = testutil::random_point(rng);
        const LinearForm3 L = linear_form(a, b, c);
        EXPECT_NEAR(L(d), 6 * oriented_volume(a, b, c, d), 1e-12);
    }
}

TEST(LinearForm, VanishesOnPlane)
{
    const LinearForm3 L = linear_form(P(1, 0, 0), P(0, 1, 0), P(0, 0, 1));
    EXPECT_NEAR(L(P(1.0 / 3, 1.0 / 3, 1.0 / 3)), 0, 1e-15);
    EXPECT_NEAR(L(P(2, -1, 0)), 0, 1e-15);
}

TEST(Diameter, Basic)
{
    std::vector<Point3> pts{P(0, 0, 0), P(3, 4, 0), P(1, 1, 1)};
    EXPECT_DOUBLE_EQ(diameter(pts), 5.0);
    EXPECT_DOUBLE_EQ(diameter(std::span<const Point3>{}), 0.0);
}

TEST(GeneralPosition, AcceptsFixtureCell)
{
    auto c = testutil::three_cell_seed();
    EXPECT_TRUE(general_position(c.coords).ok);
}

TEST(GeneralPosition, ReportsFirstFlatQuadruple)
{
    // points 0,1,2,4 share z = 0
    std::vector<Point3> pts{P(0, 0, 0), P(1, 0, 0), P(0, 1, 0), P(0, 0, 1), P(2, 3, 0)};
    auto r = general_position(pts);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.quadruple, (std::array<int, 4>{0, 1, 2, 4}));
    EXPECT_EQ(r.volume, 0.0);
}

TEST(GeneralPosition, ScaleAware)
{
    // A tiny cell is still in general position.
    auto c = testutil::three_cell_seed();
    std::vector<Point3> pts;
    for (auto& p : c.coords) pts.push_back(p * 1e-4);
    EXPECT_TRUE(general_position(pts).ok);
    // A nearly flat one is not.
    pts = {P(0, 0, 0), P(1, 0, 0), P(0, 1, 0), P(1, 1, 1e-12), P(0.3, 0.2, 1)};
    EXPECT_FALSE(general_position(pts).ok);
}

TEST(GeneralPosition, WrongCount)
{
    std::vector<Point3> pts{P(0, 0, 0), P(1, 0, 0)};
    EXPECT_THROW(general_position(pts), Error);
}
