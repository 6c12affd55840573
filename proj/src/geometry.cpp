#include "tensegrity/geometry.hpp"

#include "tensegrity/error.hpp"

#include <algorithm>

namespace tensegrity {

double oriented_volume(const Point3& a, const Point3& b, const Point3& c, const Point3& d)
{
    return dot(cross(b - a, c - a), d - a) / 6.0;
}

LinearForm3 linear_form(const Point3& a, const Point3& b, const Point3& c)
{
    const Point3 n = cross(b - a, c - a);
    return {-dot(n, a), n.x, n.y, n.z};
}

double diameter(std::span<const Point3> points)
{
    double best = 0;
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            best = std::max(best, norm(points[i] - points[j]));
    return best;
}

GeneralPositionReport general_position(std::span<const Point3> points, double tol)
{
    if (points.size() != 5)
        throw Error(ErrorCode::usage, "general_position expects exactly five points");
    const double d = diameter(points);
    const double limit = tol * d * d * d;
    static constexpr std::array<std::array<int, 4>, 5> quads{{
        {0, 1, 2, 3}, {0, 1, 2, 4}, {0, 1, 3, 4}, {0, 2, 3, 4}, {1, 2, 3, 4}}};
    for (const auto& q : quads) {
        const double v = oriented_volume(points[q[0]], points[q[1]], points[q[2]], points[q[3]]);
        if (!(std::abs(v) > limit))
            return {false, q, v};
    }
    return {};
}

}  // namespace tensegrity
