#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>

namespace tensegrity {

struct Point3 {
    double x = 0, y = 0, z = 0;

    Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
    bool operator==(const Point3&) const = default;

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double dot(const Point3& a, const Point3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Point3 cross(const Point3& a, const Point3& b)
{
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Point3& a) { return std::sqrt(dot(a, a)); }

// c0 + c1 x + c2 y + c3 z
struct LinearForm3 {
    double c0 = 0, c1 = 0, c2 = 0, c3 = 0;

    double operator()(const Point3& p) const { return c0 + c1 * p.x + c2 * p.y + c3 * p.z; }
    Point3 gradient() const { return {c1, c2, c3}; }
    std::array<double, 4> coeffs() const { return {c0, c1, c2, c3}; }
};

// (1/6) det [[1,a],[1,b],[1,c],[1,d]]
double oriented_volume(const Point3& a, const Point3& b, const Point3& c, const Point3& d);

// L(d) == 6 * oriented_volume(a, b, c, d) for every d.
LinearForm3 linear_form(const Point3& a, const Point3& b, const Point3& c);

double diameter(std::span<const Point3> points);

struct GeneralPositionReport {
    bool ok = true;
    std::array<int, 4> quadruple{};  // positions in the input, valid when !ok
    double volume = 0;
};

// Five points; a quadruple is degenerate when |volume| <= tol * diameter^3.
GeneralPositionReport general_position(std::span<const Point3> points, double tol = 1e-9);

}  // namespace tensegrity
