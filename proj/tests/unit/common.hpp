#pragma once

#include "tensegrity/io.hpp"
#include "tensegrity/morphogenesis.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

inline std::filesystem::path fixture(const std::string& name)
{
    return std::filesystem::path(TENSEGRITY_FIXTURE_DIR) / name;
}

inline tensegrity::RunResult run_fixture(const std::string& name, const tensegrity::EngineOptions& opt = {})
{
    return tensegrity::run_script(tensegrity::parse_script(tensegrity::read_file(fixture(name))), opt);
}

inline tensegrity::Point3 P(double x, double y, double z) { return {x, y, z}; }

// Five points of the first cell of the three_cells fixture.
inline tensegrity::CellSpec three_cell_seed()
{
    tensegrity::CellSpec c;
    c.nodes = {1, 2, 3, 4, 5};
    c.coords = {P(0, 0, 0), P(1, 0, 0), P(0.5, 0.9, 0), P(-0.3, 1, 0.5), P(0.5, 0.3, 1)};
    c.anchor = {1, 2};
    return c;
}

inline tensegrity::Point3 random_point(std::mt19937_64& rng, double lo = -1, double hi = 1)
{
    std::uniform_real_distribution<double> u(lo, hi);
    return {u(rng), u(rng), u(rng)};
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

}  // namespace testutil
