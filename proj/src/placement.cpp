#include "tensegrity/placement.hpp"

#include "tensegrity/error.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace tensegrity {

namespace {

Eigen::Vector4d homog_last(const Point3& p) { return {p.x, p.y, p.z, 1.0}; }
Eigen::Vector4d homog_first(const Point3& p) { return {1.0, p.x, p.y, p.z}; }

// N_ij = det(p, q, e_i, e_j) for homogeneous rows p, q.
Eigen::Matrix4d pair_determinants(const Eigen::Vector4d& p, const Eigen::Vector4d& q)
{
    Eigen::Matrix4d N = Eigen::Matrix4d::Zero();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i == j)
                continue;
            Eigen::Matrix4d M;
            M.row(0) = p.transpose();
            M.row(1) = q.transpose();
            M.row(2) = Eigen::RowVector4d::Unit(i);
            M.row(3) = Eigen::RowVector4d::Unit(j);
            N(i, j) = M.determinant();
        }
    return N;
}

Eigen::Vector4d form_vector(const LinearForm3& f) { return {f.c0, f.c1, f.c2, f.c3}; }

double ratio(double w1, double w2)
{
    if (w1 == 0 || !std::isfinite(w1) || !std::isfinite(w2))
        throw Error(ErrorCode::usage, "target density w1 must be finite and nonzero");
    return w2 / w1;
}

double quadric_value(const Eigen::Matrix4d& t, const Point3& e)
{
    const Eigen::Vector4d v = homog_first(e);
    return v.dot(t * v);
}

Point3 quadric_gradient(const Eigen::Matrix4d& t, const Point3& e)
{
    const Eigen::Vector4d v = homog_first(e);
    const Eigen::Vector4d g = (t + t.transpose()) * v;
    return {g(1), g(2), g(3)};
}

double value(const PlacementConstraint& c, const Point3& e)
{
    if (auto* p = std::get_if<PlaneConstraint>(&c))
        return evaluate(*p, e);
    if (auto* q = std::get_if<QuadricConstraint>(&c))
        return evaluate(*q, e);
    throw Error(ErrorCode::usage, "bilinear constraint needs one node fixed before solving");
}

Point3 gradient(const PlacementConstraint& c, const Point3& e)
{
    if (auto* p = std::get_if<PlaneConstraint>(&c))
        return p->form.gradient();
    if (auto* q = std::get_if<QuadricConstraint>(&c))
        return quadric_gradient(q->t, e);
    throw Error(ErrorCode::usage, "bilinear constraint needs one node fixed before solving");
}

}  // namespace

std::string constraint_kind(const PlacementConstraint& c)
{
    if (std::holds_alternative<PlaneConstraint>(c)) return "plane";
    if (std::holds_alternative<BilinearConstraint>(c)) return "bilinear";
    return "quadric";
}

BilinearConstraint constraint_adjacent_shared3(const Point3& A, const Point3& B, const Point3& C, double w1,
                                               double w2)
{
    const double r = ratio(w1, w2);
    const Eigen::Vector4d a = homog_last(A), b = homog_last(B), c = homog_last(C);
    // det[P,1;Q,1;D,1;E,1] = -6 f(P,Q,D,E); flip so the value is 6 f(ABDE) - 6 r f(BCDE)
    return {-(pair_determinants(a, b) - r * pair_determinants(b, c))};
}

PlaneConstraint contract(const BilinearConstraint& c, const Point3& D)
{
    const Eigen::RowVector4d v = homog_last(D).transpose() * c.m;
    PlaneConstraint out{{v(3), v(0), v(1), v(2)}};
    if (norm(out.form.gradient()) == 0)
        throw Error(ErrorCode::degenerate_geometry, "contracted placement form vanishes identically");
    return out;
}

PlaneConstraint plane_adjacent_shared4(const Point3& A, const Point3& B, const Point3& C, const Point3& D,
                                       double w1, double w2)
{
    return contract(constraint_adjacent_shared3(A, B, C, w1, w2), D);
}

QuadricConstraint quadric_nonadjacent_shared4(const Point3& A, const Point3& B, const Point3& C,
                                              const Point3& D, double w1, double w2)
{
    const double r = ratio(w1, w2);
    const double v = oriented_volume(A, B, C, D);
    if (!(std::abs(v) > 1e-12 * std::pow(std::max({norm(B - A), norm(C - A), norm(D - A)}), 3)))
        throw Error(ErrorCode::degenerate_geometry, "fixed tetrahedron ABCD is flat");
    const Eigen::Vector4d abc = form_vector(linear_form(A, B, C));
    const Eigen::Vector4d abd = form_vector(linear_form(A, B, D));
    const Eigen::Vector4d bcd = form_vector(linear_form(B, C, D));
    const Eigen::Vector4d acd = form_vector(linear_form(A, C, D));
    return {abc * abd.transpose() - r * bcd * acd.transpose()};
}

double evaluate(const PlaneConstraint& c, const Point3& e) { return c.form(e); }
double evaluate(const QuadricConstraint& c, const Point3& e) { return quadric_value(c.t, e); }
double evaluate(const BilinearConstraint& c, const Point3& d, const Point3& e)
{
    return homog_last(d).dot(c.m * homog_last(e));
}

double normalized_residual(const PlacementConstraint& c, const Point3& e)
{
    const double h = homog_first(e).norm();
    if (auto* p = std::get_if<PlaneConstraint>(&c))
        return evaluate(*p, e) / (form_vector(p->form).norm() * h);
    if (auto* q = std::get_if<QuadricConstraint>(&c))
        return evaluate(*q, e) / (q->t.norm() * h * h);
    throw Error(ErrorCode::usage, "bilinear constraint needs one node fixed before evaluation");
}

double distance_estimate(const PlacementConstraint& c, const Point3& e)
{
    const double g = norm(gradient(c, e));
    const double v = value(c, e);
    if (g == 0)
        return v == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    return v / g;
}

Point3 solve_on_constraints(const std::vector<PlacementConstraint>& constraints, const Point3& guess,
                            const SolveOptions& opt)
{
    if (constraints.empty() || constraints.size() > 3)
        throw Error(ErrorCode::usage, "between one and three constraints are supported");
    if (!guess.finite())
        throw Error(ErrorCode::usage, "initial guess must be finite");
    const auto k = static_cast<Eigen::Index>(constraints.size());
    const double limit = opt.tol * opt.scale;

    auto residuals = [&](const Point3& x) {
        Eigen::VectorXd r(k);
        for (Eigen::Index i = 0; i < k; ++i)
            r(i) = distance_estimate(constraints[static_cast<std::size_t>(i)], x);
        return r;
    };

    Point3 x = guess;
    Eigen::VectorXd r = residuals(x);
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (r.allFinite() && r.cwiseAbs().maxCoeff() <= limit)
            return x;
        Eigen::MatrixXd J(k, 3);
        for (Eigen::Index i = 0; i < k; ++i) {
            const Point3 g = gradient(constraints[static_cast<std::size_t>(i)], x);
            const double gn = norm(g);
            if (gn == 0)
                throw Error(ErrorCode::no_solution, "constraint gradient vanishes at iterate");
            J.row(i) << g.x / gn, g.y / gn, g.z / gn;
        }
        const Eigen::Vector3d step = J.completeOrthogonalDecomposition().solve(-r);
        double t = 1.0;
        const double merit = r.squaredNorm();
        Point3 next = x;
        Eigen::VectorXd rn = r;
        bool moved = false;
        for (int ls = 0; ls < 30; ++ls) {
            next = x + Point3{step(0), step(1), step(2)} * t;
            rn = residuals(next);
            if (rn.allFinite() && rn.squaredNorm() < merit) {
                moved = true;
                break;
            }
            t *= opt.damping;
        }
        if (!moved)
            break;
        x = next;
        r = rn;
    }
    if (r.allFinite() && r.cwiseAbs().maxCoeff() <= limit)
        return x;
    std::string detail;
    for (Eigen::Index i = 0; i < k; ++i)
        detail += (i ? "," : "") + std::to_string(r(i));
    throw Error(ErrorCode::no_solution, "placement did not converge", "best residuals " + detail);
}

Box bounding_box(const StructureState& state, double margin)
{
    if (state.nodes.empty())
        return {{-1, -1, -1}, {1, 1, 1}};
    Point3 lo = state.nodes.begin()->second, hi = lo;
    for (const auto& [id, p] : state.nodes) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const double pad = margin * std::max(state.diameter(), 1e-12);
    return {lo - Point3{pad, pad, pad}, hi + Point3{pad, pad, pad}};
}

std::vector<Point3> sample_surface(const PlacementConstraint& c, int count, const Box& region,
                                   std::uint64_t seed)
{
    if (count < 1)
        throw Error(ErrorCode::usage, "sample count must be at least one");
    if (std::holds_alternative<BilinearConstraint>(c))
        throw Error(ErrorCode::usage, "bilinear constraint needs one node fixed before sampling");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(region.lo.x, region.hi.x), uy(region.lo.y, region.hi.y),
        uz(region.lo.z, region.hi.z);
    std::normal_distribution<double> gauss;
    const double scale = std::max(norm(region.hi - region.lo), 1e-12);
    auto inside = [&](const Point3& p) {
        return p.x >= region.lo.x && p.x <= region.hi.x && p.y >= region.lo.y && p.y <= region.hi.y &&
               p.z >= region.lo.z && p.z <= region.hi.z;
    };
    auto accept = [&](const Point3& p) {
        return inside(p) && std::abs(normalized_residual(c, p)) <= 1e-9 &&
               std::abs(distance_estimate(c, p)) <= 1e-9 * scale;
    };
    // Newton polish along the gradient.
    auto polish = [&](Point3 p) {
        for (int i = 0; i < 8; ++i) {
            const Point3 g = gradient(c, p);
            const double gg = dot(g, g);
            if (gg == 0)
                break;
            p = p - g * (value(c, p) / gg);
        }
        return p;
    };

    std::vector<Point3> out;
    const long attempts = 200L * count;
    for (long a = 0; a < attempts && static_cast<int>(out.size()) < count; ++a) {
        const Point3 p{ux(rng), uy(rng), uz(rng)};
        Point3 u{gauss(rng), gauss(rng), gauss(rng)};
        const double un = norm(u);
        if (un == 0)
            continue;
        u = u * (1.0 / un);
        // value(p + s u) = qa s^2 + qb s + qc, exact for both kinds
        const double qc = value(c, p);
        const double f1 = value(c, p + u), fm = value(c, p - u);
        const double qa = 0.5 * (f1 + fm) - qc;
        const double qb = 0.5 * (f1 - fm);
        std::vector<double> roots;
        if (std::abs(qa) <= 1e-14 * (std::abs(qb) + std::abs(qc))) {
            if (qb != 0)
                roots.push_back(-qc / qb);
        } else {
            const double disc = qb * qb - 4 * qa * qc;
            if (disc < 0)
                continue;
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (qb + (qb >= 0 ? sq : -sq));
            if (q != 0) {
                roots.push_back(q / qa);
                roots.push_back(qc / q);
            }
        }
        for (double s : roots) {
            if (static_cast<int>(out.size()) >= count)
                break;
            const Point3 hit = polish(p + u * s);
            if (accept(hit))
                out.push_back(hit);
        }
    }
    return out;
}

namespace {

struct PairSurface {
    PlacementConstraint constraint;
    std::string kind;
};

// Shared node of two members, if any.
std::optional<NodeId> common_node(const Member& x, const Member& y)
{
    if (x.a == y.a || x.a == y.b) return x.a;
    if (x.b == y.a || x.b == y.b) return x.b;
    return std::nullopt;
}

NodeId other_end(const Member& m, NodeId n) { return m.a == n ? m.b : m.a; }

PairSurface pair_surface(const std::map<NodeId, Point3>& where, const std::set<NodeId>& shared,
                         const Member& t1, const Member& t2, double w1, double w2,
                         const std::vector<NodeId>& cell_nodes, NodeId unknown, std::optional<NodeId> fixed)
{
    const auto at = [&](NodeId n) { return where.at(n); };
    if (auto b = common_node(t1, t2)) {
        const NodeId A = other_end(t1, *b), C = other_end(t2, *b);
        if (shared.size() == 4) {
            NodeId D = 0;
            for (NodeId n : shared)
                if (n != A && n != *b && n != C)
                    D = n;
            return {plane_adjacent_shared4(at(A), at(*b), at(C), at(D), w1, w2), "plane"};
        }
        if (!fixed)
            throw Error(ErrorCode::usage, "three shared nodes: one new node must be fixed");
        const auto M = constraint_adjacent_shared3(at(A), at(*b), at(C), w1, w2);
        return {contract(M, at(*fixed)), "bilinear-fixed"};
    }
    if (shared.size() != 4)
        throw Error(ErrorCode::usage, "non-adjacent removal needs four shared nodes");
    (void)cell_nodes;
    (void)unknown;
    return {quadric_nonadjacent_shared4(at(t1.a), at(t1.b), at(t2.a), at(t2.b), w1, w2), "quadric"};
}

}  // namespace

FusionSurface fusion_surface(const StructureState& existing, const CellSpec& cell,
                             const std::vector<Member>& targets, std::optional<NodeId> fixed,
                             std::optional<NodeId> unknown)
{
    if (targets.size() < 2 || targets.size() > 3)
        throw Error(ErrorCode::usage, "fusion surface needs two or three target members");
    std::set<NodeId> shared;
    std::vector<NodeId> fresh;
    std::map<NodeId, Point3> where;
    for (int i = 0; i < 5; ++i) {
        where[cell.nodes[i]] = cell.coords[i];
        if (existing.nodes.count(cell.nodes[i]))
            shared.insert(cell.nodes[i]);
        else
            fresh.push_back(cell.nodes[i]);
    }
    std::sort(fresh.begin(), fresh.end());
    if (shared.size() != 3 && shared.size() != 4)
        throw Error(ErrorCode::usage, "fusion surface needs a cell sharing three or four nodes");

    FusionSurface out;
    out.targets = targets;
    if (shared.size() == 4) {
        out.unknown = fresh.front();
    } else {
        if (fixed && unknown && *fixed == *unknown)
            throw Error(ErrorCode::usage, "fixed and unknown node coincide");
        if (fixed && std::find(fresh.begin(), fresh.end(), *fixed) == fresh.end())
            throw Error(ErrorCode::usage, "fixed node must be one of the new nodes", std::to_string(*fixed));
        if (unknown && std::find(fresh.begin(), fresh.end(), *unknown) == fresh.end())
            throw Error(ErrorCode::usage, "unknown node must be one of the new nodes", std::to_string(*unknown));
        if (unknown)
            fixed = *unknown == fresh[0] ? fresh[1] : fresh[0];
        if (!fixed)
            fixed = fresh[0];
        out.fixed = fixed;
        out.unknown = *fixed == fresh[0] ? fresh[1] : fresh[0];
    }
    if (unknown && *unknown != out.unknown)
        throw Error(ErrorCode::usage, "requested node is not free in this configuration", std::to_string(*unknown));

    for (const auto& t : targets) {
        if (!shared.count(t.a) || !shared.count(t.b))
            throw Error(ErrorCode::usage, "target member must join two shared nodes", to_string(t));
        if (!existing.find(t))
            throw Error(ErrorCode::usage, "target member is not in the existing structure", to_string(t));
    }

    // Densities come from the newest column that loads the first target.
    const std::size_t r0 = existing.index_of(targets[0]);
    Eigen::Index col = -1;
    for (Eigen::Index c = existing.basis.cols() - 1; c >= 0; --c)
        if (std::abs(existing.basis(static_cast<Eigen::Index>(r0), c)) > 1e-9 * existing.basis.col(c).norm()) {
            col = c;
            break;
        }
    if (col < 0)
        throw Error(ErrorCode::cannot_fuse, "first target carries no stress", to_string(targets[0]));
    for (const auto& t : targets)
        out.densities.push_back(-existing.basis(static_cast<Eigen::Index>(existing.index_of(t)), col));

    std::vector<NodeId> nodes(cell.nodes.begin(), cell.nodes.end());
    for (std::size_t k = 1; k < targets.size(); ++k) {
        auto ps = pair_surface(where, shared, targets[0], targets[k], out.densities[0], out.densities[k], nodes,
                               out.unknown, out.fixed);
        if (out.kind.empty())
            out.kind = ps.kind;
        else if (out.kind != ps.kind)
            out.kind += "+" + ps.kind;
        out.constraints.push_back(std::move(ps.constraint));
    }
    return out;
}

}  // namespace tensegrity
