#include "tensegrity/morphogenesis.hpp"

#include "tensegrity/error.hpp"
#include "tensegrity/placement.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace tensegrity {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Eigen::VectorXd sign_fixed_unit(Eigen::VectorXd v)
{
    v.normalize();
    const double peak = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::abs(v(i)) > 1e-9 * peak) {
            if (v(i) < 0)
                v = -v;
            break;
        }
    return v;
}

void require_clean(const StructureState& s, const EngineOptions& opt)
{
    if (!opt.audit_each_step)
        return;
    const auto v = audit(s, opt.rank_tol);
    if (!v.empty())
        throw Error(ErrorCode::invariant_violation, "structure audit failed: " + v.front().invariant,
                    v.front().detail);
}

int nullity(const StructureState& s, double tol)
{
    if (s.members.empty())
        return 0;
    return static_cast<int>(s.members.size()) - numeric_rank(assemble_equilibrium_matrix(s), tol);
}

int mechanisms_of(const StructureState& s, int null_dim)
{
    const int V = static_cast<int>(s.nodes.size());
    const int E = static_cast<int>(s.members.size());
    return maxwell_mechanisms(V, E, null_dim);
}

std::vector<NodeId> endpoints(const std::vector<Member>& edges)
{
    std::set<NodeId> s;
    for (const auto& m : edges) {
        s.insert(m.a);
        s.insert(m.b);
    }
    return {s.begin(), s.end()};
}

// Repeatedly drop nodes of degree three or less with their members.
std::vector<Member> prune(std::vector<Member> edges)
{
    for (;;) {
        std::map<NodeId, int> deg;
        for (const auto& m : edges) {
            ++deg[m.a];
            ++deg[m.b];
        }
        std::set<NodeId> weak;
        for (const auto& [n, d] : deg)
            if (d <= 3)
                weak.insert(n);
        if (weak.empty())
            return edges;
        std::erase_if(edges, [&](const Member& m) { return weak.count(m.a) || weak.count(m.b); });
    }
}

class VirtualSearch {
public:
    VirtualSearch(const StructureState& state, const MorphoGraph& graph, const std::vector<Member>& fresh,
                  const EngineOptions& opt)
        : state_(state), graph_(graph), fresh_(fresh.begin(), fresh.end()), opt_(opt)
    {
        columns_ = state.basis;
        refresh_q();
    }

    std::vector<VirtualCell> run(int needed)
    {
        needed_ = needed;
        cliques();
        if (static_cast<int>(found_.size()) < needed_)
            routine();
        if (static_cast<int>(found_.size()) < needed_ && opt_.nullspace_fallback)
            extract();
        if (static_cast<int>(found_.size()) < needed_) {
            std::ostringstream s;
            s << "found " << found_.size() << " of " << needed_ << " states after " << evaluations_
              << " evaluations";
            throw Error(ErrorCode::incomplete_basis, "virtual-cell search exhausted", s.str());
        }
        return found_;
    }

    int evaluations() const { return evaluations_; }

private:
    struct BudgetExhausted {};

    const StructureState& state_;
    const MorphoGraph& graph_;
    std::set<Member> fresh_;
    const EngineOptions& opt_;
    Eigen::MatrixXd columns_;
    Eigen::MatrixXd q_;
    std::vector<VirtualCell> found_;
    std::set<std::vector<Member>> seen_;
    int needed_ = 0;
    int evaluations_ = 0;

    bool done() const { return static_cast<int>(found_.size()) >= needed_; }

    // Self-stresses of the subgraph `edges`, embedded over state_.members.
    Eigen::MatrixXd states_of(const std::vector<Member>& edges) const
    {
        std::map<NodeId, Point3> nodes;
        for (NodeId n : endpoints(edges))
            nodes[n] = state_.nodes.at(n);
        const Eigen::MatrixXd N = nullspace_basis(assemble_equilibrium_matrix(nodes, edges), opt_.rank_tol);
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(state_.members.size()), N.cols());
        for (std::size_t k = 0; k < edges.size(); ++k)
            out.row(static_cast<Eigen::Index>(state_.index_of(edges[k]))) = N.row(static_cast<Eigen::Index>(k));
        return out;
    }

    // Part of span(N) outside the current columns.
    Eigen::MatrixXd outside(const Eigen::MatrixXd& N) const
    {
        return q_.cols() ? Eigen::MatrixXd(N - q_ * (q_.transpose() * N)) : N;
    }

    bool independent(const std::vector<Member>& edges) const
    {
        const Eigen::MatrixXd N = states_of(edges);
        if (N.cols() == 0)
            return false;
        return Eigen::JacobiSVD<Eigen::MatrixXd>(outside(N)).singularValues()(0) > 1e-6;
    }

    // Fallback: shrink the whole member set one member at a time while a state
    // independent of the current columns survives. The result is minimal, so
    // exactly one new state lives on it.
    void extract()
    {
        while (!done()) {
            std::vector<Member> support = state_.members;
            if (!independent(support))
                return;
            std::vector<Member> order;
            for (const auto& m : state_.members)
                if (!fresh_.count(m))
                    order.push_back(m);
            for (const auto& m : state_.members)
                if (fresh_.count(m))
                    order.push_back(m);
            for (const auto& m : order) {
                std::vector<Member> trial;
                std::copy_if(support.begin(), support.end(), std::back_inserter(trial),
                             [&](const Member& x) { return x != m; });
                if (!trial.empty() && independent(trial))
                    support = std::move(trial);
            }
            const Eigen::MatrixXd N = states_of(support);
            const Eigen::JacobiSVD<Eigen::MatrixXd> svd(outside(N), Eigen::ComputeThinV);
            Eigen::VectorXd w = sign_fixed_unit(N * svd.matrixV().col(0));
            std::vector<Member> edges;
            const double peak = w.cwiseAbs().maxCoeff();
            for (std::size_t k = 0; k < state_.members.size(); ++k)
                if (std::abs(w(static_cast<Eigen::Index>(k))) > opt_.zero_tol * peak)
                    edges.push_back(state_.members[k]);
                else
                    w(static_cast<Eigen::Index>(k)) = 0;
            found_.push_back({endpoints(edges), edges, w, true});
            columns_.conservativeResize(Eigen::NoChange, columns_.cols() + 1);
            columns_.col(columns_.cols() - 1) = w;
            refresh_q();
        }
    }

    void refresh_q()
    {
        if (columns_.cols() == 0) {
            q_.resize(columns_.rows(), 0);
            return;
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(columns_);
        q_ = qr.householderQ() * Eigen::MatrixXd::Identity(columns_.rows(), columns_.cols());
    }

    void tick()
    {
        if (static_cast<std::size_t>(++evaluations_) > opt_.virtual_budget)
            throw BudgetExhausted{};
    }

    bool loads_fresh(const std::vector<Member>& edges) const
    {
        return std::any_of(edges.begin(), edges.end(), [&](const Member& m) { return fresh_.count(m) > 0; });
    }

    // Tries the subgraph; accepts it when it carries exactly one new state.
    bool consider(const std::vector<Member>& edges, int* null_dim = nullptr)
    {
        if (null_dim)
            *null_dim = 0;
        if (edges.empty() || !loads_fresh(edges) || !seen_.insert(edges).second)
            return false;
        tick();
        std::map<NodeId, Point3> nodes;
        for (NodeId n : endpoints(edges))
            nodes[n] = state_.nodes.at(n);
        const Eigen::MatrixXd A = assemble_equilibrium_matrix(nodes, edges);
        const Eigen::MatrixXd N = nullspace_basis(A, opt_.rank_tol);
        if (null_dim)
            *null_dim = static_cast<int>(N.cols());
        if (N.cols() != 1)
            return false;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state_.members.size()));
        for (std::size_t k = 0; k < edges.size(); ++k)
            w(static_cast<Eigen::Index>(state_.index_of(edges[k]))) = N(static_cast<Eigen::Index>(k), 0);
        w = sign_fixed_unit(w);
        const Eigen::VectorXd resid = q_.cols() ? Eigen::VectorXd(w - q_ * (q_.transpose() * w)) : w;
        if (!(resid.norm() > 1e-6 * w.norm()))
            return false;
        found_.push_back({endpoints(edges), edges, w});
        columns_.conservativeResize(Eigen::NoChange, columns_.cols() + 1);
        columns_.col(columns_.cols() - 1) = w;
        refresh_q();
        return true;
    }

    std::map<NodeId, std::set<NodeId>> neighbours(const std::vector<Member>& edges) const
    {
        std::map<NodeId, std::set<NodeId>> nb;
        for (const auto& m : edges) {
            nb[m.a].insert(m.b);
            nb[m.b].insert(m.a);
        }
        return nb;
    }

    void cliques()
    {
        const auto nb = neighbours(state_.members);
        std::set<std::array<NodeId, 5>> found;
        for (const auto& f : fresh_) {
            std::vector<NodeId> common;
            const auto& na = nb.at(f.a);
            const auto& nbb = nb.at(f.b);
            std::set_intersection(na.begin(), na.end(), nbb.begin(), nbb.end(), std::back_inserter(common));
            const std::size_t n = common.size();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) {
                    if (!nb.at(common[i]).count(common[j]))
                        continue;
                    for (std::size_t k = j + 1; k < n; ++k) {
                        if (!nb.at(common[i]).count(common[k]) || !nb.at(common[j]).count(common[k]))
                            continue;
                        std::array<NodeId, 5> c{f.a, f.b, common[i], common[j], common[k]};
                        std::sort(c.begin(), c.end());
                        found.insert(c);
                    }
                }
        }
        try {
            for (const auto& c : found) {
                if (done())
                    return;
                const auto m = cell_members(c);
                consider(std::vector<Member>(m.begin(), m.end()));
            }
        } catch (const BudgetExhausted&) {
        }
    }

    void routine()
    {
        // Owners of the current columns that are regular or fused cells.
        std::set<int> owners;
        for (int id : graph_.columns) {
            const auto& c = graph_.cell(id);
            if (c.kind != CellOrigin::virtual_cell)
                owners.insert(id);
        }
        std::map<Member, int> count;
        for (int id : owners)
            for (const auto& e : graph_.cell(id).edges)
                if (state_.find(e))
                    ++count[e];
        std::map<NodeId, int> deg;
        for (const auto& m : state_.members) {
            ++deg[m.a];
            ++deg[m.b];
        }
        std::vector<std::vector<Member>> choices;
        for (int id : owners) {
            std::vector<Member> priv;
            for (const auto& e : graph_.cell(id).edges)
                if (state_.find(e) && count[e] == 1)
                    priv.push_back(e);
            if (priv.empty())
                continue;
            std::stable_sort(priv.begin(), priv.end(), [&](const Member& x, const Member& y) {
                const bool fx = deg[x.a] == 4 || deg[x.b] == 4;
                const bool fy = deg[y.a] == 4 || deg[y.b] == 4;
                return fx > fy;
            });
            choices.push_back(std::move(priv));
        }

        std::vector<std::size_t> odo(choices.size(), 0);
        try {
            for (;;) {
                std::set<Member> cut;
                for (std::size_t i = 0; i < choices.size(); ++i)
                    cut.insert(choices[i][odo[i]]);
                std::vector<Member> rest;
                for (const auto& m : state_.members)
                    if (!cut.count(m))
                        rest.push_back(m);
                refine(prune(std::move(rest)));
                if (done())
                    return;
                // advance odometer, last cell fastest
                std::size_t i = choices.size();
                while (i > 0) {
                    --i;
                    if (++odo[i] < choices[i].size())
                        break;
                    odo[i] = 0;
                    if (i == 0)
                        return;
                }
                if (choices.empty())
                    return;
            }
        } catch (const BudgetExhausted&) {
        }
    }

    void refine(const std::vector<Member>& survivor)
    {
        int r = 0;
        if (consider(survivor, &r) || r <= 1)
            return;
        std::map<NodeId, int> deg;
        for (const auto& m : survivor) {
            ++deg[m.a];
            ++deg[m.b];
        }
        std::vector<Member> order = survivor;
        std::stable_sort(order.begin(), order.end(), [&](const Member& x, const Member& y) {
            const bool px = deg[x.a] >= 5 && deg[x.b] >= 5;
            const bool py = deg[y.a] >= 5 && deg[y.b] >= 5;
            return px > py;
        });
        const std::size_t k = static_cast<std::size_t>(r - 1);
        if (k > order.size())
            return;
        std::vector<std::size_t> idx(k);
        std::iota(idx.begin(), idx.end(), 0);
        for (;;) {
            std::set<Member> cut;
            for (std::size_t i : idx)
                cut.insert(order[i]);
            std::vector<Member> rest;
            for (const auto& m : survivor)
                if (!cut.count(m))
                    rest.push_back(m);
            consider(prune(std::move(rest)));
            if (done())
                return;
            // next lexicographic combination
            std::size_t i = k;
            while (i > 0 && idx[i - 1] == order.size() - k + (i - 1))
                --i;
            if (i == 0)
                return;
            ++idx[i - 1];
            for (std::size_t j = i; j < k; ++j)
                idx[j] = idx[j - 1] + 1;
        }
    }
};

}  // namespace

std::string step_kind(const MorphoStep& step)
{
    return std::visit(overloaded{[](const SeedStep&) { return std::string("seed"); },
                                 [](const AdhereStep&) { return std::string("adhere"); },
                                 [](const FuseStep&) { return std::string("fuse"); },
                                 [](const PlaceStep&) { return std::string("place"); }},
                      step);
}

int expected_delta_dim(int e, int v) { return e - 3 * v; }

std::vector<VirtualCell> find_virtual_cells(const StructureState& state, const MorphoGraph& graph, int needed,
                                            const std::vector<Member>& fresh, const EngineOptions& opt,
                                            int* evaluations)
{
    if (needed < 0)
        throw Error(ErrorCode::usage, "needed state count is negative");
    if (needed == 0)
        return {};
    VirtualSearch search(state, graph, fresh, opt);
    try {
        auto out = search.run(needed);
        if (evaluations)
            *evaluations = search.evaluations();
        return out;
    } catch (...) {
        if (evaluations)
            *evaluations = search.evaluations();
        throw;
    }
}

StepResult seed(const CellSpec& spec, const EngineOptions& opt)
{
    const CellStress w = cell_self_stress(spec, opt.gp_tol);
    StepResult r;
    auto& s = r.snapshot.state;
    for (int i = 0; i < 5; ++i)
        s.nodes[spec.nodes[i]] = spec.coords[i];
    s.members.assign(w.members.begin(), w.members.end());
    s.basis.resize(10, 1);
    for (int k = 0; k < 10; ++k)
        s.basis(k, 0) = w.values[k];
    s.typology = default_typology(s, opt.rank_tol);
    const int id = r.snapshot.graph.add_cell(CellOrigin::regular, 0,
                                             std::vector<NodeId>(spec.nodes.begin(), spec.nodes.end()),
                                             s.members);
    r.snapshot.graph.columns.push_back(id);

    r.log.kind = "seed";
    r.log.delta_edges = 10;
    r.log.delta_nodes = 5;
    r.log.predicted = 1;
    r.log.observed = nullity(s, opt.rank_tol);
    r.log.delta_mechanisms = mechanisms_of(s, r.log.observed);
    r.log.cells_created.push_back(id);
    r.log.ops.push_back({"append", {}, 0, -1, 0});
    require_clean(s, opt);
    return r;
}

StepResult adhere(const Snapshot& before, const CellSpec& spec, const EngineOptions& opt, int step)
{
    const CellStress w = cell_self_stress(spec, opt.gp_tol);
    const StructureState& old = before.state;

    std::vector<Point3> cloud;
    for (const auto& [id, p] : old.nodes)
        cloud.push_back(p);
    cloud.insert(cloud.end(), spec.coords.begin(), spec.coords.end());
    const double scale = std::max(diameter(cloud), 1e-300);

    int shared = 0;
    for (int i = 0; i < 5; ++i) {
        auto it = old.nodes.find(spec.nodes[i]);
        if (it == old.nodes.end())
            continue;
        ++shared;
        if (norm(it->second - spec.coords[i]) > opt.coord_tol * scale)
            throw Error(ErrorCode::usage, "shared node coordinates do not match",
                        "node " + std::to_string(spec.nodes[i]));
    }
    if (shared < 3)
        throw Error(ErrorCode::mechanism_risk, "cell must share at least three nodes with the structure",
                    std::to_string(shared) + " shared");

    std::vector<Member> fresh;
    for (const auto& m : w.members)
        if (!old.find(m))
            fresh.push_back(m);
    if (fresh.empty())
        throw Error(ErrorCode::usage, "cell adds no member to the structure");

    StepResult r;
    StructureState& s = r.snapshot.state;
    s.nodes = old.nodes;
    for (int i = 0; i < 5; ++i)
        s.nodes.emplace(spec.nodes[i], spec.coords[i]);
    std::set_union(old.members.begin(), old.members.end(), fresh.begin(), fresh.end(),
                   std::back_inserter(s.members));

    const Eigen::Index E = static_cast<Eigen::Index>(s.members.size());
    const Eigen::Index k = old.basis.cols();
    s.basis = Eigen::MatrixXd::Zero(E, k + 1);
    for (std::size_t i = 0; i < old.members.size(); ++i)
        s.basis.row(static_cast<Eigen::Index>(s.index_of(old.members[i]))).head(k) =
            old.basis.row(static_cast<Eigen::Index>(i));
    for (int i = 0; i < 10; ++i)
        s.basis(static_cast<Eigen::Index>(s.index_of(w.members[i])), k) = w.values[i];

    MorphoGraph& g = r.snapshot.graph;
    g = before.graph;
    const int cell_id = g.add_cell(CellOrigin::regular, step, std::vector<NodeId>(spec.nodes.begin(), spec.nodes.end()),
                                   std::vector<Member>(w.members.begin(), w.members.end()));
    g.columns.push_back(cell_id);
    r.log.cells_created.push_back(cell_id);
    r.log.ops.push_back({"append", {}, static_cast<int>(k), -1, 0});

    const int null_before = nullity(old, opt.rank_tol);
    const int null_after = nullity(s, opt.rank_tol);
    const int needed = null_after - static_cast<int>(k + 1);
    if (needed < 0)
        throw Error(ErrorCode::numeric_degeneracy, "cell state is dependent on the existing basis");

    if (needed > 0) {
        int evals = 0;
        const auto found = find_virtual_cells(s, g, needed, fresh, opt, &evals);
        r.log.search_evaluations = evals;
        for (const auto& vc : found) {
            const Eigen::Index c = s.basis.cols();
            s.basis.conservativeResize(Eigen::NoChange, c + 1);
            s.basis.col(c) = vc.stress;
            const int id = g.add_cell(CellOrigin::virtual_cell, step, vc.nodes, vc.edges);
            g.columns.push_back(id);
            r.log.cells_created.push_back(id);
            r.log.ops.push_back({vc.extracted ? "extracted" : "virtual", {}, static_cast<int>(c), -1, 0});
        }
    }
    s.typology = default_typology(s, opt.rank_tol);

    r.log.kind = "adhere";
    r.log.delta_edges = static_cast<int>(fresh.size());
    r.log.delta_nodes = 5 - shared;
    r.log.predicted = expected_delta_dim(r.log.delta_edges, r.log.delta_nodes);
    r.log.observed = null_after - null_before;
    r.log.delta_mechanisms = mechanisms_of(s, null_after) - mechanisms_of(old, null_before);
    require_clean(s, opt);
    return r;
}

StepResult fuse(const Snapshot& before, const std::vector<Member>& remove, const EngineOptions& opt, int step)
{
    const StructureState& old = before.state;
    if (remove.empty())
        throw Error(ErrorCode::usage, "fusion needs at least one member");
    std::set<Member> group;
    for (const auto& m : remove) {
        if (!group.insert(m).second)
            throw Error(ErrorCode::usage, "member listed twice", to_string(m));
        if (!old.find(m))
            throw Error(ErrorCode::usage, "member is not in the structure", to_string(m));
    }

    Eigen::MatrixXd B = old.basis;
    auto carried = [&](Eigen::Index row, Eigen::Index c) {
        return std::abs(B(row, c)) > opt.zero_tol * B.col(c).norm();
    };
    for (const auto& m : remove) {
        const auto row = static_cast<Eigen::Index>(old.index_of(m));
        bool any = false;
        for (Eigen::Index c = 0; c < B.cols(); ++c)
            any = any || carried(row, c);
        if (!any)
            throw Error(ErrorCode::cannot_fuse, "member carries no stress in any state", to_string(m));
    }

    StepResult r;
    r.log.kind = "fuse";
    std::vector<int> owners = before.graph.columns;
    // cells that contributed to each column
    std::vector<std::set<int>> sources(owners.size());
    std::vector<bool> touched(owners.size(), false);
    for (std::size_t c = 0; c < owners.size(); ++c)
        sources[c].insert(owners[c]);

    for (const auto& m : remove) {
        const auto row = static_cast<Eigen::Index>(old.index_of(m));
        std::vector<Eigen::Index> support;
        double peak = 0;
        for (Eigen::Index c = 0; c < B.cols(); ++c)
            if (carried(row, c)) {
                support.push_back(c);
                peak = std::max(peak, std::abs(B(row, c)));
            }
        if (support.empty()) {
            // cancelled by the elimination of an earlier member of the group
            B.row(row).setZero();
            ++r.log.placement_cancelled;
            r.log.ops.push_back({"stress-free", m, -1, -1, 0});
            continue;
        }
        // newest well-conditioned column, preferring one owned by a real cell over a virtual one
        Eigen::Index pivot = -1, fallback = -1;
        for (Eigen::Index c : support) {
            if (std::abs(B(row, c)) < 0.1 * peak)
                continue;
            fallback = c;
            const auto owner = before.graph.cells.find(owners[static_cast<std::size_t>(c)]);
            if (owner == before.graph.cells.end() || owner->second.kind != CellOrigin::virtual_cell)
                pivot = c;
        }
        if (pivot < 0)
            pivot = fallback;
        for (Eigen::Index c : support) {
            if (c == pivot)
                continue;
            const double f = B(row, c) / B(row, pivot);
            B.col(c) -= f * B.col(pivot);
            const double cn = B.col(c).norm();
            r.log.max_removed_residual = std::max(r.log.max_removed_residual, cn > 0 ? std::abs(B(row, c)) / cn : 0.0);
            B(row, c) = 0;
            r.log.ops.push_back({"eliminate", m, static_cast<int>(c), static_cast<int>(pivot), f});
            sources[static_cast<std::size_t>(c)].insert(sources[static_cast<std::size_t>(pivot)].begin(),
                                                        sources[static_cast<std::size_t>(pivot)].end());
            touched[static_cast<std::size_t>(c)] = true;
        }
        for (Eigen::Index c = 0; c < B.cols(); ++c)
            B(row, c) = c == pivot ? B(row, c) : 0.0;
        r.log.ops.push_back({"drop", m, static_cast<int>(pivot), static_cast<int>(pivot), 0});
        const Eigen::Index last = B.cols() - 1;
        if (pivot < last)
            B.block(0, pivot, B.rows(), last - pivot) = B.block(0, pivot + 1, B.rows(), last - pivot).eval();
        B.conservativeResize(Eigen::NoChange, last);
        owners.erase(owners.begin() + pivot);
        sources.erase(sources.begin() + pivot);
        touched.erase(touched.begin() + pivot);
    }

    StructureState& s = r.snapshot.state;
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < old.members.size(); ++i)
        if (!group.count(old.members[i])) {
            s.members.push_back(old.members[i]);
            keep.push_back(static_cast<Eigen::Index>(i));
        }
    s.basis.resize(static_cast<Eigen::Index>(keep.size()), B.cols());
    for (std::size_t i = 0; i < keep.size(); ++i)
        s.basis.row(static_cast<Eigen::Index>(i)) = B.row(keep[i]);
    const auto live = endpoints(s.members);
    for (NodeId n : live)
        s.nodes[n] = old.nodes.at(n);

    if (s.basis.cols() > 0 && numeric_rank(s.basis, opt.rank_tol) != s.basis.cols())
        throw Error(ErrorCode::numeric_degeneracy, "fused basis is rank deficient");

    MorphoGraph& g = r.snapshot.graph;
    g = before.graph;
    for (std::size_t c = 0; c < owners.size(); ++c) {
        if (!touched[c])
            continue;
        std::set<Member> edges;
        for (int id : sources[c])
            for (const auto& e : g.cell(id).edges)
                if (s.find(e))
                    edges.insert(e);
        std::vector<Member> ev(edges.begin(), edges.end());
        const int id = g.add_cell(CellOrigin::fused, step, endpoints(ev), ev);
        owners[c] = id;
        r.log.cells_created.push_back(id);
    }
    g.columns = owners;
    s.typology = default_typology(s, opt.rank_tol);

    const int null_before = nullity(old, opt.rank_tol);
    const int null_after = nullity(s, opt.rank_tol);
    r.log.delta_edges = -static_cast<int>(remove.size());
    r.log.delta_nodes = static_cast<int>(s.nodes.size()) - static_cast<int>(old.nodes.size());
    r.log.predicted = expected_delta_dim(r.log.delta_edges, r.log.delta_nodes);
    r.log.observed = null_after - null_before;
    r.log.delta_mechanisms = (s.nodes.size() >= 3 ? mechanisms_of(s, null_after) : 0) - mechanisms_of(old, null_before);
    require_clean(s, opt);
    return r;
}

PendingAdhesion pending_adhesion(const std::vector<MorphoStep>& steps, const std::vector<Snapshot>& history)
{
    if (steps.size() != history.size() || history.empty())
        throw Error(ErrorCode::usage, "place must follow an adhesion");
    std::size_t j = steps.size();
    while (j > 0 && std::holds_alternative<PlaceStep>(steps[j - 1]))
        --j;
    if (j < 2 || !std::holds_alternative<AdhereStep>(steps[j - 1]))
        throw Error(ErrorCode::usage, "place must follow an adhesion");
    PendingAdhesion out{history[j - 2], std::get<AdhereStep>(steps[j - 1]).cell};
    for (int i = 0; i < 5; ++i)
        out.cell.coords[i] = history.back().state.nodes.at(out.cell.nodes[i]);
    return out;
}

StepResult apply_step(const std::vector<MorphoStep>& steps, const std::vector<Snapshot>& history,
                      const MorphoStep& next, const EngineOptions& opt)
{
    const int index = static_cast<int>(history.size());
    if (std::holds_alternative<SeedStep>(next)) {
        if (!history.empty())
            throw Error(ErrorCode::usage, "seed must be the first step");
        return seed(std::get<SeedStep>(next).cell, opt);
    }
    if (history.empty())
        throw Error(ErrorCode::usage, "no seed step", step_kind(next) + " before seed");
    const Snapshot& current = history.back();

    if (auto* a = std::get_if<AdhereStep>(&next))
        return adhere(current, a->cell, opt, index);
    if (auto* f = std::get_if<FuseStep>(&next))
        return fuse(current, f->members, opt, index);

    const auto& p = std::get<PlaceStep>(next);
    PendingAdhesion pend = pending_adhesion(steps, history);
    const Snapshot& base = pend.base;
    CellSpec& cell = pend.cell;
    int slot = -1;
    for (int i = 0; i < 5; ++i)
        if (cell.nodes[i] == p.node)
            slot = i;
    if (slot < 0 || base.state.nodes.count(p.node))
        throw Error(ErrorCode::usage, "place node must be new in the latest adhesion", std::to_string(p.node));
    if (!p.point.finite())
        throw Error(ErrorCode::usage, "place coordinates must be finite");
    cell.coords[slot] = p.point;

    const FusionSurface fs = fusion_surface(base.state, cell, p.remove, p.fixed, p.node);
    std::vector<Point3> cloud;
    for (const auto& [id, q] : base.state.nodes)
        cloud.push_back(q);
    cloud.insert(cloud.end(), cell.coords.begin(), cell.coords.end());
    const double scale = std::max(diameter(cloud), 1e-300);
    if (p.snap)
        cell.coords[slot] = solve_on_constraints(fs.constraints, p.point, {.scale = scale});
    for (const auto& c : fs.constraints) {
        const double d = distance_estimate(c, cell.coords[slot]);
        if (!(std::abs(d) <= 1e-9 * scale))
            throw Error(ErrorCode::no_solution, "point is off the placement surface",
                        "distance " + std::to_string(d));
    }

    StepResult r = adhere(base, cell, opt, index);
    const int null_prev = nullity(current.state, opt.rank_tol);
    const int null_now = nullity(r.snapshot.state, opt.rank_tol);
    r.log.kind = "place";
    r.log.delta_edges = 0;
    r.log.delta_nodes = 0;
    r.log.predicted = 0;
    r.log.observed = null_now - null_prev;
    r.log.delta_mechanisms = mechanisms_of(r.snapshot.state, null_now) - mechanisms_of(current.state, null_prev);
    return r;
}

namespace {

void check_expectation(const Expectation& e, const Snapshot& snap, const EngineOptions& opt)
{
    const auto& s = snap.state;
    auto fail = [](const std::string& what, int want, int got) {
        throw Error(ErrorCode::invariant_violation, "expectation failed: " + what,
                    "expected " + std::to_string(want) + ", got " + std::to_string(got));
    };
    if (e.dim_w && *e.dim_w != s.dim())
        fail("dim_w", *e.dim_w, s.dim());
    if (e.nodes && *e.nodes != static_cast<int>(s.nodes.size()))
        fail("nodes", *e.nodes, static_cast<int>(s.nodes.size()));
    if (e.members && *e.members != static_cast<int>(s.members.size()))
        fail("members", *e.members, static_cast<int>(s.members.size()));
    if (e.mechanisms) {
        const int m = count_report(s, opt.rank_tol).mechanisms;
        if (m != *e.mechanisms)
            fail("mechanisms", *e.mechanisms, m);
    }
    const int struts = static_cast<int>(std::count(s.typology.begin(), s.typology.end(), MemberRole::strut));
    const int cables = static_cast<int>(std::count(s.typology.begin(), s.typology.end(), MemberRole::cable));
    if (e.struts && *e.struts != struts)
        fail("struts", *e.struts, struts);
    if (e.cables && *e.cables != cables)
        fail("cables", *e.cables, cables);
}

}  // namespace

RunResult run_script(const std::vector<ScriptStep>& script, const EngineOptions& opt)
{
    RunResult out;
    if (script.empty()) {
        out.error = Error(ErrorCode::usage, "no seed step", "empty script");
        return out;
    }
    std::vector<MorphoStep> steps;
    for (std::size_t i = 0; i < script.size(); ++i) {
        try {
            StepResult r = apply_step(steps, out.snapshots, script[i].step, opt);
            check_expectation(script[i].expect, r.snapshot, opt);
            steps.push_back(script[i].step);
            out.snapshots.push_back(std::move(r.snapshot));
            out.log.push_back(std::move(r.log));
        } catch (const Error& e) {
            std::string where = "step " + std::to_string(i + 1);
            if (script[i].line > 0)
                where += " (line " + std::to_string(script[i].line) + ")";
            out.error = Error(e.code(), where + ": " + e.what(), e.detail());
            out.failed_step = i;
            return out;
        }
    }
    return out;
}

}  // namespace tensegrity
