#include "tensegrity/io.hpp"

#include "tensegrity/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace tensegrity {

using nlohmann::json;

namespace {

json member_json(const Member& m) { return json::array({m.a, m.b}); }

Member member_from(const json& j)
{
    if (!j.is_array() || j.size() != 2)
        throw Error(ErrorCode::parse, "member must be a pair of node ids", j.dump());
    return make_member(j[0].get<NodeId>(), j[1].get<NodeId>());
}

json members_json(const std::vector<Member>& ms)
{
    json a = json::array();
    for (const auto& m : ms)
        a.push_back(member_json(m));
    return a;
}

std::vector<Member> members_from(const json& j)
{
    std::vector<Member> out;
    for (const auto& m : j)
        out.push_back(member_from(m));
    return out;
}

double finite_number(const json& j)
{
    if (!j.is_number())
        throw Error(ErrorCode::parse, "expected a number", j.dump());
    const double v = j.get<double>();
    if (!std::isfinite(v))
        throw Error(ErrorCode::parse, "non-finite number");
    return v;
}

}  // namespace

nlohmann::json structure_to_json(const Snapshot& snap)
{
    const auto& s = snap.state;
    json j;
    j["format"] = "tensegrity-structure";
    j["version"] = kStructureVersion;
    json nodes = json::array();
    for (const auto& [id, p] : s.nodes) {
        if (!p.finite())
            throw Error(ErrorCode::io, "cannot serialize non-finite coordinate", std::to_string(id));
        nodes.push_back({{"id", id}, {"xyz", {p.x, p.y, p.z}}});
    }
    j["nodes"] = nodes;
    j["members"] = members_json(s.members);
    json basis = json::array();
    for (Eigen::Index c = 0; c < s.basis.cols(); ++c) {
        json col = json::array();
        for (Eigen::Index r = 0; r < s.basis.rows(); ++r)
            col.push_back(s.basis(r, c));
        basis.push_back(col);
    }
    j["basis"] = basis;
    json typ = json::array();
    for (auto r : s.typology)
        typ.push_back(std::string(to_string(r)));
    j["typology"] = typ;

    json cells = json::array();
    for (const auto& [id, c] : snap.graph.cells)
        cells.push_back({{"id", id},
                         {"kind", std::string(to_string(c.kind))},
                         {"step", c.step},
                         {"nodes", c.nodes},
                         {"edges", members_json(c.edges)}});
    json adj = json::array();
    for (const auto& [key, shared] : snap.graph.adjacency)
        adj.push_back({{"cells", {key.first, key.second}}, {"shared", members_json(shared)}});
    j["morpho_graph"] = {{"cells", cells}, {"adjacency", adj}, {"columns", snap.graph.columns}};
    return j;
}

Snapshot structure_from_json(const nlohmann::json& j)
{
    try {
        if (!j.is_object() || j.value("format", "") != "tensegrity-structure")
            throw Error(ErrorCode::parse, "not a tensegrity structure document");
        if (j.at("version").get<int>() != kStructureVersion)
            throw Error(ErrorCode::parse, "unsupported structure version", j.at("version").dump());
        Snapshot snap;
        auto& s = snap.state;
        for (const auto& n : j.at("nodes")) {
            const NodeId id = n.at("id").get<NodeId>();
            const auto& xyz = n.at("xyz");
            if (!xyz.is_array() || xyz.size() != 3)
                throw Error(ErrorCode::parse, "node coordinates must have three entries", std::to_string(id));
            if (!s.nodes.emplace(id, Point3{finite_number(xyz[0]), finite_number(xyz[1]), finite_number(xyz[2])})
                     .second)
                throw Error(ErrorCode::parse, "duplicate node id", std::to_string(id));
        }
        const std::vector<Member> raw = members_from(j.at("members"));
        const auto E = raw.size();
        std::vector<std::size_t> order(E);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return raw[x] < raw[y]; });
        for (std::size_t i : order)
            s.members.push_back(raw[i]);
        if (std::adjacent_find(s.members.begin(), s.members.end()) != s.members.end())
            throw Error(ErrorCode::parse, "duplicate member");
        for (const auto& m : s.members)
            if (!s.nodes.count(m.a) || !s.nodes.count(m.b))
                throw Error(ErrorCode::parse, "member endpoint is not a node", to_string(m));

        const auto& basis = j.at("basis");
        s.basis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(E), static_cast<Eigen::Index>(basis.size()));
        for (std::size_t c = 0; c < basis.size(); ++c) {
            if (basis[c].size() != E)
                throw Error(ErrorCode::parse, "basis column length differs from member count",
                            "column " + std::to_string(c));
            for (std::size_t r = 0; r < E; ++r)
                s.basis(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = finite_number(basis[c][order[r]]);
        }
        const auto& typ = j.at("typology");
        if (typ.size() != E)
            throw Error(ErrorCode::parse, "typology length differs from member count");
        for (std::size_t r = 0; r < E; ++r)
            s.typology.push_back(role_from_string(typ[order[r]].get<std::string>()));

        const auto& g = j.at("morpho_graph");
        for (const auto& c : g.at("cells")) {
            MorphoCell cell;
            cell.id = c.at("id").get<int>();
            cell.kind = origin_from_string(c.at("kind").get<std::string>());
            cell.step = c.value("step", 0);
            cell.nodes = c.at("nodes").get<std::vector<NodeId>>();
            cell.edges = members_from(c.at("edges"));
            std::sort(cell.nodes.begin(), cell.nodes.end());
            std::sort(cell.edges.begin(), cell.edges.end());
            if (!snap.graph.cells.emplace(cell.id, cell).second)
                throw Error(ErrorCode::parse, "duplicate cell id", std::to_string(cell.id));
        }
        for (const auto& a : g.at("adjacency")) {
            const auto ids = a.at("cells").get<std::vector<int>>();
            if (ids.size() != 2)
                throw Error(ErrorCode::parse, "adjacency entry needs two cells");
            auto shared = members_from(a.at("shared"));
            std::sort(shared.begin(), shared.end());
            std::pair<int, int> key{std::min(ids[0], ids[1]), std::max(ids[0], ids[1])};
            const auto& x = snap.graph.cell(key.first).edges;
            const auto& y = snap.graph.cell(key.second).edges;
            std::vector<Member> expect;
            std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(expect));
            if (expect != shared)
                throw Error(ErrorCode::parse, "adjacency does not match cell edge sets",
                            std::to_string(key.first) + "," + std::to_string(key.second));
            snap.graph.adjacency[key] = std::move(shared);
        }
        snap.graph.columns = g.at("columns").get<std::vector<int>>();
        if (snap.graph.columns.size() != basis.size())
            throw Error(ErrorCode::parse, "column owners differ from basis size");
        for (int id : snap.graph.columns)
            snap.graph.cell(id);
        return snap;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, "malformed structure document", e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::not_found || e.code() == ErrorCode::degenerate_member)
            throw Error(ErrorCode::parse, e.what(), e.detail());
        throw;
    }
}

std::string serialize_structure(const Snapshot& snap) { return structure_to_json(snap).dump(1) + "\n"; }

Snapshot parse_structure(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, "structure is not valid JSON", e.what());
    }
    return structure_from_json(j);
}

nlohmann::json step_log_to_json(const StepLog& log)
{
    json ops = json::array();
    for (const auto& op : log.ops) {
        json o = {{"op", op.op}};
        if (op.member.a || op.member.b)
            o["member"] = member_json(op.member);
        if (op.column >= 0)
            o["column"] = op.column;
        if (op.pivot >= 0)
            o["pivot"] = op.pivot;
        if (op.op == "eliminate")
            o["factor"] = op.factor;
        ops.push_back(o);
    }
    return {{"kind", log.kind},
            {"delta_edges", log.delta_edges},
            {"delta_nodes", log.delta_nodes},
            {"predicted_delta_dim", log.predicted},
            {"observed_delta_dim", log.observed},
            {"delta_mechanisms", log.delta_mechanisms},
            {"placement_cancelled", log.placement_cancelled},
            {"generic", log.generic()},
            {"cells_created", log.cells_created},
            {"search_evaluations", log.search_evaluations},
            {"ops", ops}};
}

nlohmann::json count_report_to_json(const CountReport& r)
{
    json j = {{"nodes", r.nodes},   {"members", r.members},       {"laman_bound", r.laman_bound},
              {"dim_w", r.dim_w},   {"rank_a", r.rank_a},         {"mechanisms", r.mechanisms},
              {"dof", r.dof}};
    if (r.small_branch)
        j["dof_small_branch"] = r.dof_small_branch;
    return j;
}

namespace {

[[noreturn]] void fail(int line, const std::string& msg)
{
    throw Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + msg, "line " + std::to_string(line));
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        out.push_back(cur);
    if (!s.empty() && s.back() == sep)
        out.emplace_back();
    return out;
}

double to_double(const std::string& s, int line)
{
    double v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || !std::isfinite(v))
        fail(line, "bad number '" + s + "'");
    return v;
}

int to_int(const std::string& s, int line)
{
    int v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end)
        fail(line, "bad integer '" + s + "'");
    return v;
}

Member to_member(const std::string& s, int line)
{
    const auto parts = split(s, '-');
    if (parts.size() != 2)
        fail(line, "member must look like i-j, got '" + s + "'");
    const int a = to_int(parts[0], line), b = to_int(parts[1], line);
    if (a == b)
        fail(line, "member endpoints coincide");
    return make_member(a, b);
}

std::vector<Member> to_members(const std::string& s, int line)
{
    std::vector<Member> out;
    for (const auto& p : split(s, ','))
        out.push_back(to_member(p, line));
    if (out.empty())
        fail(line, "member list is empty");
    return out;
}

Point3 to_point(const std::string& s, int line)
{
    const auto parts = split(s, ',');
    if (parts.size() != 3)
        fail(line, "point needs three comma-separated numbers");
    return {to_double(parts[0], line), to_double(parts[1], line), to_double(parts[2], line)};
}

using Keys = std::map<std::string, std::string>;

Keys keys_of(const std::vector<std::string>& tok, const std::set<std::string>& allowed, int line)
{
    Keys k;
    for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto eq = tok[i].find('=');
        if (eq == std::string::npos || eq == 0)
            fail(line, "expected key=value, got '" + tok[i] + "'");
        std::string key = tok[i].substr(0, eq);
        if (!allowed.count(key))
            fail(line, "unknown key '" + key + "' for " + tok[0]);
        if (!k.emplace(key, tok[i].substr(eq + 1)).second)
            fail(line, "key '" + key + "' given twice");
    }
    return k;
}

CellSpec cell_from(const Keys& k, const std::map<NodeId, Point3>& nodes, int line)
{
    auto it = k.find("cell");
    if (it == k.end())
        fail(line, "missing key 'cell'");
    const auto ids = split(it->second, ',');
    if (ids.size() != 5)
        fail(line, "cell needs exactly five node ids");
    CellSpec spec;
    for (int i = 0; i < 5; ++i) {
        spec.nodes[i] = to_int(ids[i], line);
        auto n = nodes.find(spec.nodes[i]);
        if (n == nodes.end())
            fail(line, "node " + ids[i] + " is not defined");
        spec.coords[i] = n->second;
    }
    spec.anchor = k.count("anchor") ? to_member(k.at("anchor"), line) : make_member(spec.nodes[0], spec.nodes[1]);
    spec.anchor_value = k.count("alpha") ? to_double(k.at("alpha"), line) : 1.0;
    return spec;
}

}  // namespace

std::vector<ScriptStep> parse_script(const std::string& text)
{
    std::vector<ScriptStep> steps;
    std::map<NodeId, Point3> nodes;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    bool header = false;
    while (std::getline(in, raw)) {
        ++line;
        if (auto h = raw.find('#'); h != std::string::npos)
            raw.erase(h);
        std::istringstream ts(raw);
        std::vector<std::string> tok;
        for (std::string t; ts >> t;)
            tok.push_back(t);
        if (tok.empty())
            continue;
        const std::string& kw = tok[0];

        if (kw == "tensegrity-script") {
            if (header || !steps.empty() || !nodes.empty())
                fail(line, "header must come first");
            if (tok.size() != 2 || to_int(tok[1], line) != kScriptVersion)
                fail(line, "unsupported script version");
            header = true;
        } else if (kw == "node") {
            if (tok.size() != 5)
                fail(line, "node needs an id and three coordinates");
            const NodeId id = to_int(tok[1], line);
            if (!nodes.emplace(id, Point3{to_double(tok[2], line), to_double(tok[3], line), to_double(tok[4], line)})
                     .second)
                fail(line, "node " + tok[1] + " defined twice");
        } else if (kw == "seed" || kw == "adhere") {
            const Keys k = keys_of(tok, {"cell", "anchor", "alpha"}, line);
            if (kw == "seed" && !steps.empty())
                fail(line, "seed must be the first step");
            if (kw == "adhere" && steps.empty())
                fail(line, "adhere before seed");
            const CellSpec spec = cell_from(k, nodes, line);
            steps.push_back({kw == "seed" ? MorphoStep{SeedStep{spec}} : MorphoStep{AdhereStep{spec}}, {}, line});
        } else if (kw == "fuse") {
            const Keys k = keys_of(tok, {"members"}, line);
            if (steps.empty())
                fail(line, "fuse before seed");
            if (!k.count("members"))
                fail(line, "missing key 'members'");
            steps.push_back({FuseStep{to_members(k.at("members"), line)}, {}, line});
        } else if (kw == "place") {
            const Keys k = keys_of(tok, {"node", "at", "near", "remove", "fix"}, line);
            if (steps.empty())
                fail(line, "place before seed");
            if (!k.count("node") || !k.count("remove"))
                fail(line, "place needs 'node' and 'remove'");
            if (k.count("at") == k.count("near"))
                fail(line, "place needs exactly one of 'at' or 'near'");
            PlaceStep p;
            p.node = to_int(k.at("node"), line);
            p.snap = k.count("near") > 0;
            p.point = to_point(p.snap ? k.at("near") : k.at("at"), line);
            p.remove = to_members(k.at("remove"), line);
            if (k.count("fix"))
                p.fixed = to_int(k.at("fix"), line);
            steps.push_back({p, {}, line});
        } else if (kw == "expect") {
            const Keys k = keys_of(tok, {"dim_w", "nodes", "members", "mechanisms", "struts", "cables"}, line);
            if (steps.empty())
                fail(line, "expect before any step");
            auto& e = steps.back().expect;
            for (const auto& [key, v] : k) {
                const int n = to_int(v, line);
                if (key == "dim_w") e.dim_w = n;
                else if (key == "nodes") e.nodes = n;
                else if (key == "members") e.members = n;
                else if (key == "mechanisms") e.mechanisms = n;
                else if (key == "struts") e.struts = n;
                else e.cables = n;
            }
        } else {
            fail(line, "unknown directive '" + kw + "'");
        }
    }
    if (steps.empty())
        throw Error(ErrorCode::parse, "no seed step");
    return steps;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error(ErrorCode::io, "cannot open " + path.string(), std::strerror(errno));
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& body)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing", std::strerror(errno));
    f << body;
    if (!f)
        throw Error(ErrorCode::io, "write failed for " + path.string(), std::strerror(errno));
}

std::string export_obj(const StructureState& state)
{
    if (state.nodes.empty() || state.members.empty())
        throw Error(ErrorCode::usage, "cannot export an empty structure");
    std::map<NodeId, int> index;
    std::ostringstream o;
    const auto count = [&](MemberRole r) { return std::count(state.typology.begin(), state.typology.end(), r); };
    o << "# tensegrity structure\n";
    o << "# nodes " << state.nodes.size() << " members " << state.members.size() << " struts "
      << count(MemberRole::strut) << " cables " << count(MemberRole::cable) << " dim_w " << state.dim() << "\n";
    o << "o tensegrity\n";
    char buf[128];
    int k = 0;
    for (const auto& [id, p] : state.nodes) {
        index[id] = ++k;
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p.x, p.y, p.z);
        o << buf;
    }
    const std::pair<MemberRole, const char*> groups[] = {{MemberRole::strut, "struts"},
                                                         {MemberRole::cable, "cables"},
                                                         {MemberRole::removed_candidate, "removed_candidates"},
                                                         {MemberRole::unassigned, "unassigned"}};
    for (const auto& [role, name] : groups) {
        bool opened = false;
        for (std::size_t i = 0; i < state.members.size(); ++i) {
            const MemberRole r = i < state.typology.size() ? state.typology[i] : MemberRole::unassigned;
            if (r != role)
                continue;
            if (!opened) {
                o << "g " << name << "\n";
                opened = true;
            }
            o << "l " << index.at(state.members[i].a) << " " << index.at(state.members[i].b) << "\n";
        }
    }
    return o.str();
}

void export_obj(const StructureState& state, const std::filesystem::path& path)
{
    write_file(path, export_obj(state));
}

}  // namespace tensegrity
