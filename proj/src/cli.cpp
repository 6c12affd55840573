#include "tensegrity/cli.hpp"

#include "tensegrity/error.hpp"
#include "tensegrity/io.hpp"
#include "tensegrity/placement.hpp"
#include "tensegrity/service.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <set>

namespace tensegrity {

namespace {

std::vector<Member> parse_members(const std::string& s)
{
    std::vector<Member> out;
    std::stringstream in(s);
    for (std::string part; std::getline(in, part, ',');) {
        const auto dash = part.find('-');
        if (dash == std::string::npos)
            throw Error(ErrorCode::usage, "member must look like i-j", part);
        out.push_back(make_member(std::stoi(part.substr(0, dash)), std::stoi(part.substr(dash + 1))));
    }
    return out;
}

void print_log_line(std::ostream& out, std::size_t i, const StepLog& log, const Snapshot& snap)
{
    out << "step " << i + 1 << " " << log.kind << ": e=" << log.delta_edges << " v=" << log.delta_nodes
        << " predicted=" << log.predicted << " observed=" << log.observed << " dm=" << log.delta_mechanisms
        << " dim_w=" << snap.state.dim() << " cells=" << log.cells_created.size();
    if (log.placement_cancelled)
        out << " stress-free=" << log.placement_cancelled;
    out << "\n";
}

void print_counts(std::ostream& out, const StructureState& s, double tol)
{
    const CountReport r = count_report(s, tol);
    const auto n = [&](MemberRole role) { return std::count(s.typology.begin(), s.typology.end(), role); };
    out << "nodes " << r.nodes << " members " << r.members << " dim_w " << r.dim_w << " mechanisms "
        << r.mechanisms << " laman_bound " << r.laman_bound << " rank_a " << r.rank_a << "\n";
    out << "struts " << n(MemberRole::strut) << " cables " << n(MemberRole::cable) << " unassigned "
        << n(MemberRole::unassigned) << "\n";
    if (r.small_branch)
        out << "note: small-structure branch gives dof " << r.dof_small_branch << " (first branch " << r.dof
            << ")\n";
}

// Rebuilds the structure before the newest regular cell was adhered.
struct Precursor {
    StructureState base;
    CellSpec cell;
};

Precursor precursor_of(const Snapshot& snap)
{
    const MorphoCell* last = nullptr;
    for (const auto& [id, c] : snap.graph.cells)
        if (c.kind == CellOrigin::regular && (!last || c.step >= last->step))
            last = &c;
    if (!last || last->step == 0)
        throw Error(ErrorCode::usage, "structure has no adhered cell to place");
    std::set<Member> older;
    std::set<NodeId> older_nodes;
    for (const auto& [id, c] : snap.graph.cells)
        if (c.step < last->step) {
            older.insert(c.edges.begin(), c.edges.end());
            older_nodes.insert(c.nodes.begin(), c.nodes.end());
        }
    Precursor p;
    const auto& s = snap.state;
    for (const auto& [id, pt] : s.nodes)
        if (older_nodes.count(id))
            p.base.nodes[id] = pt;
    std::vector<Eigen::Index> rows, cols;
    for (std::size_t i = 0; i < s.members.size(); ++i)
        if (older.count(s.members[i])) {
            p.base.members.push_back(s.members[i]);
            rows.push_back(static_cast<Eigen::Index>(i));
        }
    for (std::size_t c = 0; c < snap.graph.columns.size(); ++c)
        if (snap.graph.cell(snap.graph.columns[c]).step < last->step)
            cols.push_back(static_cast<Eigen::Index>(c));
    p.base.basis.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            p.base.basis(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.basis(rows[i], cols[j]);
    p.base.typology.assign(p.base.members.size(), MemberRole::unassigned);
    for (int i = 0; i < 5; ++i) {
        p.cell.nodes[i] = last->nodes[static_cast<std::size_t>(i)];
        p.cell.coords[i] = s.nodes.at(p.cell.nodes[i]);
    }
    return p;
}

Snapshot load_structure(const std::string& path) { return parse_structure(read_file(path)); }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Tensegrity morphogenesis by cell adhesion and fusion", "tensegrity"};
    app.require_subcommand(1);

    double tol = 1e-9;
    std::size_t budget = 20000;
    std::uint64_t seed = 1;

    auto* run = app.add_subcommand("run", "Run a morphogenesis script");
    std::string script_path, out_path;
    bool quiet = false;
    run->add_option("script", script_path, "Script file")->required();
    run->add_option("-o,--output", out_path, "Write the final structure here");
    run->add_option("--tol", tol, "Relative rank tolerance");
    run->add_option("--budget", budget, "Virtual-cell search budget");
    run->add_flag("-q,--quiet", quiet, "Only print the summary");

    auto* check = app.add_subcommand("check", "Audit a structure file");
    std::string structure_path;
    check->add_option("structure", structure_path, "Structure file")->required();
    check->add_option("--tol", tol, "Relative rank tolerance");

    auto* stress = app.add_subcommand("stress", "Print the self-stress basis and typology");
    std::string combination;
    stress->add_option("structure", structure_path, "Structure file")->required();
    stress->add_option("--combination", combination, "Comma-separated column weights for typology");
    stress->add_option("--tol", tol, "Relative rank tolerance");

    auto* surface = app.add_subcommand("surface", "Placement surface for fusing members of the newest cell");
    std::string fuse_list;
    int fix = 0, node = 0, count = 64;
    surface->add_option("structure", structure_path, "Structure file")->required();
    surface->add_option("--fuse", fuse_list, "Members to remove, e.g. 2-4,3-5")->required();
    surface->add_option("--fix", fix, "New node held fixed (three shared nodes)");
    surface->add_option("--node", node, "New node to place");
    surface->add_option("--count", count, "Number of surface samples");
    surface->add_option("--seed", seed, "Sampling seed");

    auto* exp = app.add_subcommand("export", "Export a structure");
    std::string obj_path;
    exp->add_option("structure", structure_path, "Structure file")->required();
    exp->add_option("--obj", obj_path, "OBJ output path")->required();

    auto* srv = app.add_subcommand("serve", "Start the local HTTP service");
    ServeOptions so;
    if (const char* env = std::getenv("TENSEGRITY_PORT"))
        so.port = std::atoi(env);
    std::string static_dir;
    srv->add_option("--port", so.port, "Port (default from TENSEGRITY_PORT or 8080)");
    srv->add_option("--host", so.host, "Bind address");
    srv->add_option("--static", static_dir, "Directory of workbench assets");
    srv->add_option("--tol", tol, "Relative rank tolerance");
    srv->add_option("--budget", budget, "Virtual-cell search budget");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << app.help();
        return 2;
    }

    EngineOptions opt;
    opt.rank_tol = tol;
    opt.virtual_budget = budget;

    try {
        if (*run) {
            const auto script = parse_script(read_file(script_path));
            const RunResult r = run_script(script, opt);
            if (!quiet)
                for (std::size_t i = 0; i < r.log.size(); ++i)
                    print_log_line(out, i, r.log[i], r.snapshots[i]);
            if (r.error) {
                err << "error [" << to_string(r.error->code()) << "]: " << r.error->what();
                if (!r.error->detail().empty())
                    err << " (" << r.error->detail() << ")";
                err << "\n";
                return 1;
            }
            print_counts(out, r.final().state, tol);
            if (!out_path.empty())
                write_file(out_path, serialize_structure(r.final()));
            return 0;
        }
        if (*check) {
            Snapshot snap;
            try {
                snap = load_structure(structure_path);
            } catch (const Error& e) {
                err << "check failed [" << to_string(e.code()) << "]: " << e.what() << "\n";
                return 1;
            }
            print_counts(out, snap.state, tol);
            const auto v = audit(snap.state, tol);
            for (const auto& x : v)
                err << "violated: " << x.invariant << ": " << x.detail << "\n";
            if (!v.empty())
                return 1;
            out << "ok\n";
            return 0;
        }
        if (*stress) {
            const Snapshot snap = load_structure(structure_path);
            const auto& s = snap.state;
            std::vector<MemberRole> roles = s.typology;
            if (!combination.empty()) {
                std::vector<double> c;
                std::stringstream in(combination);
                for (std::string t; std::getline(in, t, ',');)
                    c.push_back(std::stod(t));
                roles = typology_from_stress(s, Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())), tol);
            }
            out << std::setw(10) << "member";
            for (Eigen::Index c = 0; c < s.basis.cols(); ++c)
                out << std::setw(12) << ("w" + std::to_string(c + 1));
            out << "  role\n";
            out << std::fixed << std::setprecision(6);
            for (std::size_t i = 0; i < s.members.size(); ++i) {
                out << std::setw(10) << to_string(s.members[i]);
                for (Eigen::Index c = 0; c < s.basis.cols(); ++c)
                    out << std::setw(12) << s.basis(static_cast<Eigen::Index>(i), c);
                out << "  " << to_string(roles[i]) << "\n";
            }
            return 0;
        }
        if (*surface) {
            const Snapshot snap = load_structure(structure_path);
            const Precursor p = precursor_of(snap);
            const FusionSurface fs =
                fusion_surface(p.base, p.cell, parse_members(fuse_list), fix ? std::optional<NodeId>(fix) : std::nullopt,
                               node ? std::optional<NodeId>(node) : std::nullopt);
            nlohmann::json j;
            j["kind"] = fs.kind;
            j["unknown"] = fs.unknown;
            if (fs.fixed)
                j["fixed"] = *fs.fixed;
            j["densities"] = fs.densities;
            nlohmann::json cons = nlohmann::json::array();
            for (const auto& c : fs.constraints) {
                nlohmann::json cj = {{"kind", constraint_kind(c)}};
                if (auto* pl = std::get_if<PlaneConstraint>(&c))
                    cj["coefficients"] = pl->form.coeffs();
                else if (auto* q = std::get_if<QuadricConstraint>(&c)) {
                    nlohmann::json rows = nlohmann::json::array();
                    for (int r = 0; r < 4; ++r)
                        rows.push_back({q->t(r, 0), q->t(r, 1), q->t(r, 2), q->t(r, 3)});
                    cj["matrix"] = rows;
                }
                cons.push_back(cj);
            }
            j["constraints"] = cons;
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& q : sample_surface(fs.constraints.front(), count, bounding_box(snap.state), seed))
                pts.push_back({q.x, q.y, q.z});
            j["samples"] = pts;
            out << j.dump(1) << "\n";
            return 0;
        }
        if (*exp) {
            export_obj(load_structure(structure_path).state, obj_path);
            return 0;
        }
        if (*srv) {
            Service service(opt);
            if (!static_dir.empty())
                so.static_dir = static_dir;
            HttpFrontend front(service, so);
            out << "listening on http://" << so.host << ":" << front.port() << "\n" << std::flush;
            return front.run() ? 0 : 1;
        }
    } catch (const Error& e) {
        err << "error [" << to_string(e.code()) << "]: " << e.what();
        if (!e.detail().empty())
            err << " (" << e.detail() << ")";
        err << "\n";
        return e.code() == ErrorCode::usage ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace tensegrity
