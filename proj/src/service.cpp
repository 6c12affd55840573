#include "tensegrity/service.hpp"

#include "tensegrity/error.hpp"
#include "tensegrity/io.hpp"
#include "tensegrity/placement.hpp"

#include <httplib.h>

#include <cstdlib>
#include <charconv>
#include <sstream>

namespace tensegrity {

using nlohmann::json;

namespace {

int status_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::usage:
    case ErrorCode::parse: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::io: return 500;
    default: return 422;
    }
}

ApiResponse json_response(const json& j, int status = 200) { return {status, "application/json", j.dump()}; }

ApiResponse error_response(ErrorCode code, const std::string& message, const std::string& detail = {})
{
    return json_response({{"code", std::string(to_string(code))}, {"message", message}, {"detail", detail}},
                         status_for(code));
}

std::vector<std::string> path_parts(const std::string& path)
{
    std::vector<std::string> out;
    std::istringstream in(path);
    for (std::string p; std::getline(in, p, '/');)
        if (!p.empty())
            out.push_back(p);
    return out;
}

json body_of(const ApiRequest& req)
{
    if (req.body.empty())
        return json::object();
    try {
        json j = json::parse(req.body);
        if (!j.is_object())
            throw Error(ErrorCode::parse, "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, "request body is not valid JSON", e.what());
    }
}

Member member_of(const json& j)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        const auto dash = s.find('-');
        if (dash == std::string::npos)
            throw Error(ErrorCode::usage, "member must look like i-j", s);
        std::size_t used_a = 0, used_b = 0;
        int a = 0, b = 0;
        try {
            a = std::stoi(s.substr(0, dash), &used_a);
            b = std::stoi(s.substr(dash + 1), &used_b);
        } catch (const std::exception&) {
            throw Error(ErrorCode::usage, "member must look like i-j", s);
        }
        if (used_a != dash || used_b != s.size() - dash - 1)
            throw Error(ErrorCode::usage, "member must look like i-j", s);
        return make_member(a, b);
    }
    if (!j.is_array() || j.size() != 2)
        throw Error(ErrorCode::usage, "member must be a pair of node ids", j.dump());
    return make_member(j[0].get<NodeId>(), j[1].get<NodeId>());
}

std::vector<Member> members_of(const json& j)
{
    if (!j.is_array() || j.empty())
        throw Error(ErrorCode::usage, "member list must be a non-empty array");
    std::vector<Member> out;
    for (const auto& m : j)
        out.push_back(member_of(m));
    return out;
}

std::vector<Member> members_of_query(const std::string& s)
{
    std::vector<Member> out;
    std::istringstream in(s);
    for (std::string p; std::getline(in, p, ',');)
        out.push_back(member_of(json(p)));
    if (out.empty())
        throw Error(ErrorCode::usage, "member list is empty");
    return out;
}

Point3 point_of(const json& j)
{
    if (!j.is_array() || j.size() != 3)
        throw Error(ErrorCode::usage, "point must have three coordinates", j.dump());
    Point3 p{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    if (!p.finite())
        throw Error(ErrorCode::usage, "point must be finite");
    return p;
}

CellSpec cell_of(const json& body, const StructureState* current)
{
    const auto& ids = body.at("cell");
    if (!ids.is_array() || ids.size() != 5)
        throw Error(ErrorCode::usage, "cell needs five node ids");
    CellSpec spec;
    const json nodes = body.value("nodes", json::object());
    for (int i = 0; i < 5; ++i) {
        spec.nodes[i] = ids[i].get<NodeId>();
        const std::string key = std::to_string(spec.nodes[i]);
        if (body.contains("coords"))
            spec.coords[i] = point_of(body.at("coords").at(static_cast<std::size_t>(i)));
        else if (nodes.contains(key))
            spec.coords[i] = point_of(nodes.at(key));
        else if (current && current->nodes.count(spec.nodes[i]))
            spec.coords[i] = current->nodes.at(spec.nodes[i]);
        else
            throw Error(ErrorCode::usage, "no coordinates for node " + key);
    }
    spec.anchor = body.contains("anchor") ? member_of(body.at("anchor")) : make_member(spec.nodes[0], spec.nodes[1]);
    spec.anchor_value = body.value("alpha", 1.0);
    return spec;
}

MorphoStep step_of(const std::string& op, const json& body, const StructureState* current)
{
    if (op == "seed")
        return SeedStep{cell_of(body, nullptr)};
    if (op == "adhere")
        return AdhereStep{cell_of(body, current)};
    if (op == "fuse")
        return FuseStep{members_of(body.at("members"))};
    if (op == "place") {
        PlaceStep p;
        p.node = body.at("node").get<NodeId>();
        p.point = point_of(body.at("xyz"));
        p.remove = members_of(body.at("remove"));
        if (body.contains("fix"))
            p.fixed = body.at("fix").get<NodeId>();
        return p;
    }
    throw Error(ErrorCode::usage, "unknown operation", op);
}

json constraint_json(const PlacementConstraint& c)
{
    json j = {{"kind", constraint_kind(c)}};
    if (auto* p = std::get_if<PlaneConstraint>(&c)) {
        j["coefficients"] = {p->form.c0, p->form.c1, p->form.c2, p->form.c3};
        j["convention"] = "c0 + c1 x + c2 y + c3 z";
    } else {
        const Eigen::Matrix4d& m = std::holds_alternative<QuadricConstraint>(c) ? std::get<QuadricConstraint>(c).t
                                                                                 : std::get<BilinearConstraint>(c).m;
        json rows = json::array();
        for (int i = 0; i < 4; ++i)
            rows.push_back({m(i, 0), m(i, 1), m(i, 2), m(i, 3)});
        j["matrix"] = rows;
        j["convention"] = std::holds_alternative<QuadricConstraint>(c) ? "[1,x,y,z] T [1,x,y,z]^T"
                                                                        : "[xD,yD,zD,1] M [xE,yE,zE,1]^T";
    }
    return j;
}

json typology_summary(const StructureState& s)
{
    int struts = 0, cables = 0, other = 0;
    for (auto r : s.typology)
        (r == MemberRole::strut ? struts : r == MemberRole::cable ? cables : other)++;
    return {{"struts", struts}, {"cables", cables}, {"unassigned", other}};
}

}  // namespace

std::shared_ptr<Service::Session> Service::find(const std::string& id)
{
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end())
        throw Error(ErrorCode::not_found, "no such session", id);
    return it->second;
}

ApiResponse Service::handle(const ApiRequest& req)
{
    try {
        const auto parts = path_parts(req.path);
        if (parts.size() >= 1 && parts[0] == "api") {
            if (parts.size() == 2 && parts[1] == "health" && req.method == "GET")
                return json_response({{"status", "ok"}});
            if (parts.size() == 2 && parts[1] == "sessions" && req.method == "POST")
                return create(req);
            if (parts.size() >= 3 && parts[1] == "sessions") {
                auto session = find(parts[2]);
                std::lock_guard lock(session->mu);
                return on_session(*session, parts.size() == 3 ? "" : parts[3], req);
            }
        }
        return error_response(ErrorCode::not_found, "no such endpoint", req.method + " " + req.path);
    } catch (const Error& e) {
        return error_response(e.code(), e.what(), e.detail());
    } catch (const json::exception& e) {
        return error_response(ErrorCode::usage, "malformed request payload", e.what());
    } catch (const std::exception& e) {
        return json_response({{"code", "internal"}, {"message", e.what()}, {"detail", ""}}, 500);
    }
}

ApiResponse Service::create(const ApiRequest& req)
{
    const json body = body_of(req);
    auto s = std::make_shared<Session>();
    if (body.contains("structure")) {
        const json& st = body.at("structure");
        Snapshot snap = st.is_string() ? parse_structure(st.get<std::string>()) : structure_from_json(st);
        const auto v = audit(snap.state, opt_.rank_tol);
        if (!v.empty())
            throw Error(ErrorCode::invariant_violation, "uploaded structure fails audit: " + v.front().invariant,
                        v.front().detail);
        StepLog log;
        log.kind = "load";
        s->history.push_back({std::nullopt, std::move(snap), log});
        s->cursor = 1;
    } else if (body.contains("script")) {
        const auto script = parse_script(body.at("script").get<std::string>());
        RunResult run = run_script(script, opt_);
        if (run.error)
            throw *run.error;
        for (std::size_t i = 0; i < run.snapshots.size(); ++i)
            s->history.push_back({script[i].step, std::move(run.snapshots[i]), run.log[i]});
        s->cursor = s->history.size();
    }
    std::string id;
    {
        std::lock_guard lock(mu_);
        id = "s" + std::to_string(next_++);
        sessions_[id] = s;
    }
    return json_response({{"id", id}, {"steps", s->cursor}}, 201);
}

ApiResponse Service::on_session(Session& s, const std::string& action, const ApiRequest& req)
{
    // Active steps and snapshots up to the cursor; an uploaded root gets a
    // placeholder step that is never replayed.
    std::vector<MorphoStep> steps;
    std::vector<Snapshot> history;
    for (std::size_t i = 0; i < s.cursor; ++i) {
        steps.push_back(s.history[i].step ? *s.history[i].step : MorphoStep{FuseStep{}});
        history.push_back(s.history[i].snapshot);
    }
    const StructureState* current = history.empty() ? nullptr : &history.back().state;

    auto state_json = [&]() {
        json j;
        j["cursor"] = s.cursor;
        j["can_undo"] = s.cursor > 0;
        j["can_redo"] = s.cursor < s.history.size();
        json kinds = json::array();
        for (std::size_t i = 0; i < s.history.size(); ++i)
            kinds.push_back(s.history[i].log.kind);
        j["history"] = kinds;
        if (current) {
            j["structure"] = structure_to_json(history.back());
            j["counts"] = count_report_to_json(count_report(*current, opt_.rank_tol));
            j["typology_summary"] = typology_summary(*current);
            j["log"] = step_log_to_json(s.history[s.cursor - 1].log);
        } else {
            j["structure"] = nullptr;
            j["counts"] = nullptr;
        }
        return j;
    };

    if (action.empty() && req.method == "GET")
        return json_response(state_json());

    if (req.method == "POST" && (action == "seed" || action == "adhere" || action == "fuse" || action == "place")) {
        const MorphoStep step = step_of(action, body_of(req), current);
        StepResult r = apply_step(steps, history, step, opt_);
        const auto v = audit(r.snapshot.state, opt_.rank_tol);
        if (!v.empty())
            throw Error(ErrorCode::invariant_violation, "audit failed, step rolled back: " + v.front().invariant,
                        v.front().detail);
        s.history.resize(s.cursor);
        s.history.push_back({step, std::move(r.snapshot), r.log});
        s.cursor = s.history.size();
        history.push_back(s.history.back().snapshot);
        current = &history.back().state;
        return json_response({{"state", state_json()}, {"log", step_log_to_json(r.log)}});
    }

    if (req.method == "POST" && action == "preview") {
        const json body = body_of(req);
        const std::string op = body.value("op", "");
        const MorphoStep step = step_of(op, body, current);
        const StepResult r = apply_step(steps, history, step, opt_);
        const auto& st = r.snapshot.state;
        json roles = json::array();
        for (std::size_t i = 0; i < st.members.size(); ++i)
            roles.push_back({{"member", {st.members[i].a, st.members[i].b}},
                             {"role", std::string(to_string(st.typology[i]))}});
        return json_response({{"op", op},
                              {"counts", count_report_to_json(count_report(st, opt_.rank_tol))},
                              {"dim_w", st.dim()},
                              {"typology_summary", typology_summary(st)},
                              {"typology", roles},
                              {"log", step_log_to_json(r.log)}});
    }

    if (req.method == "GET" && action == "placement-surface") {
        auto q = [&](const char* k) -> std::optional<std::string> {
            auto it = req.query.find(k);
            if (it == req.query.end() || it->second.empty())
                return std::nullopt;
            return it->second;
        };
        if (!q("remove"))
            throw Error(ErrorCode::usage, "query parameter 'remove' is required");
        const auto pend = pending_adhesion(steps, history);
        auto integer = [&](const char* k, long long fallback) {
            const auto v = q(k);
            if (!v)
                return fallback;
            long long out = 0;
            const auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
            if (ec != std::errc() || end != v->data() + v->size())
                throw Error(ErrorCode::usage, std::string("query parameter '") + k + "' must be an integer", *v);
            return out;
        };
        std::optional<NodeId> fix, node;
        if (q("fix")) fix = static_cast<NodeId>(integer("fix", 0));
        if (q("node")) node = static_cast<NodeId>(integer("node", 0));
        const int count = static_cast<int>(integer("count", 200));
        const auto seed = static_cast<std::uint64_t>(integer("seed", 1));
        const FusionSurface fs = fusion_surface(pend.base.state, pend.cell, members_of_query(*q("remove")), fix, node);
        json cons = json::array();
        json samples = json::array();
        const Box box = bounding_box(*current);
        for (std::size_t i = 0; i < fs.constraints.size(); ++i) {
            cons.push_back(constraint_json(fs.constraints[i]));
            if (i == 0)
                for (const auto& p : sample_surface(fs.constraints[i], count, box, seed))
                    samples.push_back({p.x, p.y, p.z});
        }
        json targets = json::array();
        for (const auto& t : fs.targets)
            targets.push_back({t.a, t.b});
        json out = {{"kind", fs.kind},     {"unknown", fs.unknown}, {"targets", targets},
                    {"densities", fs.densities}, {"constraints", cons},  {"samples", samples},
                    {"box", {{box.lo.x, box.lo.y, box.lo.z}, {box.hi.x, box.hi.y, box.hi.z}}}};
        if (fs.fixed)
            out["fixed"] = *fs.fixed;
        return json_response(out);
    }

    if (req.method == "POST" && action == "undo") {
        if (s.cursor == 0)
            throw Error(ErrorCode::usage, "nothing to undo");
        --s.cursor;
        history.pop_back();
        current = history.empty() ? nullptr : &history.back().state;
        return json_response(state_json());
    }
    if (req.method == "POST" && action == "redo") {
        if (s.cursor >= s.history.size())
            throw Error(ErrorCode::usage, "nothing to redo");
        history.push_back(s.history[s.cursor].snapshot);
        ++s.cursor;
        current = &history.back().state;
        return json_response(state_json());
    }

    if (req.method == "GET" && action == "export") {
        if (!current)
            throw Error(ErrorCode::usage, "session has no structure yet");
        auto it = req.query.find("format");
        const std::string format = it == req.query.end() ? "structure" : it->second;
        if (format == "obj")
            return {200, "text/plain", export_obj(*current)};
        if (format == "structure")
            return {200, "application/json", serialize_structure(history.back())};
        throw Error(ErrorCode::usage, "unknown export format", format);
    }

    return error_response(ErrorCode::not_found, "no such endpoint", req.method + " " + req.path);
}

struct HttpFrontend::Impl {
    httplib::Server server;
    int port = 0;
};

HttpFrontend::HttpFrontend(Service& service, const ServeOptions& opt) : impl_(std::make_unique<Impl>())
{
    auto& server = impl_->server;
    if (opt.static_dir && !server.set_mount_point("/", opt.static_dir->string()))
        throw Error(ErrorCode::io, "static directory not found", opt.static_dir->string());

    auto bridge = [&service](const httplib::Request& in, httplib::Response& out) {
        ApiRequest req{in.method, in.path, {}, in.body};
        for (const auto& [k, v] : in.params)
            req.query[k] = v;
        const ApiResponse r = service.handle(req);
        out.status = r.status;
        out.set_content(r.body, r.content_type);
    };
    server.Get(R"(/api/.*)", bridge);
    server.Post(R"(/api/.*)", bridge);
    if (opt.port == 0) {
        impl_->port = server.bind_to_any_port(opt.host);
        if (impl_->port <= 0)
            throw Error(ErrorCode::io, "cannot bind " + opt.host);
    } else {
        if (!server.bind_to_port(opt.host, opt.port))
            throw Error(ErrorCode::io, "cannot bind " + opt.host + ":" + std::to_string(opt.port));
        impl_->port = opt.port;
    }
}

HttpFrontend::~HttpFrontend() = default;

int HttpFrontend::port() const { return impl_->port; }
bool HttpFrontend::run() { return impl_->server.listen_after_bind(); }
void HttpFrontend::stop() { impl_->server.stop(); }

int serve(Service& service, const ServeOptions& opt)
{
    HttpFrontend front(service, opt);
    return front.run() ? 0 : 1;
}

}  // namespace tensegrity
