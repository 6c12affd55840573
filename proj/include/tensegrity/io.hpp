#pragma once

#include "tensegrity/morphogenesis.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace tensegrity {

inline constexpr int kStructureVersion = 1;
inline constexpr int kScriptVersion = 1;

nlohmann::json structure_to_json(const Snapshot& snap);
Snapshot structure_from_json(const nlohmann::json& j);

std::string serialize_structure(const Snapshot& snap);
Snapshot parse_structure(const std::string& text);

nlohmann::json step_log_to_json(const StepLog& log);
nlohmann::json count_report_to_json(const CountReport& r);

// Line-oriented script:
//   tensegrity-script 1
//   node <id> <x> <y> <z>
//   seed cell=1,2,3,4,5 [anchor=1-2] [alpha=1]
//   adhere cell=... [anchor=..] [alpha=..]
//   fuse members=2-4,3-5
//   place node=6 at=x,y,z remove=2-4,3-5 [fix=7]     (or near= to snap)
//   expect dim_w=1 nodes=6 members=12 mechanisms=0 struts=3 cables=9
std::vector<ScriptStep> parse_script(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& body);

std::string export_obj(const StructureState& state);
void export_obj(const StructureState& state, const std::filesystem::path& path);

}  // namespace tensegrity
