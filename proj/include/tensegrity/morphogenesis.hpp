#pragma once

#include "tensegrity/error.hpp"
#include "tensegrity/structure.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tensegrity {

struct EngineOptions {
    double rank_tol = 1e-9;
    double gp_tol = 1e-9;
    double zero_tol = 1e-9;     // coefficient counted as zero relative to its column norm
    double coord_tol = 1e-9;    // shared-node coordinate match, relative to diameter
    std::size_t virtual_budget = 20000;
    // When the cell-pattern search comes up short, extract the missing states
    // directly from the nullspace instead of failing.
    bool nullspace_fallback = true;
    bool audit_each_step = true;
};

struct SeedStep {
    CellSpec cell;
};

// Node ids of the cell that already exist in the structure are the shared nodes.
struct AdhereStep {
    CellSpec cell;
};

struct FuseStep {
    std::vector<Member> members;
};

// Moves a node added by the latest adhesion onto the fusion surface for `remove`
// and redoes that adhesion.
struct PlaceStep {
    NodeId node = 0;
    Point3 point;
    std::vector<Member> remove;
    std::optional<NodeId> fixed;
    bool snap = false;  // treat point as a starting guess and solve onto the surface
};

using MorphoStep = std::variant<SeedStep, AdhereStep, FuseStep, PlaceStep>;

std::string step_kind(const MorphoStep& step);

struct BasisOp {
    std::string op;      // "append", "virtual", "extracted", "eliminate", "drop", "stress-free"
    Member member{};
    int column = -1;
    int pivot = -1;
    double factor = 0;
};

struct StepLog {
    std::string kind;
    int delta_edges = 0;
    int delta_nodes = 0;
    int predicted = 0;        // e - 3v
    int observed = 0;         // change of SVD nullity
    int delta_mechanisms = 0;
    int placement_cancelled = 0;  // group members found stress-free during fusion
    double max_removed_residual = 0;
    std::vector<int> cells_created;
    std::vector<BasisOp> ops;
    int search_evaluations = 0;

    bool generic() const { return observed == predicted; }
};

struct StepResult {
    Snapshot snapshot;
    StepLog log;
};

int expected_delta_dim(int e, int v);

StepResult seed(const CellSpec& spec, const EngineOptions& opt = {});
StepResult adhere(const Snapshot& before, const CellSpec& spec, const EngineOptions& opt = {}, int step = 1);
StepResult fuse(const Snapshot& before, const std::vector<Member>& remove, const EngineOptions& opt = {},
                int step = 1);

struct VirtualCell {
    std::vector<NodeId> nodes;
    std::vector<Member> edges;
    Eigen::VectorXd stress;  // over state.members
    bool extracted = false;  // came from the nullspace fallback
};

// `fresh` are the members added by the current step; any new state must load one.
std::vector<VirtualCell> find_virtual_cells(const StructureState& state, const MorphoGraph& graph, int needed,
                                            const std::vector<Member>& fresh, const EngineOptions& opt = {},
                                            int* evaluations = nullptr);

struct Expectation {
    std::optional<int> dim_w, nodes, members, mechanisms, struts, cables;
};

struct ScriptStep {
    MorphoStep step;
    Expectation expect;
    int line = 0;
};

struct RunResult {
    std::vector<Snapshot> snapshots;  // after each committed step
    std::vector<StepLog> log;
    std::optional<Error> error;
    std::size_t failed_step = 0;

    const Snapshot& final() const { return snapshots.back(); }
};

// Applies one step given the history so far. `history[i]` is the snapshot
// after `steps[i]`.
StepResult apply_step(const std::vector<MorphoStep>& steps, const std::vector<Snapshot>& history,
                      const MorphoStep& next, const EngineOptions& opt = {});

// The adhesion that trailing place steps act on: the snapshot before it and
// its cell with current coordinates.
struct PendingAdhesion {
    Snapshot base;
    CellSpec cell;
};
PendingAdhesion pending_adhesion(const std::vector<MorphoStep>& steps, const std::vector<Snapshot>& history);

RunResult run_script(const std::vector<ScriptStep>& script, const EngineOptions& opt = {});

}  // namespace tensegrity
