#pragma once

#include "hmch/cell_problems.hpp"
#include "hmch/grid.hpp"
#include "hmch/medium.hpp"
#include "hmch/upscale.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace hmch {

enum class Variant { full, hierarchical };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

/// Treatment of local regions at the domain boundary: `clip` intersects them with Ω and leaves
/// the natural condition on the cut; `mirror` solves on an evenly reflected extension of the
/// medium so that every region keeps its full l-layer size.
enum class Exterior { clip, mirror };
std::string_view to_string(Exterior e);
Exterior parse_exterior(std::string_view s);

/// One local solve: a macropoint block, its FE level and the region it is solved on.
struct CellTask {
    int block = -1;
    int level = 1;
    int factor = 1;           // fine cells per level cell
    Region region;            // solve region (enlarged for level-1 parents), solve_layout coordinates
    Region oversampled;       // the block's own R_p^+, solve_layout coordinates
    std::vector<ParentLink> parents;
    bool has_children = false;
    double work = 0.0;        // predicted (primal unknowns + constraints)^gamma
};

struct RunPlan {
    Variant variant = Variant::full;
    CoarseLayout layout;
    int eta = 2;
    int levels = 1;
    double gamma = 1.0;
    Exterior exterior = Exterior::clip;
    int pad = 0;                 // blocks of reflected medium on every side
    CoarseLayout solve_layout;   // layout the local problems live on (layout when pad = 0)
    std::optional<MacroHierarchy> hierarchy{}; // hierarchical only
    std::vector<CellTask> tasks{};           // sorted by (level, block)
    std::vector<int> level_begin{};          // tasks of level n are [level_begin[n-1], level_begin[n])

    int task_levels() const { return static_cast<int>(level_begin.size()) - 1; }
    double predicted_work() const;
    /// Index of a layout block in solve_layout.
    Index2 solve_block(int id) const;
};

/// Full plan: every block at level 1 on R_p^+. Hierarchical plan: S_n blocks at level n, level-1
/// regions enlarged to cover their children's R_p^+.
RunPlan plan_run(const CoarseLayout& layout, const MediumField& medium, Variant variant, int eta, int levels,
                 double gamma = 1.0, Exterior exterior = Exterior::mirror);

/// Medium and source on the plan's solve_layout.
MediumField solve_medium(const RunPlan& plan, const MediumField& medium);
SourceField solve_source(const RunPlan& plan, const SourceField& source);

/// L * eta^((1-L) d).
double cost_model(int levels, int eta, int d);

struct TaskRecord {
    int block = -1;
    int level = 1;
    double work = 0.0;
    bool cache_hit = false;
    double correction_energy = 0.0; // largest energy norm of the corrections (hierarchical tasks)
    double max_residual = 0.0;
    long started = -1;              // global event sequence numbers
    long finished = -1;
    std::vector<int> read_levels;   // levels of the solutions this task consumed
};

struct ExecuteOptions {
    int threads = 1;
    CellOptions cell;
    std::optional<std::filesystem::path> cache_dir;
    /// Called with every solution as computed (or loaded) before it is reduced to its block.
    /// Called concurrently from worker threads. Solutions refer to the plan's solve_layout.
    std::function<void(const LocalCellSolutions&, bool cache_hit)> observer;
};

struct CostReport {
    Variant variant = Variant::full;
    int levels = 1;
    int eta = 2;
    int d = kDims;
    double gamma = 1.0;
    double total_work = 0.0;      // solver DOF-work of this run
    double total_work_full = 0.0; // solver DOF-work of the plain method on the same layout
    double predicted_ratio = 1.0;
    double measured_ratio = 1.0;
    std::vector<double> level_work;
    int solves = 0;
    int cache_hits = 0;
};

struct RunResult {
    std::vector<EffectiveBlock> blocks;
    MacroSolution macro;
    std::vector<TaskRecord> ledger; // plan order
    CostReport cost;
};

/// Runs the plan level by level (strict barrier), computes effective coefficients and solves the
/// macro system. `full_work` is the reference work of the plain method; when absent it is taken
/// from a full plan of the same layout.
RunResult execute(const RunPlan& plan, const MediumField& medium, const SourceField& source,
                  const ExecuteOptions& options = {}, std::optional<double> full_work = {});

/// Header comment plus columns variant,L,eta,d,gamma,predicted_ratio,measured_ratio,total_work,
/// total_work_full,solves,cache_hits,work_level_1..work_level_L.
void write_cost_csv_header(std::ostream& os, int max_levels);
void write_cost_csv_row(std::ostream& os, const CostReport& c, double H, int max_levels);

} // namespace hmch
