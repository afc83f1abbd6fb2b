#include "hmch/hierarchy_driver.hpp"

#include "hmch/error.hpp"
#include "io_util.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace hmch {

std::string_view to_string(Variant v) { return v == Variant::full ? "full" : "hierarchical"; }

Variant parse_variant(std::string_view s)
{
    if (s == "full")
        return Variant::full;
    if (s == "hierarchical" || s == "hier")
        return Variant::hierarchical;
    throw InvalidArgument("unknown variant '" + std::string(s) + "' (expected full or hierarchical)");
}

std::string_view to_string(Exterior e) { return e == Exterior::clip ? "clip" : "mirror"; }

Exterior parse_exterior(std::string_view s)
{
    if (s == "clip")
        return Exterior::clip;
    if (s == "mirror")
        return Exterior::mirror;
    throw InvalidArgument("unknown exterior '" + std::string(s) + "' (expected clip or mirror)");
}

Index2 RunPlan::solve_block(int id) const
{
    const Index2 b = layout.block_index(id);
    return {b.x + pad, b.y + pad};
}

MediumField solve_medium(const RunPlan& plan, const MediumField& medium)
{
    return plan.pad == 0 ? medium : mirror_extend(medium, plan.solve_layout);
}

SourceField solve_source(const RunPlan& plan, const SourceField& source)
{
    return plan.pad == 0 ? source : mirror_extend(source, plan.solve_layout);
}

double RunPlan::predicted_work() const
{
    double w = 0.0;
    for (const CellTask& t : tasks)
        w += t.work;
    return w;
}

double cost_model(int levels, int eta, int d)
{
    if (levels < 1)
        throw InvalidArgument("cost_model: levels must be >= 1");
    if (d != 2 && d != 3)
        throw InvalidArgument("cost_model: d must be 2 or 3");
    if (eta < (levels == 1 ? 1 : 2))
        throw InvalidArgument("cost_model: eta must be >= 2 when levels > 1");
    return levels * std::pow(static_cast<double>(eta), static_cast<double>((1 - levels) * d));
}

namespace {

double task_work(const CoarseLayout& layout, const std::vector<int>& counts, int continua, const Region& region,
                 int factor, double gamma)
{
    const double nodes = static_cast<double>(region.cells.nx() / factor + 1) * (region.cells.ny() / factor + 1);
    double rows = 0.0;
    for (int by = region.blocks.lo.y; by < region.blocks.hi.y; ++by)
        for (int bx = region.blocks.lo.x; bx < region.blocks.hi.x; ++bx)
            for (int c = 0; c < continua; ++c)
                rows += counts[static_cast<std::size_t>(layout.block_id({bx, by})) * continua + c] > 0 ? 1 : 0;
    return std::pow(nodes + rows, gamma);
}

} // namespace

RunPlan plan_run(const CoarseLayout& layout, const MediumField& medium, Variant variant, int eta, int levels,
                 double gamma, Exterior exterior)
{
    if (!(gamma > 0.0))
        throw InvalidArgument("plan_run: gamma must be positive");
    if (medium.cells != layout.fine_cells())
        throw DimensionMismatch("plan_run: medium does not match the layout");
    const int l = layout.oversample_layers();
    const int pad = exterior == Exterior::mirror ? l : 0;
    RunPlan plan{.variant = variant,
                 .layout = layout,
                 .eta = eta,
                 .levels = levels,
                 .gamma = gamma,
                 .exterior = exterior,
                 .pad = pad,
                 .solve_layout = padded_layout(layout, pad)};
    const CoarseLayout& SL = plan.solve_layout;
    const std::vector<int> counts = block_continuum_counts(SL, pad == 0 ? medium : solve_medium(plan, medium));
    const int C = medium.continua;

    if (variant == Variant::full || levels == 1) {
        for (int id = 0; id < layout.block_count(); ++id) {
            CellTask t;
            t.block = id;
            t.oversampled = t.region = oversample_region(SL, plan.solve_block(id), l);
            t.work = task_work(SL, counts, C, t.region, 1, gamma);
            plan.tasks.push_back(std::move(t));
        }
        plan.level_begin = {0, static_cast<int>(plan.tasks.size())};
        if (variant == Variant::hierarchical)
            plan.hierarchy = build_hierarchy(layout, eta, levels);
        return plan;
    }

    const MacroHierarchy h = build_hierarchy(layout, eta, levels);
    const Index2 cpb = layout.cells_per_block();
    const int coarsest = level_factor(eta, levels);
    if (cpb.x % coarsest != 0 || cpb.y % coarsest != 0)
        throw InvalidArgument("plan_run: fine cells per block (" + std::to_string(cpb.x) + "x" +
                              std::to_string(cpb.y) + ") must be divisible by eta^(L-1) = " +
                              std::to_string(coarsest));

    std::vector<Region> own(layout.block_count());
    for (int id = 0; id < layout.block_count(); ++id)
        own[id] = oversample_region(SL, plan.solve_block(id), l);
    std::vector<Region> solve_region = own;
    std::vector<bool> has_children(layout.block_count(), false);
    for (int n = 2; n <= levels; ++n)
        for (int p : h.S[n - 1])
            for (const ParentLink& link : h.parent[p]) {
                solve_region[link.block] = bounding_region(SL, solve_region[link.block], own[p]);
                has_children[link.block] = true;
            }

    plan.level_begin.push_back(0);
    for (int n = 1; n <= levels; ++n) {
        for (int id : h.S[n - 1]) {
            CellTask t;
            t.block = id;
            t.level = n;
            t.factor = level_factor(eta, n);
            t.oversampled = own[id];
            t.region = n == 1 ? solve_region[id] : own[id];
            t.has_children = has_children[id];
            if (n > 1) {
                t.parents = h.parent[id];
                for (const ParentLink& link : t.parents)
                    if (!solve_region[link.block].contains(t.region))
                        throw InvalidArgument("plan_run: parent " + std::to_string(link.block) +
                                              " does not cover the region of " + std::to_string(id));
            }
            t.work = task_work(SL, counts, C, t.region, t.factor, gamma);
            plan.tasks.push_back(std::move(t));
        }
        plan.level_begin.push_back(static_cast<int>(plan.tasks.size()));
    }
    plan.hierarchy = h;
    return plan;
}

namespace {

// Runs body(k) for k in [0, n) on up to `threads` workers. The exception of the lowest failing
// index is rethrown so failures are reported deterministically.
template <class F>
void parallel_for(int n, int threads, F&& body)
{
    threads = std::max(1, std::min(threads, n));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int k = next++; k < n; k = next++) {
            try {
                body(k);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    if (threads == 1)
        worker();
    else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::filesystem::path cache_path(const std::filesystem::path& dir, const RunPlan& plan, const CellTask& t,
                                 std::uint64_t medium_hash, const CellOptions& opt)
{
    std::ostringstream key;
    const CoarseLayout& L = plan.layout;
    key << "medium " << medium_hash << " blocks " << L.blocks().x << ' ' << L.blocks().y << " cpb "
        << L.cells_per_block().x << ' ' << L.cells_per_block().y << " layers " << L.oversample_layers()
        << " variant " << to_string(plan.variant) << " exterior " << to_string(plan.exterior) << " pad "
        << plan.pad << " bc " << to_string(opt.boundary) << " literal "
        << opt.literal_gradient_rhs << " recenter " << opt.recenter_parents << " zero_trace "
        << opt.zero_trace_correction << " block " << t.block << " level " << t.level << " region "
        << t.region.blocks.lo.x << ' ' << t.region.blocks.lo.y << ' ' << t.region.blocks.hi.x << ' '
        << t.region.blocks.hi.y;
    if (plan.variant == Variant::hierarchical)
        key << " eta " << plan.eta << " levels " << plan.levels;
    char name[40];
    std::snprintf(name, sizeof name, "cell_%016llx.bin", static_cast<unsigned long long>(fnv1a(key.str())));
    return dir / name;
}

} // namespace

RunResult execute(const RunPlan& plan, const MediumField& given_medium, const SourceField& given_source,
                  const ExecuteOptions& options, std::optional<double> full_work)
{
    const CoarseLayout& layout = plan.layout;
    if (given_medium.cells != layout.fine_cells() || given_source.cells != given_medium.cells)
        throw DimensionMismatch("execute: medium/source do not match the plan layout");
    if (options.cache_dir)
        std::filesystem::create_directories(*options.cache_dir);
    const std::uint64_t mhash = options.cache_dir ? given_medium.hash() : 0;
    const CoarseLayout& SL = plan.solve_layout;
    std::optional<MediumField> padded_medium;
    std::optional<SourceField> padded_source;
    if (plan.pad > 0) {
        padded_medium = solve_medium(plan, given_medium);
        padded_source = solve_source(plan, given_source);
    }
    const MediumField& medium = padded_medium ? *padded_medium : given_medium;
    const SourceField& source = padded_source ? *padded_source : given_source;

    RunResult result;
    result.blocks.resize(layout.block_count());
    result.ledger.resize(plan.tasks.size());
    std::map<int, std::shared_ptr<const LocalCellSolutions>> parents; // level-1 solutions with children
    std::mutex parents_mutex;
    std::atomic<long> events{0};

    for (int n = 1; n <= plan.task_levels(); ++n) {
        const int begin = plan.level_begin[n - 1];
        const int end = plan.level_begin[n];
        parallel_for(end - begin, options.threads, [&](int k) {
            const CellTask& t = plan.tasks[begin + k];
            TaskRecord& rec = result.ledger[begin + k];
            rec.block = t.block;
            rec.level = t.level;
            rec.started = events++;
            try {
                std::optional<std::filesystem::path> path;
                std::optional<LocalCellSolutions> sol;
                if (options.cache_dir) {
                    path = cache_path(*options.cache_dir, plan, t, mhash, options.cell);
                    if (std::filesystem::exists(*path)) {
                        try {
                            sol = load_solutions(*path);
                            rec.cache_hit = true;
                        } catch (const std::exception&) {
                            sol.reset(); // unreadable record: recompute and overwrite
                        }
                    }
                }
                if (!sol) {
                    const Index2 b = plan.solve_block(t.block);
                    if (t.level == 1)
                        sol = solve_full_cell(SL, medium, b, t.region, 1, options.cell);
                    else {
                        std::vector<ParentField> pf;
                        {
                            std::lock_guard lock(parents_mutex);
                            for (const ParentLink& link : t.parents) {
                                const auto it = parents.find(link.block);
                                if (it == parents.end())
                                    throw SolverError("parent " + std::to_string(link.block) + " is not available");
                                pf.push_back({it->second.get(), link.weight});
                                rec.read_levels.push_back(it->second->level);
                            }
                        }
                        sol = solve_correction(SL, medium, b, t.region, t.level, t.factor, pf, options.cell);
                    }
                    if (path) {
                        const Region keep = t.has_children ? t.region : make_region(SL, {b, {b.x + 1, b.y + 1}});
                        save_solutions(keep == sol->region ? *sol : restrict_solutions(SL, *sol, keep), *path);
                    }
                } else {
                    for (const ParentLink& link : t.parents) {
                        std::lock_guard lock(parents_mutex);
                        const auto it = parents.find(link.block);
                        rec.read_levels.push_back(it == parents.end() ? 1 : it->second->level);
                    }
                }
                rec.work = std::pow(static_cast<double>(sol->solve_unknowns + sol->solve_constraints),
                                                    plan.gamma);
                rec.max_residual = sol->max_residual;
                for (double e : sol->correction_energy)
                    rec.correction_energy = std::max(rec.correction_energy, e);
                if (options.observer)
                    options.observer(*sol, rec.cache_hit);
                result.blocks[t.block] = effective_coeffs(SL, medium, source, *sol);
                result.blocks[t.block].block = t.block;
                if (t.has_children) {
                    auto shared = std::make_shared<const LocalCellSolutions>(std::move(*sol));
                    std::lock_guard lock(parents_mutex);
                    parents[t.block] = std::move(shared);
                }
            } catch (const std::exception& e) {
                std::ostringstream msg;
                msg << "macropoint " << t.block << " (block " << layout.block_index(t.block).x << ","
                    << layout.block_index(t.block).y << ", level " << t.level << "): " << e.what();
                throw SolverError(msg.str());
            }
            rec.finished = events++;
        });
    }

    const MacroSystem sys = assemble_macro(layout, result.blocks);
    result.macro = solve_macro(layout, sys, result.blocks);

    CostReport& c = result.cost;
    c.variant = plan.variant;
    c.levels = plan.variant == Variant::full ? 1 : plan.levels;
    c.eta = plan.eta;
    c.gamma = plan.gamma;
    c.level_work.assign(plan.task_levels(), 0.0);
    for (const TaskRecord& r : result.ledger) {
        c.total_work += r.work;
        c.level_work[r.level - 1] += r.work;
        c.solves += r.cache_hit ? 0 : 1;
        c.cache_hits += r.cache_hit ? 1 : 0;
    }
    c.total_work_full = full_work ? *full_work
                        : plan.variant == Variant::full
                            ? c.total_work
                            : plan_run(layout, given_medium, Variant::full, plan.eta, 1, plan.gamma, plan.exterior)
                                  .predicted_work();
    c.predicted_ratio = cost_model(c.levels, plan.variant == Variant::full ? 1 : c.eta, c.d);
    c.measured_ratio = c.total_work / c.total_work_full;
    return result;
}

void write_cost_csv_header(std::ostream& os, int max_levels)
{
    os << "# solver DOF-work only: (primal unknowns + constraints)^gamma per local solve; quadrature excluded\n";
    os << "variant,H,L,eta,d,gamma,predicted_ratio,measured_ratio,total_work,total_work_full,solves,cache_hits";
    for (int n = 1; n <= max_levels; ++n)
        os << ",work_level_" << n;
    os << '\n';
}

void write_cost_csv_row(std::ostream& os, const CostReport& c, double H, int max_levels)
{
    using detail::format_double;
    os << to_string(c.variant) << ',' << format_double(H) << ',' << c.levels << ',' << c.eta << ',' << c.d << ','
       << format_double(c.gamma) << ',' << format_double(c.predicted_ratio) << ','
       << format_double(c.measured_ratio) << ',' << format_double(c.total_work) << ','
       << format_double(c.total_work_full) << ',' << c.solves << ',' << c.cache_hits;
    for (int n = 0; n < max_levels; ++n)
        os << ',' << (n < static_cast<int>(c.level_work.size()) ? format_double(c.level_work[n]) : std::string());
    os << '\n';
}

} // namespace hmch
