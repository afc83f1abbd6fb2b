#include "hmch/cell_problems.hpp"

#include "hmch/error.hpp"
#include "hmch/kernels.hpp"
#include "io_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hmch {

std::string_view to_string(BoundaryMode b) { return b == BoundaryMode::natural ? "natural" : "dirichlet"; }

BoundaryMode parse_boundary(std::string_view s)
{
    if (s == "natural")
        return BoundaryMode::natural;
    if (s == "dirichlet")
        return BoundaryMode::dirichlet;
    throw InvalidArgument("unknown boundary mode '" + std::string(s) + "' (expected natural or dirichlet)");
}

std::string_view to_string(Provenance p) { return p == Provenance::full ? "full" : "hierarchical"; }

double Centering::c(int m, int j) const
{
    if (!present(j))
        throw InvalidArgument("continuum " + std::to_string(j + 1) + " is absent from block (" +
                              std::to_string(block.x) + "," + std::to_string(block.y) + ")");
    return m == 0 ? centroid[j]->x : centroid[j]->y;
}

Centering continuum_centroids(const CoarseLayout& layout, const MediumField& medium, Index2 block)
{
    if (!layout.valid_block(block))
        throw InvalidArgument("continuum_centroids: invalid block");
    const int C = medium.continua;
    std::vector<double> sx(C, 0.0), sy(C, 0.0);
    std::vector<long> n(C, 0);
    const IndexBox cells = layout.block_cells(block);
    for (int j = cells.lo.y; j < cells.hi.y; ++j)
        for (int i = cells.lo.x; i < cells.hi.x; ++i) {
            const int c = medium.continuum[medium.cell(i, j)];
            const Point2 x = layout.cell_center({i, j});
            sx[c] += x.x;
            sy[c] += x.y;
            ++n[c];
        }
    Centering out;
    out.block = block;
    out.centroid.resize(C);
    for (int c = 0; c < C; ++c)
        if (n[c] > 0)
            out.centroid[c] = Point2{sx[c] / n[c], sy[c] / n[c]};
    return out;
}

namespace {

// First moments ∫_{R_q} x_m ψ_j of every constraint row.
std::vector<Point2> row_moments(const CoarseLayout& layout, const MediumField& medium, const ConstraintSystem& cs)
{
    std::vector<Point2> out(cs.rows.size());
    const double area = layout.cell_area();
    for (std::size_t r = 0; r < cs.rows.size(); ++r) {
        const ConstraintRow& row = cs.rows[r];
        const IndexBox cells = layout.block_cells(row.block);
        double sx = 0.0, sy = 0.0;
        for (int j = cells.lo.y; j < cells.hi.y; ++j)
            for (int i = cells.lo.x; i < cells.hi.x; ++i)
                if (medium.continuum[medium.cell(i, j)] == row.continuum) {
                    const Point2 x = layout.cell_center({i, j});
                    sx += x.x;
                    sy += x.y;
                }
        out[r] = {sx * area, sy * area};
    }
    return out;
}

std::vector<double> targets_from(const ConstraintSystem& cs, const std::vector<Point2>& moments,
                                 const Centering& centering, int i, int k)
{
    std::vector<double> g(cs.rows.size(), 0.0);
    for (std::size_t r = 0; r < cs.rows.size(); ++r) {
        const ConstraintRow& row = cs.rows[r];
        if (row.continuum != i)
            continue;
        if (k == 0)
            g[r] = row.measure;
        else {
            const int m = k - 1;
            const double moment = m == 0 ? moments[r].x : moments[r].y;
            g[r] = moment - centering.c(m, i) * row.measure;
        }
    }
    return g;
}

std::vector<std::uint8_t> boundary_mask(const NodeGrid& g)
{
    std::vector<std::uint8_t> mask(g.node_count(), 0);
    for (int j = 0; j < g.nodes_y(); ++j)
        for (int i = 0; i < g.nodes_x(); ++i)
            if (g.on_boundary(i, j))
                mask[g.node(i, j)] = 1;
    return mask;
}

Centering required_centering(const CoarseLayout& layout, const MediumField& medium, Index2 block)
{
    Centering c = continuum_centroids(layout, medium, block);
    for (int j = 0; j < medium.continua; ++j)
        if (!c.present(j))
            throw SolverError("macropoint block (" + std::to_string(block.x) + "," + std::to_string(block.y) +
                              ", id " + std::to_string(layout.block_id(block)) + ") lacks continuum " +
                              std::to_string(j + 1) + "; its local problems are undefined");
    return c;
}

// Fine-resolution cell window of `cells` (global fine cell indices) inside grid `g`.
struct FineWindow {
    kernels::CellWindow w;
    std::ptrdiff_t node_offset = 0;
    std::ptrdiff_t kappa_offset = 0;
};

FineWindow fine_window(const MediumField& medium, const NodeGrid& g, const IndexBox& cells)
{
    if (g.factor != 1)
        throw InvalidArgument("fine_window: grid must be at fine resolution");
    FineWindow f;
    f.w.nx = cells.nx();
    f.w.ny = cells.ny();
    f.w.hx = g.hx;
    f.w.hy = g.hy;
    f.w.node_stride = g.nodes_x();
    f.w.cell_stride = medium.cells.x;
    f.node_offset = g.node(cells.lo.x - g.fine_cell_lo.x, cells.lo.y - g.fine_cell_lo.y);
    f.kappa_offset = static_cast<std::ptrdiff_t>(medium.cell(cells.lo.x, cells.lo.y));
    return f;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

} // namespace

std::vector<double> constraint_targets(const CoarseLayout& layout, const MediumField& medium,
                                       const ConstraintSystem& cs, const Centering& centering, int i, int k)
{
    return targets_from(cs, row_moments(layout, medium, cs), centering, i, k);
}

LocalCellSolutions solve_full_cell(const CoarseLayout& layout, const MediumField& medium, Index2 block,
                                   const Region& region, int factor, const CellOptions& options)
{
    if (!region.blocks.contains(block))
        throw InvalidArgument("solve_full_cell: region does not contain the macropoint block");
    LocalCellSolutions sol;
    sol.block = layout.block_id(block);
    sol.level = 1;
    sol.provenance = Provenance::full;
    sol.region = region;
    sol.continua = medium.continua;
    sol.centering = required_centering(layout, medium, block);
    sol.grid = region_grid(layout, region, 1);

    const StiffnessSystem A = assemble_stiffness(layout, medium, region, factor);
    const ConstraintSystem C = assemble_constraints(layout, medium, region, factor);
    std::vector<std::uint8_t> fixed;
    if (options.boundary == BoundaryMode::dirichlet)
        fixed = boundary_mask(A.grid);
    const SaddleSolver solver(A.matrix, C.matrix, fixed);
    sol.solve_unknowns = solver.primal_size();
    sol.solve_constraints = solver.constraint_size();
    const std::vector<Point2> moments = row_moments(layout, medium, C);
    const Vector zero = Vector::Zero(A.grid.node_count());

    const int F = medium.continua * kFunctionsPerContinuum;
    sol.phi.resize(F);
    sol.multipliers.resize(F);
    for (int i = 0; i < medium.continua; ++i)
        for (int k = 0; k < kFunctionsPerContinuum; ++k) {
            const std::vector<double> g = targets_from(C, moments, sol.centering, i, k);
            const SaddleSolution s = solver.solve(zero, Eigen::Map<const Vector>(g.data(), g.size()));
            const int f = function_index(i, k);
            sol.phi[f] = factor == 1 ? to_std(s.primal) : prolongate(to_std(s.primal), A.grid, sol.grid);
            sol.multipliers[f] = to_std(s.multipliers);
            sol.max_residual = std::max(sol.max_residual, s.relative_residual);
        }
    return sol;
}

std::vector<double> parent_interpolant(std::span<const ParentField> parents, const NodeGrid& target, int function,
                                       const Centering* recenter)
{
    const int i = function / kFunctionsPerContinuum;
    const int k = function % kFunctionsPerContinuum;
    std::vector<double> out(target.node_count(), 0.0);
    for (const ParentField& p : parents) {
        if (p.solution == nullptr)
            throw InvalidArgument("parent_interpolant: null parent");
        const std::vector<double> r = restrict_nodes(p.solution->phi.at(function), p.solution->grid, target);
        for (std::size_t n = 0; n < out.size(); ++n)
            out[n] += p.weight * r[n];
        if (recenter && k > 0) {
            const double shift = p.solution->centering.c(k - 1, i) - recenter->c(k - 1, i);
            const std::vector<double> a =
                restrict_nodes(p.solution->phi.at(function_index(i, 0)), p.solution->grid, target);
            for (std::size_t n = 0; n < out.size(); ++n)
                out[n] += p.weight * shift * a[n];
        }
    }
    return out;
}

std::vector<double> combine(std::span<const double> correction, const NodeGrid& correction_grid,
                            const NodeGrid& fine, std::span<const ParentField> parents, int function,
                            const Centering* recenter)
{
    std::vector<double> out = correction_grid.factor == fine.factor
                                  ? std::vector<double>(correction.begin(), correction.end())
                                  : prolongate(correction, correction_grid, fine);
    if (out.size() != static_cast<std::size_t>(fine.node_count()))
        throw DimensionMismatch("combine: correction does not cover the target grid");
    const std::vector<double> bar = parent_interpolant(parents, fine, function, recenter);
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] += bar[k];
    return out;
}

LocalCellSolutions solve_correction(const CoarseLayout& layout, const MediumField& medium, Index2 block,
                                    const Region& region, int level, int factor,
                                    std::span<const ParentField> parents, const CellOptions& options)
{
    if (!region.blocks.contains(block))
        throw InvalidArgument("solve_correction: region does not contain the macropoint block");
    if (parents.empty())
        throw InvalidArgument("solve_correction: no parents");
    double wsum = 0.0;
    for (const ParentField& p : parents) {
        if (p.solution == nullptr)
            throw InvalidArgument("solve_correction: null parent");
        if (!p.solution->region.contains(region))
            throw InvalidArgument("solve_correction: parent block " + std::to_string(p.solution->block) +
                                  " does not cover the region of block " +
                                  std::to_string(layout.block_id(block)));
        if (p.solution->grid.factor != 1 || p.solution->continua != medium.continua)
            throw InvalidArgument("solve_correction: parent fields must be fine-resolution and match the medium");
        wsum += p.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw InvalidArgument("solve_correction: parent weights sum to " + detail::format_double(wsum) +
                              ", expected 1");

    LocalCellSolutions sol;
    sol.block = layout.block_id(block);
    sol.level = level;
    sol.provenance = Provenance::hierarchical;
    sol.region = region;
    sol.continua = medium.continua;
    sol.centering = required_centering(layout, medium, block);
    sol.grid = region_grid(layout, region, 1);

    const StiffnessSystem A = assemble_stiffness(layout, medium, region, factor);
    const ConstraintSystem C = assemble_constraints(layout, medium, region, factor);
    sol.correction_grid = A.grid;
    std::vector<std::uint8_t> fixed;
    if (options.boundary == BoundaryMode::dirichlet || options.zero_trace_correction)
        fixed = boundary_mask(A.grid);
    const SaddleSolver solver(A.matrix, C.matrix, fixed);
    sol.solve_unknowns = solver.primal_size();
    sol.solve_constraints = solver.constraint_size();
    const std::vector<Point2> moments = row_moments(layout, medium, C);

    const NodeGrid& fine = sol.grid;
    const FineWindow whole = fine_window(medium, fine, region.cells);
    // Continuum indicators over the region's fine cells, for the moment integrals of Φ̄.
    std::vector<std::vector<double>> local_indicator(medium.continua,
                                                     std::vector<double>(static_cast<std::size_t>(fine.cells.x) *
                                                                         fine.cells.y, 0.0));
    for (int j = 0; j < fine.cells.y; ++j)
        for (int i = 0; i < fine.cells.x; ++i) {
            const int c = medium.continuum[medium.cell(fine.fine_cell_lo.x + i, fine.fine_cell_lo.y + j)];
            local_indicator[c][static_cast<std::size_t>(j) * fine.cells.x + i] = 1.0;
        }

    const int F = medium.continua * kFunctionsPerContinuum;
    std::vector<std::vector<double>> bar(F);
    for (int f = 0; f < F; ++f)
        bar[f] = parent_interpolant(parents, fine, f, options.recenter_parents ? &sol.centering : nullptr);

    sol.phi.resize(F);
    sol.multipliers.resize(F);
    sol.correction.resize(F);
    sol.correction_energy.resize(F);
    for (int i = 0; i < medium.continua; ++i)
        for (int k = 0; k < kFunctionsPerContinuum; ++k) {
            const int f = function_index(i, k);
            const std::vector<double>& driver =
                k > 0 && options.literal_gradient_rhs ? bar[function_index(i, 0)] : bar[f];

            std::vector<double> action(fine.node_count(), 0.0);
            kernels::stiffness_apply(whole.w, medium.kappa.data() + whole.kappa_offset, driver.data() + whole.node_offset,
                                     action.data() + whole.node_offset);
            const std::vector<double> reduced = prolongate_transpose(action, A.grid, fine);
            Vector rhs(A.grid.node_count());
            for (int n = 0; n < A.grid.node_count(); ++n)
                rhs[n] = -reduced[n];

            std::vector<double> g = targets_from(C, moments, sol.centering, i, k);
            for (std::size_t r = 0; r < C.rows.size(); ++r) {
                const ConstraintRow& row = C.rows[r];
                const IndexBox cells = layout.block_cells(row.block);
                const FineWindow bw = fine_window(medium, fine, cells);
                kernels::CellWindow w = bw.w;
                w.cell_stride = fine.cells.x;
                const double* weight = local_indicator[row.continuum].data() +
                                       static_cast<std::size_t>(cells.lo.y - fine.fine_cell_lo.y) * fine.cells.x +
                                       (cells.lo.x - fine.fine_cell_lo.x);
                g[r] -= kernels::weighted_integral(w, weight, bar[f].data() + bw.node_offset);
            }

            const SaddleSolution s = solver.solve(rhs, Eigen::Map<const Vector>(g.data(), g.size()));
            sol.correction[f] = to_std(s.primal);
            sol.correction_energy[f] = std::sqrt(std::max(0.0, s.primal.dot(A.matrix * s.primal)));
            sol.multipliers[f] = to_std(s.multipliers);
            sol.max_residual = std::max(sol.max_residual, s.relative_residual);

            std::vector<double> phi = factor == 1 ? sol.correction[f] : prolongate(sol.correction[f], A.grid, fine);
            for (std::size_t n = 0; n < phi.size(); ++n)
                phi[n] += bar[f][n];
            sol.phi[f] = std::move(phi);
        }
    return sol;
}

double energy(const MediumField& medium, const NodeGrid& grid, std::span<const double> u, std::span<const double> v)
{
    if (u.size() != static_cast<std::size_t>(grid.node_count()) || v.size() != u.size())
        throw DimensionMismatch("energy: field sizes do not match the grid");
    const IndexBox cells{grid.fine_cell_lo, {grid.fine_cell_lo.x + grid.cells.x, grid.fine_cell_lo.y + grid.cells.y}};
    const FineWindow w = fine_window(medium, grid, cells);
    return kernels::energy_product(w.w, medium.kappa.data() + w.kappa_offset, u.data(), v.data());
}

double verify_constraints(const CoarseLayout& layout, const MediumField& medium, const LocalCellSolutions& sol)
{
    const ConstraintSystem C = assemble_constraints(layout, medium, sol.region, 1);
    const std::vector<Point2> moments = row_moments(layout, medium, C);
    double worst = 0.0;
    for (int i = 0; i < sol.continua; ++i)
        for (int k = 0; k < kFunctionsPerContinuum; ++k) {
            const std::vector<double>& phi = sol.phi.at(function_index(i, k));
            if (phi.size() != static_cast<std::size_t>(C.matrix.cols()))
                throw DimensionMismatch("verify_constraints: stored field does not match its region");
            const Vector got = C.matrix * Eigen::Map<const Vector>(phi.data(), phi.size());
            const std::vector<double> g = targets_from(C, moments, sol.centering, i, k);
            for (int r = 0; r < C.size(); ++r)
                worst = std::max(worst, std::abs(got[r] - g[r]) / C.rows[r].measure);
        }
    return worst;
}

LocalCellSolutions restrict_solutions(const CoarseLayout& layout, const LocalCellSolutions& sol, const Region& sub)
{
    if (!sol.region.contains(sub))
        throw InvalidArgument("restrict_solutions: sub-region is not inside the solution region");
    LocalCellSolutions out;
    out.block = sol.block;
    out.level = sol.level;
    out.provenance = sol.provenance;
    out.region = sub;
    out.continua = sol.continua;
    out.centering = sol.centering;
    out.grid = region_grid(layout, sub, 1);
    out.phi.reserve(sol.phi.size());
    for (const auto& f : sol.phi)
        out.phi.push_back(restrict_nodes(f, sol.grid, out.grid));
    out.multipliers = sol.multipliers;
    out.correction_energy = sol.correction_energy;
    out.max_residual = sol.max_residual;
    out.solve_unknowns = sol.solve_unknowns;
    out.solve_constraints = sol.solve_constraints;
    return out;
}

// Cache record: "HMCH-CELL 1" header of key/value lines up to "end_header", then the stored
// fields, multiplier vectors and correction energies as little-endian float64.

namespace {

constexpr std::string_view kCellMagic = "HMCH-CELL 1";

} // namespace

void save_solutions(const LocalCellSolutions& sol, const std::filesystem::path& path)
{
    using detail::format_double;
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os)
            throw FormatError("cannot open '" + tmp.string() + "' for writing");
        const Region& r = sol.region;
        const NodeGrid& g = sol.grid;
        os << kCellMagic << '\n'
           << "block " << sol.block << '\n'
           << "level " << sol.level << '\n'
           << "provenance " << to_string(sol.provenance) << '\n'
           << "region " << r.blocks.lo.x << ' ' << r.blocks.lo.y << ' ' << r.blocks.hi.x << ' ' << r.blocks.hi.y
           << ' ' << r.cells.lo.x << ' ' << r.cells.lo.y << ' ' << r.cells.hi.x << ' ' << r.cells.hi.y << ' '
           << (r.clipped ? 1 : 0) << '\n'
           << "grid " << g.cells.x << ' ' << g.cells.y << ' ' << format_double(g.hx) << ' ' << format_double(g.hy)
           << ' ' << format_double(g.origin.x) << ' ' << format_double(g.origin.y) << ' ' << g.factor << ' '
           << g.fine_cell_lo.x << ' ' << g.fine_cell_lo.y << '\n'
           << "continua " << sol.continua << '\n';
        os << "centering " << sol.centering.block.x << ' ' << sol.centering.block.y;
        for (const auto& c : sol.centering.centroid)
            os << ' ' << (c ? 1 : 0) << ' ' << format_double(c ? c->x : 0.0) << ' ' << format_double(c ? c->y : 0.0);
        os << '\n' << "functions " << sol.phi.size() << '\n' << "multipliers";
        for (const auto& m : sol.multipliers)
            os << ' ' << m.size();
        os << '\n'
           << "correction_energy " << sol.correction_energy.size() << '\n'
           << "max_residual " << format_double(sol.max_residual) << '\n'
           << "system " << sol.solve_unknowns << ' ' << sol.solve_constraints << '\n'
           << "end_header\n";
        for (const auto& f : sol.phi)
            detail::write_le_doubles(os, f);
        for (const auto& m : sol.multipliers)
            detail::write_le_doubles(os, m);
        detail::write_le_doubles(os, sol.correction_energy);
        if (!os)
            throw FormatError("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

LocalCellSolutions load_solutions(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(is, line) || line != kCellMagic)
        throw FormatError("'" + path.string() + "' is not a cell cache record");
    LocalCellSolutions sol;
    std::size_t functions = 0, energies = 0;
    std::vector<std::size_t> mult_sizes;
    bool done = false;
    try {
        while (std::getline(is, line)) {
            if (line == "end_header") {
                done = true;
                break;
            }
            std::istringstream ls(line);
            std::string key;
            ls >> key;
            if (key == "block") ls >> sol.block;
            else if (key == "level") ls >> sol.level;
            else if (key == "provenance") {
                std::string p;
                ls >> p;
                sol.provenance = p == "full" ? Provenance::full : Provenance::hierarchical;
            }
            else if (key == "region") {
                Region& r = sol.region;
                int clipped = 0;
                ls >> r.blocks.lo.x >> r.blocks.lo.y >> r.blocks.hi.x >> r.blocks.hi.y >> r.cells.lo.x >>
                    r.cells.lo.y >> r.cells.hi.x >> r.cells.hi.y >> clipped;
                r.clipped = clipped != 0;
            }
            else if (key == "grid") {
                NodeGrid& g = sol.grid;
                std::string hx, hy, ox, oy;
                ls >> g.cells.x >> g.cells.y >> hx >> hy >> ox >> oy >> g.factor >> g.fine_cell_lo.x >>
                    g.fine_cell_lo.y;
                g.hx = std::stod(hx);
                g.hy = std::stod(hy);
                g.origin = {std::stod(ox), std::stod(oy)};
            }
            else if (key == "continua") ls >> sol.continua;
            else if (key == "centering") {
                ls >> sol.centering.block.x >> sol.centering.block.y;
                int present;
                std::string x, y;
                while (ls >> present >> x >> y)
                    sol.centering.centroid.push_back(present ? std::optional<Point2>(Point2{std::stod(x), std::stod(y)})
                                                             : std::nullopt);
            }
            else if (key == "functions") ls >> functions;
            else if (key == "multipliers") {
                std::size_t n;
                while (ls >> n)
                    mult_sizes.push_back(n);
            }
            else if (key == "correction_energy") ls >> energies;
            else if (key == "max_residual") {
                std::string v;
                ls >> v;
                sol.max_residual = std::stod(v);
            }
            else if (key == "system") ls >> sol.solve_unknowns >> sol.solve_constraints;
            else
                throw FormatError("unknown cache header key '" + key + "'");
            if (ls.fail() && !ls.eof())
                throw FormatError("malformed cache header line '" + line + "'");
        }
    } catch (const std::logic_error&) {
        throw FormatError("malformed cache header in '" + path.string() + "'");
    }
    if (!done || functions == 0 || mult_sizes.size() != functions || sol.grid.cells.x < 1 || sol.grid.cells.y < 1)
        throw FormatError("incomplete cache header in '" + path.string() + "'");

    const std::size_t nodes = static_cast<std::size_t>(sol.grid.node_count());
    sol.phi.assign(functions, std::vector<double>(nodes));
    bool ok = true;
    for (auto& f : sol.phi)
        ok = ok && detail::read_le_doubles(is, f.data(), nodes);
    sol.multipliers.resize(functions);
    for (std::size_t k = 0; k < functions; ++k) {
        sol.multipliers[k].resize(mult_sizes[k]);
        ok = ok && detail::read_le_doubles(is, sol.multipliers[k].data(), mult_sizes[k]);
    }
    sol.correction_energy.resize(energies);
    ok = ok && detail::read_le_doubles(is, sol.correction_energy.data(), energies);
    if (!ok || is.peek() != std::char_traits<char>::eof())
        throw DimensionMismatch("cache record '" + path.string() + "' has the wrong payload size");
    return sol;
}

} // namespace hmch
