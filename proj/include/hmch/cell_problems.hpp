#pragma once

#include "hmch/fem.hpp"
#include "hmch/grid.hpp"
#include "hmch/medium.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace hmch {

enum class BoundaryMode { natural, dirichlet };
std::string_view to_string(BoundaryMode b);
BoundaryMode parse_boundary(std::string_view s);

enum class Provenance { full, hierarchical };
std::string_view to_string(Provenance p);

struct CellOptions {
    BoundaryMode boundary = BoundaryMode::natural;
    /// Drive the gradient corrections with the parents' average functions instead of their
    /// gradient functions, as the correction equation is literally printed.
    bool literal_gradient_rhs = false;
    /// Re-center each parent's gradient functions on the child's continuum centroids before
    /// interpolating: φ_t^m + (c_t - c_p) φ_t. With false the parents are combined as stored.
    bool recenter_parents = true;
    /// Pin the correction to zero on the region boundary, so the combined function keeps the
    /// parents' trace there. With false the correction has the same natural condition as Φ.
    bool zero_trace_correction = false;
};

/// Continuum centroids of one block; c(m, j) = ∫ x_m ψ_j / ∫ ψ_j over the block.
struct Centering {
    Index2 block;
    std::vector<std::optional<Point2>> centroid; // per continuum, empty when absent

    double c(int m, int j) const;
    bool present(int j) const { return j < static_cast<int>(centroid.size()) && centroid[j].has_value(); }
};

Centering continuum_centroids(const CoarseLayout& layout, const MediumField& medium, Index2 block);

/// Number of local functions per continuum: the average function and one per direction.
inline constexpr int kFunctionsPerContinuum = 1 + kDims;
inline constexpr int function_index(int continuum, int k) { return continuum * kFunctionsPerContinuum + k; }

/// Local functions of one macropoint, stored at fine resolution on `grid`.
/// Function k of continuum i lives at phi[function_index(i, k)]; k = 0 is the average
/// function, k = 1 + m the gradient function for direction m.
struct LocalCellSolutions {
    int block = -1;
    int level = 1;
    Provenance provenance = Provenance::full;
    Region region;
    NodeGrid grid;
    int continua = 1;
    Centering centering;
    std::vector<std::vector<double>> phi;
    std::vector<std::vector<double>> multipliers; // per function, one entry per constraint row

    // Hierarchical tasks only: the raw corrections on the level grid and their energy norms.
    NodeGrid correction_grid;
    std::vector<std::vector<double>> correction;
    std::vector<double> correction_energy;

    double max_residual = 0.0; // largest relative KKT residual of the solves
    int solve_unknowns = 0;    // primal unknowns of the KKT system that was factorized
    int solve_constraints = 0;

    int function_count() const { return static_cast<int>(phi.size()); }
    std::span<const double> avg(int i) const { return phi[function_index(i, 0)]; }
    std::span<const double> grad(int i, int m) const { return phi[function_index(i, 1 + m)]; }
};

/// Right-hand sides g of the average (k = 0) and moment (k = 1 + m) constraints of continuum i.
std::vector<double> constraint_targets(const CoarseLayout& layout, const MediumField& medium,
                                       const ConstraintSystem& cs, const Centering& centering, int i, int k);

/// Full local problems on `region` solved with mesh size h * eta^(level-1) (factor), stored
/// prolongated to the fine grid.
LocalCellSolutions solve_full_cell(const CoarseLayout& layout, const MediumField& medium, Index2 block,
                                   const Region& region, int factor = 1, const CellOptions& options = {});

struct ParentField {
    const LocalCellSolutions* solution = nullptr;
    double weight = 1.0;
};

/// Σ_t c_t φ_t restricted to `target` (fine resolution) for local function `function`. When
/// `recenter` is given, gradient functions are shifted to its centroids using the parents' own
/// average functions.
std::vector<double> parent_interpolant(std::span<const ParentField> parents, const NodeGrid& target, int function,
                                       const Centering* recenter = nullptr);

/// Correction problems of a level-n macropoint: ξ is solved on `region` at the given factor and
/// the stored functions are prolongate(ξ) + Σ_t c_t φ_t.
LocalCellSolutions solve_correction(const CoarseLayout& layout, const MediumField& medium, Index2 block,
                                    const Region& region, int level, int factor,
                                    std::span<const ParentField> parents, const CellOptions& options = {});

/// prolongate(correction) + Σ_t c_t φ_t on `fine`.
std::vector<double> combine(std::span<const double> correction, const NodeGrid& correction_grid,
                            const NodeGrid& fine, std::span<const ParentField> parents, int function,
                            const Centering* recenter = nullptr);

/// Largest constraint defect |∫_{R_q} φ ψ_j - g| / |R_q ∩ Ω_j| over all stored functions and rows,
/// using fine-grid quadrature on the solution's region.
double verify_constraints(const CoarseLayout& layout, const MediumField& medium, const LocalCellSolutions& sol);

/// ∫ κ ∇u·∇v over the solution grid with fine-cell κ.
double energy(const MediumField& medium, const NodeGrid& grid, std::span<const double> u, std::span<const double> v);

/// Copy of `sol` with every stored field restricted to `sub` (a block rectangle inside sol.region).
LocalCellSolutions restrict_solutions(const CoarseLayout& layout, const LocalCellSolutions& sol, const Region& sub);

/// Binary cache record: a text header followed by little-endian float64 arrays.
void save_solutions(const LocalCellSolutions& sol, const std::filesystem::path& path);
LocalCellSolutions load_solutions(const std::filesystem::path& path);

} // namespace hmch
