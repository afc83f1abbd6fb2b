#pragma once

#include "hmch/grid.hpp"
#include "hmch/medium.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace hmch {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// Q1 energy form of a region at one mesh level, natural boundary conditions.
struct StiffnessSystem {
    NodeGrid grid;
    std::vector<double> kappa; // cellwise at the grid's resolution
    SparseMatrix matrix;
};

/// Arithmetic mean of the fine-cell coefficient over each cell of `factor` x `factor` fine cells.
std::vector<double> coarsen_kappa(const MediumField& medium, const NodeGrid& grid);
/// Exact Q1 stiffness matrix for cellwise-constant kappa on a uniform rectangular grid.
SparseMatrix assemble_q1(const NodeGrid& grid, std::span<const double> kappa);
StiffnessSystem assemble_stiffness(const CoarseLayout& layout, const MediumField& medium, const Region& region,
                                   int factor = 1);

struct ConstraintRow {
    Index2 block;
    int continuum = 0;
    double measure = 0.0; // |R_q ∩ Ω_j|, equal to the row sum
};

/// Rows ∫_{R_q} v ψ_j for every block R_q of the region and every continuum present in it.
struct ConstraintSystem {
    NodeGrid grid;
    SparseMatrix matrix; // rows x nodes
    std::vector<ConstraintRow> rows;

    int size() const { return static_cast<int>(rows.size()); }
    /// Throws InvalidArgument when the continuum is absent from the block.
    int row_of(Index2 block, int continuum) const;
    bool has_row(Index2 block, int continuum) const;
};

ConstraintSystem assemble_constraints(const CoarseLayout& layout, const MediumField& medium, const Region& region,
                                      int factor = 1);

struct SaddleSolution {
    Vector primal;
    Vector multipliers;              // β with A x - Cᵀ β = rhs
    double relative_residual = 0.0;  // of the full KKT system
    double constraint_defect = 0.0;  // max_k |(C x - g)_k| / row scale
};

/// Factorization of the KKT matrix [A Cᵀ; C 0]. Nodes flagged in `fixed` carry a homogeneous
/// Dirichlet condition. The factorization is reused across right-hand sides.
class SaddleSolver {
public:
    SaddleSolver(const SparseMatrix& stiffness, const SparseMatrix& constraints,
                 std::span<const std::uint8_t> fixed = {});
    ~SaddleSolver();
    SaddleSolver(SaddleSolver&&) noexcept;
    SaddleSolver& operator=(SaddleSolver&&) noexcept;

    SaddleSolution solve(const Vector& rhs_primal, const Vector& g) const;

    int primal_size() const { return n_; }
    int constraint_size() const { return m_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int n_ = 0;
    int m_ = 0;
};

inline constexpr double kSaddleTolerance = 1e-10;

SaddleSolution solve_saddle(const SparseMatrix& stiffness, const SparseMatrix& constraints, const Vector& rhs_primal,
                            const Vector& g);

/// Q1 Galerkin solution of -div(kappa grad u) = f on the global fine grid, u = 0 on the boundary.
struct FineSolution {
    NodeGrid grid;
    Vector values;
    double relative_residual = 0.0;
};

FineSolution solve_fine_reference(const CoarseLayout& layout, const MediumField& medium, const SourceField& source);

/// ∫ w v for cellwise w and nodal v on `grid` (fine resolution); used for load vectors.
Vector cell_load_vector(const NodeGrid& grid, std::span<const double> weight);

} // namespace hmch
