#pragma once

#include "hmch/cell_problems.hpp"
#include "hmch/fem.hpp"
#include "hmch/grid.hpp"
#include "hmch/medium.hpp"

#include <iosfwd>
#include <string_view>
#include <vector>

namespace hmch {

/// Effective coefficients of one coarse block, integrals over the block with prefactor 1.
/// Index convention: j is the test continuum, i the trial continuum, m the trial direction and
/// n the test direction.
struct EffectiveBlock {
    int block = -1;
    int continua = 1;
    std::vector<double> B_;    // [j][i]
    std::vector<double> Bm_;   // [j][i][m]   ∫ κ ∇φ_i^m · ∇φ_j
    std::vector<double> Bbar_; // [j][i][n]   ∫ κ ∇φ_i · ∇φ_j^n
    std::vector<double> Bmn_;  // [j][i][m][n] ∫ κ ∇φ_i^m · ∇φ_j^n
    std::vector<double> b_;    // [j]         ∫ f φ_j

    explicit EffectiveBlock(int block_id = -1, int continua = 1);

    double& B(int j, int i) { return B_[j * continua + i]; }
    double B(int j, int i) const { return B_[j * continua + i]; }
    double& Bm(int j, int i, int m) { return Bm_[(j * continua + i) * kDims + m]; }
    double Bm(int j, int i, int m) const { return Bm_[(j * continua + i) * kDims + m]; }
    double& Bbar(int j, int i, int n) { return Bbar_[(j * continua + i) * kDims + n]; }
    double Bbar(int j, int i, int n) const { return Bbar_[(j * continua + i) * kDims + n]; }
    double& Bmn(int j, int i, int m, int n) { return Bmn_[((j * continua + i) * kDims + m) * kDims + n]; }
    double Bmn(int j, int i, int m, int n) const { return Bmn_[((j * continua + i) * kDims + m) * kDims + n]; }
    double& b(int j) { return b_[j]; }
    double b(int j) const { return b_[j]; }

    /// Largest absolute entrywise difference over all tensors.
    double max_difference(const EffectiveBlock& o) const;
    /// Largest violation of B = Bᵀ, Bm[j][i][m] = Bbar[i][j][m], Bmn[j][i][m][n] = Bmn[i][j][n][m].
    double symmetry_defect() const;
};

/// Eq.-7-type integrals over the block `sol.block` using the stored fine-resolution fields.
EffectiveBlock effective_coeffs(const CoarseLayout& layout, const MediumField& medium, const SourceField& source,
                                const LocalCellSolutions& sol);

/// One row per (block, tensor, indices, value); indices are 1-based.
void write_coeffs_csv(std::ostream& os, const std::vector<EffectiveBlock>& blocks);

/// Galerkin system for continuous bilinear U_i on the coarse node grid, homogeneous Dirichlet
/// boundary, with every block term evaluated at the block center.
struct MacroSystem {
    Index2 nodes;       // coarse nodes per direction
    int continua = 1;
    std::vector<int> dof; // per (node * continua + i): unknown index, -1 on the boundary
    SparseMatrix matrix;
    Vector rhs;
};

MacroSystem assemble_macro(const CoarseLayout& layout, const std::vector<EffectiveBlock>& blocks);

struct MacroSolution {
    Index2 nodes;
    int continua = 1;
    std::vector<double> values;       // node * continua + i
    std::vector<double> block_values; // block * continua + i: mean of the bilinear interpolant
    double relative_residual = 0.0;

    double at(int node, int i) const { return values[static_cast<std::size_t>(node) * continua + i]; }
    double block_value(int block, int i) const { return block_values[static_cast<std::size_t>(block) * continua + i]; }
};

/// Throws SolverError naming the block whose B has the smallest eigenvalue when the system is singular.
MacroSolution solve_macro(const CoarseLayout& layout, const MacroSystem& system,
                          const std::vector<EffectiveBlock>& blocks = {});

} // namespace hmch
