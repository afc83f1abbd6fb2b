#pragma once

#include "hmch/fem.hpp"
#include "hmch/grid.hpp"
#include "hmch/medium.hpp"
#include "hmch/upscale.hpp"

#include <vector>

namespace hmch {

/// Per-block, per-continuum values; present[k] == 0 marks a continuum absent from the block.
struct BlockAverages {
    int blocks = 0;
    int continua = 1;
    std::vector<double> value;         // block * continua + i
    std::vector<std::uint8_t> present; // same indexing

    double at(int block, int i) const { return value[static_cast<std::size_t>(block) * continua + i]; }
    bool has(int block, int i) const { return present[static_cast<std::size_t>(block) * continua + i] != 0; }
};

/// (1/|K_p ∩ Ω_i|) ∫_{K_p ∩ Ω_i} u for the Q1 interpolant of the fine solution.
BlockAverages block_continuum_averages(const FineSolution& u, const MediumField& medium, const CoarseLayout& layout);

/// Block values of a macro solution, masked like `mask` (the fine reference's presence pattern).
BlockAverages macro_block_values(const MacroSolution& U, const BlockAverages& mask);

/// sqrt(Σ_p |a - ref|² / Σ_p |ref|²) over blocks where continuum i is present in both.
double relative_l2(const BlockAverages& a, const BlockAverages& ref, int i);

struct ErrorReport {
    int continua = 1;
    std::vector<double> type1; // full vs fine
    std::vector<double> type2; // hierarchical vs fine
    std::vector<double> type3; // hierarchical vs full
};

ErrorReport three_way_errors(const BlockAverages& fine, const MacroSolution& full, const MacroSolution& hier);

} // namespace hmch
