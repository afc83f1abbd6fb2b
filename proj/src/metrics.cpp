#include "hmch/metrics.hpp"

#include "hmch/error.hpp"
#include "hmch/kernels.hpp"

#include <cmath>

namespace hmch {

BlockAverages block_continuum_averages(const FineSolution& u, const MediumField& medium, const CoarseLayout& layout)
{
    if (medium.cells != layout.fine_cells() || u.grid.cells != layout.fine_cells() || u.grid.factor != 1)
        throw DimensionMismatch("block_continuum_averages: solution, medium and layout disagree");
    const int C = medium.continua;
    BlockAverages out;
    out.blocks = layout.block_count();
    out.continua = C;
    out.value.assign(static_cast<std::size_t>(out.blocks) * C, 0.0);
    out.present.assign(out.value.size(), 0);
    std::vector<std::vector<double>> ind(C);
    for (int c = 0; c < C; ++c)
        ind[c] = indicator(medium, c);
    const std::vector<int> counts = block_continuum_counts(layout, medium);
    const double area = layout.cell_area();
    for (int id = 0; id < out.blocks; ++id) {
        const IndexBox cells = layout.block_cells(layout.block_index(id));
        kernels::CellWindow w{cells.nx(), cells.ny(), u.grid.hx, u.grid.hy, u.grid.nodes_x(), medium.cells.x};
        const double* v = u.values.data() + u.grid.node(cells.lo.x, cells.lo.y);
        for (int c = 0; c < C; ++c) {
            const std::size_t k = static_cast<std::size_t>(id) * C + c;
            if (counts[k] == 0)
                continue;
            out.present[k] = 1;
            out.value[k] = kernels::weighted_integral(w, ind[c].data() + medium.cell(cells.lo.x, cells.lo.y), v) /
                           (counts[k] * area);
        }
    }
    return out;
}

BlockAverages macro_block_values(const MacroSolution& U, const BlockAverages& mask)
{
    if (U.continua != mask.continua || U.block_values.size() != mask.value.size())
        throw DimensionMismatch("macro_block_values: macro solution does not match the mask");
    BlockAverages out = mask;
    for (std::size_t k = 0; k < out.value.size(); ++k)
        out.value[k] = out.present[k] ? U.block_values[k] : 0.0;
    return out;
}

double relative_l2(const BlockAverages& a, const BlockAverages& ref, int i)
{
    if (a.blocks != ref.blocks || a.continua != ref.continua || i < 0 || i >= a.continua)
        throw DimensionMismatch("relative_l2: block sets differ");
    double num = 0.0, den = 0.0;
    for (int p = 0; p < a.blocks; ++p) {
        if (!a.has(p, i) || !ref.has(p, i))
            continue;
        const double d = a.at(p, i) - ref.at(p, i);
        num += d * d;
        den += ref.at(p, i) * ref.at(p, i);
    }
    if (!(den > 0.0))
        throw InvalidArgument("relative_l2: reference block values of continuum " + std::to_string(i + 1) +
                              " are all zero");
    return std::sqrt(num / den);
}

ErrorReport three_way_errors(const BlockAverages& fine, const MacroSolution& full, const MacroSolution& hier)
{
    const BlockAverages F = macro_block_values(full, fine);
    const BlockAverages Hh = macro_block_values(hier, fine);
    ErrorReport r;
    r.continua = fine.continua;
    for (int i = 0; i < fine.continua; ++i) {
        r.type1.push_back(relative_l2(F, fine, i));
        r.type2.push_back(relative_l2(Hh, fine, i));
        r.type3.push_back(relative_l2(Hh, F, i));
    }
    return r;
}

} // namespace hmch
