#include "hmch/upscale.hpp"

#include "hmch/error.hpp"
#include "hmch/kernels.hpp"
#include "io_util.hpp"

#include <Eigen/Dense>
#include <Eigen/UmfPackSupport>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace hmch {

EffectiveBlock::EffectiveBlock(int block_id, int c)
    : block(block_id), continua(c), B_(c * c, 0.0), Bm_(c * c * kDims, 0.0), Bbar_(c * c * kDims, 0.0),
      Bmn_(c * c * kDims * kDims, 0.0), b_(c, 0.0)
{
}

double EffectiveBlock::max_difference(const EffectiveBlock& o) const
{
    if (o.continua != continua)
        throw DimensionMismatch("EffectiveBlock::max_difference: continuum counts differ");
    double d = 0.0;
    auto scan = [&](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t k = 0; k < a.size(); ++k)
            d = std::max(d, std::abs(a[k] - b[k]));
    };
    scan(B_, o.B_);
    scan(Bm_, o.Bm_);
    scan(Bbar_, o.Bbar_);
    scan(Bmn_, o.Bmn_);
    scan(b_, o.b_);
    return d;
}

double EffectiveBlock::symmetry_defect() const
{
    double d = 0.0;
    for (int j = 0; j < continua; ++j)
        for (int i = 0; i < continua; ++i) {
            d = std::max(d, std::abs(B(j, i) - B(i, j)));
            for (int m = 0; m < kDims; ++m) {
                d = std::max(d, std::abs(Bm(j, i, m) - Bbar(i, j, m)));
                for (int n = 0; n < kDims; ++n)
                    d = std::max(d, std::abs(Bmn(j, i, m, n) - Bmn(i, j, n, m)));
            }
        }
    return d;
}

EffectiveBlock effective_coeffs(const CoarseLayout& layout, const MediumField& medium, const SourceField& source,
                                const LocalCellSolutions& sol)
{
    if (sol.grid.factor != 1)
        throw InvalidArgument("effective_coeffs: fields must be stored at fine resolution");
    if (sol.function_count() != sol.continua * kFunctionsPerContinuum)
        throw InvalidArgument("effective_coeffs: missing local functions for block " + std::to_string(sol.block));
    if (source.cells != medium.cells)
        throw DimensionMismatch("effective_coeffs: source does not match the medium");
    const Index2 block = layout.block_index(sol.block);
    if (!sol.region.blocks.contains(block))
        throw InvalidArgument("effective_coeffs: stored region does not contain its block");

    const IndexBox cells = layout.block_cells(block);
    const NodeGrid& g = sol.grid;
    kernels::CellWindow w;
    w.nx = cells.nx();
    w.ny = cells.ny();
    w.hx = g.hx;
    w.hy = g.hy;
    w.node_stride = g.nodes_x();
    w.cell_stride = medium.cells.x;
    const std::ptrdiff_t node0 = g.node(cells.lo.x - g.fine_cell_lo.x, cells.lo.y - g.fine_cell_lo.y);
    const double* kappa = medium.kappa.data() + medium.cell(cells.lo.x, cells.lo.y);
    const double* f = source.f.data() + medium.cell(cells.lo.x, cells.lo.y);
    auto field = [&](int i, int k) { return sol.phi[function_index(i, k)].data() + node0; };
    auto E = [&](const double* u, const double* v) { return kernels::energy_product(w, kappa, u, v); };

    const int C = sol.continua;
    EffectiveBlock eb(sol.block, C);
    for (int j = 0; j < C; ++j) {
        eb.b(j) = kernels::weighted_integral(w, f, field(j, 0));
        for (int i = 0; i < C; ++i) {
            eb.B(j, i) = E(field(i, 0), field(j, 0));
            for (int m = 0; m < kDims; ++m) {
                eb.Bm(j, i, m) = E(field(i, 1 + m), field(j, 0));
                eb.Bbar(j, i, m) = E(field(i, 0), field(j, 1 + m));
                for (int n = 0; n < kDims; ++n)
                    eb.Bmn(j, i, m, n) = E(field(i, 1 + m), field(j, 1 + n));
            }
        }
    }
    return eb;
}

void write_coeffs_csv(std::ostream& os, const std::vector<EffectiveBlock>& blocks)
{
    using detail::format_double;
    os << "block,tensor,j,i,m,n,value\n";
    for (const EffectiveBlock& e : blocks) {
        const int C = e.continua;
        for (int j = 0; j < C; ++j)
            for (int i = 0; i < C; ++i)
                os << e.block << ",B," << j + 1 << ',' << i + 1 << ",,," << format_double(e.B(j, i)) << '\n';
        for (int j = 0; j < C; ++j)
            for (int i = 0; i < C; ++i)
                for (int m = 0; m < kDims; ++m)
                    os << e.block << ",Bm," << j + 1 << ',' << i + 1 << ',' << m + 1 << ",,"
                       << format_double(e.Bm(j, i, m)) << '\n';
        for (int j = 0; j < C; ++j)
            for (int i = 0; i < C; ++i)
                for (int n = 0; n < kDims; ++n)
                    os << e.block << ",Bbar," << j + 1 << ',' << i + 1 << ",," << n + 1 << ','
                       << format_double(e.Bbar(j, i, n)) << '\n';
        for (int j = 0; j < C; ++j)
            for (int i = 0; i < C; ++i)
                for (int m = 0; m < kDims; ++m)
                    for (int n = 0; n < kDims; ++n)
                        os << e.block << ",Bmn," << j + 1 << ',' << i + 1 << ',' << m + 1 << ',' << n + 1 << ','
                           << format_double(e.Bmn(j, i, m, n)) << '\n';
        for (int j = 0; j < C; ++j)
            os << e.block << ",b," << j + 1 << ",,,," << format_double(e.b(j)) << '\n';
    }
}

MacroSystem assemble_macro(const CoarseLayout& layout, const std::vector<EffectiveBlock>& blocks)
{
    if (static_cast<int>(blocks.size()) != layout.block_count())
        throw DimensionMismatch("assemble_macro: expected one EffectiveBlock per coarse block");
    const int C = blocks.empty() ? 1 : blocks.front().continua;
    MacroSystem sys;
    sys.nodes = {layout.blocks().x + 1, layout.blocks().y + 1};
    sys.continua = C;
    sys.dof.assign(static_cast<std::size_t>(sys.nodes.x) * sys.nodes.y * C, -1);
    int n = 0;
    for (int y = 1; y < sys.nodes.y - 1; ++y)
        for (int x = 1; x < sys.nodes.x - 1; ++x)
            for (int i = 0; i < C; ++i)
                sys.dof[static_cast<std::size_t>(y * sys.nodes.x + x) * C + i] = n++;

    // Center value and gradient of the bilinear interpolant; corners ordered (00, 10, 01, 11).
    const double hx = layout.block_width(), hy = layout.block_height();
    const double w0[4] = {0.25, 0.25, 0.25, 0.25};
    const double wd[kDims][4] = {{-0.5 / hx, 0.5 / hx, -0.5 / hx, 0.5 / hx},
                                 {-0.5 / hy, -0.5 / hy, 0.5 / hy, 0.5 / hy}};

    std::vector<Eigen::Triplet<double>> trip;
    sys.rhs = Vector::Zero(n);
    for (int id = 0; id < layout.block_count(); ++id) {
        const EffectiveBlock& e = blocks[id];
        if (e.block != id || e.continua != C)
            throw DimensionMismatch("assemble_macro: blocks must be ordered by id with equal continuum counts");
        const Index2 b = layout.block_index(id);
        const int corner[4] = {b.y * sys.nodes.x + b.x, b.y * sys.nodes.x + b.x + 1, (b.y + 1) * sys.nodes.x + b.x,
                               (b.y + 1) * sys.nodes.x + b.x + 1};
        for (int a = 0; a < 4; ++a)
            for (int j = 0; j < C; ++j) {
                const int row = sys.dof[static_cast<std::size_t>(corner[a]) * C + j];
                if (row < 0)
                    continue;
                sys.rhs[row] += w0[a] * e.b(j);
                for (int c = 0; c < 4; ++c)
                    for (int i = 0; i < C; ++i) {
                        const int col = sys.dof[static_cast<std::size_t>(corner[c]) * C + i];
                        if (col < 0)
                            continue;
                        double v = e.B(j, i) * w0[a] * w0[c];
                        for (int m = 0; m < kDims; ++m) {
                            v += e.Bm(j, i, m) * w0[a] * wd[m][c];
                            v += e.Bbar(j, i, m) * wd[m][a] * w0[c];
                            for (int q = 0; q < kDims; ++q)
                                v += e.Bmn(j, i, m, q) * wd[q][a] * wd[m][c];
                        }
                        trip.emplace_back(row, col, v);
                    }
            }
    }
    sys.matrix.resize(n, n);
    sys.matrix.setFromTriplets(trip.begin(), trip.end());
    return sys;
}

namespace {

std::string weakest_block(const std::vector<EffectiveBlock>& blocks)
{
    if (blocks.empty())
        return "";
    int worst = -1;
    double lo = std::numeric_limits<double>::infinity();
    for (const EffectiveBlock& e : blocks) {
        Eigen::MatrixXd M(e.continua, e.continua);
        for (int j = 0; j < e.continua; ++j)
            for (int i = 0; i < e.continua; ++i)
                M(j, i) = 0.5 * (e.B(j, i) + e.B(i, j));
        const double ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().minCoeff();
        if (ev < lo) {
            lo = ev;
            worst = e.block;
        }
    }
    return "; smallest B eigenvalue " + detail::format_double(lo) + " at block " + std::to_string(worst);
}

} // namespace

MacroSolution solve_macro(const CoarseLayout& layout, const MacroSystem& sys, const std::vector<EffectiveBlock>& blocks)
{
    MacroSolution sol;
    sol.nodes = sys.nodes;
    sol.continua = sys.continua;
    sol.values.assign(static_cast<std::size_t>(sys.nodes.x) * sys.nodes.y * sys.continua, 0.0);
    const Eigen::Index n = sys.matrix.rows();
    Vector x = Vector::Zero(n);
    const double bnorm = sys.rhs.norm();
    if (n > 0 && bnorm > 0.0) {
        Eigen::UmfPackLU<SparseMatrix> lu;
        lu.compute(sys.matrix);
        if (lu.info() != Eigen::Success)
            throw SolverError("macro system is singular" + weakest_block(blocks));
        x = lu.solve(sys.rhs);
        Vector r = sys.rhs - sys.matrix * x;
        double rel = r.norm() / bnorm;
        for (int step = 0; step < 3 && rel > 1e-15; ++step) {
            const Vector xn = x + lu.solve(r);
            const Vector rn = sys.rhs - sys.matrix * xn;
            const double reln = rn.norm() / bnorm;
            if (!(reln < rel))
                break;
            x = xn;
            r = rn;
            rel = reln;
        }
        if (!std::isfinite(rel) || rel > 1e-12)
            throw SolverError("macro solve residual " + detail::format_double(rel) + " above 1e-12" +
                              weakest_block(blocks));
        sol.relative_residual = rel;
    }
    for (std::size_t k = 0; k < sys.dof.size(); ++k)
        if (sys.dof[k] >= 0)
            sol.values[k] = x[sys.dof[k]];

    const int C = sys.continua;
    sol.block_values.assign(static_cast<std::size_t>(layout.block_count()) * C, 0.0);
    for (int id = 0; id < layout.block_count(); ++id) {
        const Index2 b = layout.block_index(id);
        const int c00 = b.y * sys.nodes.x + b.x;
        for (int i = 0; i < C; ++i)
            sol.block_values[static_cast<std::size_t>(id) * C + i] =
                0.25 * (sol.at(c00, i) + sol.at(c00 + 1, i) + sol.at(c00 + sys.nodes.x, i) +
                        sol.at(c00 + sys.nodes.x + 1, i));
    }
    return sol;
}

} // namespace hmch
