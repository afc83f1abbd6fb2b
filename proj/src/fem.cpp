#include "hmch/fem.hpp"

#include "hmch/error.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/UmfPackSupport>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hmch {

std::vector<double> coarsen_kappa(const MediumField& medium, const NodeGrid& grid)
{
    const int r = grid.factor;
    std::vector<double> out(static_cast<std::size_t>(grid.cells.x) * grid.cells.y);
    const double inv = 1.0 / (static_cast<double>(r) * r);
    for (int J = 0; J < grid.cells.y; ++J)
        for (int I = 0; I < grid.cells.x; ++I) {
            double sum = 0.0;
            for (int b = 0; b < r; ++b)
                for (int a = 0; a < r; ++a)
                    sum += medium.kappa[medium.cell(grid.fine_cell_lo.x + I * r + a, grid.fine_cell_lo.y + J * r + b)];
            out[static_cast<std::size_t>(J) * grid.cells.x + I] = r == 1 ? sum : sum * inv;
        }
    return out;
}

namespace {

// Local node order (00, 10, 01, 11).
constexpr double kX[4][4] = {{1.0 / 3, -1.0 / 3, 1.0 / 6, -1.0 / 6},
                             {-1.0 / 3, 1.0 / 3, -1.0 / 6, 1.0 / 6},
                             {1.0 / 6, -1.0 / 6, 1.0 / 3, -1.0 / 3},
                             {-1.0 / 6, 1.0 / 6, -1.0 / 3, 1.0 / 3}};
constexpr double kY[4][4] = {{1.0 / 3, 1.0 / 6, -1.0 / 3, -1.0 / 6},
                             {1.0 / 6, 1.0 / 3, -1.0 / 6, -1.0 / 3},
                             {-1.0 / 3, -1.0 / 6, 1.0 / 3, 1.0 / 6},
                             {-1.0 / 6, -1.0 / 3, 1.0 / 6, 1.0 / 3}};

std::string block_name(Index2 b, int continuum)
{
    std::ostringstream s;
    s << "block (" << b.x << "," << b.y << "), continuum " << continuum + 1;
    return s.str();
}

} // namespace

SparseMatrix assemble_q1(const NodeGrid& grid, std::span<const double> kappa)
{
    if (kappa.size() != static_cast<std::size_t>(grid.cells.x) * grid.cells.y)
        throw DimensionMismatch("assemble_q1: kappa size does not match the grid");
    const double cx = grid.hy / grid.hx;
    const double cy = grid.hx / grid.hy;
    double ke[4][4];
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            ke[a][b] = cx * kX[a][b] + cy * kY[a][b];

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(16 * kappa.size());
    for (int j = 0; j < grid.cells.y; ++j)
        for (int i = 0; i < grid.cells.x; ++i) {
            const double k = kappa[static_cast<std::size_t>(j) * grid.cells.x + i];
            const int nd[4] = {grid.node(i, j), grid.node(i + 1, j), grid.node(i, j + 1), grid.node(i + 1, j + 1)};
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    trip.emplace_back(nd[a], nd[b], k * ke[a][b]);
        }
    SparseMatrix A(grid.node_count(), grid.node_count());
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

StiffnessSystem assemble_stiffness(const CoarseLayout& layout, const MediumField& medium, const Region& region,
                                   int factor)
{
    if (medium.cells != layout.fine_cells())
        throw DimensionMismatch("assemble_stiffness: medium does not match the layout");
    StiffnessSystem s;
    s.grid = region_grid(layout, region, factor);
    s.kappa = coarsen_kappa(medium, s.grid);
    s.matrix = assemble_q1(s.grid, s.kappa);
    return s;
}

int ConstraintSystem::row_of(Index2 block, int continuum) const
{
    for (int k = 0; k < size(); ++k)
        if (rows[k].block == block && rows[k].continuum == continuum)
            return k;
    throw InvalidArgument("no constraint row for " + block_name(block, continuum) + " (continuum absent)");
}

bool ConstraintSystem::has_row(Index2 block, int continuum) const
{
    return std::any_of(rows.begin(), rows.end(),
                       [&](const ConstraintRow& r) { return r.block == block && r.continuum == continuum; });
}

ConstraintSystem assemble_constraints(const CoarseLayout& layout, const MediumField& medium, const Region& region,
                                      int factor)
{
    if (medium.cells != layout.fine_cells())
        throw DimensionMismatch("assemble_constraints: medium does not match the layout");
    ConstraintSystem cs;
    cs.grid = region_grid(layout, region, factor);
    const int r = factor;
    const double area = layout.cell_area();
    const int C = medium.continua;

    std::vector<Eigen::Triplet<double>> trip;
    std::vector<int> row_index(C);
    for (int by = region.blocks.lo.y; by < region.blocks.hi.y; ++by)
        for (int bx = region.blocks.lo.x; bx < region.blocks.hi.x; ++bx) {
            const IndexBox cells = layout.block_cells({bx, by});
            std::vector<int> count(C, 0);
            for (int j = cells.lo.y; j < cells.hi.y; ++j)
                for (int i = cells.lo.x; i < cells.hi.x; ++i)
                    ++count[medium.continuum[medium.cell(i, j)]];
            for (int c = 0; c < C; ++c) {
                row_index[c] = -1;
                if (count[c] > 0) {
                    row_index[c] = cs.size();
                    cs.rows.push_back({{bx, by}, c, count[c] * area});
                }
            }
            for (int j = cells.lo.y; j < cells.hi.y; ++j)
                for (int i = cells.lo.x; i < cells.hi.x; ++i) {
                    const int row = row_index[medium.continuum[medium.cell(i, j)]];
                    const int li = i - cs.grid.fine_cell_lo.x;
                    const int lj = j - cs.grid.fine_cell_lo.y;
                    const int I = li / r, J = lj / r;
                    // A coarse bilinear basis function's mean over a fine cell is its value at the center.
                    const double tx = ((li - I * r) + 0.5) / r;
                    const double ty = ((lj - J * r) + 0.5) / r;
                    trip.emplace_back(row, cs.grid.node(I, J), area * (1.0 - tx) * (1.0 - ty));
                    trip.emplace_back(row, cs.grid.node(I + 1, J), area * tx * (1.0 - ty));
                    trip.emplace_back(row, cs.grid.node(I, J + 1), area * (1.0 - tx) * ty);
                    trip.emplace_back(row, cs.grid.node(I + 1, J + 1), area * tx * ty);
                }
        }
    cs.matrix.resize(cs.size(), cs.grid.node_count());
    cs.matrix.setFromTriplets(trip.begin(), trip.end());
    return cs;
}

// The KKT matrix is equilibrated before factorization: primal unknowns are scaled by
// 1/sqrt(A_kk) and each constraint row by the inverse of its largest scaled entry. Residuals are
// reported for the equilibrated system.
struct SaddleSolver::Impl {
    SparseMatrix kkt;
    Eigen::UmfPackLU<SparseMatrix> lu;
    Vector col_scale; // primal
    Vector row_scale; // constraints
    std::vector<std::uint8_t> fixed;
};

SaddleSolver::SaddleSolver(const SparseMatrix& stiffness, const SparseMatrix& constraints,
                           std::span<const std::uint8_t> fixed)
    : impl_(std::make_unique<Impl>()), n_(static_cast<int>(stiffness.rows())), m_(static_cast<int>(constraints.rows()))
{
    if (stiffness.rows() != stiffness.cols() || constraints.cols() != stiffness.rows())
        throw DimensionMismatch("SaddleSolver: stiffness/constraint shapes are inconsistent");
    if (!fixed.empty() && static_cast<int>(fixed.size()) != n_)
        throw DimensionMismatch("SaddleSolver: fixed-node mask has the wrong size");
    impl_->fixed.assign(fixed.begin(), fixed.end());
    auto is_fixed = [&](Eigen::Index k) { return !impl_->fixed.empty() && impl_->fixed[k] != 0; };

    Vector& s = impl_->col_scale;
    s.resize(n_);
    for (int k = 0; k < n_; ++k) {
        const double d = stiffness.coeff(k, k);
        s[k] = is_fixed(k) || !(d > 0.0) ? 1.0 : 1.0 / std::sqrt(d);
    }

    const Eigen::SparseMatrix<double, Eigen::RowMajor> rowC = constraints;
    impl_->row_scale.resize(m_);
    for (int k = 0; k < m_; ++k) {
        double mx = 0.0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rowC, k); it; ++it)
            if (!is_fixed(it.col()))
                mx = std::max(mx, std::abs(it.value() * s[it.col()]));
        if (!(mx > 0.0))
            throw SolverError("constraint matrix is rank deficient: row " + std::to_string(k) +
                              " has no free entries");
        impl_->row_scale[k] = 1.0 / mx;
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(stiffness.nonZeros() + 2 * constraints.nonZeros() + n_);
    for (int col = 0; col < stiffness.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(stiffness, col); it; ++it)
            if (!is_fixed(it.row()) && !is_fixed(it.col()))
                trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value() * s[it.row()] * s[it.col()]);
    for (int k = 0; k < n_; ++k)
        if (is_fixed(k))
            trip.emplace_back(k, k, 1.0);
    for (int k = 0; k < m_; ++k)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rowC, k); it; ++it)
            if (!is_fixed(it.col())) {
                const double v = impl_->row_scale[k] * it.value() * s[it.col()];
                trip.emplace_back(n_ + k, static_cast<int>(it.col()), v);
                trip.emplace_back(static_cast<int>(it.col()), n_ + k, v);
            }
    impl_->kkt.resize(n_ + m_, n_ + m_);
    impl_->kkt.setFromTriplets(trip.begin(), trip.end());
    impl_->kkt.makeCompressed();
    impl_->lu.compute(impl_->kkt);
    if (impl_->lu.info() != Eigen::Success)
        throw SolverError("KKT factorization failed (singular saddle-point system; check that every "
                          "constraint row is independent)");
}

SaddleSolver::~SaddleSolver() = default;
SaddleSolver::SaddleSolver(SaddleSolver&&) noexcept = default;
SaddleSolver& SaddleSolver::operator=(SaddleSolver&&) noexcept = default;

SaddleSolution SaddleSolver::solve(const Vector& rhs_primal, const Vector& g) const
{
    if (rhs_primal.size() != n_ || g.size() != m_)
        throw DimensionMismatch("SaddleSolver::solve: right-hand side sizes are wrong");
    Vector b(n_ + m_);
    b.head(n_) = impl_->col_scale.cwiseProduct(rhs_primal);
    for (int k = 0; k < n_; ++k)
        if (!impl_->fixed.empty() && impl_->fixed[k])
            b[k] = 0.0;
    b.tail(m_) = impl_->row_scale.cwiseProduct(g);

    const double bnorm = b.norm();
    SaddleSolution out;
    if (bnorm == 0.0) {
        out.primal = Vector::Zero(n_);
        out.multipliers = Vector::Zero(m_);
        return out;
    }
    Vector z = impl_->lu.solve(b);
    Vector r = b - impl_->kkt * z;
    double rel = r.norm() / bnorm;
    for (int step = 0; step < 4 && rel > 1e-15; ++step) {
        const Vector z_new = z + impl_->lu.solve(r);
        const Vector r_new = b - impl_->kkt * z_new;
        const double rel_new = r_new.norm() / bnorm;
        if (!(rel_new < rel))
            break;
        z = z_new;
        r = r_new;
        rel = rel_new;
    }
    if (!std::isfinite(rel) || rel > kSaddleTolerance) {
        std::ostringstream msg;
        msg << "KKT solve did not converge: relative residual " << rel;
        throw SolverError(msg.str());
    }
    out.relative_residual = rel;
    out.primal = impl_->col_scale.cwiseProduct(z.head(n_));
    // A x + Cᵀ λ = rhs with λ = D y, so β = -λ.
    out.multipliers = -impl_->row_scale.cwiseProduct(z.tail(m_));
    double defect = 0.0;
    for (int k = 0; k < m_; ++k)
        defect = std::max(defect, std::abs(r[n_ + k]) / impl_->row_scale[k]);
    out.constraint_defect = defect;
    return out;
}

SaddleSolution solve_saddle(const SparseMatrix& stiffness, const SparseMatrix& constraints, const Vector& rhs_primal,
                            const Vector& g)
{
    return SaddleSolver(stiffness, constraints).solve(rhs_primal, g);
}

Vector cell_load_vector(const NodeGrid& grid, std::span<const double> weight)
{
    if (weight.size() != static_cast<std::size_t>(grid.cells.x) * grid.cells.y)
        throw DimensionMismatch("cell_load_vector: weight size does not match the grid");
    const double q = 0.25 * grid.hx * grid.hy;
    Vector F = Vector::Zero(grid.node_count());
    for (int j = 0; j < grid.cells.y; ++j)
        for (int i = 0; i < grid.cells.x; ++i) {
            const double w = q * weight[static_cast<std::size_t>(j) * grid.cells.x + i];
            F[grid.node(i, j)] += w;
            F[grid.node(i + 1, j)] += w;
            F[grid.node(i, j + 1)] += w;
            F[grid.node(i + 1, j + 1)] += w;
        }
    return F;
}

namespace {

using VectorLD = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// b - A x in long double. Inside high-kappa inclusions A x cancels terms ~1e9 times |b|, so
// both the residual and the iterate itself need the wider type to get below 1e-10 relative.
Vector residual_extended(const SparseMatrix& A, const VectorLD& x, const Vector& b)
{
    VectorLD acc = b.cast<long double>();
    for (int col = 0; col < A.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(A, col); it; ++it)
            acc[it.row()] -= static_cast<long double>(it.value()) * x[col];
    return acc.cast<double>();
}

} // namespace

FineSolution solve_fine_reference(const CoarseLayout& layout, const MediumField& medium, const SourceField& source)
{
    if (medium.cells != layout.fine_cells() || source.cells != layout.fine_cells())
        throw DimensionMismatch("solve_fine_reference: medium/source do not match the layout");
    FineSolution sol;
    sol.grid = global_fine_grid(layout);
    const NodeGrid& g = sol.grid;
    const SparseMatrix A = assemble_q1(g, medium.kappa);
    const Vector F = cell_load_vector(g, source.f);

    std::vector<int> interior(g.node_count(), -1);
    int n = 0;
    for (int j = 1; j < g.nodes_y() - 1; ++j)
        for (int i = 1; i < g.nodes_x() - 1; ++i)
            interior[g.node(i, j)] = n++;
    sol.values = Vector::Zero(g.node_count());
    if (n == 0)
        return sol;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.nonZeros());
    for (int col = 0; col < A.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(A, col); it; ++it) {
            const int r = interior[it.row()], c = interior[it.col()];
            if (r >= 0 && c >= 0)
                trip.emplace_back(r, c, it.value());
        }
    SparseMatrix Ai(n, n);
    Ai.setFromTriplets(trip.begin(), trip.end());
    Vector b(n);
    for (int k = 0; k < g.node_count(); ++k)
        if (interior[k] >= 0)
            b[interior[k]] = F[k];
    const double bnorm = b.norm();
    if (bnorm == 0.0)
        return sol;

    // Jacobi scaling: the contrast puts the raw diagonal over ~9 decades.
    Vector d = Ai.diagonal().cwiseSqrt().cwiseInverse();
    const SparseMatrix As = d.asDiagonal() * Ai * d.asDiagonal();
    Eigen::CholmodSupernodalLLT<SparseMatrix> chol;
    chol.compute(As);
    if (chol.info() != Eigen::Success)
        throw SolverError("fine reference solve: Cholesky factorization failed");
    const auto solve = [&](const Vector& rhs) -> Vector { return d.cwiseProduct(chol.solve(d.cwiseProduct(rhs))); };
    VectorLD x = solve(b).cast<long double>();
    Vector r = residual_extended(Ai, x, b);
    double rel = r.norm() / bnorm;
    for (int step = 0; step < 8 && rel > 1e-14; ++step) {
        const VectorLD x_new = x + solve(r).cast<long double>();
        const Vector r_new = residual_extended(Ai, x_new, b);
        const double rel_new = r_new.norm() / bnorm;
        if (!(rel_new < rel))
            break;
        x = x_new;
        r = r_new;
        rel = rel_new;
    }
    if (!std::isfinite(rel) || rel > 1e-10) {
        std::ostringstream msg;
        msg << "fine reference solve: relative residual " << rel << " above 1e-10";
        throw SolverError(msg.str());
    }
    sol.relative_residual = rel;
    for (int k = 0; k < g.node_count(); ++k)
        if (interior[k] >= 0)
            sol.values[k] = static_cast<double>(x[interior[k]]);
    return sol;
}

} // namespace hmch
