#pragma once

// Shared fixtures and brute-force oracles for the test suites.

#include "hmch/fem.hpp"
#include "hmch/grid.hpp"
#include "hmch/medium.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace hmch::test {

/// Two-continuum medium with an independent random label per fine cell; every block keeps at
/// least one cell of each continuum. Coefficient ranges mimic a high-contrast medium.
inline MediumField random_two_continuum(const CoarseLayout& layout, std::uint64_t seed, double low = 1e-3,
                                        double high = 10.0)
{
    MediumField m = make_kappa(layout, Geometry::homogeneous, 1.0);
    m.continua = 2;
    m.geometry = Geometry::random_inclusions;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (std::size_t k = 0; k < m.kappa.size(); ++k) {
        m.continuum[k] = U(rng) < 0.4 ? 1 : 0;
        m.kappa[k] = (m.continuum[k] ? high : low) * (0.5 + U(rng));
    }
    for (int b = 0; b < layout.block_count(); ++b) {
        const IndexBox c = layout.block_cells(layout.block_index(b));
        m.continuum[m.cell(c.lo.x, c.lo.y)] = 0;
        m.kappa[m.cell(c.lo.x, c.lo.y)] = low;
        m.continuum[m.cell(c.hi.x - 1, c.hi.y - 1)] = 1;
        m.kappa[m.cell(c.hi.x - 1, c.hi.y - 1)] = high;
    }
    return m;
}

/// Medium with a prescribed cellwise coefficient and a single continuum.
inline MediumField constant_medium(const CoarseLayout& layout, double kappa)
{
    MediumField m = make_kappa(layout, Geometry::homogeneous, 1.0);
    std::fill(m.kappa.begin(), m.kappa.end(), kappa);
    return m;
}

inline Eigen::MatrixXd dense(const SparseMatrix& A) { return Eigen::MatrixXd(A); }

/// Solves [A, -Cᵀ; C, 0] [x; β] = [rhs; g] with a dense full-pivot LU in extended precision, so
/// the oracle stays accurate at contrasts where a double-precision factorization would not.
struct DenseKkt {
    Eigen::VectorXd x;
    Eigen::VectorXd beta;
};

inline DenseKkt dense_kkt(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, const Eigen::VectorXd& rhs,
                          const Eigen::VectorXd& g)
{
    using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using VectorL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    const Eigen::Index n = A.rows(), m = C.rows();
    MatrixL K = MatrixL::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = A.cast<long double>();
    K.topRightCorner(n, m) = -C.transpose().cast<long double>();
    K.bottomLeftCorner(m, n) = C.cast<long double>();
    VectorL b(n + m);
    b << rhs.cast<long double>(), g.cast<long double>();
    const VectorL z = K.fullPivLu().solve(b);
    return {z.head(n).cast<double>(), z.tail(m).cast<double>()};
}

/// ∫ over fine cell (i, j) of the coarse hat of node (I, J) on `coarse`, by 2x2 Gauss quadrature.
inline double hat_cell_integral(const NodeGrid& coarse, int I, int J, Point2 cell_lo, double hx, double hy)
{
    const double g = 0.5 / std::sqrt(3.0);
    double s = 0.0;
    for (double ox : {0.5 - g, 0.5 + g})
        for (double oy : {0.5 - g, 0.5 + g}) {
            const double x = cell_lo.x + ox * hx, y = cell_lo.y + oy * hy;
            const double tx = 1.0 - std::abs((x - coarse.origin.x) / coarse.hx - I);
            const double ty = 1.0 - std::abs((y - coarse.origin.y) / coarse.hy - J);
            if (tx > 0 && ty > 0)
                s += 0.25 * tx * ty;
        }
    return s * hx * hy;
}

/// Nodal interpolant of a function on a grid.
template <class F>
std::vector<double> interpolate(const NodeGrid& g, F&& f)
{
    std::vector<double> v(g.node_count());
    for (int j = 0; j < g.nodes_y(); ++j)
        for (int i = 0; i < g.nodes_x(); ++i)
            v[g.node(i, j)] = f(g.node_point(i, j));
    return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

} // namespace hmch::test
