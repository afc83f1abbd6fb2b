#include "hmch/error.hpp"
#include "hmch/fem.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hmch;
using namespace hmch::test;

TEST_CASE("Q1 element matrix of the unit square")
{
    const CoarseLayout L({1, 1}, {1, 1}, Rect{});
    const NodeGrid g = global_fine_grid(L);
    const std::vector<double> k{1.0};
    const Eigen::MatrixXd A = dense(assemble_q1(g, k));
    for (int a = 0; a < 4; ++a)
        CHECK(A(a, a) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    // Node order (0,0) (1,0) (0,1) (1,1): 0-3 and 1-2 are opposite corners.
    CHECK(A(0, 3) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
    CHECK(A(1, 2) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
    CHECK(A(0, 1) == doctest::Approx(-1.0 / 6.0).epsilon(1e-15));
    CHECK(A(0, 2) == doctest::Approx(-1.0 / 6.0).epsilon(1e-15));
    CHECK((A - A.transpose()).norm() == 0.0);
}

TEST_CASE("stiffness annihilates constants and is positive semidefinite")
{
    const CoarseLayout L = build_coarse_layout(4, 6);
    const MediumField m = random_two_continuum(L, 3, 1e-4, 50.0);
    for (int factor : {1, 2, 3}) {
        const StiffnessSystem S = assemble_stiffness(L, m, make_region(L, {{0, 1}, {3, 4}}), factor);
        const Vector ones = Vector::Ones(S.grid.node_count());
        CHECK((S.matrix * ones).cwiseAbs().maxCoeff() <= 1e-14 * S.matrix.coeffs().cwiseAbs().maxCoeff());
        const Eigen::MatrixXd A = dense(S.matrix);
        CHECK((A - A.transpose()).cwiseAbs().maxCoeff() == 0.0);
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-12 * ev.maxCoeff());
        // Exactly one zero eigenvalue: the constants.
        CHECK(ev[1] > 1e-10 * ev.maxCoeff());
    }
}

TEST_CASE("stiffness matches a dense per-element assembly")
{
    const CoarseLayout L({3, 3}, {1, 1}, Rect{0.0, 0.0, 1.5, 0.9});
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(0.1, 10.0);
    std::vector<double> k(9);
    for (double& v : k)
        v = U(rng);
    const NodeGrid g = global_fine_grid(L);
    const Eigen::MatrixXd A = dense(assemble_q1(g, k));

    // Oracle: 3x3 Gauss quadrature of the bilinear basis gradients on each element.
    const double pts[3] = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
    const double wts[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(16, 16);
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
            const int nd[4] = {g.node(i, j), g.node(i + 1, j), g.node(i, j + 1), g.node(i + 1, j + 1)};
            for (int qa = 0; qa < 3; ++qa)
                for (int qb = 0; qb < 3; ++qb) {
                    const double s = pts[qa], t = pts[qb], w = wts[qa] * wts[qb] * g.hx * g.hy;
                    const double gx[4] = {-(1 - t) / g.hx, (1 - t) / g.hx, -t / g.hx, t / g.hx};
                    const double gy[4] = {-(1 - s) / g.hy, -s / g.hy, (1 - s) / g.hy, s / g.hy};
                    for (int a = 0; a < 4; ++a)
                        for (int b = 0; b < 4; ++b)
                            ref(nd[a], nd[b]) += k[j * 3 + i] * w * (gx[a] * gx[b] + gy[a] * gy[b]);
                }
        }
    CHECK((A - ref).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("coarse kappa is the arithmetic mean")
{
    const CoarseLayout L = build_coarse_layout(2, 4);
    const MediumField m = random_two_continuum(L, 9);
    const NodeGrid g = region_grid(L, make_region(L, {{0, 0}, {2, 2}}), 2);
    const std::vector<double> k = coarsen_kappa(m, g);
    REQUIRE(k.size() == 16);
    const double mean = (m.kappa[m.cell(2, 4)] + m.kappa[m.cell(3, 4)] + m.kappa[m.cell(2, 5)] + m.kappa[m.cell(3, 5)]) / 4;
    CHECK(k[2 * 4 + 1] == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("Galerkin nesting of stiffness and constraints")
{
    const CoarseLayout L = build_coarse_layout(4, 4);
    // Coefficient constant on 2x2 fine-cell patches so the coarse form is the restricted fine form.
    MediumField m = random_two_continuum(L, 21);
    for (int j = 0; j < m.cells.y; ++j)
        for (int i = 0; i < m.cells.x; ++i)
            m.kappa[m.cell(i, j)] = 1.0 + (i / 2) * 0.7 + (j / 2) * (j / 2) * 0.3;
    const Region r = make_region(L, {{1, 0}, {4, 2}});
    const StiffnessSystem fine = assemble_stiffness(L, m, r, 1);
    const StiffnessSystem coarse = assemble_stiffness(L, m, r, 2);
    const Eigen::MatrixXd Af = dense(fine.matrix), Ac = dense(coarse.matrix);
    // Columns of P: prolongated coarse hats.
    Eigen::MatrixXd P(fine.grid.node_count(), coarse.grid.node_count());
    for (int c = 0; c < coarse.grid.node_count(); ++c) {
        std::vector<double> e(coarse.grid.node_count(), 0.0);
        e[c] = 1.0;
        const std::vector<double> p = prolongate(e, coarse.grid, fine.grid);
        for (int k = 0; k < fine.grid.node_count(); ++k)
            P(k, c) = p[k];
    }
    CHECK((P.transpose() * Af * P - Ac).cwiseAbs().maxCoeff() <= 1e-12 * Ac.cwiseAbs().maxCoeff());

    const ConstraintSystem Cf = assemble_constraints(L, m, r, 1);
    const ConstraintSystem Cc = assemble_constraints(L, m, r, 2);
    CHECK((dense(Cf.matrix) * P - dense(Cc.matrix)).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("constraint rows integrate against the masks")
{
    SUBCASE("single continuum rows give block areas")
    {
        const CoarseLayout L = build_coarse_layout(3, 5);
        const MediumField m = make_kappa(L, Geometry::homogeneous, 1.0);
        const Region r = make_region(L, {{0, 0}, {3, 2}});
        const ConstraintSystem cs = assemble_constraints(L, m, r, 1);
        CHECK(cs.size() == 6);
        const Vector v = cs.matrix * Vector::Ones(cs.grid.node_count());
        for (int k = 0; k < cs.size(); ++k) {
            CHECK(v[k] == doctest::Approx(L.block_area()).epsilon(1e-14));
            CHECK(cs.rows[k].measure == doctest::Approx(L.block_area()).epsilon(1e-14));
        }
        CHECK_THROWS_AS(cs.row_of({0, 0}, 1), InvalidArgument);
    }
    SUBCASE("two halves add up to the whole block")
    {
        const CoarseLayout L = build_coarse_layout(2, 4);
        GeometryParams p;
        p.stripe_period = 0.5;
        p.stripe_fraction = 0.5;
        p.modulate = false;
        const MediumField two = make_kappa(L, Geometry::layered, 0.1, 0, p);
        const MediumField one = make_kappa(L, Geometry::homogeneous, 1.0);
        const Region r = make_region(L, {{0, 0}, {2, 2}});
        for (int factor : {1, 2, 4}) {
            const ConstraintSystem c2 = assemble_constraints(L, two, r, factor);
            const ConstraintSystem c1 = assemble_constraints(L, one, r, factor);
            CHECK(c2.size() == 8);
            for (int b = 0; b < 4; ++b) {
                const Index2 bi = c1.rows[b].block;
                const Eigen::MatrixXd sum = dense(c2.matrix.row(c2.row_of(bi, 0))) + dense(c2.matrix.row(c2.row_of(bi, 1)));
                CHECK((sum - dense(c1.matrix.row(b))).cwiseAbs().maxCoeff() <= 1e-16);
                CHECK(c2.rows[c2.row_of(bi, 0)].measure == doctest::Approx(L.block_area() / 2));
            }
        }
    }
    SUBCASE("random masks match a Gauss quadrature oracle")
    {
        const CoarseLayout L = build_coarse_layout(2, 4);
        const MediumField m = random_two_continuum(L, 5);
        const Region r = make_region(L, {{0, 0}, {2, 2}});
        for (int factor : {1, 2}) {
            const ConstraintSystem cs = assemble_constraints(L, m, r, factor);
            Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(cs.size(), cs.grid.node_count());
            for (int j = 0; j < m.cells.y; ++j)
                for (int i = 0; i < m.cells.x; ++i) {
                    const Index2 b{i / 4, j / 4};
                    const int row = cs.row_of(b, m.continuum[m.cell(i, j)]);
                    const Point2 lo{i * L.cell_width(), j * L.cell_height()};
                    for (int J = 0; J < cs.grid.nodes_y(); ++J)
                        for (int I = 0; I < cs.grid.nodes_x(); ++I)
                            ref(row, cs.grid.node(I, J)) +=
                                hat_cell_integral(cs.grid, I, J, lo, L.cell_width(), L.cell_height());
                }
            CHECK((dense(cs.matrix) - ref).cwiseAbs().maxCoeff() <= 1e-14);
            const Vector rs = cs.matrix * Vector::Ones(cs.grid.node_count());
            for (int k = 0; k < cs.size(); ++k)
                CHECK(rs[k] == doctest::Approx(cs.rows[k].measure).epsilon(1e-14));
        }
    }
}

TEST_CASE("saddle solve: hand-sized systems")
{
    SparseMatrix A(1, 1), C(1, 1);
    A.insert(0, 0) = 2.0;
    C.insert(0, 0) = 1.0;
    Vector rhs = Vector::Zero(1), g = Vector::Constant(1, 3.0);
    const SaddleSolution s = solve_saddle(A, C, rhs, g);
    CHECK(s.primal[0] == doctest::Approx(3.0).epsilon(1e-14));
    // A x - Cᵀ β = 0
    CHECK(s.multipliers[0] == doctest::Approx(6.0).epsilon(1e-14));

    const SaddleSolution z = solve_saddle(A, C, rhs, Vector::Zero(1));
    CHECK(z.primal[0] == 0.0);
    CHECK(z.multipliers[0] == 0.0);

    SparseMatrix Cbad(1, 1);
    CHECK_THROWS_AS(SaddleSolver(A, Cbad), SolverError);
    CHECK_THROWS_AS(solve_saddle(A, C, Vector::Zero(2), g), DimensionMismatch);
}

TEST_CASE("saddle solve matches the dense KKT oracle on local problems")
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int bx = 1 + trial % 3, by = 1 + (trial / 3) % 3;
        const CoarseLayout L = build_coarse_layout(3, 4);
        const MediumField m = random_two_continuum(L, 100 + trial, 1e-4 * (1 + trial), 10.0);
        const Region r = make_region(L, {{0, 0}, {bx, by}});
        const StiffnessSystem S = assemble_stiffness(L, m, r, 1);
        const ConstraintSystem C = assemble_constraints(L, m, r, 1);
        Vector rhs(S.grid.node_count()), g(C.size());
        for (auto& v : rhs)
            v = U(rng);
        for (auto& v : g)
            v = U(rng);
        const SaddleSolution s = solve_saddle(S.matrix, C.matrix, rhs, g);
        const DenseKkt d = dense_kkt(dense(S.matrix), dense(C.matrix), rhs, g);
        CHECK((s.primal - d.x).norm() <= 1e-10 * d.x.norm());
        CHECK((s.multipliers - d.beta).norm() <= 1e-10 * d.beta.norm());
        CHECK(s.relative_residual <= kSaddleTolerance);
        CHECK((C.matrix * s.primal - g).cwiseAbs().maxCoeff() <= 1e-10 * L.block_area());
    }
}

TEST_CASE("saddle solve with fixed nodes keeps them at zero")
{
    const CoarseLayout L = build_coarse_layout(2, 4);
    const MediumField m = random_two_continuum(L, 8);
    const Region r = make_region(L, {{0, 0}, {2, 2}});
    const StiffnessSystem S = assemble_stiffness(L, m, r, 1);
    const ConstraintSystem C = assemble_constraints(L, m, r, 1);
    std::vector<std::uint8_t> fixed(S.grid.node_count(), 0);
    for (int j = 0; j < S.grid.nodes_y(); ++j)
        for (int i = 0; i < S.grid.nodes_x(); ++i)
            fixed[S.grid.node(i, j)] = S.grid.on_boundary(i, j);
    Vector g(C.size());
    for (int k = 0; k < C.size(); ++k)
        g[k] = C.rows[k].measure;
    const SaddleSolution s = SaddleSolver(S.matrix, C.matrix, fixed).solve(Vector::Zero(S.grid.node_count()), g);
    for (int k = 0; k < S.grid.node_count(); ++k)
        if (fixed[k])
            CHECK(s.primal[k] == 0.0);
    CHECK((C.matrix * s.primal - g).cwiseAbs().maxCoeff() <= 1e-10 * L.block_area());
}

TEST_CASE("constrained minimizer is energy optimal")
{
    const CoarseLayout L = build_coarse_layout(3, 4);
    const MediumField m = random_two_continuum(L, 77);
    const Region r = make_region(L, {{0, 0}, {3, 3}});
    const StiffnessSystem S = assemble_stiffness(L, m, r, 1);
    const ConstraintSystem C = assemble_constraints(L, m, r, 1);
    Vector g = Vector::Zero(C.size());
    for (int k = 0; k < C.size(); ++k)
        if (C.rows[k].continuum == 1)
            g[k] = C.rows[k].measure;
    const SaddleSolution s = solve_saddle(S.matrix, C.matrix, Vector::Zero(S.grid.node_count()), g);
    const double e0 = s.primal.dot(S.matrix * s.primal);
    const Eigen::MatrixXd Cd = dense(C.matrix);
    const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(Cd.cols(), Cd.cols()) -
                                 Cd.transpose() * (Cd * Cd.transpose()).ldlt().solve(Cd);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd w(Cd.cols());
        for (auto& v : w)
            v = U(rng);
        w = proj * w * (trial % 2 ? 1e-3 : 1.0);
        CHECK((Cd * w).cwiseAbs().maxCoeff() <= 1e-13);
        const Vector x = s.primal + w;
        CHECK(x.dot(S.matrix * x) >= e0 - 1e-9);
    }
}

TEST_CASE("fine reference: zero load and manufactured solution")
{
    {
        const CoarseLayout L = build_coarse_layout(4, 4);
        const MediumField m = constant_medium(L, 1.0);
        SourceField f{m.cells, std::vector<double>(m.kappa.size(), 0.0)};
        const FineSolution u = solve_fine_reference(L, m, f);
        CHECK(u.values.cwiseAbs().maxCoeff() == 0.0);
    }
    std::vector<double> errors;
    for (int cells : {4, 8, 16}) {
        const CoarseLayout L = build_coarse_layout(4, cells);
        const MediumField m = constant_medium(L, 1.0);
        SourceField f{m.cells, std::vector<double>(m.kappa.size())};
        constexpr double pi = std::numbers::pi;
        for (int j = 0; j < m.cells.y; ++j)
            for (int i = 0; i < m.cells.x; ++i) {
                const Point2 x = m.cell_center(i, j);
                f.f[m.cell(i, j)] = 2 * pi * pi * std::sin(pi * x.x) * std::sin(pi * x.y);
            }
        const FineSolution u = solve_fine_reference(L, m, f);
        CHECK(u.relative_residual <= 1e-10);
        // L2 error of the bilinear interpolant of the nodal solution, 3x3 Gauss per cell.
        const double q[3] = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
        const double w[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
        const NodeGrid& g = u.grid;
        double e2 = 0.0;
        for (int j = 0; j < g.cells.y; ++j)
            for (int i = 0; i < g.cells.x; ++i)
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) {
                        const double s = q[a], t = q[b];
                        const double uh = (1 - s) * (1 - t) * u.values[g.node(i, j)] + s * (1 - t) * u.values[g.node(i + 1, j)] +
                                          (1 - s) * t * u.values[g.node(i, j + 1)] + s * t * u.values[g.node(i + 1, j + 1)];
                        const double x = g.origin.x + (i + s) * g.hx, y = g.origin.y + (j + t) * g.hy;
                        const double d = uh - std::sin(pi * x) * std::sin(pi * y);
                        e2 += w[a] * w[b] * g.hx * g.hy * d * d;
                    }
        for (int j = 0; j < g.nodes_y(); ++j)
            for (int i = 0; i < g.nodes_x(); ++i)
                if (g.on_boundary(i, j))
                    CHECK(u.values[g.node(i, j)] == 0.0);
        errors.push_back(std::sqrt(e2));
    }
    const double rate1 = std::log2(errors[0] / errors[1]), rate2 = std::log2(errors[1] / errors[2]);
    CHECK(rate1 == doctest::Approx(2.0).epsilon(0.1));
    CHECK(rate2 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("fine reference on the layered medium is nonnegative")
{
    const CoarseLayout L = build_coarse_layout(12, 20);
    const MediumField m = make_kappa(L, Geometry::layered, 1.0 / 48.0);
    const SourceField f = make_source(L, m);
    const FineSolution u = solve_fine_reference(L, m, f);
    CHECK(u.relative_residual <= 1e-10);
    CHECK(std::isfinite(u.values.cwiseAbs().maxCoeff()));
    CHECK(u.values.maxCoeff() > 0.0);
    CHECK(u.values.minCoeff() >= -1e-12 * u.values.maxCoeff());
}

TEST_CASE("load vector integrates cellwise weights")
{
    const CoarseLayout L = build_coarse_layout(2, 3);
    const NodeGrid g = global_fine_grid(L);
    std::vector<double> w(36, 2.0);
    const Vector F = cell_load_vector(g, w);
    CHECK(F.sum() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(cell_load_vector(g, std::vector<double>(5)), DimensionMismatch);
}
