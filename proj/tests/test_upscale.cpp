#include "hmch/error.hpp"
#include "hmch/upscale.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace hmch;
using namespace hmch::test;

namespace {

double scale_of(const EffectiveBlock& e)
{
    double s = 0.0;
    for (const auto* v : {&e.B_, &e.Bm_, &e.Bbar_, &e.Bmn_})
        for (double x : *v)
            s = std::max(s, std::abs(x));
    return s;
}

// Macro blocks of the constant-coefficient Laplacian: only Bmn = |K| δ_mn and b = ∫ f.
std::vector<EffectiveBlock> laplace_blocks(const CoarseLayout& L, auto&& f)
{
    std::vector<EffectiveBlock> out;
    const double g = 0.5 / std::sqrt(3.0);
    for (int id = 0; id < L.block_count(); ++id) {
        EffectiveBlock e(id, 1);
        e.Bmn(0, 0, 0, 0) = L.block_area();
        e.Bmn(0, 0, 1, 1) = L.block_area();
        const Point2 c = L.block_center(L.block_index(id));
        double s = 0.0;
        for (double ox : {-g, g})
            for (double oy : {-g, g})
                s += 0.25 * f(Point2{c.x + ox * L.block_width(), c.y + oy * L.block_height()});
        e.b(0) = s * L.block_area();
        out.push_back(e);
    }
    return out;
}

} // namespace

TEST_CASE("effective coefficient symmetries and positivity")
{
    const CoarseLayout L = build_coarse_layout(6, 6);
    const MediumField m = random_two_continuum(L, 41, 1e-4, 20.0);
    const SourceField f = make_source(L, m);
    for (Index2 b : {Index2{2, 2}, Index2{0, 3}, Index2{5, 5}}) {
        const LocalCellSolutions s = solve_full_cell(L, m, b, oversample_region(L, b, 2));
        const EffectiveBlock e = effective_coeffs(L, m, f, s);
        CHECK(e.block == L.block_id(b));
        CHECK(e.symmetry_defect() <= 1e-12 * scale_of(e));
        const Eigen::Matrix2d B{{e.B(0, 0), e.B(0, 1)}, {e.B(1, 0), e.B(1, 1)}};
        const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(B).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-12 * ev.cwiseAbs().maxCoeff());
        for (double v : e.Bmn_)
            CHECK(std::isfinite(v));
        // The energy form is the block window integral of the stored fields.
        const IndexBox k = L.block_cells(b);
        double ref = 0.0;
        const NodeGrid& g = s.grid;
        const double ke[4][4] = {{2.0 / 3, -1.0 / 6, -1.0 / 6, -1.0 / 3},
                                 {-1.0 / 6, 2.0 / 3, -1.0 / 3, -1.0 / 6},
                                 {-1.0 / 6, -1.0 / 3, 2.0 / 3, -1.0 / 6},
                                 {-1.0 / 3, -1.0 / 6, -1.0 / 6, 2.0 / 3}};
        for (int j = k.lo.y; j < k.hi.y; ++j)
            for (int i = k.lo.x; i < k.hi.x; ++i) {
                const int li = i - g.fine_cell_lo.x, lj = j - g.fine_cell_lo.y;
                const int nd[4] = {g.node(li, lj), g.node(li + 1, lj), g.node(li, lj + 1), g.node(li + 1, lj + 1)};
                for (int a = 0; a < 4; ++a)
                    for (int c = 0; c < 4; ++c)
                        ref += m.kappa[m.cell(i, j)] * ke[a][c] * s.phi[function_index(1, 1)][nd[a]] *
                               s.phi[function_index(0, 0)][nd[c]];
            }
        CHECK(e.Bm(0, 1, 0) == doctest::Approx(ref).epsilon(1e-11).scale(scale_of(e)));
    }
}

TEST_CASE("homogeneous medium: no exchange term and the source moment")
{
    const CoarseLayout L = build_coarse_layout(4, 8);
    const MediumField m = make_kappa(L, Geometry::homogeneous, 1.0);
    const SourceField f = make_source(L, m);
    const LocalCellSolutions s = solve_full_cell(L, m, {1, 2}, oversample_region(L, {1, 2}, 1));
    const EffectiveBlock e = effective_coeffs(L, m, f, s);
    CHECK(std::abs(e.B(0, 0)) <= 1e-12);
    double integral = 0.0;
    const IndexBox k = L.block_cells({1, 2});
    for (int j = k.lo.y; j < k.hi.y; ++j)
        for (int i = k.lo.x; i < k.hi.x; ++i)
            integral += f.f[m.cell(i, j)] * L.cell_area();
    CHECK(e.b(0) == doctest::Approx(integral).epsilon(1e-12));
}

TEST_CASE("constant coefficient: Bmn is close to the coefficient times the identity")
{
    const double c = 3.5;
    const CoarseLayout L = build_coarse_layout(6, 6);
    const MediumField m = constant_medium(L, c);
    const SourceField f = make_source(L, m);
    const Region r = oversample_region(L, {3, 2}, 2);
    const LocalCellSolutions s = solve_full_cell(L, m, {3, 2}, r);
    const EffectiveBlock e = effective_coeffs(L, m, f, s);
    const double K = L.block_area();
    CHECK(e.Bmn(0, 0, 0, 0) == doctest::Approx(c * K).epsilon(0.1));
    CHECK(e.Bmn(0, 0, 1, 1) == doctest::Approx(c * K).epsilon(0.1));
    CHECK(std::abs(e.Bmn(0, 0, 0, 1)) <= 0.1 * c * K);
    const Eigen::Matrix2d M{{e.Bmn(0, 0, 0, 0), e.Bmn(0, 0, 0, 1)}, {e.Bmn(0, 0, 1, 0), e.Bmn(0, 0, 1, 1)}};
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(M).eigenvalues().minCoeff() > 0.0);

    // Same entry from an independent dense solve of the identical discrete problem.
    const StiffnessSystem A = assemble_stiffness(L, m, r);
    const ConstraintSystem C = assemble_constraints(L, m, r);
    const std::vector<double> g = constraint_targets(L, m, C, s.centering, 0, 1);
    const DenseKkt d = dense_kkt(dense(A.matrix), dense(C.matrix), Eigen::VectorXd::Zero(A.grid.node_count()),
                                 Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()));
    LocalCellSolutions alt = s;
    alt.phi[1].assign(d.x.data(), d.x.data() + d.x.size());
    CHECK(effective_coeffs(L, m, f, alt).Bmn(0, 0, 0, 0) == doctest::Approx(e.Bmn(0, 0, 0, 0)).epsilon(1e-9));
}

TEST_CASE("macro Laplacian converges at second order")
{
    constexpr double pi = std::numbers::pi;
    auto u = [](Point2 p) { return std::sin(pi * p.x) * std::sin(pi * p.y); };
    auto f = [&](Point2 p) { return 2 * pi * pi * u(p); };
    std::vector<double> err;
    for (int n : {4, 8, 16, 32}) {
        const CoarseLayout L = build_coarse_layout(n, 1);
        const std::vector<EffectiveBlock> blocks = laplace_blocks(L, f);
        const MacroSystem sys = assemble_macro(L, blocks);
        CHECK((dense(sys.matrix) - dense(sys.matrix).transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        const MacroSolution U = solve_macro(L, sys, blocks);
        CHECK(U.relative_residual <= 1e-12);
        // L2 error of the bilinear macro interpolant, 3x3 Gauss per block.
        const double q[3] = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
        const double w[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
        const double H = 1.0 / n;
        double e2 = 0, r2 = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) {
                        const double s = q[a], t = q[b];
                        const int c = j * (n + 1) + i;
                        const double uh = (1 - s) * (1 - t) * U.at(c, 0) + s * (1 - t) * U.at(c + 1, 0) +
                                          (1 - s) * t * U.at(c + n + 1, 0) + s * t * U.at(c + n + 2, 0);
                        const double ex = u({(i + s) * H, (j + t) * H});
                        e2 += w[a] * w[b] * (uh - ex) * (uh - ex);
                        r2 += w[a] * w[b] * ex * ex;
                    }
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i)
                if (i == 0 || j == 0 || i == n || j == n)
                    CHECK(U.at(j * (n + 1) + i, 0) == 0.0);
        err.push_back(std::sqrt(e2 / r2));
        // Block values are corner means.
        CHECK(U.block_value(0, 0) == doctest::Approx(0.25 * U.at(n + 2, 0)).epsilon(1e-15));
    }
    for (std::size_t k = 1; k < err.size(); ++k) {
        const double rate = std::log2(err[k - 1] / err[k]);
        CHECK(rate >= 1.8);
        CHECK(rate <= 2.2);
    }
}

TEST_CASE("zero load gives the zero macro solution")
{
    const CoarseLayout L = build_coarse_layout(5, 1);
    const std::vector<EffectiveBlock> blocks = laplace_blocks(L, [](Point2) { return 0.0; });
    const MacroSolution U = solve_macro(L, assemble_macro(L, blocks), blocks);
    for (double v : U.values)
        CHECK(v == 0.0);
}

TEST_CASE("decoupled continua assemble without cross terms")
{
    const CoarseLayout L = build_coarse_layout(4, 1);
    std::vector<EffectiveBlock> blocks;
    for (int id = 0; id < L.block_count(); ++id) {
        EffectiveBlock e(id, 2);
        for (int i = 0; i < 2; ++i)
            for (int m = 0; m < 2; ++m)
                e.Bmn(i, i, m, m) = (1.0 + i) * L.block_area();
        e.Bmn(1, 1, 0, 1) = e.Bmn(1, 1, 1, 0) = 0.2 * L.block_area();
        e.b(0) = L.block_area();
        e.b(1) = 2 * L.block_area();
        blocks.push_back(e);
    }
    const MacroSystem sys = assemble_macro(L, blocks);
    const Eigen::MatrixXd A = dense(sys.matrix);
    for (int n1 = 0; n1 < 25; ++n1)
        for (int n2 = 0; n2 < 25; ++n2) {
            const int r = sys.dof[n1 * 2 + 0], c = sys.dof[n2 * 2 + 1];
            if (r >= 0 && c >= 0) {
                CHECK(A(r, c) == 0.0);
                CHECK(A(c, r) == 0.0);
            }
        }
    // Continuum 2 has twice the conductivity and twice the load of continuum 1 on the diagonal.
    const MacroSolution U = solve_macro(L, sys, blocks);
    CHECK(U.at(12, 0) > 0.0);
}

TEST_CASE("identity system returns its load")
{
    const CoarseLayout L = build_coarse_layout(3, 1);
    MacroSystem sys;
    sys.nodes = {4, 4};
    sys.continua = 1;
    sys.dof.assign(16, -1);
    sys.dof[5] = 0;
    sys.dof[6] = 1;
    sys.dof[9] = 2;
    sys.dof[10] = 3;
    sys.matrix.resize(4, 4);
    sys.matrix.setIdentity();
    sys.rhs = Vector(4);
    sys.rhs << 1.0, -2.0, 3.0, 0.5;
    const MacroSolution U = solve_macro(L, sys);
    CHECK(U.at(5, 0) == 1.0);
    CHECK(U.at(6, 0) == -2.0);
    CHECK(U.at(9, 0) == 3.0);
    CHECK(U.at(10, 0) == 0.5);
    CHECK(U.block_value(4, 0) == doctest::Approx(0.625));
}

TEST_CASE("singular macro system names a weak block")
{
    const CoarseLayout L = build_coarse_layout(3, 1);
    std::vector<EffectiveBlock> blocks;
    for (int id = 0; id < L.block_count(); ++id) {
        EffectiveBlock e(id, 1);
        e.b(0) = 1.0;
        blocks.push_back(e);
    }
    try {
        solve_macro(L, assemble_macro(L, blocks), blocks);
        FAIL("expected a SolverError");
    } catch (const SolverError& e) {
        CHECK(std::string(e.what()).find("block") != std::string::npos);
    }
    std::vector<EffectiveBlock> short_list(blocks.begin(), blocks.begin() + 3);
    CHECK_THROWS_AS(assemble_macro(L, short_list), DimensionMismatch);
}

TEST_CASE("coefficient dump layout and reproducibility")
{
    const CoarseLayout L = build_coarse_layout(4, 4);
    const MediumField m = random_two_continuum(L, 51);
    const SourceField f = make_source(L, m);
    std::vector<EffectiveBlock> blocks;
    for (int id = 0; id < L.block_count(); ++id) {
        const Index2 b = L.block_index(id);
        blocks.push_back(effective_coeffs(L, m, f, solve_full_cell(L, m, b, oversample_region(L, b, 1))));
    }
    std::ostringstream a, b;
    write_coeffs_csv(a, blocks);
    write_coeffs_csv(b, blocks);
    CHECK(a.str() == b.str());
    std::istringstream is(a.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "block,tensor,j,i,m,n,value");
    int rows = 0;
    while (std::getline(is, line))
        ++rows;
    CHECK(rows == 16 * (4 + 8 + 8 + 16 + 2));

    const MacroSystem s1 = assemble_macro(L, blocks), s2 = assemble_macro(L, blocks);
    CHECK((dense(s1.matrix) - dense(s2.matrix)).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXd A = dense(s1.matrix);
    CHECK((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * A.cwiseAbs().maxCoeff());
    const MacroSolution U = solve_macro(L, s1, blocks);
    CHECK(U.relative_residual <= 1e-12);
}
