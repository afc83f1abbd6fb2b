#pragma once

// Structured-grid Q1 inner loops with cellwise-constant coefficients.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2 variant. The active
// table is chosen once at first use: AVX2 when the CPU reports avx2+fma, unless the environment
// variable HMCH_SIMD=scalar forces the reference path.

#include <cstddef>
#include <string_view>

namespace hmch::kernels {

/// View of an nx x ny cell window. Node (i, j) lives at nodes[j * node_stride + i] for
/// 0 <= i <= nx, 0 <= j <= ny; cell (i, j) at cells[j * cell_stride + i].
struct CellWindow {
    int nx = 0;
    int ny = 0;
    double hx = 1.0;
    double hy = 1.0;
    std::ptrdiff_t node_stride = 0;
    std::ptrdiff_t cell_stride = 0;
};

using StiffnessApplyFn = void (*)(const CellWindow&, const double* kappa, const double* x, double* y);
using EnergyProductFn = double (*)(const CellWindow&, const double* kappa, const double* u, const double* v);
using WeightedIntegralFn = double (*)(const CellWindow&, const double* weight, const double* v);

struct KernelTable {
    std::string_view name;
    /// y += A x, A the Q1 stiffness matrix of the window with cellwise kappa.
    StiffnessApplyFn stiffness_apply;
    /// sum over cells of kappa * integral(grad u . grad v), exact for Q1.
    EnergyProductFn energy_product;
    /// sum over cells of weight * integral(v), exact for Q1 (cell mean = corner average).
    WeightedIntegralFn weighted_integral;
};

const KernelTable& scalar_table();
/// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable& active();

inline void stiffness_apply(const CellWindow& w, const double* kappa, const double* x, double* y)
{
    active().stiffness_apply(w, kappa, x, y);
}
inline double energy_product(const CellWindow& w, const double* kappa, const double* u, const double* v)
{
    return active().energy_product(w, kappa, u, v);
}
inline double weighted_integral(const CellWindow& w, const double* weight, const double* v)
{
    return active().weighted_integral(w, weight, v);
}

namespace scalar {
void stiffness_apply(const CellWindow&, const double* kappa, const double* x, double* y);
double energy_product(const CellWindow&, const double* kappa, const double* u, const double* v);
double weighted_integral(const CellWindow&, const double* weight, const double* v);
} // namespace scalar

namespace avx2 {
void stiffness_apply(const CellWindow&, const double* kappa, const double* x, double* y);
double energy_product(const CellWindow&, const double* kappa, const double* u, const double* v);
double weighted_integral(const CellWindow&, const double* weight, const double* v);
} // namespace avx2

} // namespace hmch::kernels
