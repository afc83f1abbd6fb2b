#include "hmch/kernels.hpp"

#include <vector>

namespace hmch::kernels::scalar {

// Per cell with corner values u00, u10, u01, u11:
//   x-differences d0 = u10 - u00 (bottom), d1 = u11 - u01 (top)
//   y-differences g0 = u01 - u00 (left),   g1 = u11 - u10 (right)
//   int grad u . grad v = (hy/hx) (d0 e0 + d1 e1)/3 + (hy/hx) (d0 e1 + d1 e0)/6 + (same in y, hx/hy)

void stiffness_apply(const CellWindow& w, const double* kappa, const double* x, double* y)
{
    const double cx = w.hy / w.hx;
    const double cy = w.hx / w.hy;
    for (int j = 0; j < w.ny; ++j) {
        const double* k = kappa + j * w.cell_stride;
        const double* xb = x + j * w.node_stride;
        const double* xt = xb + w.node_stride;
        double* yb = y + j * w.node_stride;
        double* yt = yb + w.node_stride;
        for (int i = 0; i < w.nx; ++i) {
            const double d0 = xb[i + 1] - xb[i];
            const double d1 = xt[i + 1] - xt[i];
            const double g0 = xt[i] - xb[i];
            const double g1 = xt[i + 1] - xb[i + 1];
            const double p0 = k[i] * cx * (d0 / 3.0 + d1 / 6.0);
            const double p1 = k[i] * cx * (d0 / 6.0 + d1 / 3.0);
            const double q0 = k[i] * cy * (g0 / 3.0 + g1 / 6.0);
            const double q1 = k[i] * cy * (g0 / 6.0 + g1 / 3.0);
            yb[i] += -p0 - q0;
            yb[i + 1] += p0 - q1;
            yt[i] += -p1 + q0;
            yt[i + 1] += p1 + q1;
        }
    }
}

double energy_product(const CellWindow& w, const double* kappa, const double* u, const double* v)
{
    const double cx = w.hy / w.hx;
    const double cy = w.hx / w.hy;
    double total = 0.0;
    for (int j = 0; j < w.ny; ++j) {
        const double* k = kappa + j * w.cell_stride;
        const double* ub = u + j * w.node_stride;
        const double* ut = ub + w.node_stride;
        const double* vb = v + j * w.node_stride;
        const double* vt = vb + w.node_stride;
        double row = 0.0;
        for (int i = 0; i < w.nx; ++i) {
            const double d0 = ub[i + 1] - ub[i], d1 = ut[i + 1] - ut[i];
            const double e0 = vb[i + 1] - vb[i], e1 = vt[i + 1] - vt[i];
            const double g0 = ut[i] - ub[i], g1 = ut[i + 1] - ub[i + 1];
            const double f0 = vt[i] - vb[i], f1 = vt[i + 1] - vb[i + 1];
            const double ex = (d0 * e0 + d1 * e1) / 3.0 + (d0 * e1 + d1 * e0) / 6.0;
            const double ey = (g0 * f0 + g1 * f1) / 3.0 + (g0 * f1 + g1 * f0) / 6.0;
            row += k[i] * (cx * ex + cy * ey);
        }
        total += row;
    }
    return total;
}

double weighted_integral(const CellWindow& w, const double* weight, const double* v)
{
    const double quarter_area = 0.25 * w.hx * w.hy;
    double total = 0.0;
    for (int j = 0; j < w.ny; ++j) {
        const double* c = weight + j * w.cell_stride;
        const double* vb = v + j * w.node_stride;
        const double* vt = vb + w.node_stride;
        double row = 0.0;
        for (int i = 0; i < w.nx; ++i)
            row += c[i] * ((vb[i] + vb[i + 1]) + (vt[i] + vt[i + 1]));
        total += row;
    }
    return quarter_area * total;
}

} // namespace hmch::kernels::scalar
