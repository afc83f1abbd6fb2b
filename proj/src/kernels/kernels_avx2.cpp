#include "hmch/kernels.hpp"

#include <immintrin.h>

#include <vector>

namespace hmch::kernels::avx2 {

namespace {

double hsum(__m256d v)
{
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

} // namespace

void stiffness_apply(const CellWindow& w, const double* kappa, const double* x, double* y)
{
    const double cx = w.hy / w.hx;
    const double cy = w.hx / w.hy;
    thread_local std::vector<double> scratch;
    scratch.resize(4 * static_cast<std::size_t>(w.nx) + 4);
    double* c00 = scratch.data();
    double* c10 = c00 + w.nx;
    double* c01 = c10 + w.nx;
    double* c11 = c01 + w.nx;

    const __m256d vcx3 = _mm256_set1_pd(cx / 3.0), vcx6 = _mm256_set1_pd(cx / 6.0);
    const __m256d vcy3 = _mm256_set1_pd(cy / 3.0), vcy6 = _mm256_set1_pd(cy / 6.0);

    for (int j = 0; j < w.ny; ++j) {
        const double* k = kappa + j * w.cell_stride;
        const double* xb = x + j * w.node_stride;
        const double* xt = xb + w.node_stride;
        int i = 0;
        for (; i + 4 <= w.nx; i += 4) {
            const __m256d kk = _mm256_loadu_pd(k + i);
            const __m256d b0 = _mm256_loadu_pd(xb + i), b1 = _mm256_loadu_pd(xb + i + 1);
            const __m256d t0 = _mm256_loadu_pd(xt + i), t1 = _mm256_loadu_pd(xt + i + 1);
            const __m256d d0 = _mm256_sub_pd(b1, b0), d1 = _mm256_sub_pd(t1, t0);
            const __m256d g0 = _mm256_sub_pd(t0, b0), g1 = _mm256_sub_pd(t1, b1);
            const __m256d p0 = _mm256_mul_pd(kk, _mm256_add_pd(_mm256_mul_pd(vcx3, d0), _mm256_mul_pd(vcx6, d1)));
            const __m256d p1 = _mm256_mul_pd(kk, _mm256_add_pd(_mm256_mul_pd(vcx6, d0), _mm256_mul_pd(vcx3, d1)));
            const __m256d q0 = _mm256_mul_pd(kk, _mm256_add_pd(_mm256_mul_pd(vcy3, g0), _mm256_mul_pd(vcy6, g1)));
            const __m256d q1 = _mm256_mul_pd(kk, _mm256_add_pd(_mm256_mul_pd(vcy6, g0), _mm256_mul_pd(vcy3, g1)));
            const __m256d zero = _mm256_setzero_pd();
            _mm256_storeu_pd(c00 + i, _mm256_sub_pd(_mm256_sub_pd(zero, p0), q0));
            _mm256_storeu_pd(c10 + i, _mm256_sub_pd(p0, q1));
            _mm256_storeu_pd(c01 + i, _mm256_add_pd(_mm256_sub_pd(zero, p1), q0));
            _mm256_storeu_pd(c11 + i, _mm256_add_pd(p1, q1));
        }
        for (; i < w.nx; ++i) {
            const double d0 = xb[i + 1] - xb[i], d1 = xt[i + 1] - xt[i];
            const double g0 = xt[i] - xb[i], g1 = xt[i + 1] - xb[i + 1];
            const double p0 = k[i] * (cx / 3.0 * d0 + cx / 6.0 * d1);
            const double p1 = k[i] * (cx / 6.0 * d0 + cx / 3.0 * d1);
            const double q0 = k[i] * (cy / 3.0 * g0 + cy / 6.0 * g1);
            const double q1 = k[i] * (cy / 6.0 * g0 + cy / 3.0 * g1);
            c00[i] = -p0 - q0;
            c10[i] = p0 - q1;
            c01[i] = -p1 + q0;
            c11[i] = p1 + q1;
        }

        double* yb = y + j * w.node_stride;
        double* yt = yb + w.node_stride;
        yb[0] += c00[0];
        yt[0] += c01[0];
        int n = 1;
        for (; n + 4 <= w.nx; n += 4) {
            _mm256_storeu_pd(yb + n, _mm256_add_pd(_mm256_loadu_pd(yb + n),
                                                   _mm256_add_pd(_mm256_loadu_pd(c00 + n), _mm256_loadu_pd(c10 + n - 1))));
            _mm256_storeu_pd(yt + n, _mm256_add_pd(_mm256_loadu_pd(yt + n),
                                                   _mm256_add_pd(_mm256_loadu_pd(c01 + n), _mm256_loadu_pd(c11 + n - 1))));
        }
        for (; n < w.nx; ++n) {
            yb[n] += c00[n] + c10[n - 1];
            yt[n] += c01[n] + c11[n - 1];
        }
        yb[w.nx] += c10[w.nx - 1];
        yt[w.nx] += c11[w.nx - 1];
    }
}

double energy_product(const CellWindow& w, const double* kappa, const double* u, const double* v)
{
    const double cx = w.hy / w.hx;
    const double cy = w.hx / w.hy;
    const __m256d third = _mm256_set1_pd(1.0 / 3.0), sixth = _mm256_set1_pd(1.0 / 6.0);
    const __m256d vcx = _mm256_set1_pd(cx), vcy = _mm256_set1_pd(cy);
    double total = 0.0;
    for (int j = 0; j < w.ny; ++j) {
        const double* k = kappa + j * w.cell_stride;
        const double* ub = u + j * w.node_stride;
        const double* ut = ub + w.node_stride;
        const double* vb = v + j * w.node_stride;
        const double* vt = vb + w.node_stride;
        __m256d acc = _mm256_setzero_pd();
        int i = 0;
        for (; i + 4 <= w.nx; i += 4) {
            const __m256d ub0 = _mm256_loadu_pd(ub + i), ub1 = _mm256_loadu_pd(ub + i + 1);
            const __m256d ut0 = _mm256_loadu_pd(ut + i), ut1 = _mm256_loadu_pd(ut + i + 1);
            const __m256d vb0 = _mm256_loadu_pd(vb + i), vb1 = _mm256_loadu_pd(vb + i + 1);
            const __m256d vt0 = _mm256_loadu_pd(vt + i), vt1 = _mm256_loadu_pd(vt + i + 1);
            const __m256d d0 = _mm256_sub_pd(ub1, ub0), d1 = _mm256_sub_pd(ut1, ut0);
            const __m256d e0 = _mm256_sub_pd(vb1, vb0), e1 = _mm256_sub_pd(vt1, vt0);
            const __m256d g0 = _mm256_sub_pd(ut0, ub0), g1 = _mm256_sub_pd(ut1, ub1);
            const __m256d f0 = _mm256_sub_pd(vt0, vb0), f1 = _mm256_sub_pd(vt1, vb1);
            // Unfused products keep the result exactly symmetric in (u, v).
            const __m256d ex = _mm256_add_pd(
                _mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(d0, e0), _mm256_mul_pd(d1, e1)), third),
                _mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(d0, e1), _mm256_mul_pd(d1, e0)), sixth));
            const __m256d ey = _mm256_add_pd(
                _mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(g0, f0), _mm256_mul_pd(g1, f1)), third),
                _mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(g0, f1), _mm256_mul_pd(g1, f0)), sixth));
            const __m256d cell = _mm256_add_pd(_mm256_mul_pd(vcx, ex), _mm256_mul_pd(vcy, ey));
            acc = _mm256_fmadd_pd(_mm256_loadu_pd(k + i), cell, acc);
        }
        double row = hsum(acc);
        for (; i < w.nx; ++i) {
            const double d0 = ub[i + 1] - ub[i], d1 = ut[i + 1] - ut[i];
            const double e0 = vb[i + 1] - vb[i], e1 = vt[i + 1] - vt[i];
            const double g0 = ut[i] - ub[i], g1 = ut[i + 1] - ub[i + 1];
            const double f0 = vt[i] - vb[i], f1 = vt[i + 1] - vb[i + 1];
            const double ex = (d0 * e0 + d1 * e1) * (1.0 / 3.0) + (d0 * e1 + d1 * e0) * (1.0 / 6.0);
            const double ey = (g0 * f0 + g1 * f1) * (1.0 / 3.0) + (g0 * f1 + g1 * f0) * (1.0 / 6.0);
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
        __m256d acc = _mm256_setzero_pd();
        int i = 0;
        for (; i + 4 <= w.nx; i += 4) {
            const __m256d s = _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(vb + i), _mm256_loadu_pd(vb + i + 1)),
                                            _mm256_add_pd(_mm256_loadu_pd(vt + i), _mm256_loadu_pd(vt + i + 1)));
            acc = _mm256_fmadd_pd(_mm256_loadu_pd(c + i), s, acc);
        }
        double row = hsum(acc);
        for (; i < w.nx; ++i)
            row += c[i] * ((vb[i] + vb[i + 1]) + (vt[i] + vt[i + 1]));
        total += row;
    }
    return quarter_area * total;
}

} // namespace hmch::kernels::avx2
