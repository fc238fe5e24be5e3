/* Inner loops for the one-sided Jacobi sweeps in _jacobi.pyx.
 *
 * Reductions use a fixed 32-lane accumulator layout so the summation order
 * (and therefore every output bit) depends only on the vector length.
 */
#ifndef GRADSUB_JACOBI_KERNELS_H
#define GRADSUB_JACOBI_KERNELS_H

#include <stddef.h>

#define GS_LANES 32

static inline double gs_fold(double* acc, double tail) {
    for (int w = GS_LANES / 2; w > 0; w >>= 1)
        for (int u = 0; u < w; ++u) acc[u] += acc[u + w];
    return acc[0] + tail;
}

static inline double gs_dot(const double* restrict x, const double* restrict y, ptrdiff_t m) {
    double acc[GS_LANES] = {0};
    ptrdiff_t k = 0, stop = m - (m % GS_LANES);
    for (; k < stop; k += GS_LANES) {
        #pragma omp simd
        for (int u = 0; u < GS_LANES; ++u) acc[u] += x[k + u] * y[k + u];
    }
    double tail = 0.0;
    for (; k < m; ++k) tail += x[k] * y[k];
    return gs_fold(acc, tail);
}

static inline void gs_rot(double* restrict x, double* restrict y, ptrdiff_t m, double c, double s) {
    #pragma omp simd
    for (ptrdiff_t k = 0; k < m; ++k) {
        double a = x[k], b = y[k];
        x[k] = c * a - s * b;
        y[k] = s * a + c * b;
    }
}

/* Rotate (x, y) and return dot(new x, z); z must not alias x or y. */
static inline double gs_rot_dot(double* restrict x, double* restrict y, const double* restrict z,
                                ptrdiff_t m, double c, double s) {
    double acc[GS_LANES] = {0};
    ptrdiff_t k = 0, stop = m - (m % GS_LANES);
    for (; k < stop; k += GS_LANES) {
        #pragma omp simd
        for (int u = 0; u < GS_LANES; ++u) {
            double a = x[k + u], b = y[k + u];
            double na = c * a - s * b;
            x[k + u] = na;
            y[k + u] = s * a + c * b;
            acc[u] += na * z[k + u];
        }
    }
    double tail = 0.0;
    for (; k < m; ++k) {
        double a = x[k], b = y[k];
        double na = c * a - s * b;
        x[k] = na;
        y[k] = s * a + c * b;
        tail += na * z[k];
    }
    return gs_fold(acc, tail);
}

#endif
