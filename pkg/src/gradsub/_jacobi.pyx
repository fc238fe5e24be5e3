# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled one-sided Jacobi sweeps.

Columns of the matrix being orthogonalized are stored as rows of ``wt`` so
every rotation touches two contiguous vectors. Each sweep visits columns in
order of decreasing norm (cheap global de Rijk pivoting) and walks the pair
triangle in cache-sized blocks. A rotation is fused with the inner product
needed by the next pair in the same row.
"""

from libc.math cimport sqrt, fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef extern from "_jacobi_kernels.h":
    double gs_dot(const double* x, const double* y, Py_ssize_t m) noexcept nogil
    void gs_rot(double* x, double* y, Py_ssize_t m, double c, double s) noexcept nogil
    double gs_rot_dot(double* x, double* y, const double* z, Py_ssize_t m,
                      double c, double s) noexcept nogil


cdef inline double _tangent(double alpha, double beta, double gamma) noexcept nogil:
    cdef double zeta = (beta - alpha) / (2.0 * gamma)
    if fabs(zeta) > 1e150:
        return 0.5 / zeta
    if zeta >= 0.0:
        return 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
    return -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))


def jacobi_sweeps(double[:, ::1] wt, vt, double tol, int max_sweeps, Py_ssize_t block=32):
    """Orthogonalize the rows of ``wt`` in place, rotating rows of ``vt`` alongside.

    A pair is rotated when ``|<w_i, w_j>| > tol * |w_i| |w_j|``. Rows whose norm
    is at most ``m * eps`` times the largest row norm are roundoff and are left
    alone. Iteration stops after the first sweep with no rotation or after
    ``max_sweeps`` sweeps.
    Returns ``(sweeps, converged, residual)``; ``residual`` is the largest
    relative inner product seen during the last sweep.
    """
    cdef Py_ssize_t n = wt.shape[0]
    cdef Py_ssize_t m = wt.shape[1]
    cdef double[:, ::1] v
    cdef Py_ssize_t nv = 0
    cdef double* vb = NULL
    if vt is not None:
        v = vt
        if v.shape[0] != n:
            raise ValueError("vt must have one row per column of the input")
        nv = v.shape[1]
        if nv > 0 and n > 0:
            vb = &v[0, 0]
    if n < 2 or m == 0:
        return 0, True, 0.0
    if block < 1:
        block = 1

    cdef double* wb = &wt[0, 0]
    cdef double[::1] nrm = np.zeros(n)
    cdef Py_ssize_t[::1] perm
    cdef Py_ssize_t i, j, bi, bj, ie, je, js, pi, pj, pn
    cdef double alpha, beta, gamma, rel, t, c, s, worst = 0.0
    cdef double floor, top
    cdef double eps = np.finfo(np.float64).eps
    cdef double pending = 0.0
    cdef bint have_pending
    cdef long rotations = 1
    cdef int sweep = 0

    while sweep < max_sweeps and rotations > 0:
        for i in range(n):
            nrm[i] = gs_dot(wb + i * m, wb + i * m, m)
        perm = np.argsort(-np.asarray(nrm), kind="stable").astype(np.intp)
        top = nrm[perm[0]]
        floor = (m * eps) * (m * eps) * top
        rotations = 0
        worst = 0.0
        with nogil:
            bi = 0
            while bi < n:
                ie = bi + block if bi + block < n else n
                bj = bi
                while bj < n:
                    je = bj + block if bj + block < n else n
                    for i in range(bi, ie):
                        pi = perm[i]
                        js = i + 1 if bj == bi else bj
                        have_pending = False
                        for j in range(js, je):
                            pj = perm[j]
                            alpha = nrm[pi]
                            beta = nrm[pj]
                            if alpha <= floor or beta <= floor:
                                have_pending = False
                                continue
                            if have_pending:
                                gamma = pending
                            else:
                                gamma = gs_dot(wb + pi * m, wb + pj * m, m)
                            have_pending = False
                            rel = fabs(gamma) / (sqrt(alpha) * sqrt(beta))
                            if rel > worst:
                                worst = rel
                            if rel <= tol:
                                continue
                            t = _tangent(alpha, beta, gamma)
                            c = 1.0 / sqrt(1.0 + t * t)
                            s = c * t
                            if j + 1 < je:
                                pn = perm[j + 1]
                                pending = gs_rot_dot(wb + pi * m, wb + pj * m, wb + pn * m, m, c, s)
                                have_pending = True
                            else:
                                gs_rot(wb + pi * m, wb + pj * m, m, c, s)
                            if nv > 0:
                                gs_rot(vb + pi * nv, vb + pj * nv, nv, c, s)
                            nrm[pi] = alpha - t * gamma
                            nrm[pj] = beta + t * gamma
                            if nrm[pi] <= floor:
                                # cancellation; the pending dot used the rotated row already
                                nrm[pi] = gs_dot(wb + pi * m, wb + pi * m, m)
                            if nrm[pj] <= floor:
                                nrm[pj] = gs_dot(wb + pj * m, wb + pj * m, m)
                            rotations += 1
                    bj = je
                bi = ie
        sweep += 1
    return sweep, rotations == 0, worst
