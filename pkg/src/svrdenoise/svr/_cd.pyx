# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dual coordinate descent for bias-free epsilon-SVR.

Same iteration as ``_cd_py``: cyclic sweeps, exact 1D minimization per
coordinate, residual ``r = y - K beta`` kept up to date.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline double _viol(double b, double r, double e, double c) noexcept nogil:
    cdef double v
    if b == 0.0:
        v = fabs(r) - e
        return v if v > 0.0 else 0.0
    if b > 0.0:
        if b >= c:
            v = e - r
            return v if v > 0.0 else 0.0
        return fabs(r - e)
    if b <= -c:
        v = e + r
        return v if v > 0.0 else 0.0
    return fabs(r + e)


cdef double _solve_one(const double[:, ::1] K, const double[::1] y, const double[::1] e,
                       const double[::1] c, double[::1] b, double[::1] r,
                       double tol, long max_sweeps, long *sweeps_out) noexcept nogil:
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t i, j
    cdef long sweep = 0
    cdef double z, kii, thr, nb, d, vmax, v, acc
    cdef int verified = 0

    for i in range(n):
        acc = y[i]
        for j in range(n):
            acc -= K[i, j] * b[j]
        r[i] = acc

    while True:
        vmax = 0.0
        for i in range(n):
            v = _viol(b[i], r[i], e[i], c[i])
            if v > vmax:
                vmax = v
        if vmax <= tol:
            if verified:
                break
            # recompute the residual exactly before accepting
            for i in range(n):
                acc = y[i]
                for j in range(n):
                    acc -= K[i, j] * b[j]
                r[i] = acc
            verified = 1
            continue
        verified = 0
        if sweep >= max_sweeps:
            break
        sweep += 1
        for i in range(n):
            kii = K[i, i]
            z = b[i] + r[i] / kii
            thr = e[i] / kii
            if z > thr:
                nb = z - thr
            elif z < -thr:
                nb = z + thr
            else:
                nb = 0.0
            if nb > c[i]:
                nb = c[i]
            elif nb < -c[i]:
                nb = -c[i]
            d = nb - b[i]
            if d != 0.0:
                b[i] = nb
                for j in range(n):
                    r[j] -= d * K[i, j]
    sweeps_out[0] = sweep
    return vmax


def solve_batch(K, Y, E, C, B, double tol, long max_sweeps):
    """Solve ``P`` problems sharing ``K`` in place on ``B`` (warm start).

    ``Y, E, C, B`` are ``(P, n)`` C-contiguous float64 arrays.  Returns
    ``(sweeps, max_violation)`` arrays of length ``P``.
    """
    cdef const double[:, ::1] Kv = K
    cdef const double[:, ::1] Yv = Y
    cdef const double[:, ::1] Ev = E
    cdef const double[:, ::1] Cv = C
    cdef double[:, ::1] Bv = B
    cdef Py_ssize_t P = Yv.shape[0], n = Yv.shape[1], p
    sweeps = np.zeros(P, dtype=np.int64)
    viol = np.zeros(P, dtype=np.float64)
    cdef cnp.int64_t[::1] sv = sweeps
    cdef double[::1] vv = viol
    cdef double[::1] r = np.empty(n, dtype=np.float64)
    cdef long s
    with nogil:
        for p in range(P):
            vv[p] = _solve_one(Kv, Yv[p], Ev[p], Cv[p], Bv[p], r, tol, max_sweeps, &s)
            sv[p] = s
    return sweeps, viol
