# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.

Every routine here has a twin in ``_fallback.py`` that performs the same
floating-point operations in the same order, so both paths are
byte-identical. Keep them in lockstep when editing either file.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def jacobi_eigh(double[:, ::1] a, int max_sweeps=100):
    """Cyclic Jacobi with threshold sweeps. ``a`` is overwritten.

    Returns ``(diag, v, sweeps)``; ``sweeps`` is -1 when the cap is hit.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double sm, tresh, g, h, t, theta, c, s, apq, x, y
    v_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] v = v_arr

    for sweep in range(1, max_sweeps + 1):
        sm = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                sm = sm + fabs(a[p, q])
        if sm == 0.0:
            return np.array([a[k, k] for k in range(n)]), v_arr, sweep - 1
        if sweep < 4:
            tresh = 0.2 * sm / <double>(n * n)
        else:
            tresh = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                g = 100.0 * fabs(apq)
                if (sweep > 4 and fabs(a[p, p]) + g == fabs(a[p, p])
                        and fabs(a[q, q]) + g == fabs(a[q, q])):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                elif fabs(apq) > tresh:
                    h = a[q, q] - a[p, p]
                    if fabs(h) + g == fabs(h):
                        t = apq / h
                    else:
                        theta = 0.5 * h / apq
                        t = 1.0 / (fabs(theta) + sqrt(1.0 + theta * theta))
                        if theta < 0.0:
                            t = -t
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for k in range(n):
                        x = a[k, p]
                        y = a[k, q]
                        a[k, p] = c * x - s * y
                        a[k, q] = s * x + c * y
                    for k in range(n):
                        x = a[p, k]
                        y = a[q, k]
                        a[p, k] = c * x - s * y
                        a[q, k] = s * x + c * y
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for k in range(n):
                        x = v[k, p]
                        y = v[k, q]
                        v[k, p] = c * x - s * y
                        v[k, q] = s * x + c * y
    return np.array([a[k, k] for k in range(n)]), v_arr, -1
