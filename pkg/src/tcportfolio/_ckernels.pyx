# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops over the scenario set.

Mirrors ``_pykernels`` exactly; see that module for the contract of each
function. Sums are accumulated in scenario order so results are
reproducible run to run.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def branch_sums(const double[:, ::1] P, const double[::1] K, double s, int orientation):
    cdef Py_ssize_t N = P.shape[0]
    cdef Py_ssize_t n = P.shape[1]
    cdef Py_ssize_t i, j
    cdef double z, zz
    cdef double s1u = 0.0, s1d = 0.0, s2u = 0.0, s2d = 0.0
    cdef double up
    if K.shape[0] != n:
        raise ValueError(f"K has length {K.shape[0]}, scenarios have {n} assets")
    for i in range(N):
        z = s
        for j in range(n):
            z += P[i, j] * K[j]
        zz = z * z
        up = z if orientation > 0 else -z
        if up >= 0.0:
            s1u += z
            s2u += zz
        else:
            s1d += z
            s2d += zz
    return s1u / N, s1d / N, s2u / N, s2d / N


def upper_fraction(const double[:, ::1] P, const double[::1] K, double s, int orientation):
    cdef Py_ssize_t N = P.shape[0]
    cdef Py_ssize_t n = P.shape[1]
    cdef Py_ssize_t i, j
    cdef double z
    cdef long count = 0
    for i in range(N):
        z = s
        for j in range(n):
            z += P[i, j] * K[j]
        if orientation > 0:
            if z >= 0.0:
                count += 1
        else:
            if z <= 0.0:
                count += 1
    return count / <double> N


def wealth_paths(const double[:, :, ::1] P, const double[::1] s, const double[::1] ref,
                 const double[:, ::1] k_up, const double[:, ::1] k_down, double x0):
    cdef Py_ssize_t T = P.shape[0]
    cdef Py_ssize_t N = P.shape[1]
    cdef Py_ssize_t n = P.shape[2]
    cdef Py_ssize_t t, i, j
    cdef double x, y, gain
    out = np.empty((N, T + 1), dtype=np.float64)
    cdef double[:, ::1] X = out
    for i in range(N):
        x = x0
        X[i, 0] = x
        for t in range(T):
            y = x - ref[t]
            gain = 0.0
            if y >= 0.0:
                for j in range(n):
                    gain += P[t, i, j] * k_up[t, j]
            else:
                for j in range(n):
                    gain += P[t, i, j] * k_down[t, j]
            x = s[t] * x + gain * y
            X[i, t + 1] = x
    return out
