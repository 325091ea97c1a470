# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner kernels: log-domain Sinkhorn step, plan, cross-ratio search."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef void _log_scaling(const double[:, ::1] log_k, const double[::1] log_b,
                       const double[::1] x, double[::1] out,
                       double[::1] colmax) noexcept nogil:
    cdef Py_ssize_t n = log_k.shape[0], m = log_k.shape[1], i, j
    cdef double t
    for j in range(m):
        colmax[j] = -INFINITY
        out[j] = 0.0
    for i in range(n):
        for j in range(m):
            t = log_k[i, j] + x[i]
            if t > colmax[j]:
                colmax[j] = t
    for i in range(n):
        for j in range(m):
            out[j] += exp(log_k[i, j] + x[i] - colmax[j])
    for j in range(m):
        out[j] = log_b[j] - (colmax[j] + log(out[j]))


def lse_log_scaling(const double[:, ::1] log_k, const double[::1] log_b,
                    const double[::1] x):
    cdef Py_ssize_t m = log_k.shape[1]
    out = np.empty(m)
    colmax = np.empty(m)
    cdef double[::1] o = out, c = colmax
    with nogil:
        _log_scaling(log_k, log_b, x, o, c)
    return out


def lse_step(const double[:, ::1] log_k, const double[::1] log_a,
             const double[::1] log_b, const double[::1] x):
    cdef Py_ssize_t n = log_k.shape[0], m = log_k.shape[1], i, j
    cdef double mx, s, t
    out = np.empty(n)
    log_v = np.empty(m)
    work = np.empty(m)
    cdef double[::1] o = out, lv = log_v, w = work
    with nogil:
        _log_scaling(log_k, log_b, x, lv, w)
        for i in range(n):
            mx = -INFINITY
            for j in range(m):
                t = log_k[i, j] + lv[j]
                if t > mx:
                    mx = t
            s = 0.0
            for j in range(m):
                s += exp(log_k[i, j] + lv[j] - mx)
            o[i] = log_a[i] - (mx + log(s))
    return out


def lse_log_plan(const double[:, ::1] log_k, const double[::1] log_b,
                 const double[::1] x):
    cdef Py_ssize_t n = log_k.shape[0], m = log_k.shape[1], i, j
    out = np.empty((n, m))
    log_v = np.empty(m)
    work = np.empty(m)
    cdef double[:, ::1] o = out
    cdef double[::1] lv = log_v, w = work
    with nogil:
        _log_scaling(log_k, log_b, x, lv, w)
        for i in range(n):
            for j in range(m):
                o[i, j] = x[i] + log_k[i, j] + lv[j]
    return out


def max_log_cross_ratio(const double[:, ::1] log_k):
    """Exhaustive max of ``L_ik + L_jl - L_jk - L_il`` over all quadruples."""
    cdef Py_ssize_t n = log_k.shape[0], m = log_k.shape[1], i, j, k, l
    cdef double best = 0.0, t
    with nogil:
        for i in range(n):
            for j in range(n):
                for k in range(m):
                    for l in range(m):
                        t = log_k[i, k] + log_k[j, l] - log_k[j, k] - log_k[i, l]
                        if t > best:
                            best = t
    return best
