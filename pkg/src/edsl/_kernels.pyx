# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for losses and fixed-order linear algebra.

Every reduction runs rows ascending and, within a row, columns ascending.
``_kernels_py`` reproduces the same order with numpy so both backends agree
to rounding of the transcendental functions.
"""
import numpy as np

from libc.math cimport exp, log1p, fabs


def dot(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc = 0.0
    if b.shape[0] != n:
        raise ValueError(f"length mismatch: {n} vs {b.shape[0]}")
    with nogil:
        for i in range(n):
            acc = acc + a[i] * b[i]
    return acc


def matvec(const double[:, ::1] X, const double[::1] v):
    cdef Py_ssize_t i, k, n = X.shape[0], p = X.shape[1]
    cdef double acc
    if v.shape[0] != p:
        raise ValueError(f"length mismatch: {p} vs {v.shape[0]}")
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            acc = 0.0
            for k in range(p):
                acc = acc + X[i, k] * v[k]
            o[i] = acc
    return out


def rmatvec(const double[:, ::1] X, const double[::1] r):
    cdef Py_ssize_t i, k, n = X.shape[0], p = X.shape[1]
    cdef double ri
    if r.shape[0] != n:
        raise ValueError(f"length mismatch: {n} vs {r.shape[0]}")
    out = np.zeros(p, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            ri = r[i]
            for k in range(p):
                o[k] = o[k] + X[i, k] * ri
    return out


cdef inline double _row_dot(const double[:, ::1] X, Py_ssize_t i,
                            const double[::1] beta, Py_ssize_t p) nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(p):
        acc = acc + X[i, k] * beta[k]
    return acc


cdef inline double _logistic_term(double z) nogil:
    # log(1 + exp(-z)), overflow-safe
    cdef double e = exp(-fabs(z))
    if z >= 0:
        return log1p(e)
    return -z + log1p(e)


cdef inline double _sigmoid_neg(double z) nogil:
    # 1 / (1 + exp(z)), overflow-safe
    cdef double e = exp(-fabs(z))
    if z >= 0:
        return e / (1.0 + e)
    return 1.0 / (1.0 + e)


def squared_value(const double[:, ::1] X, const double[::1] y,
                  const double[::1] beta):
    cdef Py_ssize_t i, n = X.shape[0], p = X.shape[1]
    cdef double d, val = 0.0
    with nogil:
        for i in range(n):
            d = _row_dot(X, i, beta, p) - y[i]
            val = val + 0.5 * d * d
    return val / n


def squared_value_grad(const double[:, ::1] X, const double[::1] y,
                       const double[::1] beta):
    cdef Py_ssize_t i, k, n = X.shape[0], p = X.shape[1]
    cdef double d, val = 0.0
    grad = np.zeros(p, dtype=np.float64)
    cdef double[::1] g = grad
    with nogil:
        for i in range(n):
            d = _row_dot(X, i, beta, p) - y[i]
            val = val + 0.5 * d * d
            for k in range(p):
                g[k] = g[k] + X[i, k] * d
        for k in range(p):
            g[k] = g[k] / n
    return val / n, grad


def logistic_value(const double[:, ::1] X, const double[::1] y,
                   const double[::1] beta):
    cdef Py_ssize_t i, n = X.shape[0], p = X.shape[1]
    cdef double val = 0.0
    with nogil:
        for i in range(n):
            val = val + _logistic_term(y[i] * _row_dot(X, i, beta, p))
    return val / n


def logistic_value_grad(const double[:, ::1] X, const double[::1] y,
                        const double[::1] beta):
    cdef Py_ssize_t i, k, n = X.shape[0], p = X.shape[1]
    cdef double z, d, val = 0.0
    grad = np.zeros(p, dtype=np.float64)
    cdef double[::1] g = grad
    with nogil:
        for i in range(n):
            z = y[i] * _row_dot(X, i, beta, p)
            val = val + _logistic_term(z)
            d = -y[i] * _sigmoid_neg(z)
            for k in range(p):
                g[k] = g[k] + X[i, k] * d
        for k in range(p):
            g[k] = g[k] / n
    return val / n, grad
