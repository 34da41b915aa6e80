"""Numpy fallback for ``_kernels``.

``np.cumsum`` is strictly sequential along its axis, which gives the same
left-to-right accumulation the compiled loops use. The price is an n-by-p
temporary per call.
"""
import numpy as np


def _last(running, axis, size):
    if size == 0:
        shape = list(running.shape)
        del shape[axis]
        return np.zeros(shape)
    return np.take(running, -1, axis=axis)


def dot(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(_last(np.cumsum(a * b), 0, a.shape[0]))


def matvec(X, v):
    if v.shape[0] != X.shape[1]:
        raise ValueError(f"length mismatch: {X.shape[1]} vs {v.shape[0]}")
    return _last(np.cumsum(X * v, axis=1), 1, X.shape[1])


def rmatvec(X, r):
    if r.shape[0] != X.shape[0]:
        raise ValueError(f"length mismatch: {X.shape[0]} vs {r.shape[0]}")
    return _last(np.cumsum(X * r[:, None], axis=0), 0, X.shape[0])


def _ordered_sum(v):
    return float(_last(np.cumsum(v), 0, v.shape[0]))


def squared_value(X, y, beta):
    d = matvec(X, beta) - y
    return _ordered_sum(0.5 * d * d) / X.shape[0]


def squared_value_grad(X, y, beta):
    n = X.shape[0]
    d = matvec(X, beta) - y
    return _ordered_sum(0.5 * d * d) / n, rmatvec(X, d) / n


def _logistic_terms(z):
    e = np.exp(-np.abs(z))
    terms = np.where(z >= 0, np.log1p(e), -z + np.log1p(e))
    sig_neg = np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
    return terms, sig_neg


def logistic_value(X, y, beta):
    terms, _ = _logistic_terms(y * matvec(X, beta))
    return _ordered_sum(terms) / X.shape[0]


def logistic_value_grad(X, y, beta):
    n = X.shape[0]
    terms, sig_neg = _logistic_terms(y * matvec(X, beta))
    d = -y * sig_neg
    return _ordered_sum(terms) / n, rmatvec(X, d) / n
