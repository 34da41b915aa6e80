"""Empirical losses L_j(beta) = (1/n) sum_i loss(y_i, <x_i, beta>).

Two families: squared, 0.5 * (y - u)**2, and logistic, log(1 + exp(-y u)).
Values and gradients go through the fixed-order kernels.
"""
import numpy as np

from . import kernels
from .errors import DataError, DimensionError
from .model import as_vector

__all__ = [
    "loss_value", "loss_gradient", "loss_value_grad", "average_gradient",
    "derivative", "second_derivative", "third_derivative",
    "curvature_weights", "hessian_vector",
]


def _kernel_pair(family):
    if family == "squared":
        return kernels.squared_value, kernels.squared_value_grad
    if family == "logistic":
        return kernels.logistic_value, kernels.logistic_value_grad
    raise DataError(f"unknown loss family {family!r}")


def raw_value(family, xs, ys, beta):
    """Loss value on raw arrays, no validation. Used by the solver loop."""
    return _kernel_pair(family)[0](xs, ys, beta)


def raw_value_grad(family, xs, ys, beta):
    return _kernel_pair(family)[1](xs, ys, beta)


def _check(shard, beta):
    return as_vector(beta, shard.p, name="beta")


def loss_value(spec, shard, beta):
    beta = _check(shard, beta)
    return float(raw_value(spec.family, shard.xs, shard.ys, beta))


def loss_gradient(spec, shard, beta):
    beta = _check(shard, beta)
    return raw_value_grad(spec.family, shard.xs, shard.ys, beta)[1]


def loss_value_grad(spec, shard, beta):
    beta = _check(shard, beta)
    value, grad = raw_value_grad(spec.family, shard.xs, shard.ys, beta)
    return float(value), grad


def mean_of(vectors):
    """Coordinatewise mean, summed in the given order."""
    if not vectors:
        raise DimensionError("mean of an empty list")
    total = np.array(vectors[0], dtype=np.float64, copy=True)
    for v in vectors[1:]:
        if v.shape != total.shape:
            raise DimensionError(f"shape {v.shape} vs {total.shape}")
        total += v
    return total / len(vectors)


def average_gradient(spec, shards, beta):
    """(1/m) sum_j grad L_j(beta), accumulated in ascending machine_id."""
    shards = sorted(shards, key=lambda s: s.machine_id)
    if not shards:
        raise DimensionError("average_gradient needs at least one shard")
    p = shards[0].p
    if any(s.p != p for s in shards):
        raise DimensionError("shards disagree on dimension")
    return mean_of([loss_gradient(spec, s, beta) for s in shards])


# Scalar derivatives of the per-observation loss in its second argument.

def derivative(family, y, u):
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if family == "squared":
        return u - y
    z = y * u
    e = np.exp(-np.abs(z))
    return -y * np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def second_derivative(family, y, u):
    u = np.asarray(u, dtype=np.float64)
    if family == "squared":
        return np.ones_like(u)
    s = _sigmoid(np.asarray(y, dtype=np.float64) * u)
    return s * (1.0 - s)


def third_derivative(family, y, u):
    u = np.asarray(u, dtype=np.float64)
    if family == "squared":
        return np.zeros_like(u)
    y = np.asarray(y, dtype=np.float64)
    s = _sigmoid(y * u)
    return y * s * (1.0 - s) * (1.0 - 2.0 * s)


def curvature_weights(spec, xs, ys, beta):
    """Per-row second derivatives at beta (all ones for squared loss)."""
    if spec.family == "squared":
        return np.ones(xs.shape[0])
    return second_derivative("logistic", ys, kernels.matvec(xs, beta))


def hessian_vector(xs, weights, v):
    """(1/n) X^T diag(w) X v."""
    return kernels.rmatvec(xs, weights * kernels.matvec(xs, v)) / xs.shape[0]
