"""Core data types: vectors, shards, datasets, loss constants, ground truth.

Vectors are plain float64 numpy arrays. Shards and datasets freeze their
arrays (``writeable=False``) so they can be shared between workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError, DimensionError

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)

#: max over z of |s(1 - s)(1 - 2s)|, s = sigmoid(z); attained at s = 1/2 - 1/sqrt(12)
LOGISTIC_THIRD_DERIV_BOUND = 1.0 / (6.0 * math.sqrt(3.0))


def as_vector(values, p=None, name="vector"):
    """Return ``values`` as a contiguous finite float64 vector of length ``p``."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {v.shape}")
    if p is not None and v.shape[0] != p:
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {p}")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name} has non-finite entries")
    return v


def _frozen(a):
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.setflags(write=False)
    return a


def dot(a, b):
    """Inner product accumulated left to right."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"dot of shapes {a.shape} and {b.shape}")
    return float(kernels.dot(a, b))


def linf_norm(a):
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise DimensionError("linf_norm of an empty vector")
    return float(np.max(np.abs(a)))


def l1_norm(a):
    a = np.ascontiguousarray(np.abs(np.asarray(a, dtype=np.float64)))
    return float(kernels.dot(a, np.ones_like(a))) if a.size else 0.0


def l2_norm(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return math.sqrt(kernels.dot(a, a)) if a.size else 0.0


@dataclass(frozen=True)
class Shard:
    """One machine's observations: rows of ``xs`` pair with entries of ``ys``."""

    machine_id: int
    xs: np.ndarray
    ys: np.ndarray
    task: str = REGRESSION

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.machine_id < 0:
            raise DataError(f"machine_id must be nonnegative, got {self.machine_id}")
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        if xs.ndim != 2:
            raise DimensionError(f"xs must be a matrix, got shape {xs.shape}")
        if ys.shape != (xs.shape[0],):
            raise DimensionError(
                f"{xs.shape[0]} rows but ys has shape {ys.shape}")
        if not np.all(np.isfinite(xs)):
            raise DataError(f"shard {self.machine_id}: non-finite feature values")
        if not np.all(np.isfinite(ys)):
            raise DataError(f"shard {self.machine_id}: non-finite responses")
        if self.task == CLASSIFICATION and not np.all(np.abs(ys) == 1.0):
            raise DataError(f"shard {self.machine_id}: labels must be -1 or +1")
        object.__setattr__(self, "xs", _frozen(xs))
        object.__setattr__(self, "ys", _frozen(ys))

    @property
    def n(self):
        return self.xs.shape[0]

    @property
    def p(self):
        return self.xs.shape[1]

    def with_id(self, machine_id):
        return Shard(machine_id, self.xs, self.ys, self.task)


@dataclass(frozen=True)
class Dataset:
    shards: tuple
    task: str = REGRESSION

    def __post_init__(self):
        shards = tuple(self.shards)
        if not shards:
            raise DataError("a dataset needs at least one shard")
        ids = [s.machine_id for s in shards]
        if ids != list(range(len(shards))):
            raise DataError(f"machine ids must be 0..m-1 in order, got {ids}")
        p, n = shards[0].p, shards[0].n
        for s in shards:
            if s.p != p or s.n != n:
                raise DimensionError(
                    f"shard {s.machine_id} is {s.n}x{s.p}, expected {n}x{p}")
            if s.task != self.task:
                raise DataError(f"shard {s.machine_id} has task {s.task!r}")
        object.__setattr__(self, "shards", shards)

    @property
    def m(self):
        return len(self.shards)

    @property
    def n(self):
        return self.shards[0].n

    @property
    def p(self):
        return self.shards[0].p

    @property
    def master(self):
        return self.shards[0]

    def pooled(self):
        """All rows in one shard, machine 0 first."""
        return Shard(0, np.vstack([s.xs for s in self.shards]),
                     np.concatenate([s.ys for s in self.shards]), self.task)

    def max_abs_feature(self):
        return max(float(np.max(np.abs(s.xs))) if s.xs.size else 0.0
                   for s in self.shards)


@dataclass(frozen=True)
class LossSpec:
    family: str
    smoothness_L: float
    third_deriv_M: float

    def __post_init__(self):
        if self.family == "squared":
            if self.smoothness_L != 1.0 or self.third_deriv_M != 0.0:
                raise DataError("squared loss has L = 1 and M = 0")
        elif self.family == "logistic":
            if self.smoothness_L != 0.25:
                raise DataError("logistic loss has L = 1/4")
            if self.third_deriv_M < 0:
                raise DataError("third-derivative bound must be nonnegative")
        else:
            raise DataError(f"unknown loss family {self.family!r}")

    @classmethod
    def squared(cls):
        return cls("squared", 1.0, 0.0)

    @classmethod
    def logistic(cls, third_deriv_M=LOGISTIC_THIRD_DERIV_BOUND):
        return cls("logistic", 0.25, float(third_deriv_M))

    @classmethod
    def for_task(cls, task):
        return cls.logistic() if task == CLASSIFICATION else cls.squared()


@dataclass(frozen=True)
class GroundTruth:
    beta_star: np.ndarray
    support: tuple = field(init=False)

    def __post_init__(self):
        b = _frozen(as_vector(self.beta_star, name="beta_star"))
        object.__setattr__(self, "beta_star", b)
        object.__setattr__(self, "support", tuple(int(i) for i in np.flatnonzero(b)))

    @property
    def sparsity_s(self):
        return len(self.support)

    @property
    def p(self):
        return self.beta_star.shape[0]
