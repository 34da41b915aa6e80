"""Synthetic sparse regression/classification data and text-file ingestion.

Random draws come from Philox, a counter-based generator. Each design row
has its own counter block keyed by ``(seed, stream)`` and its global row
index, so any row can be regenerated alone: a worker process rebuilds its
own shard from the config, and splitting the same N rows over a different
number of machines yields the same rows.
"""
from __future__ import annotations

import csv
import functools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .model import REGRESSION, TASKS, Dataset, GroundTruth, Shard

log = logging.getLogger(__name__)

__all__ = [
    "SynthConfig", "toeplitz_cov", "sample_beta_star", "generate",
    "generate_shard", "generate_heldout", "load_text", "partition",
    "split_train_val_test",
]

WELL = "well"
ILL = "ill"
MAX_P = 10_000
_UINT64 = 2 ** 64

# Philox key high words: independent streams for each role
STREAM_ROWS = 0
STREAM_BETA = 1
STREAM_HELDOUT = 2


@dataclass(frozen=True)
class SynthConfig:
    n_per_machine: int
    p: int
    m: int
    s: int
    conditioning: str = WELL
    task: str = REGRESSION
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_per_machine", "p", "m"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not 0 <= self.s <= self.p:
            raise ConfigError(f"need 0 <= s <= p, got s={self.s}, p={self.p}")
        if self.conditioning not in (WELL, ILL):
            raise ConfigError(f"conditioning must be 'well' or 'ill', got {self.conditioning!r}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if not 0 <= self.seed < _UINT64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.p > MAX_P:
            raise ConfigError(f"p={self.p} exceeds the dense-covariance cap {MAX_P}")


def toeplitz_cov(p, conditioning):
    """Sigma_ij = 0.5**|i-j| (well) or 0.5**(|i-j|/5) (ill)."""
    if p < 1:
        raise ConfigError("p must be positive")
    scale = {WELL: 1.0, ILL: 5.0}.get(conditioning)
    if scale is None:
        raise ConfigError(f"unknown conditioning {conditioning!r}")
    lag = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return 0.5 ** (lag / scale)


def cholesky_factor(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigError(f"covariance is not positive definite: {exc}") from None


@functools.lru_cache(maxsize=8)
def _design_factor(p, conditioning):
    L = cholesky_factor(toeplitz_cov(p, conditioning))
    L.setflags(write=False)
    return L


def _generator(seed, stream, block=0):
    key = int(seed) + (int(stream) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(block)]))


def sample_beta_star(p, s, seed):
    """First s entries iid U[0, 1], the rest zero."""
    if not 0 <= s <= p:
        raise ConfigError(f"need 0 <= s <= p, got s={s}, p={p}")
    beta = np.zeros(p)
    if s:
        beta[:s] = _generator(seed, STREAM_BETA).random(s)
    return GroundTruth(beta)


def _rows(config, beta_star, start, count, stream):
    """Rows start..start+count-1 of a stream: x = L z plus the response."""
    L = _design_factor(config.p, config.conditioning)
    Z = np.empty((count, config.p))
    noise = np.empty(count)
    unif = np.empty(count)
    for i in range(count):
        g = _generator(config.seed, stream, start + i)
        Z[i] = g.standard_normal(config.p)
        noise[i] = g.standard_normal()
        unif[i] = g.random()
    X = Z @ L.T
    u = X @ beta_star
    if config.task == REGRESSION:
        y = u + config.noise_sigma * noise
    else:
        # P(y = +1) = exp(u) / (1 + exp(u))
        prob = np.where(u >= 0, 1.0 / (1.0 + np.exp(-np.abs(u))),
                        np.exp(-np.abs(u)) / (1.0 + np.exp(-np.abs(u))))
        y = np.where(unif < prob, 1.0, -1.0)
    return np.ascontiguousarray(X), y


def generate_shard(config, machine_id, truth=None):
    """Machine ``machine_id``'s rows, regenerated independently of the others."""
    if not 0 <= machine_id < config.m:
        raise ConfigError(f"machine_id {machine_id} outside [0, {config.m})")
    truth = truth or sample_beta_star(config.p, config.s, config.seed)
    n = config.n_per_machine
    X, y = _rows(config, truth.beta_star, machine_id * n, n, STREAM_ROWS)
    return Shard(machine_id, X, y, config.task)


def generate(config):
    truth = sample_beta_star(config.p, config.s, config.seed)
    shards = tuple(generate_shard(config, j, truth) for j in range(config.m))
    return Dataset(shards, config.task), truth


def generate_heldout(config, count, truth=None):
    """Fresh rows from the same model, disjoint from every machine's data."""
    truth = truth or sample_beta_star(config.p, config.s, config.seed)
    X, y = _rows(config, truth.beta_star, 0, count, STREAM_HELDOUT)
    return Shard(0, X, y, config.task)


# -- text ingestion ---------------------------------------------------------

def _map_labels(ys, task):
    if task == REGRESSION:
        return ys
    labels = set(np.unique(ys).tolist())
    for allowed, negative in (({-1.0, 1.0}, -1.0), ({0.0, 1.0}, 0.0), ({1.0, 2.0}, 1.0)):
        if labels <= allowed:
            return np.where(ys == negative, -1.0, 1.0)
    bad = sorted(labels - {-1.0, 1.0})
    raise DataError(f"classification labels must be binary "
                    f"({{-1,1}}, {{0,1}} or {{1,2}}); found {bad[:5]}")


def _read_lines(path):
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            yield lineno, line.rstrip("\r\n")


def _parse_float(token, lineno, what):
    try:
        v = float(token.replace("\u2212", "-"))
    except ValueError:
        raise ParseError(f"cannot parse {what} {token!r}", lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite {what} {token!r}", lineno)
    return v


def _load_libsvm(path, p):
    rows, ys, max_idx = [], [], 0
    for lineno, line in _read_lines(path):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        ys.append(_parse_float(tokens[0], lineno, "label"))
        feats = {}
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(f"expected index:value, got {tok!r}", lineno)
            try:
                k = int(idx)
            except ValueError:
                raise ParseError(f"bad feature index {idx!r}", lineno) from None
            if k < 1:
                raise ParseError(f"feature indices are 1-based, got {k}", lineno)
            if p is not None and k > p:
                raise ParseError(f"feature index {k} exceeds p={p}", lineno)
            feats[k - 1] = _parse_float(val, lineno, "feature value")
            max_idx = max(max_idx, k)
        rows.append(feats)
    p = max_idx if p is None else p
    X = np.zeros((len(rows), p))
    for i, feats in enumerate(rows):
        for k, v in feats.items():
            X[i, k] = v
    return X, np.array(ys, dtype=np.float64)


def _load_csv(path, p):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        width = len(header)
        expected = ["y"] + [f"x{k}" for k in range(1, width)]
        if [h.strip() for h in header] != expected:
            raise ParseError("header must be y,x1,...,xp", 1)
        if p is not None and width - 1 != p:
            raise ParseError(f"header has {width - 1} features, expected {p}", 1)
        X, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", lineno)
            ys.append(_parse_float(row[0], lineno, "label"))
            X.append([_parse_float(c, lineno, "feature value") for c in row[1:]])
    X = np.array(X, dtype=np.float64).reshape(len(ys), width - 1)
    return X, np.array(ys, dtype=np.float64)


def load_text(path, format="libsvm", task=REGRESSION, p=None):
    """Read a libsvm or CSV file into one shard.

    For classification the labels are mapped to -1/+1.
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    if format == "libsvm":
        X, y = _load_libsvm(path, p)
    elif format == "csv":
        X, y = _load_csv(path, p)
    else:
        raise ConfigError(f"unknown format {format!r}")
    if y.size == 0:
        raise DataError(f"{path}: no data rows")
    return Shard(0, X, _map_labels(y, task), task)


def partition(rows, m, policy="contiguous", seed=0):
    """Split a shard's rows evenly over m machines; leftover rows are dropped."""
    if m < 1:
        raise ConfigError("m must be positive")
    n_total = rows.n
    n = n_total // m
    if n == 0:
        raise DataError(f"{n_total} rows cannot fill {m} machines")
    if policy == "contiguous":
        order = np.arange(n_total)
    elif policy == "shuffled":
        order = np.random.default_rng(seed).permutation(n_total)
    else:
        raise ConfigError(f"unknown partition policy {policy!r}")
    dropped = n_total - n * m
    if dropped:
        log.info("partition: dropping %d trailing rows to fill %d machines of %d",
                 dropped, m, n)
    shards = []
    for j in range(m):
        idx = order[j * n:(j + 1) * n]
        shards.append(Shard(j, rows.xs[idx], rows.ys[idx], rows.task))
    return Dataset(tuple(shards), rows.task)


def split_train_val_test(rows, seed=0, fractions=(0.6, 0.2, 0.2)):
    """Shuffle rows and cut them into train/validation/test shards."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-12:
        raise ConfigError("fractions must be three nonnegative numbers summing to 1")
    order = np.random.default_rng(seed).permutation(rows.n)
    n_train = int(round(fractions[0] * rows.n))
    n_val = int(round(fractions[1] * rows.n))
    cuts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple(Shard(0, rows.xs[idx], rows.ys[idx], rows.task) for idx in cuts)
