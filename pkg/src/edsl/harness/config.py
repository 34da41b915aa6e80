"""Experiment configuration and its TOML representation.

A config file has the sections ``[data]``, ``[run]``, ``[edsl]``,
``[prox_gd]``, ``[avg_debias]``, ``[solver]`` and ``[output]``; every key is
optional except where a data source needs it. Unknown keys are rejected so
typos fail loudly. See the README for the full key list.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..datagen import SynthConfig
from ..errors import ConfigError, DataError
from ..model import REGRESSION, TASKS
from ..solver import SolverConfig

METHODS = ("local", "centralize", "prox_gd", "avg_debias", "edsl")
ITERATIVE = ("prox_gd", "edsl")


@dataclass(frozen=True)
class FileData:
    """Rows from a text file, split 60/20/20 and spread over m machines."""

    path: str
    m: int
    format: str = "libsvm"
    task: str = REGRESSION
    partition: str = "shuffled"
    p: int | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be positive")
        if self.format not in ("libsvm", "csv"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.partition not in ("contiguous", "shuffled"):
            raise ConfigError(f"unknown partition policy {self.partition!r}")


@dataclass(frozen=True)
class EdslSettings:
    schedule: str = "practical"     # practical | theoretical | fixed
    gamma: float = 0.5
    value: float | None = None      # fixed mode only
    delta: float = 0.05


@dataclass(frozen=True)
class ProxGdSettings:
    step: float | None = None


@dataclass(frozen=True)
class AvgDebiasSettings:
    lam: float | None = None
    gamma: float | None = None
    tau: float | None = None
    force: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    data: SynthConfig | FileData
    methods: tuple = METHODS
    rounds: int = 10
    trials: int = 10
    seed: int = 0
    name: str = "experiment"
    test_rows: int = 0
    c: float | None = None
    parallelism: int = 1
    timing: bool = False
    tuned: bool = False
    grid_size: int = 10
    edsl: EdslSettings = field(default_factory=EdslSettings)
    prox_gd: ProxGdSettings = field(default_factory=ProxGdSettings)
    avg_debias: AvgDebiasSettings = field(default_factory=AvgDebiasSettings)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: str = "results.csv"

    def __post_init__(self):
        methods = tuple(self.methods)
        if not methods:
            raise ConfigError("at least one method is required")
        unknown = [mth for mth in methods if mth not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(methods)) != len(methods):
            raise ConfigError("methods must not repeat")
        object.__setattr__(self, "methods", methods)
        if self.rounds < 0:
            raise ConfigError("rounds must be nonnegative")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.test_rows < 0:
            raise ConfigError("test_rows must be nonnegative")
        if self.grid_size < 1:
            raise ConfigError("grid_size must be at least 1")
        if self.c is not None and not self.c > 0:
            raise ConfigError("c must be positive")

    @property
    def task(self):
        return self.data.task

    @property
    def m(self):
        return self.data.m

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def synth_for_trial(self, trial):
        """Synthetic config of trial ``trial``: its own seed, hence its own streams."""
        if not isinstance(self.data, SynthConfig):
            raise ConfigError("not a synthetic data config")
        return dataclasses.replace(self.data, seed=self.seed + trial)


DESK_SCALE = SynthConfig(n_per_machine=200, p=400, m=10, s=5)


def desk_scale(conditioning="well", task=REGRESSION, **overrides):
    """The default desk-scale experiment for one conditioning and task."""
    data = dataclasses.replace(DESK_SCALE, conditioning=conditioning, task=task)
    return ExperimentConfig(data=data, name=f"desk-{conditioning}-{task}", **overrides)


_DATA_SYNTH = {"source", "n_per_machine", "n", "p", "m", "s", "conditioning", "task",
               "noise_sigma", "test_rows"}
_DATA_FILE = {"source", "path", "format", "task", "m", "partition", "p"}
_RUN = {"methods", "rounds", "trials", "seed", "parallelism", "timing", "tuned",
        "grid_size", "c", "name"}
_SECTIONS = {"data", "run", "edsl", "prox_gd", "avg_debias", "solver", "output", "name"}


def _check_keys(section, table, allowed):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"[{section}]: unknown keys {sorted(extra)}")


def _build(cls, section, table, rename=None):
    rename = rename or {}
    allowed = {rename.get(f.name, f.name) for f in dataclasses.fields(cls)}
    _check_keys(section, table, allowed)
    inverse = {v: k for k, v in rename.items()}
    try:
        return cls(**{inverse.get(k, k): v for k, v in table.items()})
    except (TypeError, DataError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def from_dict(raw, base_dir=None):
    """Build a config from parsed TOML.

    Relative data and output paths resolve against ``base_dir``.
    """
    _check_keys("top level", raw, _SECTIONS)
    data = dict(raw.get("data", {}))
    source = data.get("source", "synthetic")
    test_rows = 0
    if source == "synthetic":
        _check_keys("data", data, _DATA_SYNTH)
        data.pop("source", None)
        test_rows = int(data.pop("test_rows", 0))
        if "n" in data:
            data["n_per_machine"] = data.pop("n")
        fields = {f.name: getattr(DESK_SCALE, f.name) for f in dataclasses.fields(SynthConfig)}
        fields.update(data)
        try:
            data_cfg = SynthConfig(**fields)
        except TypeError as exc:
            raise ConfigError(f"[data]: {exc}") from None
    elif source == "file":
        _check_keys("data", data, _DATA_FILE)
        data.pop("source")
        if "path" not in data or "m" not in data:
            raise ConfigError("[data] with source = 'file' needs path and m")
        path = Path(data["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        data["path"] = str(path)
        data_cfg = FileData(**data)
    else:
        raise ConfigError(f"unknown data source {source!r}")

    run = dict(raw.get("run", {}))
    _check_keys("run", run, _RUN)
    if "methods" in run:
        run["methods"] = tuple(run["methods"])
    if "name" in raw:
        run.setdefault("name", raw["name"])
    edsl = _build(EdslSettings, "edsl", raw.get("edsl", {}), {"value": "lambda"})
    prox = _build(ProxGdSettings, "prox_gd", raw.get("prox_gd", {}))
    deb = _build(AvgDebiasSettings, "avg_debias", raw.get("avg_debias", {}), {"lam": "lambda"})
    solver = _build(SolverConfig, "solver", raw.get("solver", {}))
    out = raw.get("output", {})
    _check_keys("output", out, {"path"})
    out_path = Path(out.get("path", "results.csv"))
    if base_dir is not None and not out_path.is_absolute():
        out_path = Path(base_dir) / out_path
    try:
        return ExperimentConfig(data=data_cfg, test_rows=test_rows, edsl=edsl, prox_gd=prox,
                                avg_debias=deb, solver=solver, output=str(out_path), **run)
    except TypeError as exc:
        raise ConfigError(f"[run]: {exc}") from None


def load_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return from_dict(raw, base_dir=path.parent)
