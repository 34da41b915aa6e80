"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Times the squared and logistic value+gradient kernels on a few shapes,
then one full lasso solve with each backend swapped in.
"""
import argparse
import time
from contextlib import contextmanager

import numpy as np

from edsl import kernels
from edsl.datagen import SynthConfig, generate
from edsl.model import LossSpec
from edsl.solver import ShiftedProblem, solve

NAMES = ("dot", "matvec", "rmatvec", "squared_value", "squared_value_grad",
         "logistic_value", "logistic_value_grad")


@contextmanager
def backend(name):
    impl = kernels.load_backend(name)
    saved = {k: getattr(kernels, k) for k in NAMES}
    try:
        for k in NAMES:
            setattr(kernels, k, getattr(impl, k))
        yield impl
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        started = time.perf_counter()
        fn()
        times.append(time.perf_counter() - started)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    names = kernels.available_backends()
    print(f"backends: {', '.join(names)}")
    rng = np.random.default_rng(0)
    print(f"{'case':<34}" + "".join(f"{n:>12}" for n in names) + "     ratio")
    for n, p in ((200, 50), (1000, 200), (5000, 500)):
        X = rng.standard_normal((n, p))
        beta = rng.standard_normal(p) / np.sqrt(p)
        y_reg = X @ beta + rng.standard_normal(n)
        y_cls = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        for kernel, y in (("squared_value_grad", y_reg), ("logistic_value_grad", y_cls)):
            cells = []
            for name in names:
                fn = getattr(kernels.load_backend(name), kernel)
                cells.append(best_of(lambda: fn(X, y, beta), args.repeat))
            report(f"{kernel} {n}x{p}", cells)
    ds, _ = generate(SynthConfig(400, 200, 1, 10, "ill", seed=1))
    cells = []
    for name in names:
        with backend(name):
            problem = ShiftedProblem(LossSpec.squared(), ds.master, None, 0.05)
            cells.append(best_of(lambda: solve(problem), max(1, args.repeat // 5)))
    report("full lasso solve 400x200", cells)


def report(label, cells):
    ratio = f"{cells[-1] / cells[0]:8.2f}x" if len(cells) > 1 else ""
    print(f"{label:<34}" + "".join(f"{1e3 * c:10.3f}ms" for c in cells) + ratio)


if __name__ == "__main__":
    main()
