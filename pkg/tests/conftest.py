import numpy as np
import pytest

from edsl.model import Shard


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_shard(rng, n, p, task="regression", machine_id=0):
    X = rng.standard_normal((n, p))
    if task == "regression":
        y = X @ rng.standard_normal(p) + 0.1 * rng.standard_normal(n)
    else:
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    return Shard(machine_id, X, y, task)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
