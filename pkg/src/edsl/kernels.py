"""Backend selection for the hot loops.

The compiled extension is used when importable. Set ``EDSL_PURE_PYTHON=1``
to force the numpy fallback (the benchmark and the cross-backend tests use
:func:`load_backend` directly instead).
"""
import importlib
import os

__all__ = [
    "BACKEND", "available_backends", "load_backend",
    "dot", "matvec", "rmatvec",
    "squared_value", "squared_value_grad",
    "logistic_value", "logistic_value_grad",
]


def load_backend(name):
    """Import a kernel backend by name: ``"compiled"`` or ``"python"``."""
    if name == "compiled":
        return importlib.import_module("edsl._kernels")
    if name == "python":
        return importlib.import_module("edsl._kernels_py")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        load_backend("compiled")
    except ImportError:
        pass
    else:
        names.insert(0, "compiled")
    return names


def _select():
    if os.environ.get("EDSL_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "compiled", load_backend("compiled")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _impl = _select()

dot = _impl.dot
matvec = _impl.matvec
rmatvec = _impl.rmatvec
squared_value = _impl.squared_value
squared_value_grad = _impl.squared_value_grad
logistic_value = _impl.logistic_value
logistic_value_grad = _impl.logistic_value_grad
