"""Backend selection for the tabular inner loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``AVGREWARD_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the pure-Python twin is used. Both backends expose
``run_tabular`` and ``rollout`` with identical semantics.
"""
import os

from . import _kernels_py

KIND_Q = _kernels_py.KIND_Q
KIND_RVIQ = _kernels_py.KIND_RVIQ
KIND_RLEARN = _kernels_py.KIND_RLEARN

python_backend = _kernels_py

try:
    from . import _kernels as compiled_backend
except ImportError:  # pragma: no cover - depends on build
    compiled_backend = None


def _select():
    if os.environ.get("AVGREWARD_PURE_PYTHON", "") not in ("", "0"):
        return python_backend
    return compiled_backend if compiled_backend is not None else python_backend


backend = _select()
BACKEND_NAME = "compiled" if backend is compiled_backend else "python"


def get_backend(name=None):
    """Return a backend module by name (``'compiled'``/``'python'``) or the active one."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
