"""Kernel backend selection.

Two interchangeable kernel sets exist: numba-compiled loops and pure numpy.
The active one is chosen at import from the CHEXCHAIN_BACKEND environment
variable ("numba" or "numpy"); unset means numba when importable, else numpy.
Both produce bit-identical results; `python -m chexchain.bench` compares
their throughput.
"""

import os

from .errors import ConfigurationError
from . import _kernels_numpy

try:
    from . import _kernels_numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _kernels_numba = None
    HAS_NUMBA = False

_BACKENDS = {"numpy": _kernels_numpy}
if HAS_NUMBA:
    _BACKENDS["numba"] = _kernels_numba

_active_name = os.environ.get("CHEXCHAIN_BACKEND", "").strip().lower()
if not _active_name:
    _active_name = "numba" if HAS_NUMBA else "numpy"
if _active_name not in _BACKENDS:
    raise ConfigurationError(
        f"CHEXCHAIN_BACKEND={_active_name!r} is not available; "
        f"choose one of {sorted(_BACKENDS)}"
    )

kernels = _BACKENDS[_active_name]


def active_backend() -> str:
    return _active_name


def available_backends() -> list:
    return sorted(_BACKENDS)


def set_backend(name: str) -> None:
    """Switch kernel sets at runtime (used by tests and the benchmark)."""
    global _active_name, kernels
    if name not in _BACKENDS:
        raise ConfigurationError(
            f"backend {name!r} is not available; choose one of {sorted(_BACKENDS)}"
        )
    _active_name = name
    kernels = _BACKENDS[name]
