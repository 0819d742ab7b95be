"""Backend selection for the similarity kernels.

The compiled extension (``rrfsim._core``) is preferred when importable; the
numpy implementation is the fallback. Set ``RRFSIM_BACKEND=python`` to force
the fallback, or ``RRFSIM_BACKEND=cython`` to fail loudly when the extension
is missing. ``benchmarks/bench_kernels.py`` times the two against each other.
"""

from __future__ import annotations

import os

import numpy as np

from . import _core_py

_requested = os.environ.get("RRFSIM_BACKEND", "").strip().lower()
if _requested not in ("", "cython", "python"):
    raise ValueError(f"RRFSIM_BACKEND must be 'cython' or 'python', got {_requested!r}")

if _requested == "python":
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _core_py
        BACKEND = "python"


def backend() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return BACKEND


def _as_matrix(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def pair_dot_matrix(a, b) -> np.ndarray:
    """All-pairs dot products between the rows of two (K, D) matrices."""
    return _impl.pair_dot_matrix(_as_matrix(a), _as_matrix(b))


def sum_all(m) -> float:
    """Compensated sum of every element of a 2-D array."""
    return float(_impl.sum_all(_as_matrix(m)))


def row_sums(m) -> np.ndarray:
    return np.asarray(_impl.row_sums(_as_matrix(m)))


def col_sums(m) -> np.ndarray:
    return np.asarray(_impl.col_sums(_as_matrix(m)))


def row_cosines(a, b) -> np.ndarray:
    """Cosine of corresponding rows of two equally shaped (K, D) matrices."""
    return np.asarray(_impl.row_cosines(_as_matrix(a), _as_matrix(b)))


def vec_cosine(u, v) -> float:
    return float(
        _impl.vec_cosine(
            np.ascontiguousarray(u, dtype=np.float64),
            np.ascontiguousarray(v, dtype=np.float64),
        )
    )
